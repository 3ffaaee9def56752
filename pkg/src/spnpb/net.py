"""Fully-connected network core: hand-written forward/backward plus the two
optimizers the rest of the package relies on (Adam for offline training,
momentum SGD for online bias adaptation).

Conventions: a batch is a (n, features) float64 array, weights act by
``x @ W + b`` with W shaped (fan_in, fan_out). Hidden layers are tanh, the
final layer is affine; any output nonlinearity (such as the exponential
variance head) belongs to the caller. Gradients are exact analytic
derivatives, taken with respect to the parameters and to the input --
input gradients drive both bias adaptation and view control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """An array does not match the declared layer geometry."""


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths, input first, output last. Hidden activations are tanh,
    the final layer is affine."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) < 2:
            raise ShapeError("LayerSpec needs at least input and output widths")
        if any(n < 1 for n in sizes):
            raise ShapeError(f"layer widths must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]


@dataclass
class NetworkParameters:
    """Per-layer weight matrices and bias vectors."""

    spec: LayerSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def validate(self) -> None:
        sizes = self.spec.sizes
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ShapeError("layer count does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]):
                raise ShapeError(f"weight {i}: expected {(sizes[i], sizes[i + 1])}, got {w.shape}")
            if b.shape != (sizes[i + 1],):
                raise ShapeError(f"bias {i}: expected {(sizes[i + 1],)}, got {b.shape}")
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise ShapeError("non-finite network parameter")

    def as_list(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (weights then biases)."""
        return [*self.weights, *self.biases]

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class ParamGradients:
    """Gradient arrays mirroring NetworkParameters layout."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def as_list(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class ForwardTrace:
    """Cached pre-activations and activations of one forward pass.

    activations[0] is the network input; activations[i+1] is the output of
    layer i (post-tanh for hidden layers, affine for the last).
    """

    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    single: bool


def init_network(spec: LayerSpec, seed: int) -> NetworkParameters:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParameters(spec, weights, biases)


def _as_batch(x: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got shape {x.shape}")
    return x, single


def forward(params: NetworkParameters, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on a vector or a (n, width) batch.

    Returns the final affine output and the trace needed by backward().
    """
    a, single = _as_batch(x, params.spec.n_in, "forward input")
    pre = []
    acts = [a]
    last = params.spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w
        z += b
        pre.append(z)
        a = z if i == last else np.tanh(z)
        acts.append(a)
    out = a[0] if single else a
    return out, ForwardTrace(pre, acts, single)


def backward(
    trace: ForwardTrace,
    params: NetworkParameters,
    output_grad: np.ndarray,
    with_param_grads: bool = True,
) -> tuple[ParamGradients | None, np.ndarray]:
    """Backpropagate d(loss)/d(output) through the trace.

    Returns exact gradients of sum(output_grad * output) with respect to
    every parameter (None when with_param_grads is false) and to the input,
    shaped like the original input.
    """
    n_layers = params.spec.n_layers
    if len(trace.pre_activations) != n_layers:
        raise ShapeError("trace does not match parameter layer count")
    for i, z in enumerate(trace.pre_activations):
        if z.shape[-1] != params.spec.sizes[i + 1]:
            raise ShapeError(f"trace layer {i} width {z.shape[-1]} does not match spec")
    g, _ = _as_batch(output_grad, params.spec.n_out, "output_grad")
    if g.shape[0] != trace.activations[0].shape[0]:
        raise ShapeError("output_grad batch size does not match trace")

    w_grads: list[np.ndarray | None] = [None] * n_layers
    b_grads: list[np.ndarray | None] = [None] * n_layers
    delta = g
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            # delta arrives w.r.t. tanh output of layer i; activations[i+1]
            # holds it; delta is freshly allocated here so *= is safe
            a = trace.activations[i + 1]
            t = np.multiply(a, a)
            np.subtract(1.0, t, out=t)
            delta *= t
        if with_param_grads:
            w_grads[i] = trace.activations[i].T @ delta
            b_grads[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    input_grad = delta[0] if trace.single else delta
    grads = ParamGradients(w_grads, b_grads) if with_param_grads else None
    return grads, input_grad


@dataclass
class AdamState:
    """First/second moment accumulators plus step counter and rates."""

    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: list[np.ndarray] | None = None

    @classmethod
    def for_params(cls, params: list[np.ndarray], rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            rate=rate, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, in place.

    Equivalent to m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2,
    p <- p - rate*(m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps), written with
    reused scratch buffers because this runs a couple hundred thousand
    times per training.
    """
    _check_pairing(params, grads, state.m)
    if state.scratch is None or len(state.scratch) != 2 * len(params):
        state.scratch = [np.empty_like(p) for p in params for _ in range(2)]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        s, t = state.scratch[2 * i], state.scratch[2 * i + 1]
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=s)
        m += s
        v *= state.beta2
        np.multiply(g, 1.0 - state.beta2, out=s)
        s *= g
        v += s
        np.divide(v, c2, out=s)
        np.sqrt(s, out=s)
        s += state.eps
        np.divide(m, c1, out=t)
        t /= s
        t *= state.rate
        p -= t
    return params, state


@dataclass
class MomentumState:
    """Velocity accumulator for momentum SGD."""

    step: int
    velocity: list[np.ndarray]
    rate: float = 1e-2
    momentum: float = 0.9

    @classmethod
    def for_params(cls, params: list[np.ndarray], rate: float = 1e-2,
                   momentum: float = 0.9) -> "MomentumState":
        return cls(step=0, velocity=[np.zeros_like(p) for p in params],
                   rate=rate, momentum=momentum)


def momentum_step(params: list[np.ndarray], grads: list[np.ndarray],
                  state: MomentumState) -> tuple[list[np.ndarray], MomentumState]:
    """v <- mu*v - rate*g; p <- p + v, in place."""
    _check_pairing(params, grads, state.velocity)
    state.step += 1
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v -= state.rate * g
        p += v
    return params, state


def _check_pairing(params, grads, accum) -> None:
    if not (len(params) == len(grads) == len(accum)):
        raise ShapeError("params/grads/state length mismatch")
    for p, g, a in zip(params, grads, accum):
        if p.shape != g.shape or p.shape != a.shape:
            raise ShapeError(f"shape mismatch: {p.shape} vs {g.shape} vs {a.shape}")
