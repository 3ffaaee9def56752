"""The stochastic predictive network with parametric bias.

The model maps a normalized control input (joint angle command), optionally
concatenated with a low-dimensional parametric bias vector, through the
fully-connected core to per-dimension sensor predictions. In the
gaussian-nll mode the network output splits into a mean head and a variance
head; the variance head passes through exp so predicted variances stay
positive. In the mse mode the network has a single mean head and the loss
is an ordinary mean squared error. Losses and gradients are computed in
normalized sensor units throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .net import (
    LayerSpec,
    NetworkParameters,
    ParamGradients,
    ShapeError,
    backward,
    forward,
    init_network,
)

LOSS_NLL = "gaussian-nll"
LOSS_MSE = "mse"

# exp argument clamp for the variance head: keeps sigma in [e^-20, e^20]
EXP_CLAMP = 20.0

STD_FLOOR = 1e-6


class ModelError(ValueError):
    """Model misuse: missing bias entry, wrong loss mode, bad input."""


@dataclass(frozen=True)
class SpnpbConfig:
    """Dimensions of the predictive model. n_v defaults to the full-scale
    embedding width; desk-scale runs override it."""

    n_u: int = 4
    n_p: int = 2
    n_v: int = 512
    n_tau: int = 4
    hidden: tuple[int, ...] = (100, 300, 500)

    def __post_init__(self):
        if min(self.n_u, self.n_p, self.n_v, self.n_tau) < 1:
            raise ModelError("all dimensions must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def n_s(self) -> int:
        return self.n_v + self.n_tau


@dataclass(frozen=True)
class SensorState:
    """Embedding vector plus joint torques; the predicted quantity."""

    v: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        tau = np.asarray(self.tau, dtype=np.float64)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(tau))):
            raise ModelError("non-finite sensor state")
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ModelError("embedding part of a raw sensor state must be unit-norm")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tau", tau)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.tau])


@dataclass(frozen=True)
class ControlInput:
    """Target joint angles in radians."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise ModelError("control input must be a finite 1-d angle vector")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class ParametricBias:
    """Free low-dimensional regime vector, trained from zero."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise ModelError("parametric bias must be a finite 1-d vector")
        object.__setattr__(self, "p", p)


def _vec(x, attr: str) -> np.ndarray:
    """Accept either the wrapper dataclass or a plain array."""
    return np.asarray(getattr(x, attr, x), dtype=np.float64)


@dataclass
class NormalizationStats:
    """Per-dimension mean/std for control inputs and sensor states."""

    u_mean: np.ndarray
    u_std: np.ndarray
    s_mean: np.ndarray
    s_std: np.ndarray

    def normalize_u(self, u: np.ndarray) -> np.ndarray:
        return (u - self.u_mean) / self.u_std

    def denormalize_u(self, un: np.ndarray) -> np.ndarray:
        return un * self.u_std + self.u_mean

    def normalize_s(self, s: np.ndarray) -> np.ndarray:
        return (s - self.s_mean) / self.s_std

    def denormalize_s(self, sn: np.ndarray) -> np.ndarray:
        return sn * self.s_std + self.s_mean


def fit_normalization(trials) -> NormalizationStats:
    """Mean and population std over the union of all trial records.

    Each trial must expose `u` (N, n_u) and `s` (N, n_s) arrays. Stds are
    floored so degenerate dimensions cannot divide by zero.
    """
    trials = list(trials)
    if not trials:
        raise ModelError("cannot fit normalization on an empty dataset")
    u_all = np.concatenate([np.asarray(t.u, dtype=np.float64) for t in trials], axis=0)
    s_all = np.concatenate([np.asarray(t.s, dtype=np.float64) for t in trials], axis=0)
    if u_all.shape[0] < 2:
        raise ModelError("need at least 2 data points to fit normalization")
    return NormalizationStats(
        u_mean=u_all.mean(axis=0),
        u_std=np.maximum(u_all.std(axis=0), STD_FLOOR),
        s_mean=s_all.mean(axis=0),
        s_std=np.maximum(s_all.std(axis=0), STD_FLOOR),
    )


@dataclass
class SpnpbModel:
    config: SpnpbConfig
    net: NetworkParameters
    norm: NormalizationStats
    pb_table: dict[str, np.ndarray] = field(default_factory=dict)
    loss_mode: str = LOSS_NLL
    pb_enabled: bool = True

    def __post_init__(self):
        if self.loss_mode not in (LOSS_NLL, LOSS_MSE):
            raise ModelError(f"unknown loss mode {self.loss_mode!r}")
        if self.net.spec.sizes != self.layer_spec().sizes:
            raise ShapeError(
                f"network sizes {self.net.spec.sizes} do not match "
                f"config/flags {self.layer_spec().sizes}"
            )

    def layer_spec(self) -> LayerSpec:
        n_in = self.config.n_u + (self.config.n_p if self.pb_enabled else 0)
        n_out = 2 * self.config.n_s if self.loss_mode == LOSS_NLL else self.config.n_s
        return LayerSpec((n_in, *self.config.hidden, n_out))

    @classmethod
    def initialize(cls, config: SpnpbConfig, norm: NormalizationStats, seed: int,
                   loss_mode: str = LOSS_NLL, pb_enabled: bool = True) -> "SpnpbModel":
        n_in = config.n_u + (config.n_p if pb_enabled else 0)
        n_out = 2 * config.n_s if loss_mode == LOSS_NLL else config.n_s
        net = init_network(LayerSpec((n_in, *config.hidden, n_out)), seed)
        return cls(config, net, norm, {}, loss_mode, pb_enabled)

    def net_input(self, u_batch: np.ndarray, p_batch: np.ndarray | None) -> np.ndarray:
        """Normalized command, with the bias columns appended when enabled."""
        un = self.norm.normalize_u(u_batch)
        if not self.pb_enabled:
            return un
        if p_batch is None:
            raise ModelError("parametric bias required while pb_enabled")
        return np.concatenate([un, p_batch], axis=1)


@dataclass
class Prediction:
    """Predicted sensor distribution, in raw and in normalized units.

    `var` is the per-dimension variance of the Gaussian; in mse mode it is
    an all-ones placeholder.
    """

    mean: np.ndarray
    var: np.ndarray
    mean_normalized: np.ndarray
    var_normalized: np.ndarray


def _heads(model: SpnpbModel, out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split network output into mean head, clamped variance head, clamp mask."""
    n_s = model.config.n_s
    mean_n = out[:, :n_s]
    if model.loss_mode == LOSS_MSE:
        ones = np.ones_like(mean_n)
        return mean_n, ones, np.zeros_like(mean_n)
    y = out[:, n_s:]
    clipped = np.clip(y, -EXP_CLAMP, EXP_CLAMP)
    var_n = np.exp(clipped)
    mask = (np.abs(y) < EXP_CLAMP).astype(np.float64)
    return mean_n, var_n, mask


def predict(model: SpnpbModel, u, p=None) -> Prediction:
    """Forward a single command (plus bias) to a sensor distribution."""
    theta = _vec(u, "theta")
    if theta.shape != (model.config.n_u,):
        raise ModelError(f"control input must have shape ({model.config.n_u},)")
    if not np.all(np.isfinite(theta)):
        raise ModelError("non-finite control input")
    if model.pb_enabled:
        pv = _vec(p, "p") if p is not None else None
        if pv is None or pv.shape != (model.config.n_p,):
            raise ModelError(f"parametric bias must have shape ({model.config.n_p},)")
        p_batch = pv[None, :]
    else:
        p_batch = None
    x = model.net_input(theta[None, :], p_batch)
    out, _ = forward(model.net, x)
    mean_n, var_n, _ = _heads(model, out)
    mean = model.norm.denormalize_s(mean_n[0])
    var = var_n[0] * model.norm.s_std**2 if model.loss_mode == LOSS_NLL else var_n[0]
    return Prediction(mean=mean, var=var,
                      mean_normalized=mean_n[0], var_normalized=var_n[0])


def _stack_batch(model: SpnpbModel, batch, pb_table):
    """(u, s, trial-id) triples -> stacked arrays plus per-record bias rows."""
    if not batch:
        raise ModelError("empty batch")
    u_rows, s_rows, ids = [], [], []
    for u, s, tid in batch:
        u_rows.append(_vec(u, "theta"))
        sv = s.vector if isinstance(s, SensorState) else np.asarray(s, dtype=np.float64)
        s_rows.append(sv)
        ids.append(tid)
    U = np.stack(u_rows)
    S = np.stack(s_rows)
    if model.pb_enabled:
        missing = [tid for tid in ids if tid not in pb_table]
        if missing:
            raise ModelError(f"no parametric bias entry for trial ids {sorted(set(missing))}")
        P = np.stack([np.asarray(pb_table[tid], dtype=np.float64) for tid in ids])
    else:
        P = None
    return U, S, ids, P


def nll_core(model: SpnpbModel, U: np.ndarray, S: np.ndarray,
             P: np.ndarray | None, with_param_grads: bool = True
             ) -> tuple[float, ParamGradients | None, np.ndarray]:
    """Summed Gaussian NLL over a stacked batch, in normalized units.

    Returns (loss, network parameter gradients, input gradients). The input
    gradient array is w.r.t. the raw network input (normalized u columns
    first, bias columns after), so callers can chain through normalization
    or segment the bias part per trial.
    """
    if model.loss_mode != LOSS_NLL:
        raise ModelError("nll loss requires gaussian-nll mode")
    x = model.net_input(U, P)
    out, trace = forward(model.net, x)
    mean_n, var_n, mask = _heads(model, out)
    sn = model.norm.normalize_s(S)
    r = mean_n - sn
    loss = float(np.sum(0.5 * np.log(2.0 * np.pi * var_n) + r * r / (2.0 * var_n)))
    d_mean = r / var_n
    d_y = (0.5 - r * r / (2.0 * var_n)) * mask
    g = np.concatenate([d_mean, d_y], axis=1)
    grads, gin = backward(trace, model.net, g, with_param_grads=with_param_grads)
    return loss, grads, gin


def mse_core(model: SpnpbModel, U: np.ndarray, S: np.ndarray,
             P: np.ndarray | None, with_param_grads: bool = True
             ) -> tuple[float, ParamGradients | None, np.ndarray]:
    """Mean squared error over batch and dims, in normalized units."""
    if model.loss_mode != LOSS_MSE:
        raise ModelError("mse loss requires mse mode")
    x = model.net_input(U, P)
    out, trace = forward(model.net, x)
    sn = model.norm.normalize_s(S)
    r = out - sn
    loss = float(np.mean(r * r))
    g = 2.0 * r / r.size
    grads, gin = backward(trace, model.net, g, with_param_grads=with_param_grads)
    return loss, grads, gin


def _segment_pb_grads(model: SpnpbModel, gin: np.ndarray, ids,
                      pb_table) -> dict[str, np.ndarray]:
    """Sum the bias columns of the input gradient per trial id."""
    n_u = model.config.n_u
    pb_grads = {tid: np.zeros(model.config.n_p) for tid in pb_table}
    if model.pb_enabled:
        order = {tid: i for i, tid in enumerate(pb_table)}
        idx = np.array([order[tid] for tid in ids])
        acc = np.zeros((len(pb_table), model.config.n_p))
        np.add.at(acc, idx, gin[:, n_u:])
        for tid, i in order.items():
            pb_grads[tid] = acc[i]
    return pb_grads


def nll_loss(model: SpnpbModel, batch, pb_table
             ) -> tuple[float, ParamGradients, dict[str, np.ndarray]]:
    """Gaussian NLL of a batch of (u, s, trial-id) records.

    Loss is the sum over data points and sensor dimensions of
    0.5*log(2*pi*var) + (mean - s)^2 / (2*var), the negative log of the
    Gaussian density, with everything in normalized sensor units. Gradients
    come back for the network parameters and for each trial's bias vector.
    """
    U, S, ids, P = _stack_batch(model, batch, pb_table)
    loss, grads, gin = nll_core(model, U, S, P)
    return loss, grads, _segment_pb_grads(model, gin, ids, pb_table)


def mse_loss(model: SpnpbModel, batch, pb_table
             ) -> tuple[float, ParamGradients, dict[str, np.ndarray]]:
    """Mean squared error counterpart of nll_loss, for the ablation modes."""
    U, S, ids, P = _stack_batch(model, batch, pb_table)
    loss, grads, gin = mse_core(model, U, S, P)
    return loss, grads, _segment_pb_grads(model, gin, ids, pb_table)
