"""Open-vocabulary view control by model inversion: pick the joint command
whose predicted embedding best matches a query embedding, with a small
penalty on predicted holding torque, via multi-start gradient descent and a
log-spaced step-size sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LOSS_NLL, ModelError, SpnpbModel
from .net import backward, forward


@dataclass(frozen=True)
class Query:
    """Unit-norm instruction embedding, with a human-readable label."""

    q: np.ndarray
    label: str = ""

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise ModelError("query embedding must be a finite 1-d vector")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ModelError("query embedding must be unit-norm")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class ControlConfig:
    """Multi-start search sizes and the loss weights; defaults are the
    full-scale values, desk-scale runs shrink n_init and n_batch."""

    joint_limits: np.ndarray
    n_init: int = 30000
    n_batch: int = 100
    n_epoch: int = 2
    gamma_max: float = 0.1
    c_tau: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        limits = np.asarray(self.joint_limits, dtype=np.float64)
        if limits.ndim != 2 or limits.shape[1] != 2:
            raise ModelError("joint limits must be (n_u, 2)")
        if np.any(limits[:, 0] > limits[:, 1]):
            raise ModelError("empty joint-limit box")
        if min(self.n_init, self.n_batch, self.n_epoch) < 1:
            raise ModelError("search sizes must be >= 1")
        if self.gamma_max <= 0 or self.c_tau < 0:
            raise ModelError("gamma_max must be > 0 and c_tau >= 0")
        object.__setattr__(self, "joint_limits", limits)


@dataclass
class ControlResult:
    best_u: np.ndarray
    best_loss: float
    best_initial_loss: float
    epoch_best: list[float]
    config: ControlConfig


def _query_vector(query) -> np.ndarray:
    return np.asarray(getattr(query, "q", query), dtype=np.float64)


def control_loss_batch(model: SpnpbModel, U: np.ndarray, p: np.ndarray | None,
                       q: np.ndarray, c_tau: float, with_grad: bool
                       ) -> tuple[np.ndarray, np.ndarray | None]:
    """Loss -q.v + c_tau*||tau|| for a batch of raw commands, and optionally
    its gradient w.r.t. each command.

    Any object with its own control_loss_batch method (e.g. a simulator
    stand-in used to sanity-check the search) is dispatched to directly.
    """
    own = getattr(model, "control_loss_batch", None)
    if own is not None:
        return own(U, p, q, c_tau, with_grad)
    n_u, n_v = model.config.n_u, model.config.n_v
    U = np.asarray(U, dtype=np.float64)
    if model.pb_enabled:
        if p is None:
            raise ModelError("parametric bias required while pb_enabled")
        P = np.broadcast_to(np.asarray(p, dtype=np.float64), (len(U), model.config.n_p))
    else:
        P = None
    x = model.net_input(U, P)
    out, trace = forward(model.net, x)
    mean_n = out[:, :model.config.n_s]
    mean = model.norm.denormalize_s(mean_n)
    v_hat = mean[:, :n_v]
    tau_hat = mean[:, n_v:]
    tau_norm = np.linalg.norm(tau_hat, axis=1)
    losses = -(v_hat @ q) + c_tau * tau_norm
    if not with_grad:
        return losses, None
    d_mean = np.empty_like(mean)
    d_mean[:, :n_v] = -q
    # subgradient of the torque norm at the origin is taken as 0
    safe = np.where(tau_norm > 0.0, tau_norm, 1.0)
    d_mean[:, n_v:] = c_tau * tau_hat / safe[:, None] * (tau_norm > 0.0)[:, None]
    d_mean_n = d_mean * model.norm.s_std
    if model.loss_mode == LOSS_NLL:
        g = np.concatenate([d_mean_n, np.zeros_like(d_mean_n)], axis=1)
    else:
        g = d_mean_n
    _, gin = backward(trace, model.net, g, with_param_grads=False)
    grad_u = gin[:, :n_u] / model.norm.u_std
    return losses, grad_u


def control_loss(model: SpnpbModel, u, p, query, c_tau: float = 1e-4,
                 joint_limits: np.ndarray | None = None
                 ) -> tuple[float, np.ndarray]:
    """Single-command view-control loss and its gradient. When limits are
    given, an out-of-range command is evaluated at its clamped copy."""
    theta = np.asarray(getattr(u, "theta", u), dtype=np.float64)
    if joint_limits is not None:
        limits = np.asarray(joint_limits, dtype=np.float64)
        theta = np.clip(theta, limits[:, 0], limits[:, 1])
    pv = np.asarray(getattr(p, "p", p), dtype=np.float64) if p is not None else None
    losses, grads = control_loss_batch(
        model, theta[None, :], pv, _query_vector(query), c_tau, with_grad=True)
    return float(losses[0]), grads[0]


def step_sizes(gamma_max: float, n: int) -> np.ndarray:
    """n step sizes spanning three decades up to gamma_max:
    gamma_j = gamma_max * 10^(-3*(1 - j/n)) for j = 1..n."""
    j = np.arange(1, n + 1, dtype=np.float64)
    return gamma_max * 10.0 ** (-3.0 * (1.0 - j / n))


def optimize(model: SpnpbModel, p, query, cfg: ControlConfig) -> ControlResult:
    """Multi-start inversion: sample n_init random commands, keep the n_batch
    best, then for each refinement round move every candidate to its best
    log-spaced gradient step (keeping it unchanged when no step improves)."""
    if cfg.joint_limits.shape[0] != model.config.n_u:
        raise ModelError("joint limits do not match the model's command width")
    q = _query_vector(query)
    pv = np.asarray(getattr(p, "p", p), dtype=np.float64) if p is not None else None
    lo, hi = cfg.joint_limits[:, 0], cfg.joint_limits[:, 1]
    rng = np.random.default_rng(cfg.seed)
    u0 = rng.uniform(lo, hi, size=(cfg.n_init, model.config.n_u))
    losses0, _ = control_loss_batch(model, u0, pv, q, cfg.c_tau, with_grad=False)
    keep = np.argsort(losses0, kind="stable")[:cfg.n_batch]
    cand = u0[keep].copy()
    cand_loss = losses0[keep].copy()
    best_initial = float(cand_loss.min())

    gammas = step_sizes(cfg.gamma_max, cfg.n_batch)
    epoch_best = []
    rows = np.arange(len(cand))
    for _ in range(cfg.n_epoch):
        _, grads = control_loss_batch(model, cand, pv, q, cfg.c_tau, with_grad=True)
        variants = cand[:, None, :] - gammas[None, :, None] * grads[:, None, :]
        np.clip(variants, lo, hi, out=variants)
        flat_losses, _ = control_loss_batch(
            model, variants.reshape(-1, model.config.n_u), pv, q, cfg.c_tau,
            with_grad=False)
        vloss = flat_losses.reshape(len(cand), len(gammas))
        j_best = np.argmin(vloss, axis=1)
        best_step_loss = vloss[rows, j_best]
        improved = best_step_loss < cand_loss
        cand[improved] = variants[rows, j_best][improved]
        cand_loss[improved] = best_step_loss[improved]
        epoch_best.append(float(cand_loss.min()))

    i = int(np.argmin(cand_loss))
    return ControlResult(best_u=cand[i].copy(), best_loss=float(cand_loss[i]),
                         best_initial_loss=best_initial, epoch_best=epoch_best,
                         config=cfg)
