"""Online adaptation of the parametric bias with frozen network weights.

Observations stream into a bounded FIFO; once the buffer has grown past the
start threshold, every maybe_update call runs a few full-buffer gradient
epochs on the bias alone with momentum SGD. The momentum velocity persists
across calls, matching a continuously running optimizer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import LOSS_NLL, ModelError, SpnpbModel, mse_core, nll_core
from .net import MomentumState, momentum_step


@dataclass
class UpdaterConfig:
    threshold: int = 100
    capacity: int = 200
    epochs: int = 3
    sgd_rate: float = 1e-2
    sgd_momentum: float = 0.9

    def __post_init__(self):
        if not 0 < self.threshold <= self.capacity:
            raise ModelError("need 0 < threshold <= capacity")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")


class UpdateBuffer:
    """FIFO of (u, s) observations; overflow evicts strictly oldest-first."""

    def __init__(self, capacity: int, n_u: int, n_s: int):
        if capacity < 1:
            raise ModelError("capacity must be >= 1")
        self.capacity = capacity
        self.n_u = n_u
        self.n_s = n_s
        self._records: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        u = np.stack([r[0] for r in self._records])
        s = np.stack([r[1] for r in self._records])
        return u, s


def push_observation(buf: UpdateBuffer, u, s) -> UpdateBuffer:
    uv = np.asarray(getattr(u, "theta", u), dtype=np.float64)
    sv = s.vector if hasattr(s, "vector") else np.asarray(s, dtype=np.float64)
    if uv.shape != (buf.n_u,) or sv.shape != (buf.n_s,):
        raise ModelError("observation does not match buffer dimensions")
    buf._records.append((uv, sv))
    return buf


def maybe_update(model: SpnpbModel, buf: UpdateBuffer, p_current: np.ndarray,
                 cfg: UpdaterConfig, momentum_state: MomentumState | None
                 ) -> tuple[np.ndarray, list[np.ndarray], MomentumState]:
    """One update round: below the start threshold the bias passes through
    untouched; otherwise `epochs` whole-buffer momentum-SGD steps on the bias
    only. Network weights are never written. Returns the new bias, the bias
    after each epoch, and the carried momentum state."""
    if not model.pb_enabled:
        raise ModelError("online bias update needs a bias-enabled model")
    p = np.array(getattr(p_current, "p", p_current), dtype=np.float64)
    if p.shape != (model.config.n_p,):
        raise ModelError(f"bias must have shape ({model.config.n_p},)")
    if momentum_state is None:
        momentum_state = MomentumState.for_params([p], rate=cfg.sgd_rate,
                                                  momentum=cfg.sgd_momentum)
    if len(buf) < cfg.threshold:
        return p, [], momentum_state

    core = nll_core if model.loss_mode == LOSS_NLL else mse_core
    u_all, s_all = buf.arrays()
    trajectory: list[np.ndarray] = []
    params = [p]
    for _ in range(cfg.epochs):
        p_rows = np.broadcast_to(params[0], (len(u_all), model.config.n_p))
        _, _, gin = core(model, u_all, s_all, np.asarray(p_rows),
                         with_param_grads=False)
        grad_p = gin[:, model.config.n_u:].sum(axis=0)
        momentum_step(params, [grad_p], momentum_state)
        trajectory.append(params[0].copy())
    return params[0], trajectory, momentum_state
