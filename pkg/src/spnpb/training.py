"""Offline training: assemble per-trial datasets, fit normalization over all
of them, then jointly optimize the network weights and every trial's
parametric bias with Adam. Also the PCA projection used to inspect how the
trained biases arrange themselves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    LOSS_MSE,
    LOSS_NLL,
    ModelError,
    SpnpbConfig,
    SpnpbModel,
    fit_normalization,
    mse_core,
    nll_core,
)
from .net import AdamState, adam_step


@dataclass
class TrialDataset:
    """One trial's record sequence: commands u (N, n_u) and sensor states
    s (N, n_s), in collection order. The regime label is metadata for
    reports; training never reads it."""

    trial_id: str
    u: np.ndarray
    s: np.ndarray
    regime: str = ""
    rate_hz: float = 10.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.u.ndim != 2 or self.s.ndim != 2 or len(self.u) != len(self.s):
            raise ModelError("trial u and s must be (N, d) arrays of equal length")
        if len(self.u) < 1:
            raise ModelError("trial must hold at least one record")

    def __len__(self) -> int:
        return len(self.u)

    def slice(self, start: int, stop: int) -> "TrialDataset":
        return TrialDataset(self.trial_id, self.u[start:stop], self.s[start:stop],
                            self.regime, self.rate_hz)


@dataclass
class TrainingSet:
    trials: list[TrialDataset]

    def __post_init__(self):
        if not self.trials:
            raise ModelError("training set must hold at least one trial")
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise ModelError("trial ids must be unique")

    @property
    def trial_ids(self) -> list[str]:
        return [t.trial_id for t in self.trials]


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    seed: int = 0
    loss_mode: str = LOSS_NLL
    pb_enabled: bool = True
    adam_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    model_config: SpnpbConfig | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ModelError("epochs and batch size must be >= 1")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    pb_history: list[np.ndarray]
    pb_table: dict[str, np.ndarray]
    wall_clock_s: float


def _derive_config(ts: TrainingSet) -> SpnpbConfig:
    n_u = ts.trials[0].u.shape[1]
    n_s = ts.trials[0].s.shape[1]
    n_tau = 4
    if n_s <= n_tau:
        raise ModelError("cannot derive embedding width from sensor dimension")
    return SpnpbConfig(n_u=n_u, n_p=2, n_v=n_s - n_tau, n_tau=n_tau)


def train(ts: TrainingSet, cfg: TrainConfig) -> tuple[SpnpbModel, TrainReport]:
    """Joint optimization of weights and per-trial biases.

    Every bias starts at zero. Minibatches are drawn across all trials with
    each record keeping its trial id, so a bias only receives gradient from
    its own trial's records. Deterministic for a given seed.
    """
    start = time.monotonic()
    mc = cfg.model_config if cfg.model_config is not None else _derive_config(ts)
    for t in ts.trials:
        if t.u.shape[1] != mc.n_u or t.s.shape[1] != mc.n_s:
            raise ModelError(f"trial {t.trial_id!r} does not match model dims")
    norm = fit_normalization(ts.trials)
    model = SpnpbModel.initialize(mc, norm, cfg.seed, cfg.loss_mode, cfg.pb_enabled)

    ids = ts.trial_ids
    u_all = np.concatenate([t.u for t in ts.trials], axis=0)
    s_all = np.concatenate([t.s for t in ts.trials], axis=0)
    tidx = np.concatenate([np.full(len(t), i) for i, t in enumerate(ts.trials)])
    n_total = len(u_all)

    pb = np.zeros((len(ids), mc.n_p))
    params = model.net.as_list() + ([pb] if cfg.pb_enabled else [])
    state = AdamState.for_params(params, rate=cfg.adam_rate, beta1=cfg.adam_beta1,
                                 beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    core = nll_core if cfg.loss_mode == LOSS_NLL else mse_core

    rng = np.random.default_rng(cfg.seed)
    epoch_losses: list[float] = []
    pb_history: list[np.ndarray] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_total)
        total = 0.0
        for lo in range(0, n_total, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            p_rows = pb[tidx[sel]] if cfg.pb_enabled else None
            loss, grads, gin = core(model, u_all[sel], s_all[sel], p_rows)
            if not np.isfinite(loss):
                raise ModelError(
                    f"loss diverged at epoch {epoch}; lower adam_rate "
                    f"(currently {cfg.adam_rate:g}) or the batch size")
            grad_list = grads.as_list()
            if cfg.pb_enabled:
                dpb = np.zeros_like(pb)
                np.add.at(dpb, tidx[sel], gin[:, mc.n_u:])
                grad_list = grad_list + [dpb]
            adam_step(params, grad_list, state)
            total += loss if cfg.loss_mode == LOSS_NLL else loss * len(sel)
        epoch_losses.append(total / n_total)
        pb_history.append(pb.copy())

    if cfg.pb_enabled:
        model.pb_table = {tid: pb[i].copy() for i, tid in enumerate(ids)}
    report = TrainReport(epoch_losses=epoch_losses, pb_history=pb_history,
                         pb_table={k: v.copy() for k, v in model.pb_table.items()},
                         wall_clock_s=time.monotonic() - start)
    return model, report


def evaluate_nll(model: SpnpbModel, trial: TrialDataset, p) -> float:
    """Mean per-record negative log likelihood of a trial under a bias."""
    if model.loss_mode != LOSS_NLL:
        raise ModelError("evaluate_nll requires a gaussian-nll model")
    pv = np.asarray(getattr(p, "p", p), dtype=np.float64)
    p_rows = np.broadcast_to(pv, (len(trial), model.config.n_p)) if model.pb_enabled else None
    loss, _, _ = nll_core(model, trial.u, trial.s, p_rows, with_param_grads=False)
    return loss / len(trial)


def pca_project(pb_table: dict[str, np.ndarray]
                ) -> tuple[list[tuple[str, np.ndarray]], np.ndarray]:
    """Project mean-centered biases onto the top-2 principal axes.

    Axis signs are fixed by making each eigenvector's largest-magnitude
    component positive, so repeated runs plot identically. Returns the
    per-trial 2-d coordinates plus the two explained-variance fractions.
    """
    if len(pb_table) < 2:
        raise ModelError("pca needs at least 2 bias entries")
    ids = list(pb_table)
    x = np.stack([np.asarray(pb_table[tid], dtype=np.float64) for tid in ids])
    if x.shape[1] < 2:
        raise ModelError("pca projection needs bias dimension >= 2")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / len(x)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:2]
    comps = evecs[:, order].copy()
    for k in range(comps.shape[1]):
        i = int(np.argmax(np.abs(comps[:, k])))
        if comps[i, k] < 0:
            comps[:, k] = -comps[:, k]
    coords = centered @ comps
    total = float(evals.sum())
    fractions = (evals[order] / total) if total > 0 else np.zeros(2)
    return [(tid, coords[i]) for i, tid in enumerate(ids)], fractions
