"""Experiment orchestration: collect a scenario's regimes, train the four
model variants, sweep the view-control evaluation, run ablation grids, and
replay a trial through the online bias updater.

Scale is a settings profile: desk defaults keep everything inside a test
budget, the paper profile restores the full-scale sizes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .control import ControlConfig, ControlResult, optimize
from .fileio import EvalReport
from .model import LOSS_MSE, LOSS_NLL, ModelError, SpnpbModel
from .net import MomentumState
from .online import UpdateBuffer, UpdaterConfig, maybe_update, push_observation
from .scenarios import ScenarioSpec
from .training import (TrainConfig, TrainingSet, TrainReport, TrialDataset,
                       train)
from .world import (RobotSpec, Scene, WorldState, arranged_positions,
                    collect_trial, forward_kinematics, gravity_torque,
                    point_line_distance, query_embedding, render_embedding,
                    robot_for_body)


@dataclass(frozen=True)
class VariantSpec:
    name: str
    loss_mode: str
    pb_enabled: bool


# Ablation grid: full model, uncertainty head only, bias only, neither.
VARIANTS = {
    "PB+ST": VariantSpec("PB+ST", LOSS_NLL, True),
    "ST": VariantSpec("ST", LOSS_NLL, False),
    "PB": VariantSpec("PB", LOSS_MSE, True),
    "None": VariantSpec("None", LOSS_MSE, False),
}

# The basic-schedule regimes the ablation grid is scored on.
TESTED_REGIMES = ("E0-B1", "E1-B0", "E2-B1")


def variant_named(name: str) -> VariantSpec:
    if name not in VARIANTS:
        raise ModelError(f"unknown variant {name!r} (have: {', '.join(VARIANTS)})")
    return VARIANTS[name]


@dataclass(frozen=True)
class RunSettings:
    """One scale profile: data sizes, training lengths, search sizes."""

    n_v: int = 32
    count: int = 600
    epochs: int = 250
    batch_size: int = 64
    adam_rate: float = 1e-3
    n_init: int = 2000
    n_batch: int = 50
    n_epoch: int = 2
    gamma_max: float = 0.1
    c_tau: float = 1e-4
    threshold: int = 100
    capacity: int = 200
    update_epochs: int = 3
    sgd_rate: float = 1e-2
    sgd_momentum: float = 0.9
    stride: int = 10
    seed: int = 0

    @classmethod
    def paper(cls) -> "RunSettings":
        """Full-scale profile; every update round consumes one observation."""
        return cls(n_v=512, count=1000, epochs=300, n_init=30000, n_batch=100,
                   stride=1)

    @classmethod
    def from_config(cls, cfg: dict[str, str],
                    base: "RunSettings | None" = None) -> "RunSettings":
        base = base if base is not None else cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        updates = {}
        for key, value in cfg.items():
            if key not in types:
                known = ", ".join(sorted(types))
                raise ValueError(f"unknown setting {key!r} (have: {known})")
            caster = int if types[key] == "int" else float
            try:
                updates[key] = caster(value)
            except ValueError:
                raise ValueError(f"setting {key!r} needs a {caster.__name__}, "
                                 f"got {value!r}")
        return dataclasses.replace(base, **updates)

    def train_config(self, variant: VariantSpec, seed: int | None = None
                     ) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.seed if seed is None else seed,
                           loss_mode=variant.loss_mode,
                           pb_enabled=variant.pb_enabled,
                           adam_rate=self.adam_rate)

    def control_config(self, joint_limits: np.ndarray, seed: int
                       ) -> ControlConfig:
        return ControlConfig(joint_limits=joint_limits, n_init=self.n_init,
                             n_batch=self.n_batch, n_epoch=self.n_epoch,
                             gamma_max=self.gamma_max, c_tau=self.c_tau,
                             seed=seed)

    def updater_config(self) -> UpdaterConfig:
        return UpdaterConfig(threshold=self.threshold, capacity=self.capacity,
                             epochs=self.update_epochs, sgd_rate=self.sgd_rate,
                             sgd_momentum=self.sgd_momentum)


def collect_scenario(spec: ScenarioSpec,
                     labels: tuple[str, ...] | None = None) -> TrainingSet:
    """Collect every regime of a scenario (or the named subset) with its own
    seeds; trial ids are the regime labels."""
    if spec.scene is None:
        raise ModelError(f"scenario {spec.name!r} has no resolved scene")
    chosen = spec.regimes if labels is None else [spec.regime_named(l)
                                                  for l in labels]
    trials = [collect_trial(spec.scene, reg.world_state(), reg.count,
                            seed=reg.seed, robot=spec.robot(reg.body_id),
                            trial_id=reg.label, regime=reg.label)
              for reg in chosen]
    return TrainingSet(trials)


def train_variant(ts: TrainingSet, variant: VariantSpec | str,
                  settings: RunSettings, seed: int | None = None
                  ) -> tuple[SpnpbModel, TrainReport]:
    if isinstance(variant, str):
        variant = variant_named(variant)
    return train(ts, settings.train_config(variant, seed))


def _control_seed(base: int, obj_index: int, template: int) -> int:
    # distinct deterministic stream per (object, template) query
    return base * 1000 + obj_index * 10 + template


class SimulatorModel:
    """Evaluation stand-in whose prediction IS the simulator: the noise-free
    rendered embedding plus the holding torque of the wrapped regime.

    Plugs into the controller through the control_loss_batch hook; gradients
    come from clamped central differences. An upper bound on what any
    trained model can achieve, used to sanity-check the aim of the search.
    """

    loss_mode = "oracle"
    pb_enabled = False

    def __init__(self, scene: Scene, state: WorldState,
                 robot: RobotSpec | None = None, fd_step: float = 1e-6):
        self.scene = scene
        self.state = dataclasses.replace(state, noise_std=0.0)
        self.robot = robot if robot is not None else robot_for_body(state.body_id)
        self.fd_step = fd_step
        self.config = _SimulatorDims(n_u=4, n_v=scene.n_v, n_tau=4,
                                     n_s=scene.n_v + 4, n_p=0)

    def _losses(self, U: np.ndarray, q: np.ndarray, c_tau: float) -> np.ndarray:
        out = np.empty(len(U))
        for i, u in enumerate(U):
            pose = forward_kinematics(self.robot, u)
            v = render_embedding(self.scene, self.state, pose, step_seed=0)
            tau = gravity_torque(self.robot, u)
            out[i] = -(q @ v) + c_tau * np.linalg.norm(tau)
        return out

    def control_loss_batch(self, U, p, q, c_tau, with_grad):
        U = np.asarray(U, dtype=np.float64)
        losses = self._losses(U, q, c_tau)
        if not with_grad:
            return losses, None
        lo = self.robot.joint_limits[:, 0]
        hi = self.robot.joint_limits[:, 1]
        grads = np.empty_like(U)
        for j in range(U.shape[1]):
            up = U.copy()
            dn = U.copy()
            up[:, j] = np.minimum(U[:, j] + self.fd_step, hi[j])
            dn[:, j] = np.maximum(U[:, j] - self.fd_step, lo[j])
            span = up[:, j] - dn[:, j]
            span[span == 0.0] = 1.0
            grads[:, j] = (self._losses(up, q, c_tau)
                           - self._losses(dn, q, c_tau)) / span
        return losses, grads


@dataclass(frozen=True)
class _SimulatorDims:
    n_u: int
    n_v: int
    n_tau: int
    n_s: int
    n_p: int


def eval_regime(model: SpnpbModel, spec: ScenarioSpec, regime_label: str,
                settings: RunSettings, variant_name: str = "",
                p_override: np.ndarray | None = None) -> EvalReport:
    """Sweep every (object, template) query: invert the model for a command,
    then measure how far the simulated line of sight passes from the object."""
    if spec.scene is None:
        raise ModelError(f"scenario {spec.name!r} has no resolved scene")
    regime = spec.regime_named(regime_label)
    robot = spec.robot(regime.body_id)
    positions = arranged_positions(spec.scene, regime.env_id)
    if model.pb_enabled:
        p = p_override
        if p is None:
            if regime_label not in model.pb_table:
                raise ModelError(f"model has no bias for regime {regime_label!r}")
            p = model.pb_table[regime_label]
    else:
        p = None
    entries = []
    for oi, obj in enumerate(spec.eval_objects):
        for template in spec.templates:
            query = query_embedding(spec.scene, obj, template)
            cfg = settings.control_config(
                robot.joint_limits, _control_seed(settings.seed, oi, template))
            result: ControlResult = optimize(model, p, query, cfg)
            pose = forward_kinematics(robot, result.best_u)
            dist = point_line_distance(pose, positions[obj])
            entries.append((obj, int(template), dist))
    return EvalReport.from_entries(variant_name or model.loss_mode,
                                   regime_label, entries)


def run_ablation(ts: TrainingSet, spec: ScenarioSpec, settings: RunSettings,
                 seed: int | None = None,
                 regimes: tuple[str, ...] = TESTED_REGIMES,
                 variants: tuple[str, ...] = tuple(VARIANTS),
                 ) -> tuple[list[tuple[str, str, float, float]],
                            dict[tuple[str, str], EvalReport]]:
    """Train every variant once on the shared data, then score each on each
    tested regime. Rows are (regime, variant, mean distance, variance)."""
    rows = []
    reports: dict[tuple[str, str], EvalReport] = {}
    for name in variants:
        model, _ = train_variant(ts, name, settings, seed)
        for regime_label in regimes:
            report = eval_regime(model, spec, regime_label, settings,
                                 variant_name=name)
            reports[(regime_label, name)] = report
            rows.append((regime_label, name, report.mean, report.variance))
    return rows, reports


def run_online_session(model: SpnpbModel, trial: TrialDataset,
                       cfg: UpdaterConfig, start_p: np.ndarray | None = None,
                       stride: int = 1
                       ) -> tuple[np.ndarray, list[tuple[int, int, np.ndarray]]]:
    """Stream a trial through the frozen-weight bias updater.

    Observations enter the buffer one at a time; every stride-th observation
    (once past the start threshold) triggers an update round. Returns the
    final bias and one trajectory row per update epoch.
    """
    if not model.pb_enabled:
        raise ModelError("online bias update requires a bias-enabled model")
    if stride < 1:
        raise ModelError("stride must be >= 1")
    n_p = model.config.n_p
    p = np.zeros(n_p) if start_p is None else np.asarray(start_p,
                                                         dtype=np.float64).copy()
    buf = UpdateBuffer(cfg.capacity, model.config.n_u, model.config.n_s)
    momentum: MomentumState | None = None
    rows: list[tuple[int, int, np.ndarray]] = [(0, 0, p.copy())]
    for i in range(len(trial)):
        push_observation(buf, trial.u[i], trial.s[i])
        if (i + 1) % stride != 0:
            continue
        p, trajectory, momentum = maybe_update(model, buf, p, cfg, momentum)
        for epoch, point in enumerate(trajectory, start=1):
            rows.append((i + 1, epoch, point.copy()))
    return p, rows


def nearest_bias(pb_table: dict[str, np.ndarray], p: np.ndarray) -> str:
    """Label of the stored bias closest to p (ties break on label order)."""
    if not pb_table:
        raise ModelError("bias table is empty")
    best_label, best_d2 = None, np.inf
    for label in sorted(pb_table):
        d2 = float(np.sum((pb_table[label] - p) ** 2))
        if d2 < best_d2:
            best_label, best_d2 = label, d2
    return best_label
