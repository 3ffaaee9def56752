"""HTTP service wrapping the core package.

Compute endpoints are stateless: every request carries the texts it needs
(scenario, scene, datasets, checkpoint) and the response carries result
texts back. The /sessions endpoints hold the one piece of genuinely
stateful machinery, a live online bias-update session per id.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__, schemas
from .control import optimize
from .experiments import (RunSettings, TESTED_REGIMES, collect_scenario,
                          eval_regime, run_ablation, run_online_session,
                          train_variant, variant_named)
from .fileio import (FormatError, ablation_table_to_text, checkpoint_from_text,
                     checkpoint_to_text, dataset_from_text, dataset_to_text,
                     eval_report_to_text, pca_to_text, trajectory_to_text)
from .model import ModelError
from .net import MomentumState, ShapeError
from .online import UpdateBuffer, maybe_update, push_observation
from .scenarios import scenario_from_text, scene_from_text
from .training import TrainingSet, pca_project
from .world import WorldError, query_embedding, robot_for_body

app = FastAPI(title="spnpb", version=__version__)

_CORE_ERRORS = (ModelError, WorldError, FormatError, ShapeError, ValueError,
                KeyError)


def _core_error(request, exc):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


for _etype in _CORE_ERRORS:
    app.add_exception_handler(_etype, _core_error)


def _resolve_settings(req: schemas.SettingsMixin,
                      seed: int | None = None) -> RunSettings:
    base = RunSettings.paper() if req.paper_scale else RunSettings()
    settings = RunSettings.from_config(req.settings, base)
    if seed is not None:
        settings = RunSettings.from_config({"seed": str(seed)}, settings)
    return settings


def _resolve_scenario(scenario_text: str, scene_text: str, source: str):
    spec = scenario_from_text(scenario_text, source)
    spec.scene = scene_from_text(scene_text, spec.scene_ref)
    return spec


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/collect", response_model=schemas.CollectResponse)
def collect(req: schemas.CollectRequest) -> schemas.CollectResponse:
    _resolve_settings(req)  # reject typoed keys even though sizes are the
    # scenario file's own
    spec = _resolve_scenario(req.scenario_text, req.scene_text, "<request>")
    labels = tuple(req.labels) if req.labels else None
    ts = collect_scenario(spec, labels=labels)
    return schemas.CollectResponse(
        datasets={t.trial_id: dataset_to_text(t) for t in ts.trials})


@app.post("/train", response_model=schemas.TrainResponse)
def train_endpoint(req: schemas.TrainRequest) -> schemas.TrainResponse:
    settings = _resolve_settings(req)
    trials = [dataset_from_text(text, f"<dataset {i}>")
              for i, text in enumerate(req.datasets)]
    model, report = train_variant(TrainingSet(trials), variant_named(req.variant),
                                  settings, seed=req.seed)
    return schemas.TrainResponse(
        checkpoint=checkpoint_to_text(model),
        epoch_losses=report.epoch_losses,
        wall_clock_s=report.wall_clock_s,
        pb_table={k: list(v) for k, v in report.pb_table.items()})


@app.post("/update-pb", response_model=schemas.UpdatePbResponse)
def update_pb(req: schemas.UpdatePbRequest) -> schemas.UpdatePbResponse:
    settings = _resolve_settings(req)
    model = checkpoint_from_text(req.checkpoint, "<checkpoint>")
    trial = dataset_from_text(req.dataset, "<dataset>")
    start = np.asarray(req.start_p, dtype=np.float64) if req.start_p else None
    p, rows = run_online_session(model, trial, settings.updater_config(),
                                 start_p=start, stride=settings.stride)
    label = req.label or trial.regime or trial.trial_id
    return schemas.UpdatePbResponse(
        p=list(p), trajectory=trajectory_to_text(rows, model.config.n_p, label))


@app.post("/control", response_model=schemas.ControlResponse)
def control(req: schemas.ControlRequest) -> schemas.ControlResponse:
    settings = _resolve_settings(req, seed=req.seed)
    model = checkpoint_from_text(req.checkpoint, "<checkpoint>")
    scene = scene_from_text(req.scene_text, "<scene>")
    query = query_embedding(scene, req.object_name, req.template)
    body_id = req.body
    robot = None
    if req.scenario_text:
        spec = scenario_from_text(req.scenario_text, "<scenario>")
        if req.regime is not None:
            body_id = spec.regime_named(req.regime).body_id
        robot = spec.robot(body_id)
    if robot is None:
        robot = robot_for_body(body_id)
    if req.p is not None:
        p = np.asarray(req.p, dtype=np.float64)
    elif model.pb_enabled:
        if req.regime is None or req.regime not in model.pb_table:
            raise ModelError("bias-enabled model needs a bias: pass p or a "
                             "regime the checkpoint was trained on")
        p = model.pb_table[req.regime]
    else:
        p = None
    cfg = settings.control_config(robot.joint_limits, settings.seed)
    result = optimize(model, p, query, cfg)
    return schemas.ControlResponse(
        u=list(result.best_u), loss=result.best_loss,
        initial_loss=result.best_initial_loss,
        epoch_best=result.epoch_best, label=query.label)


@app.post("/eval", response_model=schemas.EvalResponse)
def eval_endpoint(req: schemas.EvalRequest) -> schemas.EvalResponse:
    settings = _resolve_settings(req, seed=req.seed)
    model = checkpoint_from_text(req.checkpoint, "<checkpoint>")
    spec = _resolve_scenario(req.scenario_text, req.scene_text, "<scenario>")
    p = np.asarray(req.p, dtype=np.float64) if req.p is not None else None
    report = eval_regime(model, spec, req.regime, settings,
                         variant_name=req.variant_name, p_override=p)
    return schemas.EvalResponse(report=eval_report_to_text(report),
                                mean=report.mean, variance=report.variance)


@app.post("/ablate", response_model=schemas.AblateResponse)
def ablate(req: schemas.AblateRequest) -> schemas.AblateResponse:
    settings = _resolve_settings(req)
    spec = _resolve_scenario(req.scenario_text, req.scene_text, "<scenario>")
    ts = collect_scenario(spec)
    regimes = tuple(req.regimes) if req.regimes else TESTED_REGIMES
    variants = tuple(req.variants) if req.variants else None
    kwargs = {} if variants is None else {"variants": variants}
    rows, reports = run_ablation(ts, spec, settings, seed=req.seed,
                                 regimes=regimes, **kwargs)
    return schemas.AblateResponse(
        table=ablation_table_to_text(rows),
        reports={f"{regime}/{variant}": eval_report_to_text(rep)
                 for (regime, variant), rep in reports.items()})


@app.post("/pca", response_model=schemas.PcaResponse)
def pca(req: schemas.PcaRequest) -> schemas.PcaResponse:
    model = checkpoint_from_text(req.checkpoint, "<checkpoint>")
    rows, fractions = pca_project(model.pb_table)
    return schemas.PcaResponse(table=pca_to_text(rows, fractions),
                               explained=list(fractions))


# --------------------------------------------------------- online sessions

class _Session:
    def __init__(self, model, settings: RunSettings,
                 start_p: np.ndarray | None):
        if not model.pb_enabled:
            raise ModelError("online bias sessions need a bias-enabled model")
        self.model = model
        self.cfg = settings.updater_config()
        self.buf = UpdateBuffer(self.cfg.capacity, model.config.n_u,
                                model.config.n_s)
        self.p = (np.zeros(model.config.n_p) if start_p is None
                  else start_p.copy())
        self.momentum: MomentumState | None = None
        self.observations = 0
        self.updates = 0


_sessions: dict[str, _Session] = {}
_sessions_lock = threading.Lock()


def _get_session(session_id: str) -> _Session:
    with _sessions_lock:
        if session_id not in _sessions:
            raise KeyError(f"unknown session {session_id!r}")
        return _sessions[session_id]


def _session_state(sid: str, sess: _Session) -> schemas.SessionState:
    return schemas.SessionState(session_id=sid, p=list(sess.p),
                                observations=sess.observations,
                                updates=sess.updates)


@app.post("/sessions", response_model=schemas.SessionState)
def create_session(req: schemas.CreateSessionRequest) -> schemas.SessionState:
    settings = _resolve_settings(req)
    model = checkpoint_from_text(req.checkpoint, "<checkpoint>")
    start = (np.asarray(req.start_p, dtype=np.float64)
             if req.start_p is not None else None)
    sess = _Session(model, settings, start)
    sid = uuid.uuid4().hex
    with _sessions_lock:
        _sessions[sid] = sess
    return _session_state(sid, sess)


@app.get("/sessions/{session_id}", response_model=schemas.SessionState)
def read_session(session_id: str) -> schemas.SessionState:
    return _session_state(session_id, _get_session(session_id))


@app.post("/sessions/{session_id}/observe",
          response_model=schemas.ObserveResponse)
def observe(session_id: str, req: schemas.ObserveRequest
            ) -> schemas.ObserveResponse:
    sess = _get_session(session_id)
    with _sessions_lock:
        push_observation(sess.buf, np.asarray(req.u, dtype=np.float64),
                         np.asarray(req.s, dtype=np.float64))
        sess.observations += 1
        sess.p, trajectory, sess.momentum = maybe_update(
            sess.model, sess.buf, sess.p, sess.cfg, sess.momentum)
        updated = bool(trajectory)
        if updated:
            sess.updates += 1
    return schemas.ObserveResponse(p=list(sess.p),
                                   observations=sess.observations,
                                   updated=updated)


@app.delete("/sessions/{session_id}", response_model=schemas.SessionState)
def close_session(session_id: str) -> schemas.SessionState:
    with _sessions_lock:
        if session_id not in _sessions:
            raise KeyError(f"unknown session {session_id!r}")
        sess = _sessions.pop(session_id)
    return _session_state(session_id, sess)
