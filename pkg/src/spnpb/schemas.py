"""Request and response bodies for the HTTP service.

File-shaped payloads (datasets, checkpoints, reports, scenario and scene
definitions) travel as their canonical text, so the service never needs a
shared filesystem and every payload round-trips bit-exactly.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SettingsMixin(BaseModel):
    """Scale profile selection: desk defaults, optionally the paper profile,
    then key = value overrides on top (same keys as config files)."""

    settings: dict[str, str] = Field(default_factory=dict)
    paper_scale: bool = False


class CollectRequest(SettingsMixin):
    scenario_text: str
    scene_text: str
    labels: list[str] | None = None


class CollectResponse(BaseModel):
    datasets: dict[str, str]


class TrainRequest(SettingsMixin):
    datasets: list[str]
    variant: str = "PB+ST"
    seed: int | None = None


class TrainResponse(BaseModel):
    checkpoint: str
    epoch_losses: list[float]
    wall_clock_s: float
    pb_table: dict[str, list[float]]


class UpdatePbRequest(SettingsMixin):
    checkpoint: str
    dataset: str
    start_p: list[float] | None = None
    label: str = ""


class UpdatePbResponse(BaseModel):
    p: list[float]
    trajectory: str


class ControlRequest(SettingsMixin):
    model_config = ConfigDict(populate_by_name=True)

    checkpoint: str
    scene_text: str
    object_name: str = Field(alias="object")
    template: int = 0
    scenario_text: str | None = None
    regime: str | None = None
    p: list[float] | None = None
    body: int = 0
    seed: int | None = None


class ControlResponse(BaseModel):
    u: list[float]
    loss: float
    initial_loss: float
    epoch_best: list[float]
    label: str


class EvalRequest(SettingsMixin):
    checkpoint: str
    scenario_text: str
    scene_text: str
    regime: str
    variant_name: str = ""
    p: list[float] | None = None
    seed: int | None = None


class EvalResponse(BaseModel):
    report: str
    mean: float
    variance: float


class AblateRequest(SettingsMixin):
    scenario_text: str
    scene_text: str
    seed: int | None = None
    regimes: list[str] | None = None
    variants: list[str] | None = None


class AblateResponse(BaseModel):
    table: str
    reports: dict[str, str]


class PcaRequest(BaseModel):
    checkpoint: str


class PcaResponse(BaseModel):
    table: str
    explained: list[float]


class CreateSessionRequest(SettingsMixin):
    checkpoint: str
    start_p: list[float] | None = None


class SessionState(BaseModel):
    session_id: str
    p: list[float]
    observations: int
    updates: int


class ObserveRequest(BaseModel):
    u: list[float]
    s: list[float]


class ObserveResponse(BaseModel):
    p: list[float]
    observations: int
    updated: bool
