"""Text file formats: trial datasets, model checkpoints, evaluation reports,
bias trajectories, PCA tables, and key = value config files.

Every format is line-oriented, self-describing (magic string + version on
the first line), and closed by an [end] marker so truncation is detectable.
Floats are written with 17 significant digits, which round-trips 64-bit
values exactly; a save-load-save cycle is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NormalizationStats, SpnpbConfig, SpnpbModel
from .net import LayerSpec, NetworkParameters
from .training import TrialDataset

DATASET_MAGIC = "spnpb-dataset"
CHECKPOINT_MAGIC = "spnpb-checkpoint"
EVAL_MAGIC = "spnpb-eval"
ABLATION_MAGIC = "spnpb-ablation"
TRAJECTORY_MAGIC = "spnpb-pb-trajectory"
PCA_MAGIC = "spnpb-pca"
FORMAT_VERSION = "v1"


class FormatError(ValueError):
    """Malformed file; message names the source and line."""

    def __init__(self, source: str, line_no: int | None, message: str):
        self.source = source
        self.line_no = line_no
        where = f"{source}:{line_no}" if line_no is not None else source
        super().__init__(f"{where}: {message}")


class VersionError(FormatError):
    """Recognized format but unsupported version."""


class TruncatedFileError(FormatError):
    """File ended before its [end] marker."""


class DimensionMismatchError(FormatError):
    """Declared dimensions do not match the data that follows."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def fmt_vector(v: np.ndarray) -> str:
    return " ".join(fmt(x) for x in np.asarray(v, dtype=np.float64))


class LineReader:
    """Sequential reader with single-line pushback and located errors."""

    def __init__(self, text: str, source: str):
        self.lines = text.split("\n")
        self.source = source
        self.pos = 0

    def error(self, message: str, line_no: int | None = None,
              kind: type = FormatError) -> FormatError:
        return kind(self.source, self.pos if line_no is None else line_no, message)

    def next_line(self) -> str:
        """Next line, skipping blanks and # comments. Raises at end of text."""
        while self.pos < len(self.lines):
            line = self.lines[self.pos]
            self.pos += 1
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                return stripped
        raise TruncatedFileError(self.source, self.pos,
                                 "file ended before its [end] marker")

    def expect_magic(self, magic: str) -> None:
        line = self.next_line()
        parts = line.split()
        if len(parts) != 2 or parts[0] != magic:
            raise self.error(f"expected '{magic} {FORMAT_VERSION}', got {line!r}")
        if parts[1] != FORMAT_VERSION:
            raise self.error(f"unsupported {magic} version {parts[1]!r}",
                             kind=VersionError)

    def expect_end(self) -> None:
        if self.next_line() != "[end]":
            raise self.error("expected [end] marker")

    def key_value(self, key: str) -> str:
        line = self.next_line()
        k, sep, v = line.partition("=")
        if not sep or k.strip() != key:
            raise self.error(f"expected '{key} = ...', got {line!r}")
        return v.strip()

    def floats(self, text: str, count: int | None = None) -> np.ndarray:
        parts = text.split()
        try:
            values = np.array([float(p) for p in parts], dtype=np.float64)
        except ValueError:
            raise self.error(f"bad number in {text!r}", line_no=self.pos)
        if count is not None and len(values) != count:
            raise self.error(f"expected {count} numbers, got {len(values)}",
                             line_no=self.pos, kind=DimensionMismatchError)
        return values

    def int_value(self, text: str) -> int:
        try:
            return int(text)
        except ValueError:
            raise self.error(f"expected an integer, got {text!r}", line_no=self.pos)


# ---------------------------------------------------------------- datasets

def dataset_to_text(trial: TrialDataset) -> str:
    if any(c.isspace() for c in trial.trial_id) or not trial.trial_id:
        raise ValueError(f"trial id {trial.trial_id!r} must be non-empty, "
                         "without whitespace")
    n_u = trial.u.shape[1]
    n_s = trial.s.shape[1]
    out = [
        f"{DATASET_MAGIC} {FORMAT_VERSION}",
        f"trial_id = {trial.trial_id}",
        f"regime = {trial.regime}",
        f"rate_hz = {fmt(trial.rate_hz)}",
        f"n_u = {n_u}",
        f"n_s = {n_s}",
        f"count = {len(trial)}",
    ]
    for i in range(len(trial)):
        out.append(fmt_vector(trial.u[i]) + " " + fmt_vector(trial.s[i]))
    out.append("[end]")
    return "\n".join(out) + "\n"


def dataset_from_text(text: str, source: str = "<dataset>") -> TrialDataset:
    r = LineReader(text, source)
    r.expect_magic(DATASET_MAGIC)
    trial_id = r.key_value("trial_id")
    regime = r.key_value("regime")
    rate_hz = float(r.key_value("rate_hz"))
    n_u = r.int_value(r.key_value("n_u"))
    n_s = r.int_value(r.key_value("n_s"))
    count = r.int_value(r.key_value("count"))
    if min(n_u, n_s, count) < 1:
        raise r.error("n_u, n_s and count must be >= 1",
                      kind=DimensionMismatchError)
    u = np.empty((count, n_u))
    s = np.empty((count, n_s))
    for i in range(count):
        row = r.floats(r.next_line(), n_u + n_s)
        u[i] = row[:n_u]
        s[i] = row[n_u:]
    r.expect_end()
    return TrialDataset(trial_id=trial_id, u=u, s=s, regime=regime, rate_hz=rate_hz)


# -------------------------------------------------------------- checkpoints

def checkpoint_to_text(model: SpnpbModel) -> str:
    c = model.config
    out = [
        f"{CHECKPOINT_MAGIC} {FORMAT_VERSION}",
        "[config]",
        f"n_u = {c.n_u}",
        f"n_p = {c.n_p}",
        f"n_v = {c.n_v}",
        f"n_tau = {c.n_tau}",
        "hidden = " + " ".join(str(h) for h in c.hidden),
        f"loss_mode = {model.loss_mode}",
        f"pb_enabled = {'true' if model.pb_enabled else 'false'}",
        "[normalization]",
        f"u_mean = {fmt_vector(model.norm.u_mean)}",
        f"u_std = {fmt_vector(model.norm.u_std)}",
        f"s_mean = {fmt_vector(model.norm.s_mean)}",
        f"s_std = {fmt_vector(model.norm.s_std)}",
        f"[layers] {model.net.spec.n_layers}",
    ]
    for w, b in zip(model.net.weights, model.net.biases):
        out.append(f"layer {w.shape[0]} {w.shape[1]}")
        for row in w:
            out.append(fmt_vector(row))
        out.append("bias " + fmt_vector(b))
    out.append(f"[pb] {len(model.pb_table)}")
    for tid, p in model.pb_table.items():
        if any(ch.isspace() for ch in tid) or not tid:
            raise ValueError(f"trial id {tid!r} must be non-empty, without whitespace")
        out.append(f"{tid} {fmt_vector(p)}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def checkpoint_from_text(text: str, source: str = "<checkpoint>") -> SpnpbModel:
    r = LineReader(text, source)
    r.expect_magic(CHECKPOINT_MAGIC)
    if r.next_line() != "[config]":
        raise r.error("expected [config] section")
    n_u = r.int_value(r.key_value("n_u"))
    n_p = r.int_value(r.key_value("n_p"))
    n_v = r.int_value(r.key_value("n_v"))
    n_tau = r.int_value(r.key_value("n_tau"))
    hidden_text = r.key_value("hidden")
    hidden = tuple(r.int_value(h) for h in hidden_text.split())
    loss_mode = r.key_value("loss_mode")
    if loss_mode not in ("gaussian-nll", "mse"):
        raise r.error(f"unknown loss mode {loss_mode!r}")
    pb_text = r.key_value("pb_enabled")
    if pb_text not in ("true", "false"):
        raise r.error(f"pb_enabled must be true or false, got {pb_text!r}")
    config = SpnpbConfig(n_u=n_u, n_p=n_p, n_v=n_v, n_tau=n_tau, hidden=hidden)

    if r.next_line() != "[normalization]":
        raise r.error("expected [normalization] section")
    norm = NormalizationStats(
        u_mean=r.floats(r.key_value("u_mean"), n_u),
        u_std=r.floats(r.key_value("u_std"), n_u),
        s_mean=r.floats(r.key_value("s_mean"), config.n_s),
        s_std=r.floats(r.key_value("s_std"), config.n_s),
    )

    header = r.next_line().split()
    if len(header) != 2 or header[0] != "[layers]":
        raise r.error("expected [layers] section")
    n_layers = r.int_value(header[1])
    pb_enabled = pb_text == "true"
    expected_sizes = (n_u + (n_p if pb_enabled else 0), *hidden,
                      (2 * config.n_s if loss_mode == "gaussian-nll" else config.n_s))
    if n_layers != len(expected_sizes) - 1:
        raise r.error(f"layer count {n_layers} does not match config",
                      kind=DimensionMismatchError)
    weights, biases = [], []
    for li in range(n_layers):
        parts = r.next_line().split()
        if len(parts) != 3 or parts[0] != "layer":
            raise r.error(f"expected 'layer <in> <out>' for layer {li}")
        fan_in, fan_out = r.int_value(parts[1]), r.int_value(parts[2])
        if (fan_in, fan_out) != (expected_sizes[li], expected_sizes[li + 1]):
            raise r.error(
                f"layer {li} is {fan_in}x{fan_out}, expected "
                f"{expected_sizes[li]}x{expected_sizes[li + 1]}",
                kind=DimensionMismatchError)
        w = np.empty((fan_in, fan_out))
        for row in range(fan_in):
            w[row] = r.floats(r.next_line(), fan_out)
        bias_line = r.next_line()
        if not bias_line.startswith("bias "):
            raise r.error("expected bias line")
        weights.append(w)
        biases.append(r.floats(bias_line[len("bias "):], fan_out))

    header = r.next_line().split()
    if len(header) != 2 or header[0] != "[pb]":
        raise r.error("expected [pb] section")
    pb_table = {}
    for _ in range(r.int_value(header[1])):
        parts = r.next_line().split(maxsplit=1)
        if len(parts) != 2:
            raise r.error("expected '<trial-id> <bias values>'")
        pb_table[parts[0]] = r.floats(parts[1], n_p)
    r.expect_end()

    net = NetworkParameters(LayerSpec(expected_sizes), weights, biases)
    return SpnpbModel(config=config, net=net, norm=norm, pb_table=pb_table,
                      loss_mode=loss_mode, pb_enabled=pb_enabled)


# ------------------------------------------------------------ eval reports

@dataclass
class EvalReport:
    """Point-line distances of one (model variant, regime) evaluation run."""

    variant: str
    regime: str
    entries: list[tuple[str, int, float]]
    mean: float
    variance: float

    @classmethod
    def from_entries(cls, variant: str, regime: str,
                     entries: list[tuple[str, int, float]]) -> "EvalReport":
        d = np.array([e[2] for e in entries], dtype=np.float64)
        return cls(variant=variant, regime=regime, entries=list(entries),
                   mean=float(d.mean()), variance=float(d.var()))


def eval_report_to_text(report: EvalReport) -> str:
    out = [
        f"{EVAL_MAGIC} {FORMAT_VERSION}",
        f"variant = {report.variant}",
        f"regime = {report.regime}",
        f"count = {len(report.entries)}",
        "# object\ttemplate\tdistance_m",
    ]
    for obj, template, dist in report.entries:
        out.append(f"{obj}\t{template}\t{fmt(dist)}")
    out.append(f"mean = {fmt(report.mean)}")
    out.append(f"variance = {fmt(report.variance)}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def eval_report_from_text(text: str, source: str = "<eval>") -> EvalReport:
    r = LineReader(text, source)
    r.expect_magic(EVAL_MAGIC)
    variant = r.key_value("variant")
    regime = r.key_value("regime")
    count = r.int_value(r.key_value("count"))
    entries = []
    for _ in range(count):
        parts = r.next_line().split("\t")
        if len(parts) != 3:
            raise r.error("expected 'object<tab>template<tab>distance'")
        entries.append((parts[0], r.int_value(parts[1]), float(parts[2])))
    mean = float(r.key_value("mean"))
    variance = float(r.key_value("variance"))
    r.expect_end()
    return EvalReport(variant=variant, regime=regime, entries=entries,
                      mean=mean, variance=variance)


def ablation_table_to_text(rows: list[tuple[str, str, float, float]]) -> str:
    """Rows of (regime, variant, mean, variance), the ablation-grid shape."""
    out = [f"{ABLATION_MAGIC} {FORMAT_VERSION}",
           "# regime\tvariant\tmean_m\tvariance_m2"]
    for regime, variant, mean, var in rows:
        out.append(f"{regime}\t{variant}\t{fmt(mean)}\t{fmt(var)}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def ablation_table_from_text(text: str, source: str = "<ablation>"
                             ) -> list[tuple[str, str, float, float]]:
    r = LineReader(text, source)
    r.expect_magic(ABLATION_MAGIC)
    rows = []
    while True:
        line = r.next_line()
        if line == "[end]":
            return rows
        parts = line.split("\t")
        if len(parts) != 4:
            raise r.error("expected 'regime<tab>variant<tab>mean<tab>variance'")
        rows.append((parts[0], parts[1], float(parts[2]), float(parts[3])))


# -------------------------------------------------------- bias trajectories

def trajectory_to_text(rows: list[tuple[int, int, np.ndarray]], n_p: int,
                       label: str = "") -> str:
    """Rows of (observation index, update epoch, bias after that epoch)."""
    out = [
        f"{TRAJECTORY_MAGIC} {FORMAT_VERSION}",
        f"label = {label}",
        f"n_p = {n_p}",
        "# observation epoch bias...",
    ]
    for obs, epoch, p in rows:
        out.append(f"{obs} {epoch} {fmt_vector(p)}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def trajectory_from_text(text: str, source: str = "<trajectory>"
                         ) -> tuple[str, list[tuple[int, int, np.ndarray]]]:
    r = LineReader(text, source)
    r.expect_magic(TRAJECTORY_MAGIC)
    label = r.key_value("label")
    n_p = r.int_value(r.key_value("n_p"))
    rows = []
    while True:
        line = r.next_line()
        if line == "[end]":
            return label, rows
        parts = line.split()
        if len(parts) != 2 + n_p:
            raise r.error(f"expected 2 indices + {n_p} bias values",
                          kind=DimensionMismatchError)
        rows.append((r.int_value(parts[0]), r.int_value(parts[1]),
                     r.floats(" ".join(parts[2:]), n_p)))


# ------------------------------------------------------------------- pca

def pca_to_text(rows: list[tuple[str, np.ndarray]], fractions: np.ndarray) -> str:
    out = [
        f"{PCA_MAGIC} {FORMAT_VERSION}",
        f"explained = {fmt_vector(fractions)}",
        "# trial_id x y",
    ]
    for tid, coords in rows:
        out.append(f"{tid} {fmt_vector(coords)}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def pca_from_text(text: str, source: str = "<pca>"
                  ) -> tuple[list[tuple[str, np.ndarray]], np.ndarray]:
    r = LineReader(text, source)
    r.expect_magic(PCA_MAGIC)
    fractions = r.floats(r.key_value("explained"), 2)
    rows = []
    while True:
        line = r.next_line()
        if line == "[end]":
            return rows, fractions
        parts = line.split()
        if len(parts) != 3:
            raise r.error("expected '<trial-id> <x> <y>'")
        rows.append((parts[0], r.floats(" ".join(parts[1:]), 2)))


# ---------------------------------------------------------------- config

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """key = value lines; # starts a comment; later keys override earlier."""
    result: dict[str, str] = {}
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(source, i, f"expected 'key = value', got {line!r}")
        key = key.strip()
        if not key:
            raise FormatError(source, i, "empty key")
        result[key] = value.split("#", 1)[0].strip()
    return result
