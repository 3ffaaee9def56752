"""Scenario schedules: which regimes to collect, which scene they share,
and which (object, template) pairs the evaluation sweeps.

Two schedules are built in. The basic schedule crosses three object
arrangements with two camera bodies (six regimes, all bright). The advanced
schedule varies a hidden person and the lighting level across eight regimes
on one body. Both are available programmatically and as text files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .fileio import FORMAT_VERSION, FormatError, LineReader, fmt
from .world import (DEFAULT_ROBOT, RobotSpec, Scene, WorldState, make_scene,
                    robot_for_body)

SCENE_MAGIC = "spnpb-scene"
SCENARIO_MAGIC = "spnpb-scenario"

BASIC_NOISE_STD = 0.005
BASIC_FOV_DEG = 60.0
DESK_COUNT = 600
PAPER_COUNT = 1000

OBJECT_NAMES = ("cup", "book", "plant", "lamp", "phone")


@dataclass(frozen=True)
class RegimeSpec:
    """One data-collection condition: arrangement, body, lighting, and the
    seeds that make its random motion and embedding noise reproducible."""

    label: str
    env_id: int
    body_id: int
    lighting: float
    count: int
    seed: int
    hidden: tuple[str, ...] = ()
    noise_std: float = BASIC_NOISE_STD

    def world_state(self) -> WorldState:
        return WorldState(env_id=self.env_id, body_id=self.body_id,
                          lighting=self.lighting, noise_std=self.noise_std,
                          seed=self.seed, hidden=self.hidden)


@dataclass
class ScenarioSpec:
    name: str
    scene_ref: str
    regimes: list[RegimeSpec]
    eval_objects: tuple[str, ...]
    templates: tuple[int, ...]
    fov_deg: float = 30.0
    scene: Scene | None = field(default=None, repr=False)

    def robot(self, body_id: int) -> RobotSpec:
        """The body's arm fitted with this scenario's camera."""
        base = replace(DEFAULT_ROBOT,
                       fov_half_angle=math.radians(self.fov_deg))
        return robot_for_body(body_id, base)

    def regime_named(self, label: str) -> RegimeSpec:
        for regime in self.regimes:
            if regime.label == label:
                return regime
        known = ", ".join(r.label for r in self.regimes)
        raise KeyError(f"unknown regime {label!r} (have: {known})")

    def with_counts(self, count: int) -> "ScenarioSpec":
        regimes = [replace(r, count=count) for r in self.regimes]
        return replace(self, regimes=regimes)


# ----------------------------------------------------------------- builders

def _ring(angle_deg: float, radius: float, z: float) -> tuple[float, float, float]:
    a = math.radians(angle_deg)
    return (radius * math.cos(a), radius * math.sin(a), z)


# Two shelf rings around the arm. The camera's reachable line of sight
# spans roughly -20..+65 degrees of elevation on one body and -50..+36 on
# the other; the low ring sits near 0 degrees and the high ring near +44,
# so nearly every command puts at least one object in view. Sparse scenes
# train badly here: when most views show only background, the variance head
# learns to write the rare object sightings off as noise.
_LOW_Z = 0.15
_HIGH_Z = 0.55
_BASIC_OBJECTS = [
    # low shelf: the five query targets spread among furniture
    ("door", _ring(-168.75, 0.62, _LOW_Z), 21),
    ("shelf", _ring(-146.25, 0.66, _LOW_Z), 22),
    ("cup", _ring(-123.75, 0.64, _LOW_Z), 11),
    ("chair", _ring(-101.25, 0.68, _LOW_Z), 32),
    ("book", _ring(-78.75, 0.62, _LOW_Z), 12),
    ("poster", _ring(-56.25, 0.66, _LOW_Z), 23),
    ("table", _ring(-33.75, 0.64, _LOW_Z), 33),
    ("keyboard", _ring(-11.25, 0.68, _LOW_Z), 34),
    ("plant", _ring(11.25, 0.62, _LOW_Z), 13),
    ("window", _ring(33.75, 0.66, _LOW_Z), 24),
    ("bottle", _ring(56.25, 0.64, _LOW_Z), 35),
    ("lamp", _ring(78.75, 0.68, _LOW_Z), 14),
    ("clock", _ring(101.25, 0.62, _LOW_Z), 25),
    ("phone", _ring(123.75, 0.66, _LOW_Z), 15),
    ("mirror", _ring(146.25, 0.64, _LOW_Z), 26),
    ("rug", _ring(168.75, 0.68, _LOW_Z), 27),
    # high shelf: wall fixtures
    ("vase", _ring(-165.0, 0.63, _HIGH_Z), 28),
    ("frame", _ring(-135.0, 0.67, _HIGH_Z), 29),
    ("radio", _ring(-105.0, 0.63, _HIGH_Z), 30),
    ("fan", _ring(-75.0, 0.67, _HIGH_Z), 31),
    ("painting", _ring(-45.0, 0.63, _HIGH_Z), 36),
    ("sign", _ring(-15.0, 0.67, _HIGH_Z), 37),
    ("banner", _ring(15.0, 0.63, _HIGH_Z), 38),
    ("screen", _ring(45.0, 0.67, _HIGH_Z), 39),
    ("speaker", _ring(75.0, 0.63, _HIGH_Z), 40),
    ("globe", _ring(105.0, 0.67, _HIGH_Z), 41),
    ("trophy", _ring(135.0, 0.63, _HIGH_Z), 42),
    ("basket", _ring(165.0, 0.67, _HIGH_Z), 43),
]


def build_basic_scene(n_v: int = 32) -> Scene:
    """Five query targets among a room's worth of objects on two shelf
    rings, all beyond the arm's reach so bearings stay stable."""
    return make_scene(n_v, background_seed=9, objects=list(_BASIC_OBJECTS),
                      extent=0.9)


def build_basic_scenario(n_v: int = 32, count: int = DESK_COUNT) -> ScenarioSpec:
    """Six regimes: arrangements E0-E2 crossed with camera bodies B0-B1."""
    regimes = []
    for env in range(3):
        for body in range(2):
            label = f"E{env}-B{body}"
            regimes.append(RegimeSpec(
                label=label, env_id=env, body_id=body, lighting=1.0,
                count=count, seed=101 + len(regimes)))
    return ScenarioSpec(name="basic", scene_ref="basic.scene", regimes=regimes,
                        eval_objects=OBJECT_NAMES, templates=(0, 1, 2, 3, 4),
                        fov_deg=BASIC_FOV_DEG, scene=build_basic_scene(n_v))


def build_advanced_scene(n_v: int = 32) -> Scene:
    """The basic room plus a person who is only sometimes present. The
    person's height is unique, so rearrangements never move them."""
    return make_scene(n_v, background_seed=9,
                      objects=list(_BASIC_OBJECTS)
                      + [("person", _ring(178.0, 0.75, 0.30), 16)],
                      extent=0.9)


def build_advanced_scenario(n_v: int = 32, count: int = DESK_COUNT) -> ScenarioSpec:
    """Eight regimes on one body, varying person presence and lighting:
    E0/E2/E3 person+bright, E1/E4/E5 absent+bright, E6 person+dark,
    E7 absent+dark."""
    absent = {1, 4, 5, 7}
    dark = {6, 7}
    regimes = []
    for k in range(8):
        regimes.append(RegimeSpec(
            label=f"E{k}", env_id=k, body_id=0,
            lighting=0.4 if k in dark else 1.0,
            count=count, seed=201 + k,
            hidden=("person",) if k in absent else ()))
    return ScenarioSpec(name="advanced", scene_ref="advanced.scene",
                        regimes=regimes, eval_objects=OBJECT_NAMES,
                        templates=(0, 1, 2, 3, 4), fov_deg=BASIC_FOV_DEG,
                        scene=build_advanced_scene(n_v))


SCENARIO_BUILDERS = {
    "basic": build_basic_scenario,
    "advanced": build_advanced_scenario,
}


# -------------------------------------------------------------- scene files

def scene_to_text(scene: Scene) -> str:
    out = [
        f"{SCENE_MAGIC} {FORMAT_VERSION}",
        f"n_v = {scene.n_v}",
        f"background_seed = {scene.background_seed}",
        f"extent = {fmt(scene.extent)}",
    ]
    for obj in scene.objects:
        x, y, z = (fmt(c) for c in obj.position)
        out.append(f"object {obj.name} {x} {y} {z} {obj.concept_seed}")
    out.append("[end]")
    return "\n".join(out) + "\n"


def scene_from_text(text: str, source: str = "<scene>") -> Scene:
    r = LineReader(text, source)
    r.expect_magic(SCENE_MAGIC)
    n_v = r.int_value(r.key_value("n_v"))
    background_seed = r.int_value(r.key_value("background_seed"))
    extent = float(r.key_value("extent"))
    objects = []
    while True:
        line = r.next_line()
        if line == "[end]":
            break
        parts = line.split()
        if len(parts) != 6 or parts[0] != "object":
            raise r.error("expected 'object <name> <x> <y> <z> <concept-seed>'")
        position = tuple(float(p) for p in parts[2:5])
        objects.append((parts[1], position, r.int_value(parts[5])))
    if not objects:
        raise r.error("scene has no objects")
    return make_scene(n_v, background_seed=background_seed, objects=objects,
                      extent=extent)


# ----------------------------------------------------------- scenario files

def scenario_to_text(spec: ScenarioSpec) -> str:
    out = [
        f"{SCENARIO_MAGIC} {FORMAT_VERSION}",
        f"name = {spec.name}",
        f"scene = {spec.scene_ref}",
        "objects = " + " ".join(spec.eval_objects),
        "templates = " + " ".join(str(t) for t in spec.templates),
        f"fov = {fmt(spec.fov_deg)}",
    ]
    for reg in spec.regimes:
        tokens = [
            f"regime {reg.label}",
            f"env={reg.env_id}",
            f"body={reg.body_id}",
            f"lighting={fmt(reg.lighting)}",
            f"count={reg.count}",
            f"seed={reg.seed}",
            f"noise={fmt(reg.noise_std)}",
        ]
        if reg.hidden:
            tokens.append("hidden=" + ",".join(reg.hidden))
        out.append(" ".join(tokens))
    out.append("[end]")
    return "\n".join(out) + "\n"


def scenario_from_text(text: str, source: str = "<scenario>") -> ScenarioSpec:
    r = LineReader(text, source)
    r.expect_magic(SCENARIO_MAGIC)
    name = r.key_value("name")
    scene_ref = r.key_value("scene")
    objects = tuple(r.key_value("objects").split())
    templates = tuple(r.int_value(t) for t in r.key_value("templates").split())
    # fov is optional; a file without it keeps the stock 30-degree camera
    fov_deg = 30.0
    line = r.next_line()
    key, sep, value = line.partition("=")
    if sep and key.strip() == "fov":
        fov_deg = float(value.strip())
    else:
        r.pos -= 1
    regimes = []
    while True:
        line = r.next_line()
        if line == "[end]":
            break
        parts = line.split()
        if len(parts) < 2 or parts[0] != "regime":
            raise r.error("expected 'regime <label> key=value ...'")
        label = parts[1]
        fields: dict[str, str] = {}
        for token in parts[2:]:
            key, sep, value = token.partition("=")
            if not sep:
                raise r.error(f"expected key=value, got {token!r}")
            fields[key] = value
        required = {"env", "body", "lighting", "count", "seed"}
        missing = required - fields.keys()
        if missing:
            raise r.error(f"regime {label!r} is missing {sorted(missing)}")
        hidden = tuple(h for h in fields.get("hidden", "").split(",") if h)
        regimes.append(RegimeSpec(
            label=label,
            env_id=r.int_value(fields["env"]),
            body_id=r.int_value(fields["body"]),
            lighting=float(fields["lighting"]),
            count=r.int_value(fields["count"]),
            seed=r.int_value(fields["seed"]),
            hidden=hidden,
            noise_std=float(fields.get("noise", BASIC_NOISE_STD)),
        ))
    if not regimes:
        raise r.error("scenario has no regimes")
    labels = [reg.label for reg in regimes]
    if len(set(labels)) != len(labels):
        raise FormatError(source, None, "duplicate regime labels")
    return ScenarioSpec(name=name, scene_ref=scene_ref, regimes=regimes,
                        eval_objects=objects, templates=templates,
                        fov_deg=fov_deg)
