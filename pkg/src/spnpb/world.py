"""Deterministic stand-in for the physical arm and the vision-language
encoder: a 4-DOF serial chain (yaw then three pitches) with a camera on the
last link, static gravity torque from point masses at link midpoints, and a
synthetic embedding oracle over multi-object scenes.

World frame: z up, x straight ahead of the robot base. The home pose (all
joints zero, no mount tilt) looks along +x, horizontally. Positive pitch
angles rotate the line of sight downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import Query

GRAVITY = 9.81

# background contribution to every rendered embedding, scaled by lighting
BACKGROUND_WEIGHT = 0.3

# pairwise cosine ceiling between object concept vectors
CONCEPT_COS_LIMIT = 0.3

# per-template query jitter: q = normalize(c + QUERY_JITTER * t_j)
QUERY_JITTER = 0.1
TEMPLATES = ("look at", "see", "find", "check", "where is")
_TEMPLATE_SEED = 90210

# camera tilt per body variant: B0 straight, B1 pitched 30 degrees down
BODY_TILTS = (0.0, math.radians(30.0))


class WorldError(ValueError):
    """Simulation misuse: out-of-limit command, unknown object, degenerate view."""


def default_joint_limits() -> np.ndarray:
    degrees = [(-165.0, 165.0), (-45.0, 45.0), (-22.5, 0.0), (-22.5, 0.0)]
    return np.radians(np.array(degrees))


@dataclass(frozen=True)
class RobotSpec:
    """Geometry and masses of the 4-DOF arm plus its camera mount.

    Joint axes are fixed by construction: joint 1 yaws about world z, joints
    2-4 pitch about the (rotated) y axis. Lengths in meters, masses in kg,
    angles in radians.
    """

    link_lengths: tuple[float, float, float, float] = (0.13, 0.11, 0.10, 0.06)
    link_masses: tuple[float, float, float, float] = (0.25, 0.2, 0.15, 0.1)
    joint_limits: np.ndarray = field(default_factory=default_joint_limits)
    camera_offset: float = 0.02
    camera_tilt: float = 0.0
    fov_half_angle: float = math.radians(30.0)

    def __post_init__(self):
        if min(self.link_lengths) <= 0 or min(self.link_masses) <= 0:
            raise WorldError("link lengths and masses must be positive")
        limits = np.asarray(self.joint_limits, dtype=np.float64)
        if limits.shape != (4, 2) or np.any(limits[:, 0] > limits[:, 1]):
            raise WorldError("joint limits must be a (4, 2) array of lo <= hi")
        if not 0.0 < self.fov_half_angle < math.pi / 2:
            raise WorldError("fov half-angle must be in (0, pi/2)")
        object.__setattr__(self, "joint_limits", limits)


DEFAULT_ROBOT = RobotSpec()


def robot_for_body(body_id: int, base: RobotSpec = DEFAULT_ROBOT) -> RobotSpec:
    if not 0 <= body_id < len(BODY_TILTS):
        raise WorldError(f"unknown body variant {body_id}")
    return replace(base, camera_tilt=BODY_TILTS[body_id])


@dataclass(frozen=True)
class CameraPose:
    origin: np.ndarray
    direction: np.ndarray
    fov_half_angle: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise WorldError("camera direction must be unit-norm")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class SceneObject:
    name: str
    position: np.ndarray
    concept_seed: int
    concept: np.ndarray


@dataclass(frozen=True)
class Scene:
    """Named objects with unit-norm concept vectors, plus a background vector.

    Positions are the base (environment 0) slots; environment variants
    re-assign objects cyclically among the slots at their own height.
    extent is desk half-size metadata only.
    """

    n_v: int
    background_seed: int
    background: np.ndarray
    objects: tuple[SceneObject, ...]
    extent: float = 0.8

    def object_named(self, name: str) -> SceneObject:
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise WorldError(f"unknown object {name!r}")


def _unit_from_rng(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.normal(size=n)
    return x / np.linalg.norm(x)


def make_scene(n_v: int, background_seed: int,
               objects: list[tuple[str, tuple[float, float, float], int]],
               extent: float = 0.8) -> Scene:
    """Build a scene, drawing each concept vector from its own seeded stream
    and redrawing until every pairwise cosine stays within the ceiling."""
    background = _unit_from_rng(np.random.default_rng([background_seed]), n_v)
    built: list[SceneObject] = []
    names = set()
    for name, position, concept_seed in objects:
        if name in names:
            raise WorldError(f"duplicate object name {name!r}")
        names.add(name)
        rng = np.random.default_rng([concept_seed])
        for _ in range(1000):
            c = _unit_from_rng(rng, n_v)
            if all(abs(float(np.dot(c, prev.concept))) <= CONCEPT_COS_LIMIT
                   for prev in built):
                break
        else:
            raise WorldError(f"could not draw a concept vector for {name!r}")
        built.append(SceneObject(name, np.asarray(position, dtype=np.float64),
                                 int(concept_seed), c))
    return Scene(n_v=n_v, background_seed=int(background_seed),
                 background=background, objects=tuple(built), extent=extent)


@dataclass(frozen=True)
class WorldState:
    """One regime: object arrangement, camera-tilt body variant, lighting
    level, embedding noise, and the regime's noise seed. hidden lists objects
    absent in this regime (the advanced schedule's person)."""

    env_id: int = 0
    body_id: int = 0
    lighting: float = 1.0
    noise_std: float = 0.01
    seed: int = 0
    hidden: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.lighting <= 1.0:
            raise WorldError("lighting must be in (0, 1]")
        if self.noise_std < 0:
            raise WorldError("noise level must be >= 0")
        if not 0 <= self.body_id < len(BODY_TILTS):
            raise WorldError(f"unknown body variant {self.body_id}")


def arranged_positions(scene: Scene, env_id: int) -> dict[str, np.ndarray]:
    """Environment variants rearrange objects among the slots at their own
    height: within each group of equal-height slots (in declaration order),
    object k moves to the group's slot (k + shift(e)) mod group size. Things
    get shuffled along their shelf but never change shelves, so every
    arrangement keeps the same silhouette. Shift strides are unequal
    (0, 1, 3, 4, ...): with equal strides the middle arrangement would sit
    at the centroid of the others, and a model trained on the pooled data
    would ace that one environment without learning any of them."""
    if len(scene.objects) == 0:
        raise WorldError("scene has no objects")
    if env_id < 0:
        raise WorldError(f"environment id must be >= 0, got {env_id}")
    shift = env_id if env_id < 2 else env_id + 1
    groups: dict[float, list[int]] = {}
    for i, obj in enumerate(scene.objects):
        groups.setdefault(float(obj.position[2]), []).append(i)
    out: dict[str, np.ndarray] = {}
    for idxs in groups.values():
        slots = [scene.objects[j].position for j in idxs]
        for k, j in enumerate(idxs):
            out[scene.objects[j].name] = slots[(k + shift) % len(slots)]
    return out


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    t = np.eye(4)
    t[0, 0], t[0, 1], t[1, 0], t[1, 1] = c, -s, s, c
    return t


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    t = np.eye(4)
    t[0, 0], t[0, 2], t[2, 0], t[2, 2] = c, s, -s, c
    return t


def _trans(x: float, y: float, z: float) -> np.ndarray:
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


def check_limits(spec: RobotSpec, theta: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (4,):
        raise WorldError("theta must have shape (4,)")
    lo, hi = spec.joint_limits[:, 0], spec.joint_limits[:, 1]
    if np.any(theta < lo - tol) or np.any(theta > hi + tol):
        raise WorldError(f"joint command {theta} outside limits")
    return theta


def forward_kinematics(spec: RobotSpec, theta: np.ndarray) -> CameraPose:
    """Camera pose for a joint command: yaw, column up, then three pitched
    links along local x, then the mount tilt and offset."""
    theta = check_limits(spec, theta)
    l1, l2, l3, l4 = spec.link_lengths
    t = _rot_z(theta[0]) @ _trans(0, 0, l1)
    t = t @ _rot_y(theta[1]) @ _trans(l2, 0, 0)
    t = t @ _rot_y(theta[2]) @ _trans(l3, 0, 0)
    t = t @ _rot_y(theta[3]) @ _trans(l4, 0, 0)
    t = t @ _rot_y(spec.camera_tilt) @ _trans(spec.camera_offset, 0, 0)
    direction = t[:3, 0] / np.linalg.norm(t[:3, 0])
    return CameraPose(origin=t[:3, 3], direction=direction,
                      fov_half_angle=spec.fov_half_angle)


def potential_energy(spec: RobotSpec, theta: np.ndarray) -> float:
    """Total gravitational potential of the links, point masses at midpoints."""
    theta = check_limits(spec, theta)
    l1, l2, l3, l4 = spec.link_lengths
    m1, m2, m3, m4 = spec.link_masses
    s2 = math.sin(theta[1])
    s23 = math.sin(theta[1] + theta[2])
    s234 = math.sin(theta[1] + theta[2] + theta[3])
    z2 = l1 - 0.5 * l2 * s2
    z3 = l1 - l2 * s2 - 0.5 * l3 * s23
    z4 = l1 - l2 * s2 - l3 * s23 - 0.5 * l4 * s234
    return GRAVITY * (m1 * 0.5 * l1 + m2 * z2 + m3 * z3 + m4 * z4)


def gravity_torque(spec: RobotSpec, theta: np.ndarray) -> np.ndarray:
    """Static holding torques tau_i = -dU/dtheta_i. The yaw axis is parallel
    to gravity, so its torque is identically zero."""
    theta = check_limits(spec, theta)
    _, l2, l3, l4 = spec.link_lengths
    _, m2, m3, m4 = spec.link_masses
    c2 = math.cos(theta[1])
    c23 = math.cos(theta[1] + theta[2])
    c234 = math.cos(theta[1] + theta[2] + theta[3])
    a2 = (0.5 * m2 + m3 + m4) * l2
    a3 = (0.5 * m3 + m4) * l3
    a4 = 0.5 * m4 * l4
    return GRAVITY * np.array([
        0.0,
        a2 * c2 + a3 * c23 + a4 * c234,
        a3 * c23 + a4 * c234,
        a4 * c234,
    ])


def visibility_weights(scene: Scene, state: WorldState, pose: CameraPose
                       ) -> dict[str, float]:
    """Angular visibility of each non-hidden object: 1 on the optical axis,
    0 at and beyond the field-of-view edge, linear in the cosine between."""
    positions = arranged_positions(scene, state.env_id)
    cos_f = math.cos(pose.fov_half_angle)
    weights = {}
    for obj in scene.objects:
        if obj.name in state.hidden:
            continue
        rel = positions[obj.name] - pose.origin
        dist = np.linalg.norm(rel)
        if dist < 1e-12:
            raise WorldError(f"camera origin coincides with object {obj.name!r}")
        cos_a = float(np.dot(pose.direction, rel / dist))
        weights[obj.name] = max(0.0, (cos_a - cos_f) / (1.0 - cos_f))
    return weights


def render_embedding(scene: Scene, state: WorldState, pose: CameraPose,
                     step_seed: int,
                     background_weight: float = BACKGROUND_WEIGHT) -> np.ndarray:
    """Synthetic stand-in for the image encoder: visibility-weighted sum of
    concept vectors plus lighting-scaled background plus seeded Gaussian
    noise, normalized to unit length."""
    weights = visibility_weights(scene, state, pose)
    raw = background_weight * state.lighting * scene.background.copy()
    for obj in scene.objects:
        if obj.name in state.hidden:
            continue
        w = weights[obj.name]
        if w > 0.0:
            raw = raw + w * obj.concept
    rng = np.random.default_rng([state.seed, int(step_seed)])
    raw = raw + rng.normal(0.0, state.noise_std, size=scene.n_v)
    norm = np.linalg.norm(raw)
    if norm < 1e-12:
        raise WorldError("degenerate view: embedding sum is zero")
    return raw / norm


def template_jitter(n_v: int, template_index: int) -> np.ndarray:
    if not 0 <= template_index < len(TEMPLATES):
        raise WorldError(f"template index must be 0..{len(TEMPLATES) - 1}")
    return _unit_from_rng(np.random.default_rng([_TEMPLATE_SEED, template_index]), n_v)


def query_embedding(scene: Scene, object_name: str, template_index: int,
                    eta: float = QUERY_JITTER) -> Query:
    """Instruction embedding for one of the phrasing templates applied to an
    object: the concept vector nudged by the template's jitter direction."""
    obj = scene.object_named(object_name)
    t = template_jitter(scene.n_v, template_index)
    q = obj.concept + eta * t
    q = q / np.linalg.norm(q)
    return Query(q=q, label=f"{TEMPLATES[template_index]} {object_name}")


def point_line_distance(pose: CameraPose, point: np.ndarray) -> float:
    """Distance from a point to the infinite line through the camera origin
    along the line of sight."""
    rel = np.asarray(point, dtype=np.float64) - pose.origin
    along = float(np.dot(rel, pose.direction))
    return float(np.linalg.norm(rel - along * pose.direction))


def collect_trial(scene: Scene, state: WorldState, count: int, seed: int,
                  robot: RobotSpec | None = None, trial_id: str | None = None,
                  regime: str = ""):
    """Random-motion data collection: uniform joint commands within limits,
    each paired with the rendered embedding and the holding torque. The
    nominal 10 Hz cadence is recorded as metadata only."""
    from .training import TrialDataset

    if count < 1:
        raise WorldError("count must be >= 1")
    if robot is None:
        robot = robot_for_body(state.body_id)
    rng = np.random.default_rng(seed)
    lo, hi = robot.joint_limits[:, 0], robot.joint_limits[:, 1]
    thetas = rng.uniform(lo, hi, size=(count, 4))
    s_rows = np.empty((count, scene.n_v + 4))
    for i in range(count):
        pose = forward_kinematics(robot, thetas[i])
        v = render_embedding(scene, state, pose, step_seed=i)
        tau = gravity_torque(robot, thetas[i])
        s_rows[i, :scene.n_v] = v
        s_rows[i, scene.n_v:] = tau
    return TrialDataset(
        trial_id=trial_id if trial_id is not None else f"trial-{seed}",
        u=thetas,
        s=s_rows,
        regime=regime,
        rate_hz=10.0,
    )
