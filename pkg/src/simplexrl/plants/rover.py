"""Planar rover with ring-mounted distance sensors in a field of circular
obstacles.

State is [x, y, theta, v, l_1 .. l_n]: position, heading, forward speed and n
ray-cast distance readings. The rover is a disk of radius ``r``; readings
measure from the rover center to the nearest obstacle boundary along rays at
angles theta + 2*pi*i/n, capped at ``l_max``.

Actions are accelerations (ax, ay). Velocity is integrated first and the
position advanced with the updated velocity; braking therefore stops within
the certified distance v^2/(2*a_max) instead of overshooting it by v*dt/2,
which is what the plain-order update does.
"""

from dataclasses import dataclass, field
import json

import numpy as np

X, Y, THETA, V = 0, 1, 2, 3
SENSORS = slice(4, None)


class SafetyViolationError(AssertionError):
    """The rover body overlapped an obstacle. Unreachable under the
    architecture's switching logic; reaching it means a monitor bug."""


class FieldGenerationError(RuntimeError):
    pass


@dataclass
class RoverParams:
    r: float = 0.1                 # rover body radius (m)
    v_max: float = 0.8             # speed cap (m/s)
    a_max: float = 1.6             # acceleration cap (m/s^2)
    l_max: float = 2.0             # sensor range (m)
    n_sensors: int = 32
    d_safe: float = 0.2            # required standoff from obstacles (m)
    epsilon: float = 0.01          # blind-spot protrusion allowance (m)
    m_lookahead: int = 5           # reverse-switch margin, in steps
    dt: float = 0.1
    target_radius: float = 0.1     # target disk centered at the origin
    reach_distance: float = 0.2    # DT at or below this counts as reached
    arena_half: float = 5.0
    n_obstacles: int = 12
    min_obstacle_radius: float = 0.25
    max_obstacle_radius: float = 0.6
    target_clearance: float = 1.0  # obstacle-free ring around the target

    @property
    def d_br_max(self):
        return self.v_max ** 2 / (2.0 * self.a_max)

    @property
    def state_dim(self):
        return 4 + self.n_sensors


@dataclass
class ObstacleField:
    centers: np.ndarray            # (m, 2)
    radii: np.ndarray              # (m,)
    seed: int = None

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)

    def to_json(self):
        return json.dumps({
            "seed": self.seed,
            "centers": [[f"{c:.17g}" for c in row] for row in self.centers],
            "radii": [f"{r:.17g}" for r in self.radii],
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        centers = np.array([[float(c) for c in row] for row in doc["centers"]])
        radii = np.array([float(r) for r in doc["radii"]])
        return cls(centers, radii, doc.get("seed"))


def generate_obstacle_field(seed, params: RoverParams = None):
    """Rejection-sample a fixed obstacle layout.

    Circles keep a clear ring of ``target_clearance`` around the target and do
    not overlap each other. Deterministic in the seed.
    """
    params = params or RoverParams()
    rng = np.random.default_rng(seed)
    centers, radii = [], []
    rejections = 0
    while len(centers) < params.n_obstacles:
        if rejections >= 10_000:
            raise FieldGenerationError("obstacle field rejection budget exhausted")
        rad = rng.uniform(params.min_obstacle_radius, params.max_obstacle_radius)
        c = rng.uniform(-params.arena_half, params.arena_half, size=2)
        if np.hypot(*c) - rad < params.target_clearance:
            rejections += 1
            continue
        if any(np.hypot(*(c - c2)) < rad + r2 for c2, r2 in zip(centers, radii)):
            rejections += 1
            continue
        centers.append(c)
        radii.append(rad)
    return ObstacleField(np.array(centers), np.array(radii), seed=seed)


def _ray_hits(origin, dirs, field: ObstacleField, l_max):
    """Distances along unit direction rows of ``dirs`` to the nearest circle.

    Standard ray-circle test: project the center offset onto the ray, reject
    misses and behind-the-origin hits, near intersection otherwise.
    """
    if len(field.radii) == 0:
        return np.full(len(dirs), l_max)
    rel = field.centers - origin                       # (m, 2)
    t_mid = rel @ dirs.T                               # (m, k)
    d2 = (rel ** 2).sum(axis=1)[:, None] - t_mid ** 2  # squared miss distance
    r2 = (field.radii ** 2)[:, None]
    inside = r2 - d2
    hit = (inside >= 0.0) & (t_mid >= 0.0)
    t = np.where(hit, t_mid - np.sqrt(np.maximum(inside, 0.0)), np.inf)
    t = np.maximum(t, 0.0)
    return np.minimum(t.min(axis=0), l_max)


def sense(position, heading, field: ObstacleField, params: RoverParams):
    """All n sensor readings for a pose, vectorized over rays and obstacles."""
    ang = heading + 2.0 * np.pi * np.arange(params.n_sensors) / params.n_sensors
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return _ray_hits(np.asarray(position, dtype=float), dirs, field, params.l_max)


def ray_distance(position, angle, field: ObstacleField, params: RoverParams):
    """Single ray probe, used when evaluating candidate headings."""
    d = np.array([[np.cos(angle), np.sin(angle)]])
    return float(_ray_hits(np.asarray(position, dtype=float), d, field, params.l_max)[0])


def make_state(position, heading, speed, field: ObstacleField, params: RoverParams):
    s = np.empty(params.state_dim)
    s[X], s[Y] = position
    s[THETA] = heading
    s[V] = speed
    s[SENSORS] = sense(position, heading, field, params)
    return s


def rover_step(s, a, params: RoverParams, field: ObstacleField):
    """Advance one step under acceleration a = (ax, ay).

    The acceleration norm is clamped to a_max and the speed to [0, v_max].
    Heading follows the velocity direction and is unchanged while stopped.
    """
    a = np.asarray(a, dtype=float)
    norm_a = np.hypot(a[0], a[1])
    if norm_a > params.a_max:
        a = a * (params.a_max / norm_a)
    vvec = s[V] * np.array([np.cos(s[THETA]), np.sin(s[THETA])])
    vvec = vvec + a * params.dt
    speed = np.hypot(vvec[0], vvec[1])
    if speed > params.v_max:
        vvec *= params.v_max / speed
        speed = params.v_max
    theta = np.arctan2(vvec[1], vvec[0]) if speed > 0.0 else s[THETA]
    pos = s[:2] + vvec * params.dt

    clearance = np.hypot(*(field.centers - pos).T) - field.radii
    if clearance.size and clearance.min() < params.r:
        raise SafetyViolationError(
            f"rover body at {pos} overlaps an obstacle (clearance {clearance.min():.4f})")

    out = np.empty_like(s)
    out[X], out[Y] = pos
    out[THETA] = theta
    out[V] = speed
    out[SENSORS] = sense(pos, theta, field, params)
    return out


def distance_to_target(s):
    """Center-to-center distance from the rover to the target."""
    return float(np.hypot(s[X], s[Y]))


def braking_distance(v, params: RoverParams):
    """Certified stopping distance d_br(v) = v^2 / (2 a_max)."""
    return v * v / (2.0 * params.a_max)


def min_reading(s):
    return float(np.min(s[SENSORS]))
