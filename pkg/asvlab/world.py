# -*- coding: utf-8 -*-
"""Obstacles, range sensing, collisions and scenario generation"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from asvlab.core import AsvLabError, AsvLabValidationError
from asvlab.dynamics import VesselState
from asvlab.guidance import Path, PathGenConfig, generate_path
from asvlab.utils.filesystem import read_json, write_to_json

logger = logging.getLogger("asvlab.world")

# independent seed streams per scenario kind
SCENARIO_STREAMS = {"train": 11, "test": 23, "pilot": 37}

_EPS = 1e-12


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _rotate(points, angle, about):
    c, s = math.cos(angle), math.sin(angle)
    rel = np.asarray(points, dtype=float) - about
    return about + rel @ np.array([[c, s], [-s, c]])


# Obstacles ------------------------------------------------------------


class Obstacle:
    """Base class of the obstacles

    Keyword arguments:
        - speed -- m/s, zero for static obstacles
        - heading -- course over ground of dynamic obstacles

    """

    kind: Optional[str] = None

    def __init__(self, speed=0.0, heading=0.0, dynamic=None):
        self.speed = float(speed)
        self.heading = float(heading)
        self.dynamic = bool(self.speed != 0.0) if dynamic is None else bool(dynamic)

    @property
    def velocity(self):
        if not self.dynamic:
            return np.zeros(2)
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])

    def moved(self, dt):
        raise NotImplementedError("derived class '%s' must override this method" % self.__class__.__name__)

    def rotated(self, angle, about):
        raise NotImplementedError("derived class '%s' must override this method" % self.__class__.__name__)

    def distance(self, point):
        """Signed distance from point to the boundary, negative inside"""
        raise NotImplementedError("derived class '%s' must override this method" % self.__class__.__name__)

    def cast(self, origin, directions):
        """Hit distances of rays from origin, inf where nothing is hit"""
        raise NotImplementedError("derived class '%s' must override this method" % self.__class__.__name__)

    def _kinematics(self):
        return {"speed": self.speed, "heading": self.heading, "dynamic": self.dynamic}

    @staticmethod
    def from_dict(data):
        kinematics = {k: data[k] for k in ("speed", "heading", "dynamic") if k in data}
        if data["shape"] == "circle":
            return CircleObstacle(data["center"], data["radius"], **kinematics)
        elif data["shape"] == "polygon":
            return PolygonObstacle(data["vertices"], **kinematics)
        raise AsvLabValidationError("obstacle_unknown_shape", shape=data["shape"])


class CircleObstacle(Obstacle):
    kind = "circle"

    def __init__(self, center, radius, **kwargs):
        super().__init__(**kwargs)
        self.center = np.array(center, dtype=float).reshape(2)
        self.radius = float(radius)
        if not self.radius > 0:
            raise AsvLabValidationError("obstacle_bad_radius", radius=self.radius)

    def moved(self, dt):
        return CircleObstacle(
            self.center + self.velocity * dt, self.radius, **self._kinematics()
        )

    def rotated(self, angle, about):
        kinematics = self._kinematics()
        kinematics["heading"] = self.heading + angle
        return CircleObstacle(_rotate(self.center, angle, about), self.radius, **kinematics)

    def distance(self, point):
        d = np.asarray(point, dtype=float) - self.center
        return float(np.hypot(d[0], d[1]) - self.radius)

    def cast(self, origin, directions):
        return ray_circle_batch(origin, directions, self.center, self.radius)

    def to_dict(self):
        return {"shape": "circle", "center": self.center.tolist(), "radius": self.radius, **self._kinematics()}


class PolygonObstacle(Obstacle):
    kind = "polygon"

    def __init__(self, vertices, **kwargs):
        super().__init__(**kwargs)
        self.vertices = np.array(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2 or len(self.vertices) < 3:
            raise AsvLabValidationError("obstacle_not_convex")
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        turns = _cross(edges, np.roll(edges, -1, axis=0))
        if np.any(turns <= 0):
            raise AsvLabValidationError("obstacle_not_convex")

    @classmethod
    def rectangle(cls, center, length, width, heading=0.0, **kwargs):
        """Rectangle aligned with heading, vertices in the right order"""
        local = 0.5 * np.array(
            [[length, -width], [length, width], [-length, width], [-length, -width]]
        )
        c, s = math.cos(heading), math.sin(heading)
        rot = np.array([[c, s], [-s, c]])
        kwargs.setdefault("heading", heading)
        return cls(np.asarray(center, dtype=float) + local @ rot, **kwargs)

    @property
    def center(self):
        return self.vertices.mean(axis=0)

    def moved(self, dt):
        return PolygonObstacle(self.vertices + self.velocity * dt, **self._kinematics())

    def rotated(self, angle, about):
        kinematics = self._kinematics()
        kinematics["heading"] = self.heading + angle
        return PolygonObstacle(_rotate(self.vertices, angle, about), **kinematics)

    def distance(self, point):
        p = np.asarray(point, dtype=float)
        a = self.vertices
        e = np.roll(a, -1, axis=0) - a
        rel = p - a
        s = np.clip(np.einsum("ij,ij->i", rel, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        gap = rel - s[:, None] * e
        outside = float(np.min(np.hypot(gap[:, 0], gap[:, 1])))
        if np.all(_cross(e, rel) >= 0):
            return -outside
        return outside

    def cast(self, origin, directions):
        return ray_polygon_batch(origin, directions, self.vertices)

    def to_dict(self):
        return {"shape": "polygon", "vertices": self.vertices.tolist(), **self._kinematics()}


# Ray casting ----------------------------------------------------------


def ray_circle_batch(origin, directions, center, radius):
    """Smallest non-negative hit distance per ray, inf for a miss"""
    f = np.asarray(origin, dtype=float) - center
    b = directions @ f
    c = f @ f - radius * radius
    disc = b * b - c
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    near, far = -b - root, -b + root
    t = np.where(near >= 0, near, np.where(far >= 0, far, np.inf))
    return np.where(hit, t, np.inf)


def ray_polygon_batch(origin, directions, vertices):
    """Smallest non-negative hit distance per ray over the polygon edges"""
    a = vertices
    e = np.roll(vertices, -1, axis=0) - vertices
    ao = a - np.asarray(origin, dtype=float)
    d = directions[:, None, :]
    denom = _cross(d, e[None, :, :])
    parallel = np.abs(denom) < _EPS
    safe = np.where(parallel, 1.0, denom)
    t = _cross(ao[None, :, :], e[None, :, :]) / safe
    s = _cross(ao[None, :, :], d) / safe
    valid = ~parallel & (t >= 0) & (s >= -_EPS) & (s <= 1 + _EPS)
    return np.where(valid, t, np.inf).min(axis=1)


def _as_hit(t):
    t = float(t[0])
    return None if not np.isfinite(t) else t


def ray_circle(origin, direction, circle: CircleObstacle):
    """Distance along a unit ray to a circle boundary, or None"""
    return _as_hit(ray_circle_batch(origin, np.asarray(direction, dtype=float).reshape(1, 2), circle.center, circle.radius))


def ray_polygon(origin, direction, polygon: PolygonObstacle):
    """Distance along a unit ray to a convex polygon boundary, or None"""
    return _as_hit(ray_polygon_batch(origin, np.asarray(direction, dtype=float).reshape(1, 2), polygon.vertices))


# Sensing --------------------------------------------------------------


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 180
    angular_spacing: float = 2 * math.pi / 180
    x_max: float = 150.0

    def __post_init__(self):
        if self.n_rays < 1 or abs(self.n_rays * self.angular_spacing - 2 * math.pi) > 1e-9:
            raise AsvLabValidationError(
                "invalid_config_value", key="angular_spacing", value=self.angular_spacing
            )
        if not self.x_max > 0:
            raise AsvLabValidationError("invalid_config_value", key="x_max", value=self.x_max)

    def body_angles(self):
        return np.arange(self.n_rays) * self.angular_spacing


def raw_ranges(state: VesselState, obstacles, cfg: SensorConfig = SensorConfig()):
    """Distance per ray to the nearest obstacle, clamped to x_max

    Ray k leaves the vessel origin at body angle k * spacing, sweeping
    clockwise from the bow. A vessel inside an obstacle reads 0 on every
    ray.
    """
    angles = state.psi + cfg.body_angles()
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origin = state.position
    ranges = np.full(cfg.n_rays, cfg.x_max)
    for obstacle in obstacles:
        if obstacle.distance(origin) <= 0:
            return np.zeros(cfg.n_rays)
        ranges = np.minimum(ranges, obstacle.cast(origin, directions))
    return ranges


def scan(state: VesselState, obstacles, cfg: SensorConfig = SensorConfig()):
    """Normalized perception vector, 0 for free rays and 1 for contact"""
    return 1.0 - raw_ranges(state, obstacles, cfg) / cfg.x_max


def step_obstacles(obstacles, dt):
    return [o.moved(dt) if o.dynamic else o for o in obstacles]


def collision_check(state: VesselState, obstacles, hull_radius) -> bool:
    position = state.position
    return any(o.distance(position) <= hull_radius for o in obstacles)


# Scenarios ------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    n_static: int = 11
    n_dynamic: int = 17
    static_radius_mean: float = 25.0
    dynamic_size_mean: float = 10.0
    dynamic_aspect: float = 0.5
    speed_low: float = 0.1
    speed_high: float = 0.2
    static_offset: float = 50.0
    dynamic_offset: float = 60.0
    # obstacles are placed beyond this arc length from the start
    start_margin: float = 30.0
    start_clearance: float = 10.0
    hull_radius: float = 5.0
    start_heading_noise: float = 0.0
    start_offset_noise: float = 0.0
    max_attempts: int = 100

    def __post_init__(self):
        if self.n_static < 0 or self.n_dynamic < 0:
            raise AsvLabValidationError("invalid_config_value", key="n_static", value=self.n_static)
        if not 0 <= self.speed_low <= self.speed_high:
            raise AsvLabValidationError("invalid_config_value", key="speed_low", value=self.speed_low)


SCENARIO_PRESETS = {
    "full": ScenarioConfig(),
    "reduced": ScenarioConfig(n_static=4, n_dynamic=4),
    "empty": ScenarioConfig(n_static=0, n_dynamic=0),
}


@dataclass
class Scenario:
    path: Path
    obstacles: List[Obstacle]
    vessel_start: VesselState
    seed: Optional[int] = None
    kind: str = "train"
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "seed": self.seed,
            "kind": self.kind,
            "path": self.path.to_dict(),
            "obstacles": [o.to_dict() for o in self.obstacles],
            "vessel_start": self.vessel_start.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            path=Path.from_dict(data["path"]),
            obstacles=[Obstacle.from_dict(o) for o in data["obstacles"]],
            vessel_start=VesselState.from_dict(data["vessel_start"]),
            seed=data.get("seed"),
            kind=data.get("kind", "train"),
            meta=data.get("meta", {}),
        )


def save_scenario(scenario: Scenario, file_path):
    write_to_json(file_path, scenario.to_dict(), indent=2)


def load_scenario(file_path) -> Scenario:
    return Scenario.from_dict(read_json(file_path))


def scenario_rng(seed, kind, index=0):
    """Generator of the index-th scenario of a kind, independent across kinds"""
    if kind not in SCENARIO_STREAMS:
        raise AsvLabValidationError("scenario_unknown_kind", kind=kind)
    return np.random.default_rng([int(seed), SCENARIO_STREAMS[kind], int(index)])


def poisson_positive(rng, mean, size=None):
    """Poisson draws with zeros redrawn"""
    draws = np.atleast_1d(rng.poisson(mean, size=size)).astype(float)
    while np.any(draws == 0):
        zero = draws == 0
        draws[zero] = rng.poisson(mean, size=int(zero.sum()))
    return draws if size is not None else float(draws[0])


def _along_path(rng, path, offset, margin):
    omega = rng.uniform(min(margin, path.length), path.length)
    gamma = float(path.gamma(omega))
    normal = np.array([-math.sin(gamma), math.cos(gamma)])
    return path.point(omega) + rng.uniform(-offset, offset) * normal


def _start_state(rng, path, cfg):
    gamma = float(path.gamma(0.0))
    start = path.point(0.0)
    if cfg.start_offset_noise > 0:
        normal = np.array([-math.sin(gamma), math.cos(gamma)])
        start = start + rng.uniform(-cfg.start_offset_noise, cfg.start_offset_noise) * normal
    if cfg.start_heading_noise > 0:
        gamma += rng.uniform(-cfg.start_heading_noise, cfg.start_heading_noise)
    return VesselState.at(start[0], start[1], gamma)


def generate_scenario(
    rng: np.random.Generator,
    kind: str = "train",
    cfg: ScenarioConfig = ScenarioConfig(),
    path_cfg: PathGenConfig = PathGenConfig(),
    seed=None,
) -> Scenario:
    """Draw a path with static circles and moving rectangles along it

    The whole obstacle set is drawn again while the vessel start is in
    collision, up to cfg.max_attempts times.
    """
    path = generate_path(rng, path_cfg)
    vessel_start = _start_state(rng, path, cfg)

    for attempt in range(cfg.max_attempts):
        obstacles: List[Obstacle] = []
        radii = poisson_positive(rng, cfg.static_radius_mean, size=cfg.n_static)
        for radius in radii:
            obstacles.append(
                CircleObstacle(_along_path(rng, path, cfg.static_offset, cfg.start_margin), radius)
            )
        sizes = poisson_positive(rng, cfg.dynamic_size_mean, size=cfg.n_dynamic)
        for size in sizes:
            center = _along_path(rng, path, cfg.dynamic_offset, cfg.start_margin)
            obstacles.append(
                PolygonObstacle.rectangle(
                    center,
                    size,
                    max(size * cfg.dynamic_aspect, 1.0),
                    heading=rng.uniform(-math.pi, math.pi),
                    speed=rng.uniform(cfg.speed_low, cfg.speed_high),
                    dynamic=True,
                )
            )
        if not collision_check(vessel_start, obstacles, cfg.hull_radius + cfg.start_clearance):
            logger.debug("scenario generated after %d attempt(s)", attempt + 1)
            return Scenario(path, obstacles, vessel_start, seed=seed, kind=kind)

    raise AsvLabError("scenario_generation_failed", attempts=cfg.max_attempts)


def scenario_for(seed, kind="train", index=0, cfg: ScenarioConfig = ScenarioConfig(), path_cfg: PathGenConfig = PathGenConfig()) -> Scenario:
    """The index-th scenario of the seed stream of a kind"""
    scenario = generate_scenario(scenario_rng(seed, kind, index), kind, cfg, path_cfg, seed=seed)
    scenario.meta["index"] = int(index)
    return scenario


def perturbed(scenario: Scenario, rng, heading=0.2, offset=5.0) -> Scenario:
    """Copy of a scenario with a jittered vessel start"""
    state = scenario.vessel_start
    gamma = state.psi
    normal = np.array([-math.sin(gamma), math.cos(gamma)])
    position = state.position + rng.uniform(-offset, offset) * normal
    start = VesselState.at(position[0], position[1], gamma + rng.uniform(-heading, heading))
    return replace(scenario, vessel_start=start, meta=dict(scenario.meta, perturbed=True))
