# -*- coding: utf-8 -*-
"""Desired path and line-of-sight guidance features

A path is a polyline whose corners are rounded with circular fillets,
parameterized by arc length omega in [0, L]. Angles are measured from
north towards east, as headings are.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from asvlab.core import AsvLabValidationError
from asvlab.dynamics import VesselState, wrap_angle
from asvlab.utils.filesystem import read_csv, write_to_csv

logger = logging.getLogger("asvlab.guidance")

_LINE, _ARC = 0, 1


# Configuration --------------------------------------------------------


@dataclass(frozen=True)
class GuidanceConfig:
    delta_LA: float = 50.0
    end_radius: float = 5.0
    # half width of the closest point search window around the episode hint
    search_window: float = 50.0

    def __post_init__(self):
        if not self.delta_LA > 0:
            raise AsvLabValidationError(
                "invalid_config_value", key="delta_LA", value=self.delta_LA
            )
        if self.end_radius < 0 or not self.search_window > 0:
            raise AsvLabValidationError(
                "invalid_config_value", key="end_radius", value=self.end_radius
            )


@dataclass(frozen=True)
class PathGenConfig:
    min_intermediate: int = 2
    max_intermediate: int = 6
    min_segment: float = 80.0
    max_segment: float = 200.0
    max_turn: float = math.pi / 3
    fillet_radius: float = 20.0
    spacing: float = 1.0

    def __post_init__(self):
        if not 0 <= self.min_intermediate <= self.max_intermediate:
            raise AsvLabValidationError(
                "invalid_config_value",
                key="max_intermediate",
                value=self.max_intermediate,
            )
        if not 0 < self.min_segment <= self.max_segment:
            raise AsvLabValidationError(
                "invalid_config_value", key="min_segment", value=self.min_segment
            )


@dataclass(frozen=True)
class NavFeatures:
    u: float
    v: float
    r: float
    epsilon: float
    psi_err: float
    psi_err_LA: float

    def as_array(self):
        return np.array(
            [self.u, self.v, self.r, self.epsilon, self.psi_err, self.psi_err_LA]
        )


# Path -----------------------------------------------------------------


class Path:
    """Arc-length parameterized path through a list of waypoints

    Keyword arguments:
        - waypoints -- (n, 2) north-east positions, n >= 2
        - radius -- fillet radius at the corners, shrunk where segments are short
        - spacing -- resolution of the closest point lookup table

    """

    def __init__(self, waypoints, radius=20.0, spacing=1.0):
        waypoints = np.array(waypoints, dtype=float)
        if waypoints.ndim != 2 or waypoints.shape[1] != 2 or len(waypoints) < 2:
            raise AsvLabValidationError("path_too_short", count=len(waypoints))
        if not np.all(np.isfinite(waypoints)):
            raise AsvLabValidationError("path_not_finite")
        seg = np.diff(waypoints, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        for i, length in enumerate(seg_len):
            if length < 1e-9:
                raise AsvLabValidationError("path_duplicate_waypoints", index=i + 1)
        if not spacing > 0 or radius < 0:
            raise AsvLabValidationError("invalid_config_value", key="spacing", value=spacing)

        self.waypoints = waypoints
        self.radius = float(radius)
        self.spacing = float(spacing)
        self._build_pieces(seg, seg_len)
        self._build_table()

    def _build_pieces(self, seg, seg_len):
        heading = np.arctan2(seg[:, 1], seg[:, 0])
        n_corner = len(seg) - 1
        turn = np.array([wrap_angle(heading[i + 1] - heading[i]) for i in range(n_corner)])

        # tangent length eaten by each corner, half a segment at most per side
        radius = np.zeros(n_corner)
        tangent = np.zeros(n_corner)
        for i in range(n_corner):
            half_turn = abs(turn[i]) / 2
            if half_turn < 1e-12:
                continue
            avail = 0.5 * min(seg_len[i], seg_len[i + 1])
            t = math.tan(half_turn)
            radius[i] = min(self.radius, avail / t)
            tangent[i] = radius[i] * t

        pieces = []
        gamma_u = heading[0]
        start = self.waypoints[0].copy()
        for i in range(len(seg)):
            direction = np.array([math.cos(heading[i]), math.sin(heading[i])])
            if i > 0:
                gamma_u += turn[i - 1]
            end_cut = tangent[i] if i < n_corner else 0.0
            length = float(np.hypot(*(self.waypoints[i + 1] - start)) - end_cut)
            if length > 1e-12:
                pieces.append((_LINE, length, start.copy(), heading[i], 0.0, 1.0, gamma_u))
            if i < n_corner and radius[i] > 0:
                sigma = 1.0 if turn[i] > 0 else -1.0
                arc_start = self.waypoints[i + 1] - tangent[i] * direction
                normal = heading[i] + sigma * math.pi / 2
                center = arc_start + radius[i] * np.array([math.cos(normal), math.sin(normal)])
                phi0 = heading[i] - sigma * math.pi / 2
                arc_len = radius[i] * abs(turn[i])
                pieces.append((_ARC, arc_len, center, phi0, radius[i], sigma, gamma_u))
            if i < n_corner:
                out = np.array([math.cos(heading[i + 1]), math.sin(heading[i + 1])])
                start = self.waypoints[i + 1] + tangent[i] * out

        self._kind = np.array([p[0] for p in pieces])
        lengths = np.array([p[1] for p in pieces])
        self._start = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        self._origin = np.array([p[2] for p in pieces])
        self._angle = np.array([p[3] for p in pieces])
        self._radius = np.array([p[4] for p in pieces])
        self._sigma = np.array([p[5] for p in pieces])
        self._gamma0 = np.array([p[6] for p in pieces])
        self.length = float(lengths.sum())

    def _build_table(self):
        n = max(2, int(math.ceil(self.length / self.spacing)) + 1)
        self.table_omega = np.linspace(0.0, self.length, n)
        self.table_points = self.point(self.table_omega)
        self.table_gamma = self.gamma(self.table_omega)

    def _locate(self, omega):
        omega = np.clip(np.asarray(omega, dtype=float), 0.0, self.length)
        idx = np.searchsorted(self._start, omega, side="right") - 1
        idx = np.clip(idx, 0, len(self._start) - 1)
        return omega, idx, omega - self._start[idx]

    def point(self, omega):
        """Return p_d(omega), clamped to the path ends"""
        omega, idx, s = self._locate(omega)
        origin = self._origin[idx]
        angle = self._angle[idx]
        radius = self._radius[idx]
        is_arc = self._kind[idx] == _ARC
        phi = np.where(is_arc, angle + self._sigma[idx] * s / np.where(is_arc, radius, 1.0), angle)
        reach = np.where(is_arc, radius, s)
        out = origin + reach[..., None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return out

    def gamma(self, omega):
        """Return the path angle at omega, continuous along the path"""
        omega, idx, s = self._locate(omega)
        is_arc = self._kind[idx] == _ARC
        bend = np.where(is_arc, self._sigma[idx] * s / np.where(is_arc, self._radius[idx], 1.0), 0.0)
        return self._gamma0[idx] + bend

    def to_dict(self):
        return {
            "waypoints": self.waypoints.tolist(),
            "radius": self.radius,
            "spacing": self.spacing,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["waypoints"], data.get("radius", 20.0), data.get("spacing", 1.0))


def build_path(waypoints, radius=20.0, spacing=1.0) -> Path:
    return Path(waypoints, radius=radius, spacing=spacing)


# Closest point --------------------------------------------------------


def _refine(path, position, lo, hi, iterations=60):
    """Ternary search of the distance to the path over [lo, hi]"""

    def dist2(w):
        d = path.point(w) - position
        return float(d @ d)

    for _ in range(iterations):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if dist2(m1) <= dist2(m2):
            hi = m2
        else:
            lo = m1
    best = 0.5 * (lo + hi)
    return best, dist2(best)


def closest_param(path: Path, position, hint=None, window=50.0) -> float:
    """Return the arc length of the point of path closest to position

    Without hint the table is scanned globally. With a hint, only the
    table entries within `window` of it are considered and the result is
    clamped to be no smaller than the hint.
    """
    position = np.asarray(position, dtype=float)
    omegas, points = path.table_omega, path.table_points
    if hint is not None:
        mask = (omegas >= hint - window) & (omegas <= hint + window)
        if not mask.any():
            mask[np.argmin(np.abs(omegas - hint))] = True
        omegas, points = omegas[mask], points[mask]

    dist = np.hypot(points[:, 0] - position[0], points[:, 1] - position[1])
    dmin = dist.min()

    # local minima of the table close enough to the best one
    left = np.concatenate([[np.inf], dist[:-1]])
    right = np.concatenate([dist[1:], [np.inf]])
    candidates = np.flatnonzero((dist <= left) & (dist <= right) & (dist <= dmin + path.spacing))

    best_omega, best_d2 = None, np.inf
    for i in candidates:
        lo = max(omegas[0], omegas[i] - path.spacing)
        hi = min(omegas[-1], omegas[i] + path.spacing)
        omega, d2 = _refine(path, position, lo, hi)
        if d2 < best_d2 - 1e-12:
            best_omega, best_d2 = omega, d2

    if hint is not None:
        best_omega = max(best_omega, float(hint))
    return float(min(max(best_omega, 0.0), path.length))


class PathTracker:
    """Per-episode closest point state

    The parameter returned by update never decreases during an episode.
    """

    def __init__(self, path: Path, window=50.0):
        self.path = path
        self.window = window
        self.omega = None

    def reset(self, position):
        self.omega = closest_param(self.path, position)
        return self.omega

    def update(self, position):
        if self.omega is None:
            return self.reset(position)
        self.omega = closest_param(self.path, position, hint=self.omega, window=self.window)
        return self.omega


# Guidance features ----------------------------------------------------


def cross_track_error(path: Path, position, omega=None) -> float:
    if omega is None:
        omega = closest_param(path, position)
    d = np.asarray(position, dtype=float) - path.point(omega)
    return float(np.hypot(d[0], d[1]))


def _lookahead(path, state, cfg, omega):
    if omega is None:
        omega = closest_param(path, state.position)
    return min(omega + cfg.delta_LA, path.length)


def heading_error(path: Path, state: VesselState, cfg: GuidanceConfig, omega=None) -> float:
    """Angle from the heading to the line of sight towards the look-ahead point"""
    target = path.point(_lookahead(path, state, cfg, omega))
    los = math.atan2(target[1] - state.y_n, target[0] - state.x_n)
    return wrap_angle(los - state.psi)


def lookahead_heading_error(path: Path, state: VesselState, cfg: GuidanceConfig, omega=None) -> float:
    """Path angle at the look-ahead point relative to the heading"""
    return wrap_angle(float(path.gamma(_lookahead(path, state, cfg, omega))) - state.psi)


def progress(path: Path, omega) -> float:
    return float(np.clip(omega / path.length, 0.0, 1.0))


def nav_features(path: Path, state: VesselState, cfg: GuidanceConfig, omega=None) -> NavFeatures:
    if omega is None:
        omega = closest_param(path, state.position)
    return NavFeatures(
        u=state.u,
        v=state.v,
        r=state.r,
        epsilon=cross_track_error(path, state.position, omega),
        psi_err=heading_error(path, state, cfg, omega),
        psi_err_LA=lookahead_heading_error(path, state, cfg, omega),
    )


# Generation and files -------------------------------------------------


def generate_path(rng: np.random.Generator, cfg: PathGenConfig = PathGenConfig(), origin=(0.0, 0.0)) -> Path:
    """Draw a random path

    The number of intermediate waypoints is uniform over the configured
    range, the initial path angle uniform over (-pi, pi) and the heading
    random-walks with a bounded turn per segment.
    """
    n_intermediate = int(rng.integers(cfg.min_intermediate, cfg.max_intermediate + 1))
    heading = rng.uniform(-math.pi, math.pi)

    waypoints = [np.asarray(origin, dtype=float)]
    for i in range(n_intermediate + 1):
        if i > 0:
            heading += rng.uniform(-cfg.max_turn, cfg.max_turn)
        length = rng.uniform(cfg.min_segment, cfg.max_segment)
        waypoints.append(waypoints[-1] + length * np.array([math.cos(heading), math.sin(heading)]))

    return Path(np.array(waypoints), radius=cfg.fillet_radius, spacing=cfg.spacing)


def save_waypoints(path: Path, file_path):
    write_to_csv(file_path, path.waypoints, columns=["x_n", "y_n"])


def load_waypoints(file_path, radius=20.0, spacing=1.0) -> Path:
    frame = read_csv(file_path)
    if list(frame.columns) != ["x_n", "y_n"]:
        raise AsvLabValidationError("csv_bad_columns", path=file_path, expected="x_n,y_n")
    return Path(frame.to_numpy(dtype=float), radius=radius, spacing=spacing)
