"""Waypoint sequencing with circle-of-acceptance switching and cross-track error."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class Waypoint(tuple):
    """Inertial position ``(xf, yf)`` in metres."""

    def __new__(cls, xf, yf):
        xf, yf = float(xf), float(yf)
        if not (math.isfinite(xf) and math.isfinite(yf)):
            raise ValueError("waypoint coordinates must be finite")
        return super().__new__(cls, (xf, yf))

    @property
    def xf(self):
        return self[0]

    @property
    def yf(self):
        return self[1]


@dataclass(frozen=True)
class PathState:
    """Mission progress.

    ``active_index`` is 0-based into ``waypoints``; it equals ``len(waypoints)``
    once the final circle of acceptance has been entered. Before the first
    waypoint is reached the previous anchor is ``start``.
    """

    waypoints: tuple[Waypoint, ...]
    start: tuple[float, float]
    r_coa: float = 1.0
    active_index: int = 0

    def __post_init__(self):
        wps = tuple(Waypoint(*w) for w in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        if not wps:
            raise ValueError("need at least one waypoint")
        if not self.r_coa > 0:
            raise ValueError("r_coa must be positive")
        for a, b in zip(wps, wps[1:]):
            if a == b:
                raise ValueError(f"consecutive waypoints coincide at {a}")
        if not 0 <= self.active_index <= len(wps):
            raise ValueError("active_index out of range")

    @property
    def complete(self) -> bool:
        return self.active_index >= len(self.waypoints)

    @property
    def active(self) -> Waypoint:
        return self.waypoints[min(self.active_index, len(self.waypoints) - 1)]

    @property
    def previous(self) -> tuple[float, float]:
        i = min(self.active_index, len(self.waypoints) - 1)
        return self.start if i == 0 else self.waypoints[i - 1]

    def segment(self) -> tuple[float, float, float, float]:
        (xp, yp), (xa, ya) = self.previous, self.active
        return xp, yp, xa, ya


def make_path(waypoints, start, r_coa: float = 1.0) -> PathState:
    return PathState(tuple(Waypoint(*w) for w in waypoints), tuple(start), r_coa)


def update_active(path: PathState, position) -> PathState:
    """Advance at most one waypoint if ``position`` lies inside the active COA."""
    if path.complete:
        return path
    xa, ya = path.active
    if math.hypot(position[0] - xa, position[1] - ya) <= path.r_coa:
        return replace(path, active_index=path.active_index + 1)
    return path


def nearest_waypoint_distance(path: PathState, position) -> float:
    xp, yp, xa, ya = path.segment()
    return min(math.hypot(position[0] - xa, position[1] - ya),
               math.hypot(position[0] - xp, position[1] - yp))


def line_distance(p0, p1, position) -> float:
    """Perpendicular distance from ``position`` to the infinite line through ``p0`` and ``p1``."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    seg = math.hypot(dx, dy)
    if seg == 0.0:
        raise ValueError("degenerate segment: coincident waypoints")
    return abs(dx * (position[1] - p0[1]) - dy * (position[0] - p0[0])) / seg


def cross_track_error(path: PathState, position) -> float:
    """Line distance to the active segment, zero within ``r_coa`` of either of its end points."""
    xp, yp, xa, ya = path.segment()
    if (xp, yp) == (xa, ya):
        raise ValueError("degenerate segment: coincident waypoints")
    if nearest_waypoint_distance(path, position) <= path.r_coa:
        return 0.0
    return line_distance((xp, yp), (xa, ya), position)


def mission_complete(path: PathState, position=None) -> bool:
    if path.complete:
        return True
    if position is None or path.active_index != len(path.waypoints) - 1:
        return False
    xa, ya = path.active
    return math.hypot(position[0] - xa, position[1] - ya) <= path.r_coa


def inside_any_coa(path: PathState, position) -> bool:
    """True within ``r_coa`` of any waypoint or of the start anchor."""
    for wx, wy in (path.start, *path.waypoints):
        if math.hypot(position[0] - wx, position[1] - wy) <= path.r_coa:
            return True
    return False


def geometry_array(path: PathState) -> np.ndarray:
    xp, yp, xa, ya = path.segment()
    return np.array([xp, yp, xa, ya, path.r_coa])
