"""Piecewise-linear waypoint mobility."""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

from .errors import InvalidScenarioError
from .geometry import Position


@dataclass(frozen=True)
class Route:
    """Waypoints with the speed used on each leg (``speeds[i]`` covers leg i -> i+1)."""

    waypoints: tuple[Position, ...]
    speeds: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.waypoints:
            raise InvalidScenarioError("route has no waypoints")
        if len(self.speeds) != len(self.waypoints) - 1:
            raise InvalidScenarioError(
                f"route with {len(self.waypoints)} waypoints needs {len(self.waypoints) - 1} leg speeds"
            )
        if any(not s > 0 for s in self.speeds):
            raise InvalidScenarioError("leg speeds must be positive")

    @cached_property
    def leg_starts(self) -> tuple[float, ...]:
        """Time at which each leg begins; the final entry is the arrival time."""
        durations = (
            a.distance_to(b) / s for a, b, s in zip(self.waypoints, self.waypoints[1:], self.speeds)
        )
        return tuple(itertools.accumulate(durations, initial=0.0))

    @property
    def duration(self) -> float:
        return self.leg_starts[-1]

    def sample_points(self, step: float = 0.1) -> list[Position]:
        """Points along the route no more than ``step`` apart."""
        pts = [self.waypoints[0]]
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            n = max(1, int(a.distance_to(b) / step) + 1)
            pts.extend(Position(a.x + (b.x - a.x) * k / n, a.y + (b.y - a.y) * k / n) for k in range(1, n + 1))
        return pts


def mobility_position(route: Route, t: float) -> tuple[Position, float]:
    """Position and instantaneous speed at time ``t`` (seconds from start)."""
    if t < 0:
        raise InvalidScenarioError(f"negative time {t}")
    starts = route.leg_starts
    if len(route.waypoints) == 1 or t >= starts[-1]:
        return route.waypoints[-1], 0.0
    leg = bisect.bisect_right(starts, t) - 1
    a, b = route.waypoints[leg], route.waypoints[leg + 1]
    span = starts[leg + 1] - starts[leg]
    if span == 0:
        return b, route.speeds[leg]
    f = (t - starts[leg]) / span
    return Position(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f), route.speeds[leg]


def route_from_points(points: Sequence[Sequence[float]]) -> Route:
    """Build a route from ``[[x, y], [x, y, speed], ...]`` rows."""
    if not points:
        raise InvalidScenarioError("route has no waypoints")
    wps = [Position(float(p[0]), float(p[1])) for p in points]
    speeds = [float(p[2]) for p in points[1:]]
    return Route(tuple(wps), tuple(speeds))
