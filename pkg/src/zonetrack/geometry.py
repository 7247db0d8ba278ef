"""Spatial primitives and the offline fingerprint radio map."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InconsistentMapError, InsufficientDataError, InvalidGeometryError

RSSI_MIN = -70
RSSI_MAX = -10

# Unheard anchor entries are stored as None.
Rssi = Optional[int]

_GRID_EPS = 1e-9


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidGeometryError(f"non-finite position ({self.x}, {self.y})")

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, closed on all sides."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidGeometryError(f"non-finite rectangle {vals}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise InvalidGeometryError(f"inverted rectangle {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def centroid(self) -> Position:
        return Position((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def contains(self, p: Position) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def border_distance(self, p: Position) -> float:
        """Distance from an inside point to the nearest edge."""
        return min(p.x - self.x_min, self.x_max - p.x, p.y - self.y_min, self.y_max - p.y)

    def interiors_overlap(self, other: "Rect") -> bool:
        return (
            min(self.x_max, other.x_max) > max(self.x_min, other.x_min)
            and min(self.y_max, other.y_max) > max(self.y_min, other.y_min)
        )

    def shares_border(self, other: "Rect") -> bool:
        """True when the rectangles touch along an edge of positive length."""
        x_overlap = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        y_overlap = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if x_overlap < 0 or y_overlap < 0:
            return False
        touching_x = math.isclose(self.x_max, other.x_min) or math.isclose(other.x_max, self.x_min)
        touching_y = math.isclose(self.y_max, other.y_min) or math.isclose(other.y_max, self.y_min)
        return (touching_x and y_overlap > 0) or (touching_y and x_overlap > 0)


@dataclass(frozen=True)
class Zone:
    id: int
    polygon: Rect
    anchor_ids: tuple[int, ...]
    head_anchor_id: int

    def __post_init__(self):
        if self.polygon.area <= 0:
            raise InvalidGeometryError(f"zone {self.id} has zero area")
        if self.head_anchor_id not in self.anchor_ids:
            raise InvalidGeometryError(
                f"zone {self.id}: head anchor {self.head_anchor_id} is not one of its anchors"
            )

    @property
    def centroid(self) -> Position:
        return self.polygon.centroid

    def contains(self, p: Position) -> bool:
        return self.polygon.contains(p)


def check_disjoint_zones(zones: Sequence[Zone]) -> None:
    for i, a in enumerate(zones):
        for b in zones[i + 1 :]:
            if a.polygon.interiors_overlap(b.polygon):
                raise InvalidGeometryError(f"zones {a.id} and {b.id} overlap")


def zone_adjacency(zones: Sequence[Zone]) -> frozenset[frozenset[int]]:
    """Pairs of zone ids sharing a border of positive length."""
    pairs = set()
    for i, a in enumerate(zones):
        for b in zones[i + 1 :]:
            if a.polygon.shares_border(b.polygon):
                pairs.add(frozenset((a.id, b.id)))
    return frozenset(pairs)


def zone_at(zones: Sequence[Zone], p: Position) -> Optional[Zone]:
    """Lowest-id zone containing ``p`` (border points belong to the lower id)."""
    for z in sorted(zones, key=lambda z: z.id):
        if z.contains(p):
            return z
    return None


@dataclass(frozen=True)
class ReferenceGrid:
    points: tuple[tuple[int, Position], ...]
    spacing: float

    def __post_init__(self):
        if not self.points:
            raise InvalidGeometryError("reference grid needs at least one point")
        if not self.spacing > 0:
            raise InvalidGeometryError(f"grid spacing must be positive, got {self.spacing}")
        for expected, (idx, _) in enumerate(self.points, start=1):
            if idx != expected:
                raise InvalidGeometryError(f"grid indices must run 1..L, found {idx} at slot {expected}")

    def __len__(self) -> int:
        return len(self.points)


def make_reference_grid(bounds: Rect, spacing: float) -> ReferenceGrid:
    """Lay grid points row-major from the lower-left corner of ``bounds``."""
    if not (spacing > 0 and math.isfinite(spacing)):
        raise InvalidGeometryError(f"grid spacing must be positive, got {spacing}")
    nx = math.floor(bounds.width / spacing + _GRID_EPS) + 1
    ny = math.floor(bounds.height / spacing + _GRID_EPS) + 1
    points = []
    idx = 1
    for row in range(ny):
        y = round(bounds.y_min + row * spacing, 9)
        for col in range(nx):
            x = round(bounds.x_min + col * spacing, 9)
            points.append((idx, Position(x, y)))
            idx += 1
    return ReferenceGrid(tuple(points), spacing)


def _round_half_down(value: float) -> int:
    return math.ceil(value - 0.5)


def _trimmed_mean(values: list[int], trim_count: int) -> int:
    med = float(np.median(values))
    # Sort on (deviation, value) so the result does not depend on input order.
    ranked = sorted(values, key=lambda v: (abs(v - med), v))
    kept = ranked[: len(ranked) - trim_count]
    return _round_half_down(math.fsum(kept) / len(kept))


def build_fingerprint(samples: Sequence[Sequence[Rssi]], trim_count: int = 3) -> tuple[Rssi, ...]:
    """Collapse repeated scans into one RSS vector.

    ``samples`` is a list of scans, each holding one RSSI (or None) per
    anchor. Per anchor, the ``trim_count`` readings farthest from the median
    are dropped and the rest averaged. An anchor heard in fewer than
    ``trim_count + 1`` scans keeps at least one reading.
    """
    if trim_count < 0:
        raise InsufficientDataError(f"trim_count must be >= 0, got {trim_count}")
    if not samples:
        raise InsufficientDataError("no samples")
    if len(samples) < trim_count + 1:
        raise InsufficientDataError(f"{len(samples)} scans cannot absorb trimming {trim_count}")
    width = len(samples[0])
    if any(len(s) != width for s in samples):
        raise InsufficientDataError("scans disagree on anchor count")
    result: list[Rssi] = []
    for j in range(width):
        heard = [s[j] for s in samples if s[j] is not None]
        if not heard:
            result.append(None)
            continue
        result.append(_trimmed_mean(heard, min(trim_count, len(heard) - 1)))
    return tuple(result)


@dataclass(frozen=True)
class Fingerprint:
    grid_index: int
    location: Position
    rss: tuple[Rssi, ...]

    def __post_init__(self):
        for v in self.rss:
            if v is None:
                continue
            if not isinstance(v, (int, np.integer)) or not RSSI_MIN <= v <= RSSI_MAX:
                raise InconsistentMapError(
                    f"grid {self.grid_index}: RSSI {v!r} is not an integer in [{RSSI_MIN}, {RSSI_MAX}]"
                )


@dataclass(frozen=True)
class RadioMap:
    grid: ReferenceGrid
    fingerprints: tuple[Fingerprint, ...]
    anchor_positions: tuple[tuple[int, Position], ...]

    def __post_init__(self):
        ids = [a for a, _ in self.anchor_positions]
        if len(set(ids)) != len(ids):
            raise InconsistentMapError(f"duplicate anchor ids in {ids}")
        if [f.grid_index for f in self.fingerprints] != [i for i, _ in self.grid.points]:
            raise InconsistentMapError("fingerprints must match grid indices one-to-one, in order")
        n = len(ids)
        for f in self.fingerprints:
            if len(f.rss) != n:
                raise InconsistentMapError(f"grid {f.grid_index}: {len(f.rss)} RSS entries, expected {n}")

    @property
    def size(self) -> int:
        return len(self.fingerprints)

    @property
    def anchor_count(self) -> int:
        return len(self.anchor_positions)

    @property
    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.anchor_positions)

    @cached_property
    def locations(self) -> np.ndarray:
        """(L, 2) array of reference coordinates."""
        return np.array([[f.location.x, f.location.y] for f in self.fingerprints], dtype=float)

    @cached_property
    def rss_matrix(self) -> np.ndarray:
        """(L, N) RSS array with unheard entries replaced by the RSSI floor."""
        return np.array(
            [[RSSI_MIN if v is None else v for v in f.rss] for f in self.fingerprints], dtype=float
        )


def assemble_radio_map(
    grid: ReferenceGrid,
    per_point: Iterable[tuple[int, Sequence[Rssi]]],
    anchors: Sequence[tuple[int, Position]],
) -> RadioMap:
    by_index: dict[int, tuple[Rssi, ...]] = {}
    for idx, rss in per_point:
        if idx in by_index:
            raise InconsistentMapError(f"duplicate grid index {idx}")
        by_index[idx] = tuple(None if v is None else int(v) for v in rss)
    locations = dict(grid.points)
    extra = set(by_index) - set(locations)
    if extra:
        raise InconsistentMapError(f"fingerprints for unknown grid indices {sorted(extra)}")
    missing = set(locations) - set(by_index)
    if missing:
        raise InconsistentMapError(f"no fingerprint for grid indices {sorted(missing)}")
    fps = tuple(Fingerprint(i, locations[i], by_index[i]) for i, _ in grid.points)
    return RadioMap(grid, fps, tuple((int(a), p) for a, p in anchors))
