"""Deterministic fingerprint matchers: KNN, WKNN and adaptive WKNN.

All three rank reference points by Euclidean distance in signal space and
break exact ties by the lower grid index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameterError
from .geometry import RSSI_MAX, RSSI_MIN, Position, RadioMap, Rssi

# Distances below this are treated as exact matches.
ZERO_DISTANCE = 1e-6
# Slack on the threshold comparison so Γ = D_i is not lost to rounding in Γ0 + kΔ.
_THRESHOLD_SLACK = 1e-9

ALGORITHMS = ("knn", "wknn", "awknn")


@dataclass(frozen=True)
class Measurement:
    mn_id: int
    rss: tuple[Rssi, ...]
    timestamp: float = 0.0

    def __post_init__(self):
        heard = [v for v in self.rss if v is not None]
        if not heard:
            raise InvalidParameterError(f"measurement from MN {self.mn_id} has no heard anchor")
        for v in heard:
            if v != int(v) or not RSSI_MIN <= v <= RSSI_MAX:
                raise InvalidParameterError(f"RSSI {v!r} outside [{RSSI_MIN}, {RSSI_MAX}]")


@dataclass(frozen=True)
class Selected:
    grid_index: int
    distance: float
    weight: float


@dataclass(frozen=True)
class MatchResult:
    estimate: Position
    selected: tuple[Selected, ...]
    k_used: int
    degenerate: bool = False
    low_confidence: bool = False


@dataclass(frozen=True)
class AwknnParams:
    gamma0_offset: float = 1.0
    delta: float = 1.0
    theta_L: float = 3.0
    theta_S: float = 1.2
    max_iters: int = 50

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidParameterError("delta must be positive")
        if not self.theta_L > self.theta_S >= 1:
            raise InvalidParameterError("need theta_L > theta_S >= 1")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be >= 1")


def _filled(rss: Sequence[Rssi]) -> np.ndarray:
    return np.array([RSSI_MIN if v is None else v for v in rss], dtype=float)


def rss_distance(fp_rss: Sequence[Rssi], query_rss: Sequence[Rssi]) -> float:
    if len(fp_rss) != len(query_rss):
        raise InvalidParameterError(f"dimension mismatch {len(fp_rss)} vs {len(query_rss)}")
    return float(np.sqrt(np.sum((_filled(fp_rss) - _filled(query_rss)) ** 2)))


def heard_overlap(fp_rss: Sequence[Rssi], query_rss: Sequence[Rssi]) -> int:
    return sum(1 for a, b in zip(fp_rss, query_rss) if a is not None and b is not None)


def map_distances(radio_map: RadioMap, m: Measurement) -> np.ndarray:
    """Signal-space distance from ``m`` to every fingerprint, in grid order."""
    if len(m.rss) != radio_map.anchor_count:
        raise InvalidParameterError(
            f"measurement has {len(m.rss)} entries, map has {radio_map.anchor_count} anchors"
        )
    diff = radio_map.rss_matrix - _filled(m.rss)
    return np.sqrt(np.sum(diff * diff, axis=1))


def _ranked(distances: np.ndarray) -> np.ndarray:
    # lexsort is stable on the last key; row order doubles as grid-index order.
    return np.lexsort((np.arange(len(distances)), distances))


def _low_confidence(radio_map: RadioMap, m: Measurement, rows: Sequence[int]) -> bool:
    return any(heard_overlap(radio_map.fingerprints[r].rss, m.rss) == 0 for r in rows)


def _weighted(radio_map: RadioMap, rows: Sequence[int], weights: Sequence[float], distances: np.ndarray,
              m: Measurement, degenerate: bool = False) -> MatchResult:
    locs = radio_map.locations[list(rows)]
    w = np.asarray(weights, dtype=float)
    est = w @ locs
    selected = tuple(
        Selected(radio_map.fingerprints[r].grid_index, float(distances[r]), float(wi))
        for r, wi in zip(rows, w)
    )
    return MatchResult(
        Position(float(est[0]), float(est[1])),
        selected,
        len(selected),
        degenerate=degenerate,
        low_confidence=_low_confidence(radio_map, m, rows),
    )


def _check_k(radio_map: RadioMap, k: int) -> None:
    if not 1 <= k <= radio_map.size:
        raise InvalidParameterError(f"K={k} outside 1..{radio_map.size}")


def knn_estimate(radio_map: RadioMap, m: Measurement, k: int = 4) -> MatchResult:
    _check_k(radio_map, k)
    d = map_distances(radio_map, m)
    rows = _ranked(d)[:k]
    return _weighted(radio_map, rows, [1.0 / k] * k, d, m)


def inverse_distance_weights(dists: Sequence[float]) -> list[float]:
    raw = [1.0 / max(x, ZERO_DISTANCE) for x in dists]
    total = math.fsum(raw)
    return [r / total for r in raw]


def _wknn_on_rows(radio_map: RadioMap, rows: Sequence[int], d: np.ndarray, m: Measurement,
                  keep_all: bool, degenerate: bool = False) -> MatchResult:
    """Inverse-distance weighting over already-ranked rows.

    An exact match (distance below ZERO_DISTANCE) takes all the weight. With
    ``keep_all`` the other rows stay in the selection at zero weight;
    otherwise the selection collapses to the exact match.
    """
    rows = list(rows)
    if d[rows[0]] < ZERO_DISTANCE:
        if keep_all:
            weights = [1.0] + [0.0] * (len(rows) - 1)
            return _weighted(radio_map, rows, weights, d, m, degenerate)
        return _weighted(radio_map, rows[:1], [1.0], d, m, degenerate)
    return _weighted(radio_map, rows, inverse_distance_weights(d[rows]), d, m, degenerate)


def wknn_estimate(radio_map: RadioMap, m: Measurement, k: int = 4) -> MatchResult:
    _check_k(radio_map, k)
    d = map_distances(radio_map, m)
    return _wknn_on_rows(radio_map, _ranked(d)[:k], d, m, keep_all=False)


@dataclass(frozen=True)
class AwknnTrace:
    """Outcome of the adaptive threshold search over sorted distances."""

    count: int  # N_R of the final selection
    gammas: tuple[float, ...]  # every threshold visited, in order
    reason: str  # "settled", "oscillation", "max_iters" or "fallback"


def awknn_select(sorted_distances: Sequence[float], params: AwknnParams) -> AwknnTrace:
    """Pick how many of the nearest references to keep.

    ``sorted_distances`` must be non-decreasing. The threshold is tracked as
    an integer number of steps from its seed so revisits compare exactly.
    """
    n = len(sorted_distances)
    if n < 4:
        raise InvalidParameterError("adaptive selection needs at least 4 references")
    d = list(sorted_distances)
    gamma0 = d[0] + params.gamma0_offset
    steps = 0
    seen = set()
    gammas = []
    last_valid: Optional[int] = None
    reason = "max_iters"
    for _ in range(params.max_iters):
        gamma = gamma0 + steps * params.delta
        gammas.append(gamma)
        seen.add(steps)
        count = sum(1 for x in d if x <= gamma + _THRESHOLD_SLACK)
        if count <= 3:
            nxt = steps + 1
        else:
            last_valid = count
            ratio = d[count - 1] / max(d[0], ZERO_DISTANCE)
            if ratio > params.theta_L:
                nxt = steps - 1
            elif ratio < params.theta_S:
                nxt = steps + 1
            else:
                reason = "settled"
                break
        if nxt in seen:
            reason = "oscillation"
            break
        steps = nxt
    if last_valid is None:
        return AwknnTrace(4, tuple(gammas), "fallback")
    return AwknnTrace(last_valid, tuple(gammas), reason)


def awknn_estimate(radio_map: RadioMap, m: Measurement, params: AwknnParams = AwknnParams()) -> MatchResult:
    d = map_distances(radio_map, m)
    order = _ranked(d)
    if radio_map.size < 4:
        return _wknn_on_rows(radio_map, order, d, m, keep_all=False, degenerate=True)
    trace = awknn_select(d[order], params)
    return _wknn_on_rows(radio_map, order[: trace.count], d, m, keep_all=True,
                         degenerate=trace.reason == "fallback")


def estimate(radio_map: RadioMap, m: Measurement, algorithm: str, k: int = 4,
             params: AwknnParams = AwknnParams()) -> MatchResult:
    if algorithm == "knn":
        return knn_estimate(radio_map, m, k)
    if algorithm == "wknn":
        return wknn_estimate(radio_map, m, k)
    if algorithm == "awknn":
        return awknn_estimate(radio_map, m, params)
    raise InvalidParameterError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
