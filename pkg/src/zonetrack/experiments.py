"""Seeded experiment harnesses shared by the acceptance suite and the CLI."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .geometry import Position, RadioMap
from .localization import ALGORITHMS, AwknnParams, Measurement, estimate
from .scenario import Scenario
from .sim import (
    SimReport,
    channel_plan,
    load_or_build_map,
    run_variant,
    sample_anchor_vector,
    survey_listeners,
)
from .streams import stream
from .tracking import EnergyModel, sounding_energy


@dataclass(frozen=True)
class Query:
    truth: Position
    measurement: Measurement


def make_queries(scenario: Scenario, count: int, seed: Optional[int] = None) -> list[Query]:
    """Single-scan queries at uniform random positions inside the surveyed area.

    Query ``i`` draws from its own stream, so prefixes are stable as ``count``
    grows.
    """
    seed = scenario.seed if seed is None else seed
    bounds = scenario.radio_map.bounds
    plan = channel_plan(scenario)
    out = []
    i = 0
    while len(out) < count:
        rng = stream(seed, "query", i)
        i += 1
        p = Position(float(rng.uniform(bounds.x_min, bounds.x_max)), float(rng.uniform(bounds.y_min, bounds.y_max)))
        rss = sample_anchor_vector(scenario, p, survey_listeners(scenario, plan, p), rng)
        if all(v is None for v in rss):
            continue
        out.append(Query(p, Measurement(0, rss)))
    return out


def localization_errors(radio_map: RadioMap, queries: Sequence[Query], algorithm: str, k: int = 4,
                        params: AwknnParams = AwknnParams()) -> list[float]:
    return [q.truth.distance_to(estimate(radio_map, q.measurement, algorithm, k, params).estimate)
            for q in queries]


def compare_algorithms(scenario: Scenario, count: int = 500, k: int = 4,
                       radio_map: Optional[RadioMap] = None) -> dict[str, float]:
    """Mean localization error per algorithm over ``count`` seeded queries."""
    radio_map = radio_map if radio_map is not None else load_or_build_map(scenario)
    queries = make_queries(scenario, count)
    params = scenario.localization.awknn
    return {
        algo: statistics.fmean(localization_errors(radio_map, queries, algo, k, params))
        for algo in ALGORITHMS
    }


def plr_sweep(scenario: Scenario, seeds: Sequence[int], variants: Sequence[str] = ("zoned", "baseline")
              ) -> list[dict[str, float]]:
    """PLR per variant for each seed; the radio map is rebuilt from each seed."""
    rows = []
    for seed in seeds:
        sc = replace(scenario, seed=seed)
        radio_map = load_or_build_map(sc)
        rows.append({v: run_variant(sc, v, radio_map).plr[v].plr for v in variants})
    return rows


def cycle_energy_ratio(model: EnergyModel, schedule: Sequence[tuple[int, float]], reference_period: float,
                       ) -> float:
    """Energy of ``(cycles, period)`` segments over the same span sounded at ``reference_period``."""
    adaptive = math.fsum(n * sounding_energy(model, period) for n, period in schedule)
    span = math.fsum(n * period for n, period in schedule)
    fixed = (span / reference_period) * sounding_energy(model, reference_period)
    return adaptive / fixed


def speed_drop_runs(scenario: Scenario) -> tuple[SimReport, SimReport]:
    """The scenario with adaptive sounding, and the same run pinned at its initial period."""
    radio_map = load_or_build_map(scenario)
    adaptive = replace(scenario, tracking=replace(scenario.tracking, adaptive_sounding=True))
    fixed = replace(scenario, tracking=replace(scenario.tracking, adaptive_sounding=False))
    variant = scenario.network.variants[0]
    return run_variant(adaptive, variant, radio_map), run_variant(fixed, variant, radio_map)


def sounding_ratio(adaptive: SimReport, fixed: SimReport) -> float:
    """Mean per-MN sounding energy (transmit plus sleep) of two runs."""
    a = statistics.fmean(adaptive.sounding_energy(n) for n in adaptive.mn_ledgers())
    f = statistics.fmean(fixed.sounding_energy(n) for n in fixed.mn_ledgers())
    return a / f
