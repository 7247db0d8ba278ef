"""Command-line entry point: ``zonetrack {map-build,locate,simulate,report}``.

Exit status is 0 on success, 2 for configuration or input errors and 3
when a simulation aborts on a runtime invariant.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .errors import SimulationInvariantError, ZonetrackError
from .localization import ALGORITHMS, Measurement, estimate
from .persistence import read_queries, read_radio_map, read_summary, write_matches, write_radio_map, write_report
from .scenario import Scenario, corpus_dir, load_scenario
from .sim import load_or_build_map, run_scenario
from .streams import MAX_SEED

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    scenario: Optional[Path] = None
    map_dir: Optional[Path] = None
    query: Optional[Path] = None
    out_dir: Optional[Path] = None
    in_dir: Optional[Path] = None
    seed: Optional[int] = None
    algorithm: Optional[str] = None
    k: int = 4

    def __post_init__(self):
        needed = {
            "map-build": ("scenario", "out_dir"),
            "locate": ("map_dir", "query"),
            "simulate": ("scenario", "out_dir"),
            "report": ("in_dir",),
        }
        if self.subcommand not in needed:
            raise ZonetrackError(f"unknown subcommand {self.subcommand!r}")
        for name in needed[self.subcommand]:
            value = getattr(self, name)
            if value is None or str(value) == "":
                raise ZonetrackError(f"{self.subcommand}: missing {name}")
        if self.seed is not None and not 0 <= self.seed <= MAX_SEED:
            raise ZonetrackError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.algorithm is not None and self.algorithm not in ALGORITHMS:
            raise ZonetrackError(f"unknown algorithm {self.algorithm!r}")


def resolve_scenario(arg: Path) -> Path:
    """A path, or the name of a bundled scenario such as ``scenario_a``."""
    if arg.exists():
        return arg
    bundled = corpus_dir() / f"{arg.name}.yaml"
    if arg.suffix == "" and bundled.exists():
        return bundled
    raise ZonetrackError(f"scenario file not found: {arg}")


def _scenario(cfg: RunConfig) -> Scenario:
    sc = load_scenario(resolve_scenario(cfg.scenario))
    if cfg.seed is not None:
        sc = replace(sc, seed=cfg.seed)
    if cfg.algorithm is not None:
        sc = replace(sc, localization=replace(sc.localization, algorithm=cfg.algorithm))
    return sc


def cmd_map_build(cfg: RunConfig, out) -> None:
    radio_map = load_or_build_map(_scenario(cfg))
    write_radio_map(radio_map, cfg.out_dir)
    print(f"wrote {radio_map.size} reference points, {radio_map.anchor_count} anchors to {cfg.out_dir}", file=out)


def cmd_locate(cfg: RunConfig, out) -> None:
    radio_map = read_radio_map(cfg.map_dir)
    rows = []
    for qid, rss in read_queries(cfg.query, radio_map.anchor_ids):
        m = Measurement(0, rss)
        rows.append((qid, estimate(radio_map, m, cfg.algorithm or "awknn", cfg.k)))
    write_matches(rows, out)


def cmd_simulate(cfg: RunConfig, out) -> None:
    report = run_scenario(_scenario(cfg))
    write_report(report, cfg.out_dir)
    print(f"wrote {len(report.track)} track rows to {cfg.out_dir}", file=out)


def _fmt(x, unit="") -> str:
    return "n/a" if x is None else f"{x:.3f}{unit}"


def cmd_report(cfg: RunConfig, out) -> None:
    s = read_summary(cfg.in_dir)
    print(f"scenario {s['scenario']} seed {s['seed']} duration {s['duration_s']} s variant {s['variant']}", file=out)
    for name, st in [("all", s["error"]["all"])] + [(f"zone {z}", st) for z, st in s["error"]["zones"].items()]:
        print(f"  error {name:>8}: n={st['count']} mean={_fmt(st['mean_m'], ' m')} "
              f"median={_fmt(st['median_m'], ' m')} p90={_fmt(st['p90_m'], ' m')}", file=out)
    for variant, p in s["plr"].items():
        print(f"  plr {variant}: {p['lost']}/{p['sent']} lost ({100 * p['plr']:.2f}%)", file=out)
    for node, e in s["energy_j"].items():
        print(f"  energy {node}: {e['total']:.6f} J", file=out)
    if s["efficiency"] is not None:
        print(f"  eta: {s['efficiency']['eta']:.4f} 1/(m^2 J)", file=out)


COMMANDS = {"map-build": cmd_map_build, "locate": cmd_locate, "simulate": cmd_simulate, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zonetrack", description="Zone-based RSS tracking toolkit.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    mb = sub.add_parser("map-build", help="synthesize a radio map from a scenario and write it as CSV")
    mb.add_argument("--scenario", type=Path, required=True, help="scenario YAML or bundled scenario name")
    mb.add_argument("--out", type=Path, required=True, dest="out_dir")
    mb.add_argument("--seed", type=int)

    lo = sub.add_parser("locate", help="match query fingerprints against a radio map")
    lo.add_argument("--map", type=Path, required=True, dest="map_dir")
    lo.add_argument("--query", type=Path, required=True, help="CSV with query_id,anchor_id,rssi_dbm")
    lo.add_argument("--algo", choices=ALGORITHMS, default="awknn", dest="algorithm")
    lo.add_argument("--k", type=int, default=4)

    si = sub.add_parser("simulate", help="run a scenario and write track.csv and summary.json")
    si.add_argument("--scenario", type=Path, required=True)
    si.add_argument("--out", type=Path, required=True, dest="out_dir")
    si.add_argument("--seed", type=int)
    si.add_argument("--algo", choices=ALGORITHMS, dest="algorithm")

    rp = sub.add_parser("report", help="print a simulation summary")
    rp.add_argument("--in", type=Path, required=True, dest="in_dir")
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
        COMMANDS[cfg.subcommand](cfg, out)
    except SimulationInvariantError as exc:
        print(f"zonetrack: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ZonetrackError, OSError) as exc:
        print(f"zonetrack: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
