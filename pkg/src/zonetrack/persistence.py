"""CSV/JSON persistence for radio maps and simulation reports.

A radio map directory holds ``refs.csv`` (grid_id,x_m,y_m), ``rss.csv``
(grid_id,anchor_id,rssi_dbm; unheard entries omitted) and ``meta.json``
(grid spacing plus anchor ids and positions in column order). Floats are
written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import MapFormatError, ZonetrackError
from .geometry import Position, RadioMap, ReferenceGrid, assemble_radio_map
from .sim import SimReport

REFS_HEADER = ["grid_id", "x_m", "y_m"]
RSS_HEADER = ["grid_id", "anchor_id", "rssi_dbm"]
TRACK_HEADER = ["timestamp_s", "mn_id", "true_x_m", "true_y_m", "est_x_m", "est_y_m", "error_m"]
QUERY_HEADER = ["query_id", "anchor_id", "rssi_dbm"]


def _num(x: float) -> str:
    return repr(float(x))


def write_radio_map(radio_map: RadioMap, directory: Path | str) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "refs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REFS_HEADER)
        for fp in radio_map.fingerprints:
            w.writerow([fp.grid_index, _num(fp.location.x), _num(fp.location.y)])
    with open(out / "rss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RSS_HEADER)
        for fp in radio_map.fingerprints:
            for aid, v in zip(radio_map.anchor_ids, fp.rss):
                if v is not None:
                    w.writerow([fp.grid_index, aid, int(v)])
    meta = {
        "spacing_m": radio_map.grid.spacing,
        "anchors": [{"id": aid, "x_m": p.x, "y_m": p.y} for aid, p in radio_map.anchor_positions],
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _rows(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise MapFormatError(path.name, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise MapFormatError(path.name, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _parse_int(text: str, filename: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise MapFormatError(filename, line, f"not an integer: {text!r}") from None


def _parse_float(text: str, filename: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MapFormatError(filename, line, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise MapFormatError(filename, line, f"non-finite value {text!r}")
    return value


def read_radio_map(directory: Path | str) -> RadioMap:
    src = Path(directory)
    try:
        meta = json.loads((src / "meta.json").read_text(encoding="utf-8"))
        spacing = float(meta["spacing_m"])
        anchors = [(int(a["id"]), Position(float(a["x_m"]), float(a["y_m"]))) for a in meta["anchors"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MapFormatError("meta.json", 1, f"malformed metadata: {exc}") from None
    column = {aid: j for j, (aid, _) in enumerate(anchors)}

    points = []
    for line, (gid, x, y) in _rows(src / "refs.csv", REFS_HEADER):
        points.append((_parse_int(gid, "refs.csv", line),
                       Position(_parse_float(x, "refs.csv", line), _parse_float(y, "refs.csv", line))))
    rss: dict[int, list] = {gid: [None] * len(anchors) for gid, _ in points}
    for line, (gid, aid, v) in _rows(src / "rss.csv", RSS_HEADER):
        g = _parse_int(gid, "rss.csv", line)
        a = _parse_int(aid, "rss.csv", line)
        if g not in rss:
            raise MapFormatError("rss.csv", line, f"unknown grid_id {g}")
        if a not in column:
            raise MapFormatError("rss.csv", line, f"unknown anchor_id {a}")
        if rss[g][column[a]] is not None:
            raise MapFormatError("rss.csv", line, f"duplicate entry for grid {g}, anchor {a}")
        rss[g][column[a]] = _parse_int(v, "rss.csv", line)
    try:
        grid = ReferenceGrid(tuple(points), spacing)
        return assemble_radio_map(grid, rss.items(), anchors)
    except ZonetrackError as exc:
        raise MapFormatError("refs.csv", 1, str(exc)) from None


def read_queries(path: Path | str, anchor_ids: tuple[int, ...]) -> list[tuple[str, tuple]]:
    """Long-format query file: one row per heard anchor, grouped by query_id."""
    path = Path(path)
    column = {aid: j for j, aid in enumerate(anchor_ids)}
    queries: dict[str, list] = {}
    for line, (qid, aid, v) in _rows(path, QUERY_HEADER):
        a = _parse_int(aid, path.name, line)
        if a not in column:
            raise MapFormatError(path.name, line, f"anchor {a} is not in the radio map")
        vec = queries.setdefault(qid, [None] * len(anchor_ids))
        vec[column[a]] = _parse_int(v, path.name, line)
    return [(qid, tuple(vec)) for qid, vec in queries.items()]


# -- reports ------------------------------------------------------------------


def percentile(values: list[float], q: float) -> float:
    """Linear-interpolation percentile (numpy's default method)."""
    return float(np.percentile(np.asarray(values, dtype=float), q))


def _error_stats(errors: list[float]) -> dict:
    if not errors:
        return {"count": 0, "mean_m": None, "median_m": None, "p90_m": None}
    return {
        "count": len(errors),
        "mean_m": math.fsum(errors) / len(errors),
        "median_m": percentile(errors, 50),
        "p90_m": percentile(errors, 90),
    }


def summarize(report: SimReport) -> dict:
    by_zone: dict[str, list[float]] = {}
    for r in report.track:
        by_zone.setdefault(str(r.zone_id) if r.zone_id is not None else "none", []).append(r.error)
    errors = [r.error for r in report.track]
    eff = report.efficiency
    return {
        "scenario": report.scenario_name,
        "seed": report.seed,
        "duration_s": report.duration,
        "variant": report.variant,
        "error": {"all": _error_stats(errors),
                  "zones": {z: _error_stats(v) for z, v in sorted(by_zone.items())}},
        "plr": {v: {"sent": s.sent, "delivered": s.delivered, "lost": s.lost, "plr": s.plr}
                for v, s in report.plr.items()},
        "energy_j": {node: {"transmit": led.joules["transmit"], "receive": led.joules["receive"],
                            "sleep": led.joules["sleep"], "total": led.total}
                     for node, led in report.ledgers.items()},
        "efficiency": None if eff is None else {"mean_error_m": eff.mean_error, "energy_j": eff.energy,
                                                "eta": eff.eta},
        "event_counts": dict(report.event_counts),
    }


def write_report(report: SimReport, directory: Path | str) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "track.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for r in report.track:
            w.writerow([_num(r.timestamp), r.mn_id, _num(r.true_position.x), _num(r.true_position.y),
                        _num(r.estimate.x), _num(r.estimate.y), _num(r.error)])
    text = json.dumps(summarize(report), indent=2, sort_keys=True, allow_nan=False)
    (out / "summary.json").write_text(text + "\n", encoding="utf-8")


def read_summary(directory: Path | str) -> dict:
    return json.loads((Path(directory) / "summary.json").read_text(encoding="utf-8"))


def read_track(directory: Path | str) -> list[dict]:
    path = Path(directory) / "track.csv"
    out = []
    for line, row in _rows(path, TRACK_HEADER):
        vals = dict(zip(TRACK_HEADER, row))
        out.append({k: (int(v) if k == "mn_id" else _parse_float(v, path.name, line)) for k, v in vals.items()})
    return out


def write_matches(rows: list[tuple[str, object]], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["query_id", "est_x_m", "est_y_m", "k_used"])
    for qid, res in rows:
        w.writerow([qid, _num(res.estimate.x), _num(res.estimate.y), res.k_used])
