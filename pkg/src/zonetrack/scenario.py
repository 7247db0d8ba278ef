"""Scenario documents: YAML in, validated ``Scenario`` out.

Every validation failure raises ``ConfigError`` carrying the dotted key path
and the source line of the offending node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError, ZonetrackError
from .geometry import Position, Rect, Zone, check_disjoint_zones, zone_adjacency
from .localization import ALGORITHMS, AwknnParams
from .mobility import Route
from .netproto import MN_CHANNELS, check_mn_channel
from .propagation import PRESETS, PropagationModel
from .streams import MAX_SEED
from .tracking import EnergyModel

VARIANTS = ("zoned", "baseline")


@dataclass(frozen=True)
class Anchor:
    id: int
    position: Position
    zone_id: int
    is_head: bool


@dataclass(frozen=True)
class MobileNode:
    id: int
    route: Route


@dataclass(frozen=True)
class MapSpec:
    source: str  # "synthesize" or a directory holding refs.csv/rss.csv
    bounds: Optional[Rect] = None
    spacing: float = 1.2
    scans: int = 30
    trim: int = 3


@dataclass(frozen=True)
class NetworkParams:
    available_channels: tuple[int, ...] = MN_CHANNELS
    reuse_min_distance: float = 30.0
    window: float = 0.1  # T_w, seconds
    forward_airtime: float = 0.002
    interference_range: Optional[float] = None  # None: twice the hearing range
    variants: tuple[str, ...] = ("zoned",)
    rss_threshold: float = -65.0
    min_anchor_count: int = 3
    beacon_jitter: float = 0.25  # fraction of the sounding period; uniform delay on each periodic beacon
    scan_retry: float = 1.0
    scan_duration: float = 0.015


@dataclass(frozen=True)
class LocalizationParams:
    algorithm: str = "awknn"
    k: int = 4
    awknn: AwknnParams = AwknnParams()


@dataclass(frozen=True)
class TrackingParams:
    adaptive_sounding: bool = True
    initial_transmit_period: float = 1.0
    required_consecutive: int = 3
    speed_window: int = 5
    edge_band: float = 2.0
    edge_receive_period: float = 1.0
    center_receive_period: float = 3.0
    listen_window: float = 0.002
    channel_switching: bool = True


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: float
    zones: tuple[Zone, ...]
    anchors: tuple[Anchor, ...]
    radio_map: MapSpec
    propagation: PropagationModel
    network: NetworkParams
    localization: LocalizationParams
    tracking: TrackingParams
    energy: EnergyModel
    mobile_nodes: tuple[MobileNode, ...]
    name: str = "scenario"
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def adjacency(self) -> frozenset[frozenset[int]]:
        return zone_adjacency(self.zones)

    def zone(self, zone_id: int) -> Zone:
        return next(z for z in self.zones if z.id == zone_id)

    def anchor(self, anchor_id: int) -> Anchor:
        return next(a for a in self.anchors if a.id == anchor_id)


# -- node helpers -------------------------------------------------------------

_constructor = yaml.constructor.SafeConstructor()


def _line(node) -> Optional[int]:
    return node.start_mark.line + 1 if node is not None else None


def _scalar(node, path) -> Any:
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError("expected a scalar", path, _line(node))
    return _constructor.construct_object(node, deep=True)


def _mapping(node, path, required=(), optional=()) -> dict[str, Any]:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", path, _line(node))
    allowed = set(required) | set(optional)
    out = {}
    for knode, vnode in node.value:
        key = _scalar(knode, path)
        sub = f"{path}.{key}" if path else str(key)
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", sub, _line(knode))
        if key in out:
            raise ConfigError("duplicate key", sub, _line(knode))
        out[key] = vnode
    for key in required:
        if key not in out:
            sub = f"{path}.{key}" if path else key
            raise ConfigError("missing required key", sub, _line(node))
    return out


def _sequence(node, path) -> list:
    if not isinstance(node, yaml.SequenceNode):
        raise ConfigError("expected a list", path, _line(node))
    return list(node.value)


def _number(node, path, *, positive=False, minimum=None, maximum=None) -> float:
    value = _scalar(node, path)
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", path, _line(node)) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", path, _line(node))
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value}", path, _line(node))
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path, _line(node))
    if maximum is not None and value > maximum:
        raise ConfigError(f"must be <= {maximum}, got {value}", path, _line(node))
    return float(value)


def _integer(node, path, *, minimum=None, maximum=None) -> int:
    value = _scalar(node, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path, _line(node))
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path, _line(node))
    if maximum is not None and value > maximum:
        raise ConfigError(f"must be <= {maximum}, got {value}", path, _line(node))
    return value


def _boolean(node, path) -> bool:
    value = _scalar(node, path)
    if not isinstance(value, bool):
        raise ConfigError(f"expected true/false, got {value!r}", path, _line(node))
    return value


def _string(node, path, choices=None) -> str:
    value = _scalar(node, path)
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", path, _line(node))
    if choices is not None and value not in choices:
        raise ConfigError(f"expected one of {list(choices)}, got {value!r}", path, _line(node))
    return value


def _numbers(node, path, length) -> list[float]:
    items = _sequence(node, path)
    if len(items) not in (length if isinstance(length, tuple) else (length,)):
        raise ConfigError(f"expected {length} numbers, got {len(items)}", path, _line(node))
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(items)]


def _rect(node, path) -> Rect:
    vals = _numbers(node, path, 4)
    try:
        return Rect(*vals)
    except ZonetrackError as exc:
        raise ConfigError(str(exc), path, _line(node)) from None


# -- sections -----------------------------------------------------------------


def _parse_propagation(node, path) -> PropagationModel:
    if node is None:
        return PRESETS["indoor"]
    keys = _mapping(node, path, optional=(
        "preset", "tx_power_dbm", "pl_d0_db", "d0_m", "exponent", "shadowing_sigma_db", "noise_floor_dbm"))
    base = PRESETS["indoor"]
    if "preset" in keys:
        base = PRESETS[_string(keys["preset"], f"{path}.preset", PRESETS)]
    fields = {
        "tx_power_dbm": "tx_power", "pl_d0_db": "pl_d0", "d0_m": "d0", "exponent": "exponent",
        "shadowing_sigma_db": "shadowing_sigma", "noise_floor_dbm": "noise_floor",
    }
    overrides = {fields[k]: _number(v, f"{path}.{k}") for k, v in keys.items() if k != "preset"}
    values = {**base.__dict__, **overrides}
    try:
        return PropagationModel(**values)
    except ZonetrackError as exc:
        raise ConfigError(str(exc), path, _line(node)) from None


def _parse_network(node, path) -> NetworkParams:
    if node is None:
        return NetworkParams()
    keys = _mapping(node, path, optional=(
        "available_channels", "reuse_min_distance_m", "window_s", "forward_airtime_s",
        "interference_range_m", "variants", "rss_threshold_dbm", "min_anchor_count", "beacon_jitter",
        "scan_retry_s", "scan_duration_s"))
    kw = {}
    if "available_channels" in keys:
        chans = []
        for i, c in enumerate(_sequence(keys["available_channels"], f"{path}.available_channels")):
            sub = f"{path}.available_channels[{i}]"
            ch = _integer(c, sub)
            try:
                check_mn_channel(ch)
            except ZonetrackError as exc:
                raise ConfigError(str(exc), sub, _line(c)) from None
            chans.append(ch)
        if not chans:
            raise ConfigError("no channels", f"{path}.available_channels", _line(keys["available_channels"]))
        kw["available_channels"] = tuple(chans)
    simple = {
        "reuse_min_distance_m": ("reuse_min_distance", dict(minimum=0.0)),
        "window_s": ("window", dict(positive=True)),
        "forward_airtime_s": ("forward_airtime", dict(positive=True)),
        "interference_range_m": ("interference_range", dict(positive=True)),
        "rss_threshold_dbm": ("rss_threshold", {}),
        "scan_retry_s": ("scan_retry", dict(positive=True)),
        "beacon_jitter": ("beacon_jitter", dict(minimum=0.0, maximum=0.9)),
        "scan_duration_s": ("scan_duration", dict(positive=True)),
    }
    for key, (attr, opts) in simple.items():
        if key in keys:
            kw[attr] = _number(keys[key], f"{path}.{key}", **opts)
    if "min_anchor_count" in keys:
        kw["min_anchor_count"] = _integer(keys["min_anchor_count"], f"{path}.min_anchor_count", minimum=1)
    if "variants" in keys:
        items = _sequence(keys["variants"], f"{path}.variants")
        variants = tuple(_string(v, f"{path}.variants[{i}]", VARIANTS) for i, v in enumerate(items))
        if not variants or len(set(variants)) != len(variants):
            raise ConfigError("variants must be a non-empty list without repeats", f"{path}.variants",
                              _line(keys["variants"]))
        kw["variants"] = variants
    return NetworkParams(**kw)


def _parse_localization(node, path) -> LocalizationParams:
    if node is None:
        return LocalizationParams()
    keys = _mapping(node, path, optional=("algorithm", "k", "awknn"))
    kw = {}
    if "algorithm" in keys:
        kw["algorithm"] = _string(keys["algorithm"], f"{path}.algorithm", ALGORITHMS)
    if "k" in keys:
        kw["k"] = _integer(keys["k"], f"{path}.k", minimum=1)
    if "awknn" in keys:
        sub = f"{path}.awknn"
        akeys = _mapping(keys["awknn"], sub,
                         optional=("gamma0_offset_db", "delta_db", "theta_L", "theta_S", "max_iters"))
        names = {"gamma0_offset_db": "gamma0_offset", "delta_db": "delta", "theta_L": "theta_L",
                 "theta_S": "theta_S"}
        akw = {names[k]: _number(v, f"{sub}.{k}") for k, v in akeys.items() if k in names}
        if "max_iters" in akeys:
            akw["max_iters"] = _integer(akeys["max_iters"], f"{sub}.max_iters", minimum=1)
        if "delta" in akw and "gamma0_offset" not in akw:
            akw["gamma0_offset"] = akw["delta"]
        try:
            kw["awknn"] = AwknnParams(**akw)
        except ZonetrackError as exc:
            raise ConfigError(str(exc), sub, _line(keys["awknn"])) from None
    return LocalizationParams(**kw)


def _parse_tracking(node, path) -> TrackingParams:
    if node is None:
        return TrackingParams()
    spec = {
        "adaptive_sounding": ("adaptive_sounding", "bool"),
        "channel_switching": ("channel_switching", "bool"),
        "initial_transmit_period_s": ("initial_transmit_period", "pos"),
        "required_consecutive": ("required_consecutive", "int"),
        "speed_window": ("speed_window", "int2"),
        "edge_band_m": ("edge_band", "nonneg"),
        "edge_receive_period_s": ("edge_receive_period", "pos"),
        "center_receive_period_s": ("center_receive_period", "pos"),
        "listen_window_s": ("listen_window", "pos"),
    }
    keys = _mapping(node, path, optional=tuple(spec))
    kw = {}
    for key, vnode in keys.items():
        attr, kind = spec[key]
        sub = f"{path}.{key}"
        if kind == "bool":
            kw[attr] = _boolean(vnode, sub)
        elif kind == "int":
            kw[attr] = _integer(vnode, sub, minimum=1)
        elif kind == "int2":
            kw[attr] = _integer(vnode, sub, minimum=2)
        elif kind == "pos":
            kw[attr] = _number(vnode, sub, positive=True)
        else:
            kw[attr] = _number(vnode, sub, minimum=0.0)
    return TrackingParams(**kw)


def _parse_energy(node, path) -> EnergyModel:
    if node is None:
        return EnergyModel()
    names = {"voltage_v": "voltage", "current_tx_a": "current_tx", "current_rx_a": "current_rx",
             "current_sleep_a": "current_sleep", "tx_duration_s": "tx_duration"}
    keys = _mapping(node, path, optional=tuple(names))
    kw = {names[k]: _number(v, f"{path}.{k}", positive=True) for k, v in keys.items()}
    try:
        return EnergyModel(**kw)
    except ZonetrackError as exc:
        raise ConfigError(str(exc), path, _line(node)) from None


def _parse_map(node, path, base_dir: Path) -> MapSpec:
    keys = _mapping(node, path, required=("source",), optional=("bounds", "spacing_m", "scans", "trim"))
    source = _string(keys["source"], f"{path}.source")
    kw: dict[str, Any] = {}
    if source == "synthesize":
        if "bounds" not in keys:
            raise ConfigError("missing required key", f"{path}.bounds", _line(node))
        kw["bounds"] = _rect(keys["bounds"], f"{path}.bounds")
    else:
        source = str((base_dir / source).resolve()) if not Path(source).is_absolute() else source
        if "bounds" in keys:
            kw["bounds"] = _rect(keys["bounds"], f"{path}.bounds")
    if "spacing_m" in keys:
        kw["spacing"] = _number(keys["spacing_m"], f"{path}.spacing_m", positive=True)
    if "scans" in keys:
        kw["scans"] = _integer(keys["scans"], f"{path}.scans", minimum=1)
    if "trim" in keys:
        kw["trim"] = _integer(keys["trim"], f"{path}.trim", minimum=0)
    spec = MapSpec(source, **kw)
    if spec.scans < spec.trim + 1:
        raise ConfigError("scans must exceed trim", path, _line(node))
    return spec


def _parse_route(node, path) -> Route:
    rows = _sequence(node, path)
    if not rows:
        raise ConfigError("route has no waypoints", path, _line(node))
    wps, speeds = [], []
    for i, row in enumerate(rows):
        sub = f"{path}[{i}]"
        if i == 0:
            x, y = _numbers(row, sub, 2)
        else:
            vals = _numbers(row, sub, 3)
            x, y = vals[0], vals[1]
            if not vals[2] > 0:
                raise ConfigError("leg speed must be positive", sub, _line(row))
            speeds.append(vals[2])
        wps.append(Position(x, y))
    return Route(tuple(wps), tuple(speeds))


def parse_scenario(text: str, base_dir: Path | str = ".") -> Scenario:
    base_dir = Path(base_dir)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed document: {exc}", "", mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError("empty document")
    top = _mapping(
        root, "",
        required=("seed", "duration_s", "zones", "anchors", "radio_map", "mobile_nodes"),
        optional=("name", "propagation", "network", "localization", "tracking", "energy"),
    )
    name = _string(top["name"], "name") if "name" in top else "scenario"
    seed = _integer(top["seed"], "seed", minimum=0, maximum=MAX_SEED)
    duration = _number(top["duration_s"], "duration_s", positive=True)

    anchors_raw = []
    for i, a in enumerate(_sequence(top["anchors"], "anchors")):
        sub = f"anchors[{i}]"
        keys = _mapping(a, sub, required=("id", "zone", "pos"))
        x, y = _numbers(keys["pos"], f"{sub}.pos", 2)
        anchors_raw.append((_integer(keys["id"], f"{sub}.id"), _integer(keys["zone"], f"{sub}.zone"),
                            Position(x, y), a))
    ids = [a[0] for a in anchors_raw]
    for aid, _, _, node in anchors_raw:
        if ids.count(aid) > 1:
            raise ConfigError(f"duplicate anchor id {aid}", "anchors", _line(node))

    zones = []
    heads = set()
    for i, z in enumerate(_sequence(top["zones"], "zones")):
        sub = f"zones[{i}]"
        keys = _mapping(z, sub, required=("id", "rect", "head_anchor"))
        zid = _integer(keys["id"], f"{sub}.id")
        members = tuple(aid for aid, zone_id, _, _ in anchors_raw if zone_id == zid)
        head = _integer(keys["head_anchor"], f"{sub}.head_anchor")
        try:
            zones.append(Zone(zid, _rect(keys["rect"], f"{sub}.rect"), members, head))
        except ZonetrackError as exc:
            raise ConfigError(str(exc), sub, _line(z)) from None
        heads.add(head)
    if not zones:
        raise ConfigError("at least one zone required", "zones", _line(top["zones"]))
    zone_ids = [z.id for z in zones]
    if len(set(zone_ids)) != len(zone_ids):
        raise ConfigError("duplicate zone id", "zones", _line(top["zones"]))
    try:
        check_disjoint_zones(zones)
    except ZonetrackError as exc:
        raise ConfigError(str(exc), "zones", _line(top["zones"])) from None
    for aid, zid, _, node in anchors_raw:
        if zid not in zone_ids:
            raise ConfigError(f"anchor {aid} refers to unknown zone {zid}", "anchors", _line(node))
    anchors = tuple(Anchor(aid, pos, zid, aid in heads) for aid, zid, pos, _ in anchors_raw)

    mns = []
    for i, m in enumerate(_sequence(top["mobile_nodes"], "mobile_nodes")):
        sub = f"mobile_nodes[{i}]"
        keys = _mapping(m, sub, required=("id", "route"))
        route = _parse_route(keys["route"], f"{sub}.route")
        for p in route.sample_points():
            if not any(z.contains(p) for z in zones):
                raise ConfigError(f"route leaves the zoned area at ({p.x:.2f}, {p.y:.2f})",
                                  f"{sub}.route", _line(keys["route"]))
        mns.append(MobileNode(_integer(keys["id"], f"{sub}.id"), route))
    if len({m.id for m in mns}) != len(mns):
        raise ConfigError("duplicate mobile node id", "mobile_nodes", _line(top["mobile_nodes"]))

    localization = _parse_localization(top.get("localization"), "localization")
    return Scenario(
        seed=seed,
        duration=duration,
        zones=tuple(zones),
        anchors=anchors,
        radio_map=_parse_map(top["radio_map"], "radio_map", base_dir),
        propagation=_parse_propagation(top.get("propagation"), "propagation"),
        network=_parse_network(top.get("network"), "network"),
        localization=localization,
        tracking=_parse_tracking(top.get("tracking"), "tracking"),
        energy=_parse_energy(top.get("energy"), "energy"),
        mobile_nodes=tuple(mns),
        name=name,
        base_dir=base_dir,
    )


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


def corpus_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def corpus_scenarios() -> list[Path]:
    return sorted(corpus_dir().glob("*.yaml"))
