"""Deterministic discrete-event simulation of a zoned tracking network.

One run covers MN beaconing, RSS sampling at the anchors, forwarding to the
zone head over the shared medium, server-side localization and tracking, and
the downlink commands that close the loop. Two network variants exist:

``zoned``
    per-zone channels with coordinated AN backoff and location-driven switching.
``baseline``
    every node on one shared channel; ANs forward after an unslotted random
    delay and MNs never switch.
"""

from __future__ import annotations

import heapq
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import OutOfZoneError, SimulationInvariantError, ZonetrackError
from .geometry import (
    Position,
    RadioMap,
    assemble_radio_map,
    build_fingerprint,
    make_reference_grid,
    zone_at,
)
from .localization import Measurement, estimate
from .mobility import mobility_position
from .netproto import (
    ChannelPlan,
    Frame,
    LinkMode,
    MnLinkState,
    allocate_channels,
    apply_switch,
    backoff_schedule,
    begin_switch,
    evaluate_switch,
    link_state_violations,
    resolve_collisions,
    scan_and_access,
)
from .propagation import sample_rss
from .scenario import Scenario
from .streams import stream
from .tracking import (
    EfficiencyReport,
    EnergyLedger,
    TrackState,
    estimate_speed,
    ledger_accrue,
    maybe_adjust_sounding,
    receive_period_for_position,
)

EVENT_KINDS = ("beacon_tx", "frame_rx", "forward_tx", "server_eval", "command_rx", "mobility_tick")


@dataclass(order=True)
class Event:
    time: float
    sequence: int
    kind: str = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)

    def describe(self) -> str:
        return f"{self.kind}#{self.sequence}@{self.time:.6f}s"


@dataclass(frozen=True)
class TrackRow:
    timestamp: float
    mn_id: int
    true_position: Position
    estimate: Position
    error: float
    zone_id: Optional[int]


@dataclass(frozen=True)
class PlrStats:
    sent: int
    delivered: int

    @property
    def lost(self) -> int:
        return self.sent - self.delivered

    @property
    def plr(self) -> float:
        return self.lost / self.sent if self.sent else 0.0


@dataclass(frozen=True)
class SimReport:
    scenario_name: str
    seed: int
    duration: float
    variant: str
    track: tuple[TrackRow, ...]
    plr: dict[str, PlrStats]
    ledgers: dict[str, EnergyLedger]
    efficiency: Optional[EfficiencyReport]
    event_counts: dict[str, int]

    def mn_ledgers(self) -> dict[str, EnergyLedger]:
        return {k: v for k, v in self.ledgers.items() if k.startswith("mn")}

    def sounding_energy(self, node: str) -> float:
        """Transmit plus sleep joules: the part governed by the sounding cycle."""
        led = self.ledgers[node]
        return led.joules["transmit"] + led.joules["sleep"]


# -- radio map synthesis ------------------------------------------------------


def channel_plan(scenario: Scenario) -> ChannelPlan:
    net = scenario.network
    return allocate_channels(scenario.zones, scenario.adjacency, net.available_channels, net.reuse_min_distance)


def survey_listeners(scenario: Scenario, plan: ChannelPlan, p: Position) -> set[int]:
    """Anchors that hear a survey transmitter standing at ``p``.

    The surveyor uses the channel of the zone it stands in, so only anchors
    of zones on that channel listen. Outside every zone all anchors listen.
    """
    zone = zone_at(scenario.zones, p)
    if zone is None:
        return {a.id for a in scenario.anchors}
    ch = plan.channel_of(zone.id)
    return {a.id for a in scenario.anchors if plan.channel_of(a.zone_id) == ch}


def sample_anchor_vector(scenario: Scenario, p: Position, listeners: set[int], rng: np.random.Generator) -> tuple:
    out = []
    for a in scenario.anchors:
        out.append(sample_rss(scenario.propagation, p, a.position, rng) if a.id in listeners else None)
    return tuple(out)


def synthesize_radio_map(scenario: Scenario) -> RadioMap:
    spec = scenario.radio_map
    if spec.bounds is None:
        raise ZonetrackError("synthesized radio map needs bounds")
    plan = channel_plan(scenario)
    grid = make_reference_grid(spec.bounds, spec.spacing)
    per_point = []
    for idx, p in grid.points:
        listeners = survey_listeners(scenario, plan, p)
        rng = stream(scenario.seed, "survey", idx)
        scans = [sample_anchor_vector(scenario, p, listeners, rng) for _ in range(spec.scans)]
        per_point.append((idx, build_fingerprint(scans, spec.trim)))
    return assemble_radio_map(grid, per_point, [(a.id, a.position) for a in scenario.anchors])


def load_or_build_map(scenario: Scenario) -> RadioMap:
    if scenario.radio_map.source == "synthesize":
        return synthesize_radio_map(scenario)
    from .persistence import read_radio_map

    return read_radio_map(scenario.radio_map.source)


# -- engine -------------------------------------------------------------------


@dataclass
class _Mn:
    id: int
    route: object
    link: MnLinkState
    transmit_period: float
    receive_period: float
    serving_zone: Optional[int] = None
    beacons: int = 0
    pending: dict = field(default_factory=dict)
    next_periodic: float = math.inf
    track: Optional[TrackState] = None


class Simulation:
    def __init__(self, scenario: Scenario, radio_map: RadioMap, variant: str):
        self.sc = scenario
        self.map = radio_map
        self.variant = variant
        net = scenario.network
        self.plan = channel_plan(scenario)
        self.shared_channel = min(net.available_channels)
        self.interference_range = net.interference_range or 2.0 * scenario.propagation.hearing_range
        self.collect_delay = scenario.energy.tx_duration + 2.0 * net.window + net.forward_airtime + 1e-6

        self.anchors = {a.id: a for a in scenario.anchors}
        self.heads = {z.id: z.head_anchor_id for z in scenario.zones}
        self.forwarders = {
            z.id: sorted(a for a in z.anchor_ids if a != z.head_anchor_id) for z in scenario.zones
        }
        self.map_column = {aid: j for j, aid in enumerate(radio_map.anchor_ids)}

        self.now = 0.0
        self._seq = 0
        self._queue: list[Event] = []
        self._air: dict[int, list[Frame]] = defaultdict(list)
        self._beacon_log: dict[tuple[int, int], dict] = {}
        self.counts: Counter = Counter()
        self.rows: list[TrackRow] = []
        self.sent = 0
        self.delivered = 0
        self.ledgers = {f"mn:{m.id}": EnergyLedger() for m in scenario.mobile_nodes}
        self.ledgers.update({f"an:{a.id}": EnergyLedger() for a in scenario.anchors})
        self.mns = {
            m.id: _Mn(
                m.id, m.route, MnLinkState(m.id),
                scenario.tracking.initial_transmit_period, scenario.tracking.center_receive_period,
                track=TrackState(m.id, transmit_period=scenario.tracking.initial_transmit_period,
                                 receive_period=scenario.tracking.center_receive_period),
            )
            for m in scenario.mobile_nodes
        }

    # -- plumbing --

    def listen_channel(self, anchor_id: int) -> int:
        if self.variant == "baseline":
            return self.shared_channel
        return self.plan.channel_of(self.anchors[anchor_id].zone_id)

    def schedule(self, time: float, kind: str, **payload) -> None:
        if time < self.now:
            raise SimulationInvariantError(kind, f"scheduled at {time} before current time {self.now}")
        self._seq += 1
        heapq.heappush(self._queue, Event(time, self._seq, kind, payload))

    def accrue(self, node: str, mode: str, start: float, duration: float) -> None:
        duration = max(0.0, min(duration, self.sc.duration - start))
        self.ledgers[node] = ledger_accrue(self.ledgers[node], mode, duration, self.sc.energy)

    def true_position(self, mn: _Mn, t: float) -> Position:
        return mobility_position(mn.route, t)[0]

    def set_link(self, mn: _Mn, state: MnLinkState, event: Event) -> None:
        problems = link_state_violations(state)
        if problems:
            raise SimulationInvariantError(event.describe(), "; ".join(problems))
        mn.link = state

    def _register(self, frame: Frame) -> None:
        air = self._air[frame.channel]
        horizon = self.now - 1.0
        if air and air[0].end < horizon:
            air[:] = [f for f in air if f.end >= horizon]
        air.append(frame)

    def _delivery(self, frame: Frame) -> dict:
        rivals = [f for f in self._air[frame.channel]
                  if f.frame_id != frame.frame_id and f.start < frame.end and frame.start < f.end]
        return resolve_collisions([frame, *rivals], self.interference_range)[frame.frame_id]

    # -- run --

    def run(self) -> SimReport:
        for mn in self.mns.values():
            phase = float(stream(self.sc.seed, "phase", mn.id).uniform(0.0, mn.transmit_period))
            self.schedule(mn.transmit_period + phase, "mobility_tick", mn=mn.id)
        handlers = {
            "beacon_tx": self._on_beacon_tx,
            "frame_rx": self._on_frame_rx,
            "forward_tx": self._on_forward_tx,
            "server_eval": self._on_server_eval,
            "command_rx": self._on_command_rx,
            "mobility_tick": self._on_mobility_tick,
        }
        while self._queue and self._queue[0].time <= self.sc.duration:
            ev = heapq.heappop(self._queue)
            self.now = ev.time
            self.counts[ev.kind] += 1
            try:
                handlers[ev.kind](ev)
            except SimulationInvariantError:
                raise
            except ZonetrackError as exc:
                raise SimulationInvariantError(ev.describe(), str(exc)) from exc
        return self._report()

    # -- handlers --

    def _on_mobility_tick(self, ev: Event) -> None:
        mn = self.mns[ev.payload["mn"]]
        if mn.link.mode is not LinkMode.SCANNING:
            return
        net = self.sc.network
        self.accrue(f"mn:{mn.id}", "receive", ev.time, net.scan_duration)
        here = self.true_position(mn, ev.time)
        covering = [z for z in self.sc.zones if z.contains(here)]
        if self.variant == "baseline":
            active = {self.shared_channel} if covering else set()
        else:
            active = {self.plan.channel_of(z.id) for z in covering}
        self.set_link(mn, scan_and_access(mn.link, active), ev)
        if mn.link.mode is LinkMode.SCANNING:
            self.schedule(ev.time + net.scan_retry, "mobility_tick", mn=mn.id)
            return
        ch = mn.link.current_channel
        if self.variant == "baseline":
            mn.serving_zone = min(z.id for z in covering)
        else:
            mn.serving_zone = min(z.id for z in covering if self.plan.channel_of(z.id) == ch)
        start = ev.time + net.scan_duration
        mn.next_periodic = start
        self.schedule(start, "beacon_tx", mn=mn.id, periodic=True, nominal=start)
        self.schedule(start + mn.receive_period, "command_rx", mn=mn.id)

    def _on_beacon_tx(self, ev: Event) -> None:
        mn = self.mns[ev.payload["mn"]]
        t = ev.time
        idx = mn.beacons
        mn.beacons += 1
        airtime = self.sc.energy.tx_duration
        self.accrue(f"mn:{mn.id}", "transmit", t, airtime)
        if ev.payload.get("periodic"):
            # Jitter keeps two MNs that start in phase from colliding on every beacon;
            # it is measured from the nominal grid so it never accumulates.
            nominal = ev.payload["nominal"] + mn.transmit_period
            jitter = self.sc.network.beacon_jitter * mn.transmit_period
            offset = float(stream(self.sc.seed, "jitter", mn.id, idx).uniform(0.0, jitter)) if jitter > 0 else 0.0
            mn.next_periodic = max(nominal + offset, t)
            self.schedule(mn.next_periodic, "beacon_tx", mn=mn.id, periodic=True, nominal=nominal)

        here = self.true_position(mn, t)
        ch = mn.link.current_channel
        listening = [a for a in self.sc.anchors if self.listen_channel(a.id) == ch]
        rng = stream(self.sc.seed, "propagation", mn.id, idx)
        rssi = {}
        for a in listening:
            v = sample_rss(self.sc.propagation, here, a.position, rng)
            if v is not None:
                rssi[a.id] = v
        frame = Frame(("beacon", mn.id, idx), ch, t, airtime, here,
                      tuple((aid, self.anchors[aid].position) for aid in rssi))
        self._register(frame)
        self._prune_log(t)
        # Beacons whose collection window ends after the run cannot be judged either way.
        if t + self.collect_delay <= self.sc.duration:
            self.sent += 1
        self._beacon_log[(mn.id, idx)] = {"time": t, "true": here, "reports": {}, "zone": mn.serving_zone,
                                          "queued": False}
        self.schedule(frame.end, "frame_rx", frame=frame, rssi=rssi, mn=mn.id, idx=idx)

    def _prune_log(self, now: float) -> None:
        stale = [k for k, r in self._beacon_log.items() if not r["queued"] and r["time"] + self.collect_delay < now]
        for k in stale:
            del self._beacon_log[k]

    def _report_in(self, key: tuple[int, int], anchor_id: int, value: int) -> None:
        """A report reached the server; the first one queues the evaluation."""
        record = self._beacon_log.get(key)
        if record is None or record["time"] + self.collect_delay < self.now:
            return
        record["reports"][anchor_id] = value
        if not record["queued"]:
            record["queued"] = True
            self.schedule(record["time"] + self.collect_delay, "server_eval", mn=key[0], idx=key[1])

    def _on_frame_rx(self, ev: Event) -> None:
        frame: Frame = ev.payload["frame"]
        delivered = self._delivery(frame)
        key = (ev.payload["mn"], ev.payload["idx"])
        if frame.frame_id[0] == "forward":
            if all(delivered.values()):
                self._report_in(key, ev.payload["anchor"], ev.payload["value"])
            return
        for aid, ok in delivered.items():
            if not ok:
                continue
            value = ev.payload["rssi"][aid]
            anchor = self.anchors[aid]
            if self.heads[anchor.zone_id] == aid:
                self._report_in(key, aid, value)
                continue
            self.schedule(ev.time + self._forward_delay(aid, key), "forward_tx",
                          anchor=aid, mn=key[0], idx=key[1], value=value)

    def _forward_delay(self, anchor_id: int, key: tuple[int, int]) -> float:
        window = self.sc.network.window
        if self.variant == "baseline":
            rng = stream(self.sc.seed, "baseline-forward", anchor_id, *key)
            return float(rng.uniform(0.0, window))
        zone_id = self.anchors[anchor_id].zone_id
        group = self.forwarders[zone_id]
        # Every AN in the zone seeds the same generator, so they agree on the schedule.
        sched = backoff_schedule(len(group), window, stream(self.sc.seed, "backoff", zone_id, *key))
        return sched.starts[group.index(anchor_id)]

    def _on_forward_tx(self, ev: Event) -> None:
        aid = ev.payload["anchor"]
        anchor = self.anchors[aid]
        head = self.anchors[self.heads[anchor.zone_id]]
        airtime = self.sc.network.forward_airtime
        self.accrue(f"an:{aid}", "transmit", ev.time, airtime)
        frame = Frame(("forward", aid, ev.payload["mn"], ev.payload["idx"]), self.listen_channel(aid),
                      ev.time, airtime, anchor.position, ((head.id, head.position),))
        self._register(frame)
        self.schedule(frame.end, "frame_rx", frame=frame, **ev.payload)

    def _on_server_eval(self, ev: Event) -> None:
        mn = self.mns[ev.payload["mn"]]
        record = self._beacon_log.pop((mn.id, ev.payload["idx"]))
        reports = record["reports"]
        if not reports:
            raise SimulationInvariantError(ev.describe(), "evaluation queued for a beacon with no report")
        self.delivered += 1
        rss = [None] * self.map.anchor_count
        for aid, v in reports.items():
            if aid in self.map_column:
                rss[self.map_column[aid]] = v
        if all(v is None for v in rss):
            return
        loc = self.sc.localization
        m = Measurement(mn.id, tuple(rss), record["time"])
        est = estimate(self.map, m, loc.algorithm, loc.k, loc.awknn).estimate
        truth = record["true"]
        zone = zone_at(self.sc.zones, truth)
        self.rows.append(TrackRow(record["time"], mn.id, truth, est, truth.distance_to(est),
                                  zone.id if zone else None))
        self._update_track(mn, record["time"], est, reports, ev, record["zone"])

    def _update_track(self, mn: _Mn, t: float, est: Position, reports: dict, ev: Event,
                      beacon_zone: Optional[int]) -> None:
        tp = self.sc.tracking
        track = mn.track
        if track.history and t <= track.history[-1][0]:
            return
        track = track.observe(t, est)
        track = replace(track, speed_estimate=estimate_speed(track.history, tp.speed_window))
        if tp.adaptive_sounding:
            track, cmd = maybe_adjust_sounding(track, tp.required_consecutive)
            if cmd is not None:
                mn.pending["transmit_period"] = cmd.transmit_period
        zone = self.sc.zone(mn.serving_zone)
        try:
            rx_period = receive_period_for_position(est, zone, tp.edge_band, tp.edge_receive_period,
                                                    tp.center_receive_period)
        except OutOfZoneError:
            rx_period = tp.edge_receive_period
        if rx_period != track.receive_period:
            track = replace(track, receive_period=rx_period)
            mn.pending["receive_period"] = rx_period
        mn.track = track

        if self.variant != "zoned" or not tp.channel_switching or mn.link.mode is not LinkMode.ASSOCIATED:
            return
        # Reports of a beacon sent before the last switch describe the old zone.
        if len(track.history) < 2 or beacon_zone != mn.serving_zone:
            return
        net = self.sc.network
        decision = evaluate_switch(
            reports, zone, self.sc.zones, self.sc.adjacency, [p for _, p in track.history], self.plan,
            net.rss_threshold, net.min_anchor_count, tp.speed_window,
        )
        if decision.target_channel is None:
            return
        if decision.target_channel == mn.link.current_channel:
            mn.serving_zone = decision.target_zone
            return
        self.set_link(mn, begin_switch(mn.link, decision.target_channel), ev)
        mn.pending["channel"] = (decision.target_zone, decision.target_channel)

    def _on_command_rx(self, ev: Event) -> None:
        mn = self.mns[ev.payload["mn"]]
        tp = self.sc.tracking
        self.accrue(f"mn:{mn.id}", "receive", ev.time, tp.listen_window)
        pending, mn.pending = mn.pending, {}
        if "transmit_period" in pending:
            mn.transmit_period = pending["transmit_period"]
        if "receive_period" in pending:
            mn.receive_period = pending["receive_period"]
        if "channel" in pending:
            zone_id, ch = pending["channel"]
            self.set_link(mn, apply_switch(mn.link, ch), ev)
            mn.serving_zone = zone_id
            extra = ev.time + tp.listen_window
            # One radio: skip the re-association beacon if it would overlap the next periodic one.
            if abs(mn.next_periodic - extra) >= self.sc.energy.tx_duration:
                self.schedule(extra, "beacon_tx", mn=mn.id, periodic=False)
        self.schedule(ev.time + mn.receive_period, "command_rx", mn=mn.id)

    # -- report --

    def _report(self) -> SimReport:
        duration = self.sc.duration
        ledgers = {}
        for node, led in self.ledgers.items():
            busy = led.seconds["transmit"] + led.seconds["receive"]
            rest = max(0.0, duration - busy)
            idle_mode = "sleep" if node.startswith("mn") else "receive"
            ledgers[node] = ledger_accrue(led, idle_mode, rest, self.sc.energy)
        efficiency = None
        if self.rows:
            mean_error = statistics.fmean(r.error for r in self.rows)
            mn_energy = statistics.fmean(led.total for n, led in ledgers.items() if n.startswith("mn"))
            if mean_error > 0 and mn_energy > 0:
                efficiency = EfficiencyReport.from_measurements(mean_error, mn_energy)
        counts = {k: self.counts.get(k, 0) for k in EVENT_KINDS}
        return SimReport(
            scenario_name=self.sc.name,
            seed=self.sc.seed,
            duration=duration,
            variant=self.variant,
            track=tuple(self.rows),
            plr={self.variant: PlrStats(self.sent, self.delivered)},
            ledgers=ledgers,
            efficiency=efficiency,
            event_counts=counts,
        )


def run_variant(scenario: Scenario, variant: str, radio_map: Optional[RadioMap] = None) -> SimReport:
    radio_map = radio_map if radio_map is not None else load_or_build_map(scenario)
    return Simulation(scenario, radio_map, variant).run()


def run_scenario(scenario: Scenario, radio_map: Optional[RadioMap] = None) -> SimReport:
    """Run every configured variant; the first one supplies track and energy."""
    radio_map = radio_map if radio_map is not None else load_or_build_map(scenario)
    variants = scenario.network.variants
    primary = run_variant(scenario, variants[0], radio_map)
    plr = dict(primary.plr)
    for v in variants[1:]:
        plr.update(run_variant(scenario, v, radio_map).plr)
    return replace(primary, plr=plr)
