"""Zone channel allocation, coordinated AN backoff, MN access/switch state
machine and a hard-collision medium model."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import AllocationInfeasibleError, InvalidParameterError, ProtocolViolationError
from .geometry import Position, Rssi, Zone

MIN_CHANNEL = 11
MAX_CHANNEL = 26
BACKHAUL_CHANNEL = 21
MN_CHANNELS = tuple(c for c in range(MIN_CHANNEL, MAX_CHANNEL + 1) if c != BACKHAUL_CHANNEL)


def check_mn_channel(channel: int) -> int:
    if not MIN_CHANNEL <= channel <= MAX_CHANNEL:
        raise ProtocolViolationError(f"channel {channel} outside {MIN_CHANNEL}..{MAX_CHANNEL}")
    if channel == BACKHAUL_CHANNEL:
        raise ProtocolViolationError(f"channel {BACKHAUL_CHANNEL} is reserved for the backhaul")
    return channel


# -- channel allocation -------------------------------------------------------


@dataclass(frozen=True)
class ChannelPlan:
    assignments: Mapping[int, int]
    reuse_min_distance: float

    def channel_of(self, zone_id: int) -> int:
        return self.assignments[zone_id]

    def zones_on(self, channel: int) -> list[int]:
        return sorted(z for z, c in self.assignments.items() if c == channel)


def allocate_channels(
    zones: Sequence[Zone],
    adjacency: Iterable[frozenset[int]],
    available_channels: Iterable[int] = MN_CHANNELS,
    reuse_min_distance: float = 0.0,
) -> ChannelPlan:
    """Greedy lowest-channel assignment in ascending zone id order."""
    channels = sorted(set(available_channels))
    for c in channels:
        check_mn_channel(c)
    adjacent = {frozenset(p) for p in adjacency}
    by_id = {z.id: z for z in zones}
    assigned: dict[int, int] = {}
    for zid in sorted(by_id):
        zone = by_id[zid]
        blocked = set()
        for other, ch in assigned.items():
            near = zone.centroid.distance_to(by_id[other].centroid) < reuse_min_distance
            if frozenset((zid, other)) in adjacent or near:
                blocked.add(ch)
        free = [c for c in channels if c not in blocked]
        if not free:
            raise AllocationInfeasibleError(zid)
        assigned[zid] = free[0]
    return ChannelPlan(assigned, reuse_min_distance)


def plan_is_valid(plan: ChannelPlan, zones: Sequence[Zone], adjacency: Iterable[frozenset[int]]) -> bool:
    by_id = {z.id: z for z in zones}
    if any(c == BACKHAUL_CHANNEL for c in plan.assignments.values()):
        return False
    for pair in adjacency:
        a, b = tuple(pair)
        if plan.assignments[a] == plan.assignments[b]:
            return False
    ids = sorted(plan.assignments)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if plan.assignments[a] == plan.assignments[b]:
                if by_id[a].centroid.distance_to(by_id[b].centroid) < plan.reuse_min_distance:
                    return False
    return True


# -- coordinated backoff ------------------------------------------------------


@dataclass(frozen=True)
class BackoffSchedule:
    """Per-AN forwarding offsets inside one window.

    AN ``i`` (1-based) waits ``offsets[i-1] + i * window / slot_count``.
    """

    window: float
    slot_count: int
    offsets: tuple[float, ...]
    starts: tuple[float, ...]

    @property
    def slot(self) -> float:
        return self.window / self.slot_count

    def slot_interval(self, i: int) -> tuple[float, float]:
        return (i * self.slot, (i + 1) * self.slot)

    @classmethod
    def from_offsets(cls, window: float, offsets: Sequence[float]) -> "BackoffSchedule":
        n = len(offsets)
        if n < 1 or not window > 0:
            raise InvalidParameterError("need at least one AN and a positive window")
        slot = window / n
        for t in offsets:
            if not 0 <= t < slot:
                raise InvalidParameterError(f"offset {t} outside [0, {slot})")
        starts = tuple(t + i * slot for i, t in enumerate(offsets, start=1))
        return cls(window, n, tuple(offsets), starts)


def backoff_schedule(n_a: int, window: float, rng: np.random.Generator) -> BackoffSchedule:
    if n_a < 1:
        raise InvalidParameterError(f"N_a must be >= 1, got {n_a}")
    if not window > 0:
        raise InvalidParameterError(f"T_w must be positive, got {window}")
    slot = window / n_a
    offsets = rng.uniform(0.0, slot, size=n_a)
    # uniform() can return the upper bound after rounding; keep the interval half-open
    offsets = np.where(offsets >= slot, np.nextafter(slot, 0.0), offsets)
    return BackoffSchedule.from_offsets(window, [float(t) for t in offsets])


def slots_disjoint(schedule: BackoffSchedule) -> bool:
    """Each start sits in its own slot and slots do not overlap."""
    prev_end = -math.inf
    for i, s in enumerate(schedule.starts, start=1):
        lo, hi = schedule.slot_interval(i)
        if not lo <= s < hi or lo < prev_end:
            return False
        prev_end = hi
    return True


# -- MN link state machine ----------------------------------------------------


class LinkMode(enum.Enum):
    SCANNING = "scanning"
    ASSOCIATED = "associated"
    SWITCHING = "switching"


@dataclass(frozen=True)
class MnLinkState:
    mn_id: int
    mode: LinkMode = LinkMode.SCANNING
    current_channel: Optional[int] = None
    pending_channel: Optional[int] = None


def link_state_violations(state: MnLinkState) -> list[str]:
    problems = []
    if state.mode in (LinkMode.ASSOCIATED, LinkMode.SWITCHING) and state.current_channel is None:
        problems.append(f"{state.mode.value} without a current channel")
    if state.mode is LinkMode.SWITCHING and state.pending_channel is None:
        problems.append("switching without a pending channel")
    for ch in (state.current_channel, state.pending_channel):
        if ch is not None and (ch == BACKHAUL_CHANNEL or not MIN_CHANNEL <= ch <= MAX_CHANNEL):
            problems.append(f"MN on illegal channel {ch}")
    return problems


def scan_and_access(state: MnLinkState, active_channels: Iterable[int]) -> MnLinkState:
    """Scan channels 11..26 (skipping the backhaul) and join the first active one."""
    if state.mode is not LinkMode.SCANNING:
        raise ProtocolViolationError(f"MN {state.mn_id} is {state.mode.value}, not scanning")
    active = set(active_channels)
    for ch in MN_CHANNELS:
        if ch in active:
            return replace(state, mode=LinkMode.ASSOCIATED, current_channel=ch, pending_channel=None)
    return state


def begin_switch(state: MnLinkState, channel: int) -> MnLinkState:
    """Server has issued a switch command that is now in flight to the MN."""
    check_mn_channel(channel)
    if state.mode is not LinkMode.ASSOCIATED:
        raise ProtocolViolationError(f"MN {state.mn_id} cannot start a switch while {state.mode.value}")
    return replace(state, mode=LinkMode.SWITCHING, pending_channel=channel)


def apply_switch(state: MnLinkState, channel: int) -> MnLinkState:
    check_mn_channel(channel)
    if state.mode is LinkMode.SCANNING:
        raise ProtocolViolationError(f"MN {state.mn_id} received a switch command while unassociated")
    if state.mode is LinkMode.ASSOCIATED and channel == state.current_channel:
        return state
    return replace(state, mode=LinkMode.ASSOCIATED, current_channel=channel, pending_channel=None)


def drop_link(state: MnLinkState) -> MnLinkState:
    return replace(state, mode=LinkMode.SCANNING, current_channel=None, pending_channel=None)


# -- switch decision ----------------------------------------------------------


@dataclass(frozen=True)
class SwitchDecision:
    target_channel: Optional[int] = None
    target_zone: Optional[int] = None
    isolated: bool = False
    strong_anchors: int = 0


def heading(history: Sequence[Position], window: int = 5) -> tuple[float, float]:
    recent = list(history)[-window:]
    return (recent[-1].x - recent[0].x, recent[-1].y - recent[0].y)


def alignment(here: Position, direction: tuple[float, float], target: Position) -> float:
    """Cosine between ``direction`` and the bearing from ``here`` to ``target``."""
    tx, ty = target.x - here.x, target.y - here.y
    norm = math.hypot(*direction) * math.hypot(tx, ty)
    if norm == 0:
        return 0.0
    return (direction[0] * tx + direction[1] * ty) / norm


def evaluate_switch(
    rssi_by_anchor: Mapping[int, Rssi],
    serving_zone: Zone,
    zones: Sequence[Zone],
    adjacency: Iterable[frozenset[int]],
    position_history: Sequence[Position],
    plan: ChannelPlan,
    rss_threshold: float = -65.0,
    min_anchor_count: int = 3,
    heading_window: int = 5,
) -> SwitchDecision:
    """Recommend a neighbouring zone's channel when the serving zone's link is weak.

    The candidate is the neighbour whose centroid best matches the recent
    heading.
    """
    if len(position_history) < 2:
        raise InvalidParameterError("switch evaluation needs at least two position estimates")
    strong = sum(
        1 for a in serving_zone.anchor_ids
        if rssi_by_anchor.get(a) is not None and rssi_by_anchor[a] >= rss_threshold
    )
    if strong >= min_anchor_count:
        return SwitchDecision(strong_anchors=strong)
    adjacent = {frozenset(p) for p in adjacency}
    neighbours = sorted(
        (z for z in zones if z.id != serving_zone.id and frozenset((z.id, serving_zone.id)) in adjacent),
        key=lambda z: z.id,
    )
    if not neighbours:
        return SwitchDecision(isolated=True, strong_anchors=strong)
    here = position_history[-1]
    direction = heading(position_history, heading_window)
    scores = [(alignment(here, direction, z.centroid), z) for z in neighbours]
    best = max(s for s, _ in scores)
    # near-equal alignments count as a tie, resolved by the lower zone id
    chosen = next(z for s, z in scores if s >= best - 1e-9)
    return SwitchDecision(plan.channel_of(chosen.id), chosen.id, strong_anchors=strong)


# -- medium model -------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    frame_id: Hashable
    channel: int
    start: float
    duration: float
    tx_position: Position
    receivers: tuple[tuple[Hashable, Position], ...]

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidParameterError(f"frame {self.frame_id}: duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration


def overlaps(a: Frame, b: Frame) -> bool:
    return a.channel == b.channel and a.start < b.end and b.start < a.end


def resolve_collisions(frames: Sequence[Frame], interference_range: float = math.inf) -> dict:
    """Hard-collision delivery map ``{frame_id: {receiver: delivered}}``.

    A frame is lost at a receiver when another same-channel frame overlaps it
    in time and that frame's transmitter is within ``interference_range`` of
    the receiver.
    """
    ordered = sorted(frames, key=lambda f: f.start)
    out: dict = {}
    for i, f in enumerate(ordered):
        rivals = []
        for j, g in enumerate(ordered):
            if j == i:
                continue
            if g.start >= f.end:
                break
            if overlaps(f, g):
                rivals.append(g)
        out[f.frame_id] = {
            rx: not any(g.tx_position.distance_to(pos) <= interference_range for g in rivals)
            for rx, pos in f.receivers
        }
    return out
