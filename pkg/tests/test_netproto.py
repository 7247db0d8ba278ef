import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonetrack.errors import AllocationInfeasibleError, InvalidParameterError, ProtocolViolationError
from zonetrack.geometry import Position, Rect, Zone, zone_adjacency
from zonetrack.netproto import (
    BACKHAUL_CHANNEL,
    MN_CHANNELS,
    BackoffSchedule,
    ChannelPlan,
    Frame,
    LinkMode,
    MnLinkState,
    allocate_channels,
    apply_switch,
    backoff_schedule,
    begin_switch,
    drop_link,
    evaluate_switch,
    link_state_violations,
    plan_is_valid,
    resolve_collisions,
    scan_and_access,
    slots_disjoint,
)
from zonetrack.streams import stream


def zone(zid, x0, y0, x1, y1):
    return Zone(zid, Rect(x0, y0, x1, y1), (zid * 10,), zid * 10)


def chain(n, pitch):
    return [zone(i + 1, i * pitch, 0, (i + 1) * pitch, pitch / 2) for i in range(n)]


# -- allocation -----------------------------------------------------------------


def exhaustive_colorings(zones, adjacency, channels, reuse):
    """Every assignment satisfying the adjacency and reuse-distance rules."""
    ids = sorted(z.id for z in zones)
    by_id = {z.id: z for z in zones}
    valid = []
    for combo in itertools.product(channels, repeat=len(ids)):
        a = dict(zip(ids, combo))
        ok = all(a[x] != a[y] for x, y in (tuple(p) for p in adjacency))
        ok = ok and all(
            a[x] != a[y] or by_id[x].centroid.distance_to(by_id[y].centroid) >= reuse
            for x, y in itertools.combinations(ids, 2)
        )
        if ok:
            valid.append(a)
    return valid


class TestAllocation:
    def test_two_adjacent_zones_get_distinct_channels(self):
        zones = chain(2, 8)
        plan = allocate_channels(zones, zone_adjacency(zones), [12, 13])
        assert plan.assignments == {1: 12, 2: 13}

    def test_single_zone_takes_lowest(self):
        plan = allocate_channels([zone(1, 0, 0, 5, 5)], [], MN_CHANNELS)
        assert plan.assignments == {1: 11}

    def test_chain_alternates_and_matches_exhaustive_search(self):
        zones = chain(5, 20)
        adj = zone_adjacency(zones)
        plan = allocate_channels(zones, adj, [12, 13], reuse_min_distance=30)
        assert [plan.channel_of(i) for i in range(1, 6)] == [12, 13, 12, 13, 12]
        valid = exhaustive_colorings(zones, adj, [12, 13], 30)
        assert plan.assignments in valid
        assert len(valid) == 2

    def test_infeasible_names_zone(self):
        zones = chain(3, 20)
        with pytest.raises(AllocationInfeasibleError) as exc:
            allocate_channels(zones, zone_adjacency(zones), [12, 13], reuse_min_distance=50)
        assert exc.value.zone_id == 3
        assert not exhaustive_colorings(zones, zone_adjacency(zones), [12, 13], 50)

    def test_backhaul_channel_rejected(self):
        with pytest.raises(ProtocolViolationError):
            allocate_channels(chain(1, 5), [], [21, 22])

    @settings(max_examples=100)
    @given(st.integers(1, 3), st.integers(1, 2), st.sets(st.sampled_from(MN_CHANNELS), min_size=1, max_size=4),
           st.floats(0, 40))
    def test_greedy_result_is_valid(self, nx, ny, channels, reuse):
        zones = [zone(1 + i + nx * j, i * 10, j * 10, (i + 1) * 10, (j + 1) * 10) for i in range(nx) for j in range(ny)]
        adj = zone_adjacency(zones)
        try:
            plan = allocate_channels(zones, adj, channels, reuse)
        except AllocationInfeasibleError:
            return
        assert plan_is_valid(plan, zones, adj)
        assert BACKHAUL_CHANNEL not in plan.assignments.values()
        assert plan.assignments in exhaustive_colorings(zones, adj, sorted(channels), reuse)


# -- backoff ----------------------------------------------------------------------


class TestBackoff:
    def test_single_an(self):
        s = BackoffSchedule.from_offsets(0.1, [0.03])
        assert s.starts == pytest.approx((0.13,))

    def test_three_ans(self):
        s = BackoffSchedule.from_offsets(0.3, [0.01, 0.02, 0.03])
        assert s.starts == pytest.approx((0.11, 0.22, 0.33))
        assert slots_disjoint(s)

    def test_offset_outside_slot(self):
        with pytest.raises(InvalidParameterError):
            BackoffSchedule.from_offsets(0.3, [0.1, 0.0, 0.0])

    @pytest.mark.parametrize("n, w", [(0, 0.1), (2, 0.0)])
    def test_invalid(self, n, w):
        with pytest.raises(InvalidParameterError):
            backoff_schedule(n, w, stream(1, "b"))

    def test_thousand_draws_disjoint(self):
        for i in range(1000):
            s = backoff_schedule(3, 0.3, stream(5, "backoff", i))
            assert slots_disjoint(s)
            assert all(a < b for a, b in zip(s.starts, s.starts[1:]))

    def test_same_stream_same_schedule(self):
        assert backoff_schedule(4, 0.1, stream(9, "backoff", 1, 2)) == backoff_schedule(4, 0.1, stream(9, "backoff", 1, 2))

    @settings(max_examples=200)
    @given(st.integers(1, 8), st.floats(0.01, 1.0), st.integers(0, 2**32), st.floats(0.01, 0.99))
    def test_short_frames_never_collide(self, n, window, seed, frac):
        s = backoff_schedule(n, window, stream(seed, "backoff"))
        room = s.slot - max(s.offsets)
        duration = room * frac
        if not duration > 0:
            return
        head = ("head", Position(0, 0))
        frames = [Frame(i, 12, start, duration, Position(i, 0), (head,)) for i, start in enumerate(s.starts)]
        delivered = resolve_collisions(frames)
        assert all(v["head"] for v in delivered.values())


# -- link state machine -------------------------------------------------------------


class TestLinkState:
    def test_scan_joins_zone_channel(self):
        s = scan_and_access(MnLinkState(1), {13})
        assert (s.mode, s.current_channel) == (LinkMode.ASSOCIATED, 13)

    def test_scan_outside_all_zones(self):
        assert scan_and_access(MnLinkState(1), set()) == MnLinkState(1)

    def test_scan_order_ascending(self):
        assert scan_and_access(MnLinkState(1), {14, 12}).current_channel == 12

    def test_scan_skips_backhaul(self):
        assert scan_and_access(MnLinkState(1), {21}).mode is LinkMode.SCANNING

    def test_scan_only_when_scanning(self):
        s = scan_and_access(MnLinkState(1), {13})
        with pytest.raises(ProtocolViolationError):
            scan_and_access(s, {13})

    def test_apply_switch(self):
        s = scan_and_access(MnLinkState(1), {13})
        assert apply_switch(s, 12).current_channel == 12
        assert apply_switch(s, 13) is s
        with pytest.raises(ProtocolViolationError):
            apply_switch(s, 21)

    def test_switch_via_pending(self):
        s = begin_switch(scan_and_access(MnLinkState(1), {13}), 12)
        assert (s.mode, s.pending_channel) == (LinkMode.SWITCHING, 12)
        s = apply_switch(s, 12)
        assert (s.mode, s.current_channel, s.pending_channel) == (LinkMode.ASSOCIATED, 12, None)

    def test_apply_while_scanning(self):
        with pytest.raises(ProtocolViolationError):
            apply_switch(MnLinkState(1), 12)


COMMANDS = (
    [("scan", frozenset())]
    + [("scan", frozenset(c)) for c in ({12}, {13, 14}, {21})]
    + [("begin", ch) for ch in (12, 13, 21, 27)]
    + [("apply", ch) for ch in (12, 13, 21, 10)]
    + [("drop", None)]
)


def step(state, cmd):
    kind, arg = cmd
    if kind == "scan":
        return scan_and_access(state, arg)
    if kind == "begin":
        return begin_switch(state, arg)
    if kind == "apply":
        return apply_switch(state, arg)
    return drop_link(state)


def explore(depth):
    """Apply every command sequence up to ``depth``; rejected commands leave the state unchanged.

    Sequences reaching the same state behave identically afterwards, so the
    frontier is deduplicated per level while the sequence count is tracked.
    """
    frontier = {MnLinkState(1): 1}
    seen = set(frontier)
    sequences = 0
    for _ in range(depth):
        nxt: dict = {}
        for state, count in frontier.items():
            for cmd in COMMANDS:
                try:
                    new = step(state, cmd)
                except ProtocolViolationError:
                    new = state
                assert not link_state_violations(new), (state, cmd, new)
                if new.mode is LinkMode.ASSOCIATED:
                    assert new.current_channel is not None
                nxt[new] = nxt.get(new, 0) + count
                sequences += count
        frontier = nxt
        seen |= set(nxt)
    return seen, sequences


def test_link_state_model_check():
    seen, sequences = explore(6)
    assert sequences == sum(len(COMMANDS) ** d for d in range(1, 7))
    assert {s.mode for s in seen} == set(LinkMode)
    assert all(s.current_channel in (None, 12, 13) for s in seen)


# -- switch decision -----------------------------------------------------------------


def cross_zones():
    z1 = Zone(1, Rect(0, 0, 10, 10), (1, 2, 3, 4), 1)
    z2 = Zone(2, Rect(10, 0, 20, 10), (5, 6, 7, 8), 5)
    z3 = Zone(3, Rect(0, 10, 10, 20), (9, 10, 11, 12), 9)
    return [z1, z2, z3]


PLAN = ChannelPlan({1: 13, 2: 12, 3: 14}, 0.0)


def oracle_choice(zones, serving, here, direction):
    scores = []
    for z in zones:
        if z.id == serving.id or not z.polygon.shares_border(serving.polygon):
            continue
        tx, ty = z.centroid.x - here.x, z.centroid.y - here.y
        cos = (direction[0] * tx + direction[1] * ty) / (math.hypot(*direction) * math.hypot(tx, ty))
        scores.append((-round(cos, 12), z.id))
    return min(scores)[1]


class TestEvaluateSwitch:
    def test_healthy_link(self):
        zones = cross_zones()
        hist = [Position(5, 5), Position(6, 5)]
        d = evaluate_switch({1: -50, 2: -50, 3: -50, 4: -50}, zones[0], zones, zone_adjacency(zones), hist, PLAN)
        assert d.target_channel is None and d.strong_anchors == 4

    def test_weak_link_heading_east(self):
        zones = cross_zones()
        hist = [Position(7, 5), Position(8, 5), Position(9, 5)]
        d = evaluate_switch({1: -70, 2: -60, 3: -70, 4: -60}, zones[0], zones, zone_adjacency(zones), hist, PLAN)
        assert (d.target_zone, d.target_channel) == (2, 12)

    def test_unheard_anchors_count_as_weak(self):
        zones = cross_zones()
        hist = [Position(5, 7), Position(5, 9)]
        d = evaluate_switch({1: -50, 2: -50}, zones[0], zones, zone_adjacency(zones), hist, PLAN)
        assert d.target_zone == 3

    def test_tie_goes_to_lower_zone_id(self):
        zones = cross_zones()
        hist = [Position(4, 4), Position(5, 5)]
        d = evaluate_switch({}, zones[0], zones, zone_adjacency(zones), hist, PLAN)
        assert d.target_zone == oracle_choice(zones, zones[0], hist[-1], (1, 1)) == 2

    def test_isolated(self):
        z = Zone(1, Rect(0, 0, 10, 10), (1,), 1)
        d = evaluate_switch({}, z, [z], [], [Position(1, 1), Position(2, 2)], ChannelPlan({1: 13}, 0))
        assert d.isolated and d.target_channel is None

    def test_needs_history(self):
        zones = cross_zones()
        with pytest.raises(InvalidParameterError):
            evaluate_switch({}, zones[0], zones, zone_adjacency(zones), [Position(1, 1)], PLAN)

    @given(st.floats(0.5, 9.5), st.floats(0.5, 9.5), st.floats(-3, 3), st.floats(-3, 3))
    def test_matches_enumeration_oracle(self, x, y, dx, dy):
        if math.hypot(dx, dy) < 1e-3:
            return
        zones = cross_zones()
        hist = [Position(x - dx, y - dy), Position(x, y)]
        d = evaluate_switch({}, zones[0], zones, zone_adjacency(zones), hist, PLAN)
        assert d.target_zone == oracle_choice(zones, zones[0], hist[-1], (dx, dy))


# -- collisions --------------------------------------------------------------------------


def fr(fid, ch, start, dur=0.001, tx=(0, 0), rx=(("h", (1, 0)),)):
    return Frame(fid, ch, start, dur, Position(*tx), tuple((r, Position(*p)) for r, p in rx))


class TestCollisions:
    def test_single_frame(self):
        assert resolve_collisions([fr("a", 12, 0.0)]) == {"a": {"h": True}}

    def test_overlap_same_channel(self):
        out = resolve_collisions([fr("a", 12, 0.0), fr("b", 12, 0.0005)])
        assert out == {"a": {"h": False}, "b": {"h": False}}

    def test_orthogonal_channels(self):
        out = resolve_collisions([fr("a", 12, 0.0), fr("b", 13, 0.0)])
        assert out == {"a": {"h": True}, "b": {"h": True}}

    def test_back_to_back_frames(self):
        out = resolve_collisions([fr("a", 12, 0.0), fr("b", 12, 0.001)])
        assert out == {"a": {"h": True}, "b": {"h": True}}

    def test_interferer_out_of_range(self):
        a = fr("a", 12, 0.0, rx=(("near", (1, 0)), ("far", (100, 0))))
        b = fr("b", 12, 0.0, tx=(95, 0), rx=())
        out = resolve_collisions([a, b], interference_range=10)
        assert out["a"] == {"near": True, "far": False}

    def test_non_positive_duration(self):
        with pytest.raises(InvalidParameterError):
            fr("a", 12, 0.0, dur=0.0)

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from([12, 13]), st.floats(0, 0.01), st.floats(0.0005, 0.003),
                              st.floats(0, 30)), min_size=1, max_size=8))
    def test_matches_pairwise_oracle(self, specs):
        rx = Position(0, 0)
        frames = [Frame(i, ch, s, d, Position(x, 0), (("r", rx),)) for i, (ch, s, d, x) in enumerate(specs)]
        out = resolve_collisions(frames, interference_range=15)
        for f in frames:
            hit = any(g.frame_id != f.frame_id and g.channel == f.channel and g.start < f.end and f.start < g.end
                      and g.tx_position.distance_to(rx) <= 15 for g in frames)
            assert out[f.frame_id]["r"] is (not hit)
