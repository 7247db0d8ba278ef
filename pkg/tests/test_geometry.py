import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonetrack.errors import InconsistentMapError, InsufficientDataError, InvalidGeometryError
from zonetrack.geometry import (
    Position,
    Rect,
    ReferenceGrid,
    Zone,
    assemble_radio_map,
    build_fingerprint,
    check_disjoint_zones,
    make_reference_grid,
    zone_adjacency,
    zone_at,
)


def scans(values):
    return [[v] for v in values]


def trimmed_mean_oracle(values, trim):
    """Sort by distance from the median, drop the worst ``trim``, average, round half down."""
    med = float(np.median(values))
    kept = sorted(values, key=lambda v: (abs(v - med), v))[: len(values) - trim]
    mean = sum(kept) / len(kept)
    return math.floor(mean) if mean - math.floor(mean) <= 0.5 else math.ceil(mean)


class TestReferenceGrid:
    def test_line_bounds(self):
        grid = make_reference_grid(Rect(0, 0, 2.4, 0), 1.2)
        assert len(grid) == 3
        assert [p.x for _, p in grid.points] == [0.0, 1.2, 2.4]

    def test_spacing_larger_than_bounds(self):
        grid = make_reference_grid(Rect(0, 0, 1, 1), 5)
        assert len(grid) == 1
        assert grid.points[0] == (1, Position(0.0, 0.0))

    def test_outdoor_corridor_has_twelve_points(self):
        grid = make_reference_grid(Rect(0, 0, 26.4, 0), 2.4)
        assert len(grid) == 12
        assert all(p.y == 0 for _, p in grid.points)

    def test_indoor_replica_has_56_points(self):
        assert len(make_reference_grid(Rect(0, 0, 15.6, 3.6), 1.2)) == 56

    def test_row_major_from_min_corner(self):
        grid = make_reference_grid(Rect(1, 2, 3, 3), 1)
        assert [(i, tuple(p)) for i, p in grid.points] == [
            (1, (1, 2)), (2, (2, 2)), (3, (3, 2)), (4, (1, 3)), (5, (2, 3)), (6, (3, 3)),
        ]

    @pytest.mark.parametrize("spacing", [0, -1, math.inf, math.nan])
    def test_bad_spacing(self, spacing):
        with pytest.raises(InvalidGeometryError):
            make_reference_grid(Rect(0, 0, 1, 1), spacing)

    def test_inverted_bounds(self):
        with pytest.raises(InvalidGeometryError):
            Rect(1, 0, 0, 1)

    def test_indices_must_be_contiguous(self):
        with pytest.raises(InvalidGeometryError):
            ReferenceGrid(((1, Position(0, 0)), (3, Position(1, 0))), 1.0)

    @given(
        w=st.floats(0, 20, allow_nan=False),
        h=st.floats(0, 20, allow_nan=False),
        spacing=st.floats(0.3, 5, allow_nan=False),
    )
    def test_count_is_product_of_axis_counts(self, w, h, spacing):
        grid = make_reference_grid(Rect(0, 0, w, h), spacing)
        nx = math.floor(w / spacing + 1e-9) + 1
        ny = math.floor(h / spacing + 1e-9) + 1
        assert len(grid) == nx * ny
        assert [i for i, _ in grid.points] == list(range(1, nx * ny + 1))
        bounds = Rect(0, 0, w + 1e-6, h + 1e-6)
        assert all(bounds.contains(p) for _, p in grid.points)


class TestBuildFingerprint:
    def test_identical_samples(self):
        assert build_fingerprint(scans([-40] * 30), 3) == (-40,)

    def test_single_outlier_removed(self):
        assert build_fingerprint(scans([-40] * 29 + [-70]), 1) == (-40,)

    def test_matches_oracle_on_pseudo_random_samples(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            values = [int(v) for v in rng.integers(-70, -10, size=30)]
            assert build_fingerprint(scans(values), 3) == (trimmed_mean_oracle(values, 3),)

    def test_frozen_value(self):
        values = [-52, -48, -50, -51, -49, -63, -50, -47, -50, -38]
        # median -50; drop -38, -63, -47 -> mean(-52,-48,-50,-51,-49,-50,-50) = -50
        assert build_fingerprint(scans(values), 3) == (-50,)

    def test_rounding_ties_toward_minus_infinity(self):
        assert build_fingerprint(scans([-40, -41]), 0) == (-41,)

    def test_unheard_anchor(self):
        rows = [[-40, None], [-42, None], [-44, None], [-40, None]]
        assert build_fingerprint(rows, 1) == (-41, None)

    def test_sparse_anchor_keeps_one_reading(self):
        rows = [[-40, None]] * 5 + [[-40, -60]]
        assert build_fingerprint(rows, 3) == (-40, -60)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            build_fingerprint([], 0)

    def test_too_few_scans(self):
        with pytest.raises(InsufficientDataError):
            build_fingerprint(scans([-40, -41, -42]), 3)

    @given(st.lists(st.integers(-70, -10), min_size=4, max_size=40), st.integers(0, 3), st.randoms())
    def test_within_range_and_order_free(self, values, trim, rnd):
        (out,) = build_fingerprint(scans(values), trim)
        assert min(values) <= out <= max(values)
        shuffled = list(values)
        rnd.shuffle(shuffled)
        assert build_fingerprint(scans(shuffled), trim) == (out,)

    @given(st.lists(st.integers(-70, -10), min_size=4, max_size=40), st.integers(0, 3))
    def test_within_retained_range(self, values, trim):
        med = float(np.median(values))
        kept = sorted(values, key=lambda v: (abs(v - med), v))[: len(values) - trim]
        (out,) = build_fingerprint(scans(values), trim)
        assert min(kept) <= out <= max(kept)


class TestRadioMap:
    def test_single_point(self):
        grid = ReferenceGrid(((1, Position(0, 0)),), 1.0)
        m = assemble_radio_map(grid, [(1, [-40])], [(1, Position(1, 1))])
        assert (m.size, m.anchor_count) == (1, 1)

    def test_duplicate_grid_index(self):
        grid = ReferenceGrid(((1, Position(0, 0)), (2, Position(1, 0))), 1.0)
        with pytest.raises(InconsistentMapError):
            assemble_radio_map(grid, [(1, [-40]), (1, [-41])], [(1, Position(0, 0))])

    def test_missing_point(self):
        grid = ReferenceGrid(((1, Position(0, 0)), (2, Position(1, 0))), 1.0)
        with pytest.raises(InconsistentMapError):
            assemble_radio_map(grid, [(1, [-40])], [(1, Position(0, 0))])

    def test_dimension_mismatch(self):
        grid = ReferenceGrid(((1, Position(0, 0)),), 1.0)
        with pytest.raises(InconsistentMapError):
            assemble_radio_map(grid, [(1, [-40, -50])], [(1, Position(0, 0))])

    def test_duplicate_anchor(self):
        grid = ReferenceGrid(((1, Position(0, 0)),), 1.0)
        with pytest.raises(InconsistentMapError):
            assemble_radio_map(grid, [(1, [-40, -50])], [(1, Position(0, 0)), (1, Position(1, 0))])

    def test_rssi_out_of_range(self):
        grid = ReferenceGrid(((1, Position(0, 0)),), 1.0)
        with pytest.raises(InconsistentMapError):
            assemble_radio_map(grid, [(1, [-5])], [(1, Position(0, 0))])

    def test_indoor_replica(self, scenario_a, map_a):
        assert map_a.size == 56
        assert map_a.anchor_count == 8
        assert map_a.grid.spacing == 1.2


class TestZones:
    def test_head_must_be_member(self):
        with pytest.raises(InvalidGeometryError):
            Zone(1, Rect(0, 0, 1, 1), (1, 2), 3)

    def test_zero_area(self):
        with pytest.raises(InvalidGeometryError):
            Zone(1, Rect(0, 0, 0, 1), (1,), 1)

    def test_overlap_rejected(self):
        a = Zone(1, Rect(0, 0, 2, 2), (1,), 1)
        b = Zone(2, Rect(1, 1, 3, 3), (2,), 2)
        with pytest.raises(InvalidGeometryError):
            check_disjoint_zones([a, b])

    def test_adjacency_and_lookup(self):
        a = Zone(1, Rect(0, 0, 2, 2), (1,), 1)
        b = Zone(2, Rect(2, 0, 4, 2), (2,), 2)
        c = Zone(3, Rect(4, 2, 6, 4), (3,), 3)  # corner contact only
        check_disjoint_zones([a, b, c])
        assert zone_adjacency([a, b, c]) == frozenset({frozenset({1, 2})})
        assert zone_at([b, a], Position(2, 1)).id == 1
        assert zone_at([a, b], Position(3, 1)).id == 2
        assert zone_at([a, b], Position(9, 9)) is None

    def test_position_must_be_finite(self):
        with pytest.raises(InvalidGeometryError):
            Position(math.nan, 0)
