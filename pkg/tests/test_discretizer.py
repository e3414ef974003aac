import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoprop.dataset import GeoPoint
from geoprop.discretizer import (Discretizer, DiscretizerError, assign_cell, build_kdtree,
                                 cell_to_point)
from oracles import reference_kd_leaves, scan_leaf


def _pts(*pairs):
    return [GeoPoint(a, b) for a, b in pairs]


def test_no_split_needed():
    rng = np.random.default_rng(0)
    pts = [GeoPoint(float(a), float(b)) for a, b in rng.uniform(-50, 50, size=(100, 2))]
    d = build_kdtree(pts, 100)
    assert d.n_cells == 1 and sorted(d.cells[0].members) == list(range(100))


def test_four_points_split_on_wider_dim():
    d = build_kdtree(_pts((0, 0), (0, 1), (0, 2), (0, 3)), 2)
    assert d.n_cells == 2
    assert d.nodes[0][:3] == ("split", 1, 1.0)
    assert [sorted(c.members) for c in d.cells] == [[0, 1], [2, 3]]


def test_leaf_count_matches_reference():
    rng = np.random.default_rng(50)
    raw = [tuple(map(float, p)) for p in rng.uniform(0, 10, size=(50, 2))]
    leaves = reference_kd_leaves(raw, 8)
    d = build_kdtree(_pts(*raw), 8)
    assert d.n_cells == len(leaves)
    assert all(len(c.members) <= 8 for c in d.cells)
    assert [sorted(c.members) for c in d.cells] == [sorted(m) for m, _ in leaves]


def test_assign_cell_training_points_and_outside():
    rng = np.random.default_rng(1)
    raw = rng.uniform(-10, 10, size=(40, 2))
    d = build_kdtree(raw, 5)
    cells = d.point_cells()
    for i, (a, b) in enumerate(raw):
        assert assign_cell(d, GeoPoint(float(a), float(b))) == cells[i]
    for p in (GeoPoint(89, 179), GeoPoint(-89, -179), GeoPoint(0, 0)):
        assert 0 <= assign_cell(d, p) < d.n_cells


def test_assign_cell_agrees_with_reference_scan():
    rng = np.random.default_rng(2)
    raw = [tuple(map(float, p)) for p in rng.uniform(-30, 30, size=(120, 2))]
    leaves = reference_kd_leaves(raw, 7)
    d = build_kdtree(_pts(*raw), 7)
    for a, b in rng.uniform(-60, 60, size=(1000, 2)):
        assert assign_cell(d, GeoPoint(float(a), float(b))) == scan_leaf(leaves, (a, b))


@pytest.mark.parametrize("members, expected", [
    ([(0, 0)], (0, 0)),
    ([(0, 0), (0, 2), (4, 2)], (0, 2)),
    ([(0, 0), (2, 2)], (0, 0)),
])
def test_cell_median(members, expected):
    d = build_kdtree(_pts(*members), 10)
    assert cell_to_point(d, 0) == GeoPoint(*expected)


def test_bad_inputs():
    with pytest.raises(DiscretizerError):
        build_kdtree([], 5)
    with pytest.raises(DiscretizerError):
        build_kdtree(_pts((0, 0)), 0)
    d = build_kdtree(_pts((0, 0)), 1)
    with pytest.raises(DiscretizerError):
        cell_to_point(d, 1)


def test_coincident_points_stay_together():
    d = build_kdtree(_pts(*[(1, 1)] * 9 + [(2, 2)]), 3)
    sizes = sorted(len(c.members) for c in d.cells)
    assert sizes == [1, 9]


def test_median_tied_with_max_still_splits():
    d = build_kdtree(_pts((0, 0), (0, 1), (0, 1), (0, 1)), 2)
    assert [sorted(c.members) for c in d.cells] == [[0], [1, 2, 3]]


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    d = build_kdtree(rng.uniform(-5, 5, size=(30, 2)), 4)
    d.save(tmp_path / "d.json")
    e = Discretizer.load(tmp_path / "d.json")
    assert e.nodes == d.nodes and e.cells == d.cells
    assert json.dumps(e.to_json()) == json.dumps(d.to_json())


coord = st.floats(-10, 10, allow_nan=False).map(lambda x: round(x, 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=40), st.integers(1, 8))
def test_invariants(raw, bucket):
    d = build_kdtree(_pts(*raw), bucket)
    seen = sorted(i for c in d.cells for i in c.members)
    assert seen == list(range(len(raw)))
    for cid, cell in enumerate(d.cells):
        pts = [raw[i] for i in cell.members]
        assert len(pts) <= bucket or len(set(pts)) == 1
        lats, lons = [p[0] for p in pts], [p[1] for p in pts]
        assert min(lats) <= cell.median_point.lat <= max(lats)
        assert min(lons) <= cell.median_point.lon <= max(lons)
        for p in pts:
            assert assign_cell(d, GeoPoint(*p)) == cid
    again = build_kdtree(_pts(*raw), bucket)
    assert again.cells == d.cells
