import numpy as np
import pytest

from geoprop.dataset import Dataset, GeoPoint, UserRecord
from geoprop.discretizer import build_kdtree
from geoprop.graph import _from_lists
from geoprop.madsolver import (MadError, MadParams, SeedSet, attach_dongles, mad_objective,
                               predict, run_mad)
from helpers import random_mad_instance
from oracles import dense_mad_solution, mad_objective_dense

TIGHT = MadParams(tolerance=1e-12, max_sweeps=100_000)


def _graph(nodes, edges):
    return _from_lists(nodes, [e[0] for e in edges], [e[1] for e in edges],
                       [e[2] if len(e) > 2 else 1.0 for e in edges], "weighted")


def test_two_node_path_fixed_point():
    g = _graph(["a", "b"], [(0, 1)])
    seeds = SeedSet.from_cells(["a"], [0], 2)
    res = run_mad(g, seeds, TIGHT)
    assert res.converged
    np.testing.assert_allclose(res.distribution("a"), [1, 0], atol=1e-10)
    np.testing.assert_allclose(res.distribution("b"), [1, 0], atol=1e-10)
    # the first sweep copies a's label to its only neighbour exactly
    one = run_mad(g, seeds, MadParams(max_sweeps=1))
    np.testing.assert_array_equal(one.distribution("b"), one.distribution("a"))


def test_no_smoothing_returns_seeds():
    g = _graph(["a", "b", "c"], [(0, 1), (1, 2)])
    seeds = SeedSet(3)
    seeds.add("a", [0, 0.5, 0.5], 1.0)
    res = run_mad(g, seeds, MadParams(mu2=0.0))
    np.testing.assert_array_equal(res.distribution("a"), [0, 0.5, 0.5])
    assert res.unresolved == {"b", "c"}


@pytest.mark.parametrize("seed", range(10))
def test_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    g, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=10, max_labels=3)
    res = run_mad(g, seeds, TIGHT)
    expected = dense_mad_solution(g.n_nodes, edges, Y, s, 1.0, 0.1)
    assert np.abs(res.distributions - expected).max() <= 1e-6


def test_objective_matches_dense_formula():
    rng = np.random.default_rng(3)
    g, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=15)
    Yhat = rng.uniform(0, 1, size=Y.shape)
    assert mad_objective(g.adjacency(), Y, s, Yhat, 1.0, 0.1) == pytest.approx(
        mad_objective_dense(g.n_nodes, edges, Y, s, Yhat, 1.0, 0.1), rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_box_bound_and_monotone(seed):
    rng = np.random.default_rng(100 + seed)
    g, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=30)
    for sweeps in (1, 2, 5, 50):
        res = run_mad(g, seeds, MadParams(max_sweeps=sweeps, tolerance=1e-14))
        top = max((row.max() for row in seeds.labels.values()), default=0.0)
        assert res.distributions.min() >= 0.0
        assert res.distributions.max() <= top + 1e-12
    trace = run_mad(g, seeds, TIGHT).objective_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_seed_dominance():
    rng = np.random.default_rng(4)
    g, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=25)
    res = run_mad(g, seeds, MadParams(mu1=1e6, mu2=1.0, tolerance=1e-12, max_sweeps=10_000))
    seeded = s > 0
    assert np.abs(res.distributions[seeded] - Y[seeded]).max() <= 1e-4


def test_component_locality():
    rng = np.random.default_rng(5)
    g1, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=12)
    base = run_mad(g1, seeds, TIGHT).as_dict()
    # append a disjoint component with its own seed
    n = g1.n_nodes
    nodes = list(g1.nodes) + ["z0", "z1", "z2"]
    extra = [(n, n + 1, 2.0), (n + 1, n + 2, 0.5)]
    g2 = _graph(nodes, list(zip(g1.src, g1.dst, g1.weight)) + extra)
    seeds2 = seeds.copy()
    seeds2.add("z0", np.eye(seeds.n_labels)[0], 1.0)
    after = run_mad(g2, seeds2, TIGHT).as_dict()
    for u in g1.nodes:
        np.testing.assert_array_equal(after[u], base[u])


def test_scale_invariance_exact():
    rng = np.random.default_rng(6)
    g, seeds, edges, Y, s = random_mad_instance(rng, max_nodes=20)
    scaled = _from_lists(g.nodes, g.src, g.dst, g.weight * 4.0, g.mode)
    a = run_mad(g, seeds, MadParams(mu2=0.1, max_sweeps=30, tolerance=1e-14))
    b = run_mad(scaled, seeds, MadParams(mu2=0.1 / 4.0, max_sweeps=30, tolerance=1e-14))
    np.testing.assert_array_equal(a.distributions, b.distributions)


def test_unknown_seed():
    g = _graph(["a"], [])
    seeds = SeedSet.from_cells(["zz"], [0], 1)
    with pytest.raises(MadError):
        run_mad(g, seeds)


def test_attach_dongles():
    g = _graph(["tr", "t"], [])
    seeds = SeedSet.from_cells(["tr"], [0], 3)
    g2, s2 = attach_dongles(g, seeds, {"t": [0.0, 0.0, 1.0]})
    assert g2.n_nodes == 3 and g2.n_edges == 1 and g2.weight[0] == 1.0
    assert "t#dongle" in g2.dongles and set(s2.labels) == {"tr", "t#dongle"}
    assert set(seeds.labels) == {"tr"}
    res = run_mad(g2, s2)
    assert int(np.argmax(res.distribution("t"))) == 2
    assert "t#dongle" not in res.to_jsonl()

    same_g, same_s = attach_dongles(g, seeds, {})
    assert same_g is g and same_s is seeds

    with pytest.raises(MadError, match="unknown"):
        attach_dongles(g, seeds, {"nobody": [1, 0, 0]})
    with pytest.raises(MadError, match="sum to 1"):
        attach_dongles(g, seeds, {"t": [0.5, 0.2, 0.2]})


def test_dongle_adds_one_edge_per_prior():
    g = _graph(["a", "t"], [(0, 1)])
    g2, _ = attach_dongles(g, SeedSet.from_cells(["a"], [0], 2), {"t": [0.7, 0.3]},
                           MadParams(dongle_weight=1.0))
    assert g2.n_nodes == 3 and g2.n_edges == 2


def _toy_setup():
    recs = [UserRecord("a", GeoPoint(0, 0), "", "train"),
            UserRecord("b", GeoPoint(10, 10), "", "train"),
            UserRecord("t1", GeoPoint(1, 1), "", "test"),
            UserRecord("t2", GeoPoint(1, 1), "", "test"),
            UserRecord("t3", GeoPoint(1, 1), "", "test")]
    ds = Dataset.from_records(recs)
    disc = build_kdtree([GeoPoint(0, 0), GeoPoint(10, 10)], 1)
    return ds, disc


def test_predict_rules():
    ds, disc = _toy_setup()
    from geoprop.madsolver import SolveResult
    dist = np.array([[1, 0], [0, 1], [0.2, 0.2], [0.1, 0.9], [0, 0]], dtype=float)
    res = SolveResult(tuple(r.user_id for r in ds.records), dist, [], 1, True, {"t3"})
    preds = predict(res, disc, ds)
    assert preds["t1"] == GeoPoint(0, 0)
    assert preds["t2"] == GeoPoint(10, 10)
    assert preds["t3"] == ds.map_center


def test_serialisation(tmp_path):
    g = _graph(["a", "b", "c"], [(0, 1)])
    res = run_mad(g, SeedSet.from_cells(["a"], [1], 7))
    res.write_jsonl(tmp_path / "s.jsonl")
    res.write_trace_csv(tmp_path / "t.csv")
    import json
    rows = [json.loads(x) for x in (tmp_path / "s.jsonl").read_text().splitlines()]
    assert rows[0]["top"][0][0] == 1 and rows[2]["unresolved"] is True
    assert (tmp_path / "t.csv").read_text().startswith("sweep,objective\n1,")
