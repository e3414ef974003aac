import pytest

from geoprop.config import ConfigError, build, parse_kv_text
from geoprop.dataset import dumps_dataset, extract_mentions, mention_table
from geoprop.graph import build_collapsed_graph
from geoprop.synthetic import SynthConfig, generate_synthetic


def test_deterministic_for_fixed_seed():
    a = generate_synthetic(SynthConfig(seed=7, n_celebrities=2))
    b = generate_synthetic(SynthConfig(seed=7, n_celebrities=2))
    assert dumps_dataset(a.dataset).encode() == dumps_dataset(b.dataset).encode()
    c = generate_synthetic(SynthConfig(seed=8, n_celebrities=2))
    assert dumps_dataset(a.dataset) != dumps_dataset(c.dataset)


def test_text_carries_ground_truth_mentions():
    data = generate_synthetic(SynthConfig(seed=1, n_celebrities=3))
    for r in data.dataset.records:
        assert extract_mentions(r.text) == data.mentions[r.user_id]


def test_full_homophily_gives_same_cluster_edges():
    data = generate_synthetic(SynthConfig(seed=3, p_local=1.0, n_celebrities=0))
    ids = [r.user_id for r in data.dataset.records]
    g = build_collapsed_graph(mention_table(data.dataset.records), ids, None, "binary")
    assert g.n_edges > 0
    for a, b in zip(g.src, g.dst):
        assert data.clusters[g.nodes[a]] == data.clusters[g.nodes[b]]


def test_celebrity_mentioner_count():
    data = generate_synthetic(SynthConfig(seed=2, n_celebrities=2, celebrity_degree=10))
    for celeb in data.celebrities:
        assert sum(celeb in hs for hs in data.mentions.values()) == 10


def test_isolated_users_have_no_mentions_either_way():
    data = generate_synthetic(SynthConfig(seed=4, isolated_test_fraction=0.5, n_celebrities=1))
    assert data.isolated
    for u in data.isolated:
        assert data.mentions[u] == []
        assert all(u not in hs for hs in data.mentions.values())
        assert data.dataset.by_id()[u].split == "test"


def test_bad_proportions():
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(train_frac=0.5, dev_frac=0.2, test_frac=0.2))


def test_config_from_text():
    cfg = build(SynthConfig, parse_kv_text("n_clusters = 3  # comment\nlat_range = 10,20\nseed=9\n"))
    assert cfg.n_clusters == 3 and cfg.lat_range == (10.0, 20.0) and cfg.seed == 9
    with pytest.raises(ConfigError, match="unknown"):
        build(SynthConfig, {"n_clusterz": "3"})
