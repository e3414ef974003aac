import numpy as np

from geoprop.graph import _from_lists
from geoprop.madsolver import SeedSet


def random_mad_instance(rng, max_nodes=50, max_labels=5):
    """Random weighted graph with random seeds; returns (graph, seeds, edges, Y, s)."""
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_labels + 1))
    p = rng.uniform(0.05, 0.3)
    edges = [(u, v, float(rng.uniform(0.1, 3.0)))
             for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    nodes = [f"n{i:03d}" for i in range(n)]
    g = _from_lists(nodes, [e[0] for e in edges], [e[1] for e in edges],
                    [e[2] for e in edges], "weighted")
    seeds = SeedSet(m)
    Y = np.zeros((n, m))
    s = np.zeros(n)
    for i in range(n):
        if rng.random() < 0.3:
            row = rng.dirichlet(np.ones(m)) if rng.random() < 0.5 else np.eye(m)[rng.integers(m)]
            conf = float(rng.choice([1.0, rng.uniform(0.1, 1.0)]))
            seeds.add(nodes[i], row, conf)
            Y[i], s[i] = row, conf
    return g, seeds, edges, Y, s
