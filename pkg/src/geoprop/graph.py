"""Collapsed @-mention network with celebrity removal.

Mentions always originate at dataset users.  A mentioned handle that is
not itself a dataset user ("external") is dropped from the graph, and every
pair of dataset users that mentioned it is joined directly.  External
handles mentioned by more than ``T`` distinct users are treated as
celebrities and dropped without joining anybody.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import atomic_write_text

MODES = ("binary", "weighted")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphStats:
    n: int
    n_edges: int
    mean_degree: float

    def to_json(self) -> dict:
        return {"n": self.n, "n_edges": self.n_edges, "mean_degree": self.mean_degree}


@dataclass(frozen=True)
class MentionGraph:
    """Undirected weighted graph; each edge stored once with ``src < dst`` (node indices)."""

    nodes: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    mode: str = "binary"
    dongles: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node ids")
        if np.any(self.src == self.dst):
            raise GraphError("self-loops are not allowed")
        if not np.all(np.isfinite(self.weight)) or np.any(self.weight <= 0):
            raise GraphError("edge weights must be finite and positive")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.nodes)}

    def edge_dict(self) -> dict[frozenset, float]:
        return {frozenset((self.nodes[a], self.nodes[b])): float(w)
                for a, b, w in zip(self.src, self.dst, self.weight)}

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weight matrix W in CSR form."""
        n = self.n_nodes
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        data = np.concatenate([self.weight, self.weight]).astype(float)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    def write_edgelist(self, path) -> None:
        rows = []
        for a, b, w in zip(self.src, self.dst, self.weight):
            u, v = sorted((self.nodes[a], self.nodes[b]))
            rows.append((u, v, float(w)))
        rows.sort()
        atomic_write_text(path, "".join(f"{u}\t{v}\t{_fmt_weight(w)}\n" for u, v, w in rows))

    @classmethod
    def read_edgelist(cls, path, nodes: Sequence[str], mode: str = "binary") -> "MentionGraph":
        index = {u: i for i, u in enumerate(nodes)}
        src, dst, weight = [], [], []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    u, v, w = line.rstrip("\n").split("\t")
                    a, b = sorted((index[u], index[v]))
                    weight.append(float(w))
                except (ValueError, KeyError) as exc:
                    raise GraphError(f"{path}:{line_no}: {exc}") from None
                src.append(a)
                dst.append(b)
        return _from_lists(nodes, src, dst, weight, mode)


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def _from_lists(nodes, src, dst, weight, mode, dongles=frozenset()) -> MentionGraph:
    order = np.lexsort((np.asarray(dst, dtype=np.int64), np.asarray(src, dtype=np.int64)))
    return MentionGraph(
        nodes=tuple(nodes),
        src=np.asarray(src, dtype=np.int64)[order],
        dst=np.asarray(dst, dtype=np.int64)[order],
        weight=np.asarray(weight, dtype=float)[order],
        mode=mode,
        dongles=frozenset(dongles),
    )


def _ordered_ids(dataset_ids: Iterable[str]) -> list[str]:
    if isinstance(dataset_ids, (set, frozenset)):
        return sorted(dataset_ids)
    return list(dict.fromkeys(dataset_ids))


def celebrity_handles(table: Mapping[str, Sequence[str]], dataset_ids, T: int | None) -> set[str]:
    """External handles mentioned by more than ``T`` distinct dataset users."""
    ids = set(dataset_ids)
    mentioners = defaultdict(set)
    for u, handles in table.items():
        for h in handles:
            if h not in ids:
                mentioners[h].add(u)
    if T is None:
        return set()
    return {h for h, users in mentioners.items() if len(users) > T}


def build_collapsed_graph(
    table: Mapping[str, Sequence[str]],
    dataset_ids: Iterable[str],
    T: int | None = None,
    mode: str = "binary",
) -> MentionGraph:
    """Collapse the raw mention table into an undirected graph over ``dataset_ids``.

    Edge weight in ``weighted`` mode is the number of direct mentions between
    the two users (either direction) plus the number of distinct surviving
    external handles both of them mentioned.  ``T=None`` disables celebrity
    removal.
    """
    if mode not in MODES:
        raise GraphError(f"mode must be one of {MODES}")
    if T is not None and T < 1:
        raise GraphError("celebrity threshold T must be >= 1 or None")
    nodes = _ordered_ids(dataset_ids)
    index = {u: i for i, u in enumerate(nodes)}
    stray = [u for u in table if u not in index]
    if stray:
        raise GraphError(f"mention table has non-dataset users: {sorted(stray)[:5]}")

    direct = Counter()
    mentioners = defaultdict(set)
    for u, handles in table.items():
        a = index[u]
        for h in handles:
            b = index.get(h)
            if b is None:
                mentioners[h].add(a)
            elif b != a:
                direct[(min(a, b), max(a, b))] += 1

    shared = Counter()
    for h in sorted(mentioners):
        users = mentioners[h]
        if T is not None and len(users) > T:
            continue
        for pair in itertools.combinations(sorted(users), 2):
            shared[pair] += 1

    pairs = sorted(set(direct) | set(shared))
    src = [a for a, _ in pairs]
    dst = [b for _, b in pairs]
    if mode == "binary":
        weight = [1.0] * len(pairs)
    else:
        weight = [float(direct[p] + shared[p]) for p in pairs]
    return _from_lists(nodes, src, dst, weight, mode)


def graph_stats(g: MentionGraph) -> GraphStats:
    n = g.n_nodes
    return GraphStats(n, g.n_edges, 2.0 * g.n_edges / n if n else 0.0)


def sweep_threshold(table, dataset_ids, T_values: Sequence[int | None], mode: str = "binary"):
    """Edge count per celebrity threshold, as ``[(T, n_edges), ...]`` in input order."""
    if not T_values:
        raise GraphError("T_values must be non-empty")
    return [(T, build_collapsed_graph(table, dataset_ids, T, mode).n_edges) for T in T_values]


def write_stats(g: MentionGraph, path, **extra) -> None:
    obj = graph_stats(g).to_json()
    obj.update(extra)
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def threshold_key(T) -> float:
    return math.inf if T is None else T
