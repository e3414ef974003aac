"""Modified Adsorption label propagation (two-term form, no regulariser).

Minimises, summed over labels,

    mu1 * (Y - Yhat)^T S (Y - Yhat) + mu2 * Yhat^T L Yhat

with L = D - W the unnormalised Laplacian and S the diagonal of seed
confidences, by in-place Gauss-Seidel sweeps over nodes in index order.
Every coordinate-block update is the exact minimiser of the objective in
that block, so the objective never increases between sweeps.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, GeoPoint, atomic_write_text
from .discretizer import Discretizer, cell_to_point
from .graph import MentionGraph, _from_lists

log = logging.getLogger(__name__)

DONGLE_SUFFIX = "#dongle"


class MadError(ValueError):
    pass


@dataclass(frozen=True)
class MadParams:
    mu1: float = 1.0
    mu2: float = 0.1
    max_sweeps: int = 200
    tolerance: float = 1e-5
    dongle_weight: float = 1.0
    dongle_confidence: float = 1.0

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0 or self.mu1 + self.mu2 <= 0:
            raise MadError("need mu1, mu2 >= 0 and mu1 + mu2 > 0")
        if self.max_sweeps < 1 or self.tolerance <= 0:
            raise MadError("max_sweeps must be >= 1 and tolerance > 0")
        if self.dongle_weight <= 0 or not 0 < self.dongle_confidence <= 1:
            raise MadError("dongle_weight must be > 0 and dongle_confidence in (0, 1]")


@dataclass
class SeedSet:
    """Rows of Y and the diagonal of S for seeded nodes; every other node has confidence 0."""

    n_labels: int
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    confidence: dict[str, float] = field(default_factory=dict)

    def add(self, node: str, label, confidence: float) -> None:
        label = np.asarray(label, dtype=float)
        if label.shape != (self.n_labels,):
            raise MadError(f"seed {node!r}: label vector must have length {self.n_labels}")
        if np.any(label < 0) or label.sum() > 1 + 1e-9 or not np.all(np.isfinite(label)):
            raise MadError(f"seed {node!r}: entries must be >= 0 with sum <= 1")
        if not 0.0 <= confidence <= 1.0:
            raise MadError(f"seed {node!r}: confidence must lie in [0, 1]")
        self.labels[node] = label
        self.confidence[node] = float(confidence)

    @classmethod
    def from_cells(cls, nodes: Sequence[str], cells: Sequence[int], n_labels: int) -> "SeedSet":
        """One-hot seeds at confidence 1.0, e.g. training users and their k-d cells."""
        seeds = cls(n_labels)
        for node, c in zip(nodes, cells):
            row = np.zeros(n_labels)
            row[int(c)] = 1.0
            seeds.add(node, row, 1.0)
        return seeds

    def copy(self) -> "SeedSet":
        return SeedSet(self.n_labels, dict(self.labels), dict(self.confidence))

    def matrices(self, nodes: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        index = {u: i for i, u in enumerate(nodes)}
        unknown = [u for u in self.labels if u not in index]
        if unknown:
            raise MadError(f"seeds reference unknown nodes: {sorted(unknown)[:5]}")
        Y = np.zeros((len(nodes), self.n_labels))
        s = np.zeros(len(nodes))
        for u, row in self.labels.items():
            Y[index[u]] = row
            s[index[u]] = self.confidence[u]
        return Y, s


@dataclass
class SolveResult:
    nodes: tuple[str, ...]
    distributions: np.ndarray
    objective_trace: list[float]
    sweeps_run: int
    converged: bool
    unresolved: set[str]
    dongles: frozenset[str] = frozenset()

    def distribution(self, node: str) -> np.ndarray:
        return self.distributions[self.nodes.index(node)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {u: self.distributions[i] for i, u in enumerate(self.nodes)}

    def to_jsonl(self, top: int = 5) -> str:
        out = io.StringIO()
        for i, u in enumerate(self.nodes):
            if u in self.dongles:
                continue
            row = self.distributions[i]
            order = np.lexsort((np.arange(len(row)), -row))[:top]
            pairs = [[int(c), float(row[c])] for c in order if row[c] > 0]
            out.write(json.dumps({"user_id": u, "top": pairs, "unresolved": u in self.unresolved}))
            out.write("\n")
        return out.getvalue()

    def write_jsonl(self, path, top: int = 5) -> None:
        atomic_write_text(path, self.to_jsonl(top))

    def write_trace_csv(self, path) -> None:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["sweep", "objective"])
        for k, value in enumerate(self.objective_trace, 1):
            writer.writerow([k, repr(value)])
        atomic_write_text(path, out.getvalue())


def mad_objective(W, Y: np.ndarray, s: np.ndarray, Yhat: np.ndarray, mu1: float, mu2: float) -> float:
    """C(Yhat) with L = D - W; ``W`` is a symmetric scipy sparse matrix."""
    prior = float(np.sum(s[:, None] * (Y - Yhat) ** 2))
    coo = W.tocoo()
    diff = Yhat[coo.row] - Yhat[coo.col]
    # each undirected edge appears twice in W
    smooth = 0.5 * float(np.sum(coo.data[:, None] * diff ** 2))
    return mu1 * prior + mu2 * smooth


def run_mad(g: MentionGraph, seeds: SeedSet, params: MadParams = MadParams()) -> SolveResult:
    if seeds.n_labels < 1:
        raise MadError("need at least one label")
    if not np.all(np.isfinite(g.weight)):
        raise MadError("non-finite edge weight")
    Y, s = seeds.matrices(g.nodes)
    W = g.adjacency()
    indptr, indices, data = W.indptr, W.indices, W.data
    mu1, mu2 = params.mu1, params.mu2

    degree = np.asarray(W.sum(axis=1)).ravel()
    denom = mu1 * s + mu2 * degree
    prior = mu1 * s[:, None] * Y
    Yhat = s[:, None] * Y
    active = np.flatnonzero(denom > 0)

    trace: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, params.max_sweeps + 1):
        max_change = 0.0
        for v in active:
            lo, hi = indptr[v], indptr[v + 1]
            if hi > lo:
                new = (prior[v] + mu2 * (data[lo:hi] @ Yhat[indices[lo:hi]])) / denom[v]
            else:
                new = prior[v] / denom[v]
            change = np.abs(new - Yhat[v]).max()
            if change > max_change:
                max_change = change
            Yhat[v] = new
        trace.append(mad_objective(W, Y, s, Yhat, mu1, mu2))
        if max_change < params.tolerance:
            converged = True
            break
    if not converged:
        log.warning("MAD stopped after %d sweeps without reaching tolerance %g",
                    sweeps, params.tolerance)

    unresolved = {g.nodes[i] for i in np.flatnonzero(~Yhat.any(axis=1))}
    return SolveResult(tuple(g.nodes), Yhat, trace, sweeps, converged, unresolved, g.dongles)


def attach_dongles(
    g: MentionGraph,
    seeds: SeedSet,
    priors: Mapping[str, Sequence[float]],
    params: MadParams = MadParams(),
) -> tuple[MentionGraph, SeedSet]:
    """Hang one seeded dongle node off each user in ``priors``.

    Each dongle ``<user>#dongle`` is joined to its user by a single edge of
    weight ``params.dongle_weight`` and seeded with the prior distribution at
    ``params.dongle_confidence``.
    """
    if not priors:
        return g, seeds
    index = g.index()
    nodes = list(g.nodes)
    src, dst, weight = list(g.src), list(g.dst), list(g.weight)
    out = seeds.copy()
    dongles = set(g.dongles)
    for user in sorted(priors):
        if user not in index:
            raise MadError(f"prior for unknown user {user!r}")
        prior = np.asarray(priors[user], dtype=float)
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise MadError(f"prior for {user!r} must be non-negative and sum to 1")
        d = user + DONGLE_SUFFIX
        if d in index:
            raise MadError(f"dongle {d!r} already exists")
        index[d] = len(nodes)
        nodes.append(d)
        dongles.add(d)
        src.append(index[user])
        dst.append(index[d])
        weight.append(params.dongle_weight)
        out.add(d, prior, params.dongle_confidence)
    return _from_lists(nodes, src, dst, weight, g.mode, dongles), out


def predict(
    result: SolveResult,
    d: Discretizer,
    dataset: Dataset,
    users: Sequence[str] | None = None,
) -> dict[str, GeoPoint]:
    """Decode each user's argmax cell to its median point; unresolved users get the map center."""
    if users is None:
        users = [r.user_id for r in dataset.split("test")]
    index = {u: i for i, u in enumerate(result.nodes)}
    missing = [u for u in users if u not in index]
    if missing:
        raise MadError(f"solve result lacks users: {missing[:5]}")
    out = {}
    for u in users:
        row = result.distributions[index[u]]
        if not row.any():
            out[u] = dataset.map_center
        else:
            out[u] = cell_to_point(d, int(np.argmax(row)))
    return out
