"""Desk-scale synthetic datasets with planted geography, homophily and celebrities.

Users live in Gaussian city clusters.  Each user emits a few @-mentions;
with probability ``p_local`` a mention targets the user's own cluster
(another member or one of the cluster's external handles), otherwise a
different cluster.  Celebrities are external handles mentioned by
``celebrity_degree`` users drawn uniformly from the whole population, so
their edges carry no geographic signal.  Text is a bag of cluster marker
words mixed with shared filler words.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError
from .dataset import Dataset, GeoPoint, UserRecord


@dataclass(frozen=True)
class SynthConfig:
    n_clusters: int = 5
    users_per_cluster: int = 40
    spread_deg: float = 0.3
    p_local: float = 0.9
    mentions_per_user: int = 3
    p_external: float = 0.3
    externals_per_cluster: int = 5
    n_celebrities: int = 0
    celebrity_degree: int = 10
    marker_words: int = 5
    filler_words: int = 200
    words_per_user: int = 20
    marker_rate: float = 0.3
    train_frac: float = 0.6
    dev_frac: float = 0.2
    test_frac: float = 0.2
    isolated_test_fraction: float = 0.0
    min_center_sep_deg: float = 4.0
    lat_range: tuple[float, float] = (27.0, 48.0)
    lon_range: tuple[float, float] = (-122.0, -70.0)
    seed: int = 0

    def validate(self):
        if abs(self.train_frac + self.dev_frac + self.test_frac - 1.0) > 1e-9:
            raise ConfigError("split proportions must sum to 1")
        if min(self.train_frac, self.dev_frac, self.test_frac) < 0:
            raise ConfigError("split proportions must be non-negative")
        for name in ("p_local", "p_external", "marker_rate", "isolated_test_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.n_clusters < 1 or self.users_per_cluster < 1:
            raise ConfigError("need at least one cluster with one user")
        if self.p_local < 1.0 and self.n_clusters < 2 and self.mentions_per_user > 0:
            raise ConfigError("p_local < 1 needs at least two clusters")
        if self.externals_per_cluster < 1 and self.p_external > 0:
            raise ConfigError("p_external > 0 needs externals_per_cluster >= 1")


@dataclass
class SynthData:
    dataset: Dataset
    mentions: dict[str, list[str]]
    clusters: dict[str, int]
    centers: list[GeoPoint]
    celebrities: list[str] = field(default_factory=list)
    isolated: set[str] = field(default_factory=set)


def _cluster_centers(cfg: SynthConfig, rng) -> np.ndarray:
    centers = []
    for _ in range(cfg.n_clusters):
        for _attempt in range(1000):
            c = np.array([rng.uniform(*cfg.lat_range), rng.uniform(*cfg.lon_range)])
            if all(np.abs(c - o).max() >= cfg.min_center_sep_deg for o in centers):
                break
        centers.append(c)
    return np.array(centers)


def _assign_splits(n: int, cfg: SynthConfig, rng) -> list[str]:
    n_test = int(round(cfg.test_frac * n))
    n_dev = int(round(cfg.dev_frac * n))
    n_train = n - n_test - n_dev
    if n_train < 1:
        raise ConfigError("split proportions leave a cluster without train users")
    labels = ["train"] * n_train + ["dev"] * n_dev + ["test"] * n_test
    return [labels[i] for i in rng.permutation(n)]


def generate_synthetic(cfg: SynthConfig) -> SynthData:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    centers = _cluster_centers(cfg, rng)

    ids, clusters, coords, splits = [], [], [], []
    for c in range(cfg.n_clusters):
        pts = centers[c] + rng.normal(0.0, cfg.spread_deg, size=(cfg.users_per_cluster, 2))
        pts[:, 0] = np.clip(pts[:, 0], -90.0, 90.0)
        pts[:, 1] = np.clip(pts[:, 1], -180.0, 180.0)
        for i, split in enumerate(_assign_splits(cfg.users_per_cluster, cfg, rng)):
            ids.append(f"u{c:02d}x{i:04d}")
            clusters.append(c)
            coords.append((float(pts[i, 0]), float(pts[i, 1])))
            splits.append(split)
    n = len(ids)

    test_idx = [i for i in range(n) if splits[i] == "test"]
    n_iso = int(round(cfg.isolated_test_fraction * len(test_idx)))
    isolated = set(rng.choice(test_idx, size=n_iso, replace=False).tolist()) if n_iso else set()
    active = [i for i in range(n) if i not in isolated]
    members = [[i for i in active if clusters[i] == c] for c in range(cfg.n_clusters)]
    externals = [[f"ext{c:02d}x{j:03d}" for j in range(cfg.externals_per_cluster)]
                 for c in range(cfg.n_clusters)]

    mentions: list[list[str]] = [[] for _ in range(n)]
    for i in active:
        c = clusters[i]
        for _ in range(cfg.mentions_per_user):
            if rng.random() < cfg.p_local:
                tc = c
            else:
                others = [k for k in range(cfg.n_clusters) if k != c]
                tc = others[rng.integers(len(others))]
            candidates = [j for j in members[tc] if j != i]
            if rng.random() < cfg.p_external or not candidates:
                mentions[i].append(externals[tc][rng.integers(len(externals[tc]))])
            else:
                mentions[i].append(ids[candidates[rng.integers(len(candidates))]])

    celebrities = [f"celeb{k:03d}" for k in range(cfg.n_celebrities)]
    if celebrities and cfg.celebrity_degree > len(active):
        raise ConfigError("celebrity_degree exceeds the number of non-isolated users")
    for handle in celebrities:
        for i in sorted(rng.choice(active, size=cfg.celebrity_degree, replace=False).tolist()):
            mentions[i].append(handle)

    markers = [[f"mark{c:02d}w{k:02d}" for k in range(cfg.marker_words)] for c in range(cfg.n_clusters)]
    filler = [f"word{k:04d}" for k in range(cfg.filler_words)]
    records = []
    for i in range(n):
        words = []
        for _ in range(cfg.words_per_user):
            if rng.random() < cfg.marker_rate and markers[clusters[i]]:
                pool = markers[clusters[i]]
            else:
                pool = filler
            words.append(pool[rng.integers(len(pool))])
        text = " ".join(words + [f"@{h}" for h in mentions[i]])
        records.append(UserRecord(ids[i], GeoPoint(*coords[i]), text, splits[i]))

    return SynthData(
        dataset=Dataset.from_records(records),
        mentions={ids[i]: mentions[i] for i in range(n)},
        clusters={ids[i]: clusters[i] for i in range(n)},
        centers=[GeoPoint(float(a), float(b)) for a, b in centers],
        celebrities=celebrities,
        isolated={ids[i] for i in isolated},
    )
