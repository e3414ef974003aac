"""End-to-end geolocation runs: discretise, build graph, fit text prior, propagate, evaluate.

Every run writes its artifacts plus a ``manifest.json`` into one output
directory.  Upstream stages (k-d tree, graph, text model) are keyed on a
hash of the dataset file and the config values they depend on; when a
rerun finds a matching key and intact artifact hashes in the existing
manifest, the artifact is loaded instead of recomputed.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .config import ConfigError, build, render
from .dataset import DataError, Dataset, GeoPoint, atomic_write_text, load_dataset, mention_table
from .discretizer import Discretizer, DiscretizerError, build_kdtree
from .graph import (GraphError, MentionGraph, build_collapsed_graph, celebrity_handles,
                    graph_stats, threshold_key)
from .madsolver import MadError, MadParams, SeedSet, attach_dongles, predict, run_mad
from .metrics import EvalError, Metrics, evaluate, format_table, metrics_json
from .textprior import TextModel, TextModelError, featurize_many, train_text_model

log = logging.getLogger(__name__)

PRESETS = {
    "geotext": {"bucket_size": 50, "T": 5},
    "twitter-us": {"bucket_size": 2400, "T": 15},
    "twitter-world": {"bucket_size": 2400, "T": 5},
}

TUNABLE = ("T", "bucket_size", "mu1", "mu2", "l1_strength", "mode", "dongle_weight",
           "dongle_confidence")


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    format: str | None = None
    preset: str | None = None
    bucket_size: int = 50
    T: int | None = None
    mode: str = "binary"
    mu1: float = 1.0
    mu2: float = 0.1
    tolerance: float = 1e-5
    max_sweeps: int = 200
    dongle: bool = False
    dongle_weight: float = 1.0
    dongle_confidence: float = 1.0
    l1_strength: float = 1e-4
    text_max_iter: int = 300
    min_df: int = 1
    split: str = "test"
    out: str = "runs/default"
    seed: int = 0

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if self.split not in ("dev", "test"):
            raise ConfigError("split must be dev or test")
        if self.mode not in ("binary", "weighted"):
            raise ConfigError("mode must be binary or weighted")
        if self.bucket_size < 1:
            raise ConfigError("bucket_size must be >= 1")
        if self.T is not None and self.T < 1:
            raise ConfigError("T must be >= 1 or none")
        if self.l1_strength < 0 or self.text_max_iter < 1 or self.min_df < 1:
            raise ConfigError("invalid text model settings")
        try:
            self.mad_params()
        except MadError as exc:
            raise ConfigError(str(exc)) from None
        if check_paths and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file not found: {self.dataset!r}")
        return self

    def mad_params(self) -> MadParams:
        return MadParams(self.mu1, self.mu2, self.max_sweeps, self.tolerance,
                         self.dongle_weight, self.dongle_confidence)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def make_config(*mappings: Mapping[str, object]) -> RunConfig:
    """Merge mappings left to right; a ``preset`` fills only keys no mapping sets."""
    merged: dict = {}
    for m in mappings:
        merged.update(m)
    preset = merged.get("preset")
    if preset not in (None, "", "none"):
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        for k, v in PRESETS[preset].items():
            merged.setdefault(k, v)
    return build(RunConfig, merged)


def variant_name(cfg: RunConfig) -> str:
    if cfg.T is None:
        name = "MAD" if cfg.mode == "binary" else "MAD-W"
    else:
        name = "MAD-CEL-" + ("B" if cfg.mode == "binary" else "W")
    return name + ("-LR" if cfg.dongle else "")


class StageError(Exception):
    """A pipeline stage failed; ``exit_code`` follows the CLI convention."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.cause = exc
        if isinstance(exc, (ConfigError, TextModelError)):
            self.exit_code = 2
        else:
            self.exit_code = 3


@dataclass
class RunResult:
    config: RunConfig
    variant: str
    metrics: Metrics
    n_edges: int
    mean_degree: float
    converged: bool
    sweeps: int
    predictions: dict[str, GeoPoint]
    out_dir: Path
    reused: tuple[str, ...] = ()


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


class _Stages:
    """Bookkeeping for cached stage artifacts inside one output directory."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.previous = {}
        manifest = out_dir / "manifest.json"
        if manifest.is_file():
            try:
                self.previous = json.loads(manifest.read_text()).get("stages", {})
            except (json.JSONDecodeError, OSError):
                self.previous = {}
        self.current: dict[str, dict] = {}
        self.reused: list[str] = []

    def cached(self, stage: str, key: str) -> bool:
        prev = self.previous.get(stage)
        if not prev or prev.get("key") != key:
            return False
        for name, digest in prev.get("files", {}).items():
            path = self.out_dir / name
            if not path.is_file() or _sha256(path) != digest:
                return False
        return True

    def record(self, stage: str, key: str, files: Sequence[str], reused: bool) -> None:
        self.current[stage] = {"key": key,
                               "files": {f: _sha256(self.out_dir / f) for f in files}}
        if reused:
            self.reused.append(stage)


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (ConfigError, DataError, DiscretizerError, GraphError, MadError,
                    TextModelError, EvalError, OSError) as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


@_stage("dataset")
def _load(cfg: RunConfig) -> tuple[Dataset, str]:
    return load_dataset(cfg.dataset, cfg.format), _sha256(cfg.dataset)


@_stage("discretize")
def _discretize(cfg, dataset, stages, data_hash) -> Discretizer:
    key = _key("discretize", data_hash, cfg.bucket_size)
    files = ["discretizer.json"]
    if stages.cached("discretize", key):
        disc = Discretizer.load(stages.out_dir / files[0])
        stages.record("discretize", key, files, True)
        return disc
    train = dataset.split("train")
    disc = build_kdtree([r.location for r in train], cfg.bucket_size)
    disc.save(stages.out_dir / files[0])
    stages.record("discretize", key, files, False)
    return disc


def graph_users(dataset: Dataset, split: str) -> list[str]:
    """Graph members for an evaluation split: training users plus that split, in dataset order."""
    return [r.user_id for r in dataset.records if r.split in ("train", split)]


@_stage("graph")
def _graph(cfg, dataset, stages, data_hash) -> MentionGraph:
    key = _key("graph", data_hash, cfg.split, cfg.T, cfg.mode)
    files = ["graph.tsv", "graph_stats.json"]
    nodes = graph_users(dataset, cfg.split)
    if stages.cached("graph", key):
        g = MentionGraph.read_edgelist(stages.out_dir / files[0], nodes, cfg.mode)
        stages.record("graph", key, files, True)
        return g
    members = set(nodes)
    table = mention_table([r for r in dataset.records if r.user_id in members])
    g = build_collapsed_graph(table, nodes, cfg.T, cfg.mode)
    g.write_edgelist(stages.out_dir / files[0])
    stats = graph_stats(g).to_json()
    stats.update(T=cfg.T, mode=cfg.mode,
                 celebrities_removed=len(celebrity_handles(table, nodes, cfg.T)))
    atomic_write_text(stages.out_dir / files[1], json.dumps(stats, indent=2, sort_keys=True) + "\n")
    stages.record("graph", key, files, False)
    return g


@_stage("textprior")
def _text_model(cfg, dataset, disc, stages, disc_key) -> TextModel:
    key = _key("textprior", disc_key, cfg.l1_strength, cfg.text_max_iter, cfg.min_df)
    files = ["textmodel.tsv", "textmodel.json"]
    if stages.cached("textprior", key):
        model = TextModel.load(*(stages.out_dir / f for f in files))
        stages.record("textprior", key, files, True)
        return model
    train = dataset.split("train")
    model = train_text_model([r.text for r in train], disc.point_cells(), disc.n_cells,
                             cfg.l1_strength, max_iter=cfg.text_max_iter, min_df=cfg.min_df)
    model.save(*(stages.out_dir / f for f in files))
    stages.record("textprior", key, files, False)
    return model


def write_predictions(preds: Mapping[str, GeoPoint], order: Sequence[str], path) -> None:
    atomic_write_text(path, "".join(
        f"{u}\t{preds[u].lat!r}\t{preds[u].lon!r}\n" for u in order))


def read_predictions(path) -> dict[str, GeoPoint]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                u, lat, lon = line.rstrip("\n").split("\t")
                preds[u.lower()] = GeoPoint(float(lat), float(lon))
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from None
    return preds


def run_pipeline(cfg: RunConfig, out_dir=None) -> RunResult:
    try:
        cfg.validate()
    except ConfigError as exc:
        raise StageError("config", exc) from exc
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stages = _Stages(out)

    dataset, data_hash = _load(cfg)
    eval_users = [r.user_id for r in dataset.split(cfg.split)]
    if not eval_users:
        raise StageError("dataset", ConfigError(f"split {cfg.split!r} is empty"))

    disc = _discretize(cfg, dataset, stages, data_hash)
    g = _graph(cfg, dataset, stages, data_hash)
    stats = graph_stats(g)

    train = dataset.split("train")
    seeds = SeedSet.from_cells([r.user_id for r in train], disc.point_cells(), disc.n_cells)
    params = cfg.mad_params()
    solve_graph = g
    if cfg.dongle:
        model = _text_model(cfg, dataset, disc, stages,
                            _key("discretize", data_hash, cfg.bucket_size))
        by_id = dataset.by_id()
        probs = model.predict_proba(featurize_many([by_id[u].text for u in eval_users], model.vocab))
        priors = {u: probs[i] / probs[i].sum() for i, u in enumerate(eval_users)}
        try:
            solve_graph, seeds = attach_dongles(g, seeds, priors, params)
        except MadError as exc:
            raise StageError("dongles", exc) from exc

    try:
        result = run_mad(solve_graph, seeds, params)
    except MadError as exc:
        raise StageError("solve", exc) from exc
    result.write_jsonl(out / "solve.jsonl")
    result.write_trace_csv(out / "objective.csv")

    preds = predict(result, disc, dataset, eval_users)
    write_predictions(preds, eval_users, out / "predictions.tsv")
    by_id = dataset.by_id()
    try:
        metrics = evaluate(preds, {u: by_id[u].location for u in eval_users})
    except EvalError as exc:
        raise StageError("eval", exc) from exc

    variant = variant_name(cfg)
    summary = metrics.to_json()
    summary.update(variant=variant, n_edges=stats.n_edges, mean_degree=stats.mean_degree,
                   n_nodes=stats.n, n_cells=disc.n_cells, sweeps=result.sweeps_run,
                   converged=result.converged, unresolved=len(result.unresolved - result.dongles))
    atomic_write_text(out / "metrics.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    atomic_write_text(out / "metrics.txt", format_table([(variant, metrics)]))
    atomic_write_text(out / "config.cfg", render(cfg))
    manifest = {
        "version": version_string(),
        "variant": variant,
        "dataset": str(cfg.dataset),
        "dataset_sha256": data_hash,
        "config": dataclasses.asdict(cfg),
        "stages": stages.current,
        "outputs": {f: _sha256(out / f) for f in
                    ("predictions.tsv", "solve.jsonl", "objective.csv", "metrics.json")},
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("%s: acc161=%.3f mean=%.1f median=%.1f |E|=%d", variant, metrics.acc161,
             metrics.mean_km, metrics.median_km, stats.n_edges)
    return RunResult(cfg, variant, metrics, stats.n_edges, stats.mean_degree, result.converged,
                     result.sweeps_run, preds, out, tuple(stages.reused))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _t_label(T) -> str:
    return "none" if T is None else str(T)


def run_sweep(cfg: RunConfig, T_values: Sequence[int | None], out_dir=None,
              threads: int = 1) -> list[RunResult]:
    """Run the pipeline once per celebrity threshold; rows come back ordered by T."""
    if not T_values:
        raise ConfigError("T_values must be non-empty")
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    T_values = sorted(dict.fromkeys(T_values), key=threshold_key)
    results = _map(lambda T: run_pipeline(cfg.replace(T=T), out / f"T={_t_label(T)}"),
                   T_values, threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "n_edges", "acc161", "mean_km", "median_km"])
    for r in results:
        w.writerow([_t_label(r.config.T), r.n_edges, repr(r.metrics.acc161),
                    repr(r.metrics.mean_km), repr(r.metrics.median_km)])
    atomic_write_text(out / "sweep.csv", buf.getvalue())
    return results


def expand_grid(cfg: RunConfig, grid: Mapping[str, Sequence]) -> list[RunConfig]:
    """Cartesian product of grid values applied to ``cfg``, duplicates removed in order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("tuning grid is empty")
    bad = [k for k in grid if k not in TUNABLE]
    if bad:
        raise ConfigError(f"cannot tune {bad}; tunable keys are {TUNABLE}")
    keys = list(grid)
    configs = []
    base = {k: v for k, v in dataclasses.asdict(cfg).items()}
    for combo in itertools.product(*(grid[k] for k in keys)):
        mapping = dict(base)
        mapping.update(zip(keys, combo))
        mapping["preset"] = None
        configs.append(build(RunConfig, mapping))
    return list(dict.fromkeys(configs))


def run_tune(cfg: RunConfig, grid: Mapping[str, Sequence], out_dir=None,
             threads: int = 1) -> tuple[RunConfig, list[RunResult]]:
    """Exhaustive grid search on the dev split.

    Ranked by Acc@161 (higher first), then median error, then lower T.
    Writes ``leaderboard.csv`` and ``best.cfg``.
    """
    cfg = cfg.replace(split="dev")
    configs = expand_grid(cfg, grid)
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _map(lambda ic: run_pipeline(ic[1], out / f"point{ic[0]:03d}"),
                   list(enumerate(configs)), threads)
    ranked = sorted(results, key=lambda r: (-r.metrics.acc161, r.metrics.median_km,
                                            threshold_key(r.config.T)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(grid)
    w.writerow(["rank", *keys, "n_edges", "acc161", "mean_km", "median_km", "dir"])
    for rank, r in enumerate(ranked, 1):
        w.writerow([rank, *[_t_label(getattr(r.config, k)) for k in keys], r.n_edges,
                    repr(r.metrics.acc161), repr(r.metrics.mean_km), repr(r.metrics.median_km),
                    r.out_dir.name])
    atomic_write_text(out / "leaderboard.csv", buf.getvalue())
    best = ranked[0].config
    atomic_write_text(out / "best.cfg", render(best))
    return best, ranked


def report_configs(cfg: RunConfig) -> list[RunConfig]:
    """The five table rows: MAD, MAD-CEL-{B,W} and MAD-CEL-{B,W}-LR."""
    T = cfg.T if cfg.T is not None else 5
    return [
        cfg.replace(T=None, mode="binary", dongle=False),
        cfg.replace(T=T, mode="binary", dongle=False),
        cfg.replace(T=T, mode="weighted", dongle=False),
        cfg.replace(T=T, mode="binary", dongle=True),
        cfg.replace(T=T, mode="weighted", dongle=True),
    ]


def run_report(cfg: RunConfig, out_dir=None, threads: int = 1) -> list[RunResult]:
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    configs = report_configs(cfg)
    results = _map(lambda c: run_pipeline(c, out / variant_name(c)), configs, threads)
    rows = [(r.variant, r.metrics) for r in results]
    atomic_write_text(out / "table.txt", format_table(rows))
    atomic_write_text(out / "table.json", metrics_json(rows))
    return results
