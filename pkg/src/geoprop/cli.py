"""Command-line interface.

Subcommands: run, sweep, tune, report, synth, eval.  Settings come from an
optional flat ``key = value`` file (``--config``) overridden by repeatable
``--set key=value`` flags.

Run config keys (see ``RunConfig``): dataset, format, preset
(geotext|twitter-us|twitter-world), bucket_size, T, mode (binary|weighted),
mu1, mu2, tolerance, max_sweeps, dongle, dongle_weight, dongle_confidence,
l1_strength, text_max_iter, min_df, split (dev|test), out, seed.

Synth config keys (see ``SynthConfig``): n_clusters, users_per_cluster,
spread_deg, p_local, mentions_per_user, p_external, externals_per_cluster,
n_celebrities, celebrity_degree, marker_words, filler_words, words_per_user,
marker_rate, train_frac, dev_frac, test_frac, isolated_test_fraction,
min_center_sep_deg, lat_range, lon_range, seed.

Exit codes: 0 ok, 2 config error, 3 data error, 4 solver did not converge
(results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, build, parse_overrides, read_kv_file
from .dataset import DataError, guess_format, load_dataset, write_dataset
from .metrics import EvalError, evaluate, format_table
from .pipeline import (StageError, make_config, read_predictions, run_pipeline, run_report,
                       run_sweep, run_tune)
from .synthetic import SynthConfig, generate_synthetic

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4

log = logging.getLogger("geoprop")


def _settings(args) -> dict:
    mapping = read_kv_file(args.config) if args.config else {}
    mapping.update(parse_overrides(args.set))
    return mapping


def _run_config(args):
    mapping = _settings(args)
    if args.out:
        mapping["out"] = args.out
    return make_config(mapping)


def _csv_values(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_run(args) -> int:
    result = run_pipeline(_run_config(args))
    print(format_table([(result.variant, result.metrics)]), end="")
    print(f"edges={result.n_edges} sweeps={result.sweeps} out={result.out_dir}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    values = [None if v.lower() in ("none", "inf") else int(v) for v in _csv_values(args.T)]
    results = run_sweep(cfg, values, threads=args.threads)
    print(f"{'T':>6}  {'|E|':>9}  {'Acc@161':>7}  {'Mean':>7}  {'Median':>7}")
    for r in results:
        T = "none" if r.config.T is None else r.config.T
        m = r.metrics
        print(f"{T:>6}  {r.n_edges:>9}  {100 * m.acc161:>7.1f}  {m.mean_km:>7.0f}  {m.median_km:>7.0f}")
    return EXIT_OK if all(r.converged for r in results) else EXIT_NONCONVERGED


def cmd_tune(args) -> int:
    cfg = _run_config(args)
    grid = {}
    for item in args.grid or ():
        key, sep, values = item.partition("=")
        if not sep:
            raise ConfigError(f"--grid expects key=v1,v2,..., got {item!r}")
        grid[key.strip()] = _csv_values(values)
    best, ranked = run_tune(cfg, grid, threads=args.threads)
    print(f"evaluated {len(ranked)} configurations; best: "
          + ", ".join(f"{k}={getattr(best, k)}" for k in grid))
    print(format_table([(r.out_dir.name, r.metrics) for r in ranked]), end="")
    return EXIT_OK if all(r.converged for r in ranked) else EXIT_NONCONVERGED


def cmd_report(args) -> int:
    results = run_report(_run_config(args), threads=args.threads)
    print(format_table([(r.variant, r.metrics) for r in results]), end="")
    return EXIT_OK if all(r.converged for r in results) else EXIT_NONCONVERGED


def cmd_synth(args) -> int:
    cfg = build(SynthConfig, _settings(args))
    data = generate_synthetic(cfg)
    write_dataset(data.dataset, args.out, args.format or guess_format(args.out))
    print(f"wrote {len(data.dataset)} users to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = load_dataset(args.gold, args.format)
    gold = {r.user_id: r.location for r in dataset.split(args.split)}
    metrics = evaluate(read_predictions(args.pred), gold)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_json(per_user=True), fh, indent=2)
    print(format_table([(args.name, metrics)]), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoprop", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help=out_help)
        p.add_argument("--threads", type=int, default=1, help="parallel sweep/grid points")

    p = sub.add_parser("run", help="run one pipeline variant")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="celebrity threshold sweep")
    common(p)
    p.add_argument("--T", required=True, help="comma-separated thresholds, 'none' for no filter")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="grid search on the dev split")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis (repeatable)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("report", help="run the five table variants and write table.txt")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="flat key=value synth config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True, help="dataset file to write (.tsv or .jsonl)")
    p.add_argument("--format", choices=("tsv", "jsonl"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="metrics from a predictions file")
    p.add_argument("--pred", required=True, help="TSV of user_id, lat, lon")
    p.add_argument("--gold", required=True, help="dataset file holding gold locations")
    p.add_argument("--format", choices=("tsv", "jsonl"))
    p.add_argument("--split", default="test", choices=("dev", "test"))
    p.add_argument("--name", default="predictions", help="row label in the printed table")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GEOPROP_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, EvalError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
