"""Command-line experiment runner.

Subcommands: gen-data, train, sweep, pad, plot, report. Every command
takes --config plus repeatable --override key=value; worker count for
sweeps comes from the CLUREG_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import (ExperimentConfig, apply_overrides,
                     apply_reference_weights, load_config)
from .data import gen_synthetic, shift_domain, to_csv
from .evaluation import SeedSummary, paired_t_test, pca_project
from .nn import ParamSet, forward_features
from .plots import emit_plot, scatter_svg
from .runner import (RunRecord, _build_uda_data, _mlp_config, read_records,
                     run_experiment, sweep)
from .uda import proxy_a_distance


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        lo, sep, hi = args.seeds.partition("..")
        if not sep:
            return [int(lo)]
        return list(range(int(lo), int(hi) + 1))
    return [args.seed]


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args.override)
    if getattr(args, "reference_weights", False):
        cfg = apply_reference_weights(cfg)
    return cfg


def _add_common(p, seeds=True):
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--reference-weights", action="store_true",
                   help="use the published beta/delta for the configured "
                        "task and base method")
    if seeds:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--seeds", help="inclusive range, e.g. 0..9")


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["data.seed"] if cfg["data.seed"] >= 0 else args.seed
    if cfg["data.kind"] == "idx":
        print("gen-data handles synthetic kinds; idx data comes from files",
              file=sys.stderr)
        return 2
    train = gen_synthetic(cfg["data.kind"], cfg["data.n"], cfg["data.k"],
                          cfg["data.noise_sigma"], seed,
                          separation=cfg["data.separation"])
    to_csv(train, out / "train.csv")
    written = ["train.csv"]
    if cfg["task"] == "uda":
        target = shift_domain(train, cfg["data.rotation_deg"],
                              cfg["data.translation"] or None,
                              cfg["data.extra_noise"], seed)
        to_csv(target, out / "target.csv")
        written.append("target.csv")
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    for seed in _parse_seeds(args):
        record = run_experiment(cfg, seed, out_dir=args.out)
        extra = f" pad={record.pad:.3f}" if record.pad is not None else ""
        print(f"seed {seed}: final={record.final_acc:.4f} "
              f"swa={record.swa_acc:.4f}{extra} "
              f"({record.wall_clock_s:.1f}s)")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    grid = {}
    for item in args.grid:
        key, _, values = item.partition("=")
        if not values:
            print(f"--grid needs key=v1,v2,..., got {item!r}", file=sys.stderr)
            return 2
        grid[key.strip()] = [v.strip() for v in values.split(",")]
    baseline = None
    if args.baseline:
        baseline = {}
        for item in args.baseline:
            key, _, value = item.partition("=")
            baseline[key.strip()] = value.strip()
    rows = sweep(cfg, grid, _parse_seeds(args), args.out, baseline=baseline)
    for row in rows:
        print(row)
    print(f"summary written to {Path(args.out) / 'summary.csv'}")
    return 0


def cmd_pad(args) -> int:
    cfg = _load_cfg(args)
    seed = args.seed
    split, target = _build_uda_data(cfg, seed)
    F_s = split.train.X[split.labeled_idx]
    F_t = target.X
    if args.checkpoint:
        params = ParamSet.load(args.checkpoint)
        mlp_cfg = _mlp_config(cfg)
        F_s = forward_features(params, F_s, mlp_cfg, mode="eval")
        F_t = forward_features(params, F_t, mlp_cfg, mode="eval")
        where = "checkpoint features"
    else:
        where = "raw inputs"
    pad = proxy_a_distance(F_s, F_t, probe_seed=seed)
    print(f"PAD on {where}: {pad:.4f}")
    return 0


def cmd_plot(args) -> int:
    if args.kind == "curve":
        records = read_records(args.input)
        emit_plot(records, "curve", args.out_file)
    else:
        rows = np.loadtxt(args.input, delimiter=",", skiprows=1)
        X, y = rows[:, :-1], rows[:, -1].astype(int)
        if X.shape[1] != 2:
            X = pca_project(X, 2)
        Path(args.out_file).write_text(scatter_svg(X, y))
    print(f"wrote {args.out_file}")
    return 0


def cmd_report(args) -> int:
    records = read_records(args.input)
    if not records:
        print("no records", file=sys.stderr)
        return 2
    by_hash: dict[str, list[RunRecord]] = {}
    for r in records:
        by_hash.setdefault(r.config_hash, []).append(r)
    for h, rs in sorted(by_hash.items()):
        s_final = SeedSummary.from_runs([r.final_acc for r in rs])
        s_swa = SeedSummary.from_runs([r.swa_acc for r in rs])
        pads = [r.pad for r in rs if r.pad is not None]
        pad_txt = f" pad={np.mean(pads):.3f}" if pads else ""
        print(f"{h}  n={len(rs)}  final={s_final.mean:.4f}±{s_final.std:.4f}  "
              f"swa={s_swa.mean:.4f}±{s_swa.std:.4f}{pad_txt}")
    if args.compare:
        a, b = args.compare
        if a not in by_hash or b not in by_hash:
            print(f"compare: unknown config hash", file=sys.stderr)
            return 2
        ra = sorted(by_hash[a], key=lambda r: r.seed)
        rb = sorted(by_hash[b], key=lambda r: r.seed)
        if [r.seed for r in ra] != [r.seed for r in rb]:
            print("compare: seed sets differ, cannot pair", file=sys.stderr)
            return 2
        t, p = paired_t_test([r.final_acc for r in ra], [r.final_acc for r in rb])
        print(f"paired t-test {a} vs {b}: t={t:.3f} p={p:.4g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clureg",
        description="clustering-regularized SSL/UDA experiments")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="write synthetic datasets as CSV")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = subs.add_parser("train", help="run one experiment per seed")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("sweep", help="grid of configs x seeds")
    _add_common(p)
    p.add_argument("--grid", action="append", default=[],
                   metavar="KEY=V1,V2", help="sweep axis (repeatable)")
    p.add_argument("--baseline", action="append", default=[],
                   metavar="KEY=VALUE", help="cell to t-test against")
    p.set_defaults(fn=cmd_sweep)

    p = subs.add_parser("pad", help="proxy-A distance for a uda config")
    _add_common(p)
    p.add_argument("--checkpoint", help="measure on checkpoint features "
                   "instead of raw inputs")
    p.set_defaults(fn=cmd_pad)

    p = subs.add_parser("plot", help="emit an SVG from records or CSV data")
    p.add_argument("--input", required=True, help="records.jsonl or data CSV")
    p.add_argument("--kind", choices=("curve", "scatter"), default="curve")
    p.add_argument("--out-file", default="plot.svg")
    p.set_defaults(fn=cmd_plot)

    p = subs.add_parser("report", help="summarize records.jsonl")
    p.add_argument("--input", required=True)
    p.add_argument("--compare", nargs=2, metavar=("HASH_A", "HASH_B"),
                   help="paired t-test between two config hashes")
    p.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
