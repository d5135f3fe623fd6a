"""Command-line entry point: ``rcpmod <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datakit
from .autoencoder import load_checkpoint
from .config import build_config
from .detection import OUTLIER_TYPES, auc, per_type_auc, write_metrics
from .errors import ConfigError, ContractError, DataFormatError, TrainingDivergence
from .gradcheck import run_gradcheck
from .numeric import make_rng
from .training import run_experiment, score_dataset, sweep

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# rng stream tags for the standalone data commands
_SYNTH, _INJECT, _MASK = 31, 32, 33


def _config(args, **kwargs):
    return build_config(args.config, args.set or (), **kwargs)


def _with_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")


def cmd_synth(args) -> int:
    cfg = _config(args)
    rng = make_rng(cfg.seed, _SYNTH)
    ds = datakit.synthesize(cfg.synth_clusters, cfg.synth_dims, cfg.synth_n, cfg.synth_noise, rng)
    ds = datakit.normalize(ds)
    ds.types = None  # labels come from the inject command
    ds.provenance["seed"] = cfg.seed
    datakit.save_dataset(ds, args.out)
    print(f"wrote {ds.n} instances x {ds.n_views} views to {args.out}")
    return EXIT_OK


def _load_normalized(path) -> datakit.MultiViewDataset:
    ds = datakit.load_dataset(path)
    return ds if ds.provenance.get("normalized") else datakit.normalize(ds)


def cmd_inject(args) -> int:
    cfg = _config(args)
    ds = _load_normalized(args.data)
    if ds.types is not None and np.any(ds.types > 0):
        raise ConfigError(f"{args.data} already carries outlier labels")
    ds.types = None
    ds = datakit.inject(ds, cfg.rho1, cfg.rho2, cfg.rho3, make_rng(cfg.seed, _INJECT))
    ds.provenance["inject_seed"] = cfg.seed
    ds.provenance["source"] = str(args.data)
    datakit.save_dataset(ds, args.out)
    counts = {OUTLIER_TYPES[c]: int(np.sum(ds.types == c)) for c in OUTLIER_TYPES}
    print(json.dumps(counts))
    return EXIT_OK


def cmd_mask(args) -> int:
    cfg = _config(args)
    ds = _load_normalized(args.data)
    ds = datakit.apply_missing(ds, cfg.missing_rate, make_rng(cfg.seed, _MASK))
    ds.provenance["mask_seed"] = cfg.seed
    ds.provenance["source"] = str(args.data)
    datakit.save_dataset(ds, args.out)
    print(f"{int((~ds.presence.all(axis=1)).sum())} of {ds.n} instances lost a view")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)

    def progress(row):
        if args.verbose:
            print(f"epoch {row['epoch']:4d} total {row['total']:.4f} auc {row.get('auc', '')}", file=sys.stderr)

    res = run_experiment(cfg, args.out, progress=progress)
    print(json.dumps(res.report.metrics(), sort_keys=True))
    return EXIT_OK


def cmd_score(args) -> int:
    stack, _, meta = load_checkpoint(args.checkpoint)
    cfg = _config(args)
    ds = _load_normalized(args.data)
    report, _ = score_dataset(stack, ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_scores(out / "scores.csv")
    write_metrics(out / "metrics.json", {**report.metrics(), "checkpoint_config_hash": meta.get("config_hash")})
    print(json.dumps(report.metrics(), sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.scores, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "label" not in rows[0]:
        raise DataFormatError(f"{args.scores} has no label column")
    s = np.array([float(r[args.column]) for r in rows])
    names = {v: k for k, v in OUTLIER_TYPES.items()}
    types = np.array([names.get(r["type"], 0) for r in rows])
    print(json.dumps({"auc": auc(s, types > 0), "type_auc": per_type_auc(s, types)}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    field = type(getattr(cfg, args.param, None))
    if field not in (int, float):
        raise ConfigError(f"cannot sweep over {args.param!r}")
    values = [field(v) for v in args.values.split(",") if v.strip()]
    for value, a in sweep(cfg, args.param, values, args.out):
        print(f"{args.param}={value} auc={a}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(range(args.seeds), args.h)
    worst = {}
    for r in results:
        worst[r.term] = max(worst.get(r.term, 0.0), r.rel_error)
    failed = False
    for term, err in worst.items():
        ok = err <= args.tol
        failed |= not ok
        print(f"{term:14s} max_rel_error={err:.3e} {'ok' if ok else 'FAIL'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcpmod", description="Partial multi-view outlier detection.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a normalized synthetic dataset directory")
    _with_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    for name, func, text in (("inject", cmd_inject, "inject attribute/class/class-attribute outliers"),
                             ("mask", cmd_mask, "remove one view from a fraction of instances")):
        p = sub.add_parser(name, help=text)
        _with_config(p)
        p.add_argument("--data", required=True, help="input dataset directory")
        p.add_argument("--out", required=True, help="derived dataset directory")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="train, score and write artifacts")
    _with_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true", help="per-epoch progress on stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a dataset with a saved checkpoint")
    _with_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="AUC of a labeled scores.csv")
    p.add_argument("--scores", required=True)
    p.add_argument("--column", default="s", choices=("s", "s_r", "s_c"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one run per value of a config scalar")
    _with_config(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.add_argument("--out", required=True, help="CSV of (value, auc)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ContractError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
