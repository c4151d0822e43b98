"""Command-line entry point: prepare, train, eval, grid, gradcheck.

Exit codes are a stable contract for CI: 0 success, 1 run failure
(divergence, failed gradient check, all grid cells failed), 2 usage or
input error (bad config, unreadable dataset, zero parsable molecules).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import chemio, config as cfgmod, distgeo
from .errors import ConfigError, GraphError, NumericError, TrainingDiverged
from .filters import GaussianBasis
from .gradcheck import run_gradcheck
from .model import load_checkpoint, save_checkpoint
from .train import (RESULTS_FORMAT_VERSION, TargetScaler, evaluate,
                    prepare_partition, run_grid, summarize, train_model)

RESULTS_ENV = "DGGCN_RESULTS_DIR"


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _load_molecules(path, fmt: str | None = None):
    """Read molecules from SDF or JSONL; returns (molecules, record_errors)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input not found: {p}")
    if fmt is None:
        fmt = "sdf" if p.suffix.lower() in (".sdf", ".mol") else "jsonl"
    record_errors: list = []
    if fmt == "sdf":
        mols = chemio.load_sdf(p, errors=record_errors)
    elif fmt == "jsonl":
        mols = chemio.load_jsonl(p)
    else:
        raise ConfigError(f"unknown format {fmt!r} (expected sdf or jsonl)")
    return mols, record_errors


def _effective_config(args) -> "cfgmod.RunConfig":
    """File config -> named flags -> --set overrides, in that order."""
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
    named = []
    for flag in ("dataset", "model", "max_order", "pooling", "seed"):
        value = getattr(args, flag, None)
        if value is not None:
            named.append(f"{flag}={value}")
    cfg = cfgmod.apply_overrides(cfg, named)
    cfg = cfgmod.apply_overrides(cfg, args.set or [])
    return cfg


def _resolve_out(explicit, default_name: str) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get(RESULTS_ENV)
    if env:
        return Path(env) / default_name
    return Path("runs") / default_name


def _echo_config(cfg) -> None:
    print("effective config:")
    print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_prepare(args) -> int:
    mols, record_errors = _load_molecules(args.input, args.format)
    for err in record_errors:
        print(f"skipped record {err.record_index} ({err.mol_id or 'unnamed'}): "
              f"{err.message}", file=sys.stderr)
    if not mols:
        print("error: no parsable molecules in input", file=sys.stderr)
        return 2
    if args.target_field or args.targets_csv:
        n = chemio.attach_targets(mols, sdf_field=args.target_field or None,
                                  csv_path=args.targets_csv or None)
        print(f"targets attached: {n}/{len(mols)}")

    counts = [0, 0, 0]
    for g in mols:
        for order in distgeo.khop_pairs(g.bonds, g.n_atoms, args.max_order).values():
            counts[order - 1] += 1
    print(f"molecules: {len(mols)}")
    print(f"edge pairs by order: 1st={counts[0]} 2nd={counts[1]} 3rd={counts[2]}")

    if args.out:
        written = chemio.save_jsonl(args.out, mols)
        print(f"wrote {written} molecules to {args.out}")
    if args.dump_distgeo:
        scheme = chemio.FeatureScheme.fit(mols)
        with open(args.dump_distgeo, "w") as fh:
            for g in mols:
                dg = distgeo.build_distgeo(chemio.featurize_nodes(g, scheme),
                                           args.max_order)
                fh.write(json.dumps(distgeo.to_json_obj(dg)) + "\n")
        print(f"wrote distance-geometric dump to {args.dump_distgeo}")
    return 0


def _split_for(cfg, graphs):
    sizes = cfg.split_sizes or chemio.default_split_sizes(len(graphs))
    return chemio.split_dataset(graphs, sizes, cfg.split_seed)


def _cmd_train(args) -> int:
    cfg = _effective_config(args)
    if not cfg.dataset:
        raise ConfigError("no dataset given (use --dataset or a config file)")
    cfg.validate()
    _echo_config(cfg)
    graphs, _ = _load_molecules(cfg.dataset)
    if not graphs:
        raise ConfigError(f"no molecules in {cfg.dataset}")
    split = _split_for(cfg, graphs)
    params, metrics = train_model(split, cfg)

    # reconstruct the artifacts train_model fit internally (deterministic)
    scheme = chemio.FeatureScheme.fit(split.train)
    scaler = TargetScaler.fit(np.array([g.target for g in split.train]),
                              cfg.normalize_targets)
    basis = GaussianBasis.create(cfg.num_gaussians, cfg.d_cutoff, cfg.gamma)

    out = _resolve_out(args.out, f"{cfg.label}_{cfg.model}{cfg.max_order}_s{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", params, basis,
                    extra={"config": cfg.to_dict(), "scheme": scheme.to_dict(),
                           "scaler": scaler.to_dict()})
    with open(out / "metrics.json", "w") as fh:
        json.dump({"format_version": RESULTS_FORMAT_VERSION,
                   "config": cfg.to_dict(), "metrics": metrics.to_dict()},
                  fh, indent=1)
    print(f"epochs run: {metrics.epochs_run} (best epoch {metrics.best_epoch})")
    print(f"val RMSE: {metrics.val_rmse:.6f}")
    print(f"test RMSE: {metrics.rmse:.6f}")
    print(f"artifacts in {out}")
    return 0


def _cmd_eval(args) -> int:
    params, basis, extra = load_checkpoint(args.checkpoint)
    for key in ("config", "scheme", "scaler"):
        if key not in extra:
            raise ConfigError(f"checkpoint is missing the {key!r} record")
    cfg = cfgmod.from_dict(extra["config"])
    scheme = chemio.FeatureScheme.from_dict(extra["scheme"])
    scaler = TargetScaler.from_dict(extra["scaler"])

    dataset = args.dataset or cfg.dataset
    if not dataset:
        raise ConfigError("no dataset given and none recorded in the checkpoint")
    graphs, _ = _load_molecules(dataset)
    if args.partition == "all":
        subset = graphs
    else:
        subset = getattr(_split_for(cfg, graphs), args.partition)
    prepared = prepare_partition(subset, scheme, cfg, basis)
    rmse, _ = evaluate(params, prepared, scaler)
    print(f"{args.partition} RMSE: {rmse:.6f} ({len(prepared)} molecules)")
    return 0


def _parse_list(text: str, coerce=str) -> list:
    return [coerce(tok) for tok in text.split(",") if tok.strip()]


def _cmd_grid(args) -> int:
    base = _effective_config(args)
    if not base.dataset:
        raise ConfigError("no dataset given (use --dataset or a config file)")
    graphs, _ = _load_molecules(base.dataset)
    if not graphs:
        raise ConfigError(f"no molecules in {base.dataset}")

    models = _parse_list(args.models)
    orders = _parse_list(args.orders, int)
    poolings = _parse_list(args.poolings)
    seeds = _parse_list(args.seeds, int)
    configs = []
    for model in models:
        # the standard baseline has no geometric edges: one order-1 cell only
        model_orders = [1] if model == "standard" else orders
        for order in model_orders:
            for pooling in poolings:
                for seed in seeds:
                    configs.append(dataclasses.replace(
                        base, model=model, max_order=order,
                        pooling=pooling, seed=seed))
    for cfg in configs:
        cfg.validate()

    out = _resolve_out(args.out, f"grid_{base.label}")
    print(f"{len(configs)} runs -> {out}")

    def progress(row):
        status = f"rmse={row['rmse']:.4f}" if not row["error"] else row["error"]
        print(f"  {row['model']:<9s} order={row['max_order']} "
              f"pool={row['pooling']:<4s} seed={row['seed']} {status}")

    rows = run_grid(graphs, configs, out_dir=out, workers=args.workers,
                    progress=progress)
    print("summary (median across seeds):")
    for line in summarize(rows):
        print(f"  {line['model']:<9s} order={line['max_order']} "
              f"pool={line['pooling']:<4s} median_rmse={line['median_rmse']:.4f} "
              f"n={line['n_seeds']}")
    return 0 if any(not r["error"] for r in rows) else 1


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(seed=args.seed)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dggcn",
        description="Distance-geometric graph convolutions for molecules.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare", help="parse molecules, write JSONL, "
                                       "summarize geometric edges")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("sdf", "jsonl"), default=None,
                   help="inferred from the file suffix when omitted")
    p.add_argument("--out", default=None, help="JSONL output path")
    p.add_argument("--target-field", default="",
                   help="SDF data field holding the target value")
    p.add_argument("--targets-csv", default="",
                   help="CSV sidecar with id,target columns")
    p.add_argument("--dump-distgeo", default=None,
                   help="also write per-molecule edge lists with distances")
    p.add_argument("--max-order", type=int, default=3, choices=(1, 2, 3))
    p.set_defaults(func=_cmd_prepare)

    def add_config_flags(p, with_model=True):
        p.add_argument("--config", default=None, help="TOML or JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--dataset", default=None)
        if with_model:
            p.add_argument("--model",
                           choices=("standard", "geometric", "dggcn"),
                           default=None)
            p.add_argument("--max-order", dest="max_order", type=int,
                           choices=(1, 2, 3), default=None)
            p.add_argument("--pooling", choices=("mean", "sum"), default=None)
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train one model, write checkpoint+metrics")
    add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None,
                   help="defaults to the dataset recorded in the checkpoint")
    p.add_argument("--partition", choices=("train", "val", "test", "all"),
                   default="test")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("grid", help="run a model/order/pooling/seed grid")
    add_config_flags(p, with_model=False)
    p.add_argument("--models", default="standard,geometric,dggcn")
    p.add_argument("--orders", default="1,2,3")
    p.add_argument("--poolings", default="mean")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
