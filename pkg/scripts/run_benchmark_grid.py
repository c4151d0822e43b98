#!/usr/bin/env python3
"""Run the full comparison grid on a prepared benchmark dataset.

Reproduces the headline table: Standard GC / Geometric GC / DG-GCN across
neighbor orders, pooling modes, and seeds, reporting median test RMSE.
The dataset must already be a JSONL file with 3D coordinates and targets
(see README, "Benchmark data"; `dggcn prepare` converts SDF inputs).

The canonical invocations:

    python scripts/run_benchmark_grid.py --dataset data/esol.jsonl \
        --name esol --sizes 901,113,113 --out runs/esol_grid
    python scripts/run_benchmark_grid.py --dataset data/freesolv.jsonl \
        --name freesolv --sizes 510,65,64 --poolings mean,sum \
        --out runs/freesolv_grid
"""
import argparse
import dataclasses

from dggcn.chemio import load_jsonl
from dggcn.config import RunConfig
from dggcn.train import run_grid, summarize


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True, help="prepared JSONL file")
    ap.add_argument("--name", default="", help="dataset label for the results")
    ap.add_argument("--sizes", default="",
                    help="train,val,test sizes; default 80/10/10")
    ap.add_argument("--models", default="standard,geometric,dggcn")
    ap.add_argument("--orders", default="1,2,3")
    ap.add_argument("--poolings", default="mean")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--patience", type=int, default=30)
    ap.add_argument("--out", default="runs/benchmark_grid")
    args = ap.parse_args()

    graphs = load_jsonl(args.dataset)
    if not graphs:
        print(f"no molecules in {args.dataset}")
        return 2
    sizes = tuple(int(t) for t in args.sizes.split(",")) if args.sizes else None
    base = RunConfig(dataset=args.dataset, dataset_name=args.name,
                     split_sizes=sizes, split_seed=0,
                     epochs=args.epochs, patience=args.patience)

    orders = [int(t) for t in args.orders.split(",") if t]
    configs = []
    for model in [t for t in args.models.split(",") if t]:
        for order in ([1] if model == "standard" else orders):
            for pooling in [t for t in args.poolings.split(",") if t]:
                for seed in [int(t) for t in args.seeds.split(",") if t]:
                    configs.append(dataclasses.replace(
                        base, model=model, max_order=order,
                        pooling=pooling, seed=seed))
    for cfg in configs:
        cfg.validate()
    print(f"{len(configs)} runs on {len(graphs)} molecules -> {args.out}")

    def progress(row):
        tag = f"rmse={row['rmse']:.4f}" if not row["error"] else row["error"]
        print(f"{row['model']:<9s} order={row['max_order']} "
              f"pool={row['pooling']:<4s} seed={row['seed']} {tag} "
              f"({row['seconds']}s)")

    rows = run_grid(graphs, configs, out_dir=args.out, progress=progress)
    print("\nmedian test RMSE across seeds:")
    for line in summarize(rows):
        print(f"  {line['model']:<9s} order={line['max_order']} "
              f"pool={line['pooling']:<4s} {line['median_rmse']:.4f} "
              f"(n={line['n_seeds']})")
    return 0 if any(not r["error"] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
