"""Training loop, metrics, and the experiment grid.

The pipeline per run: split raw molecules, fit the feature scheme on the
training partition only, featurize, build distance-geometric graphs,
standardize targets on train statistics, minibatch Adam with best-
validation model selection, then report test RMSE in original units.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .chemio import DatasetSplit, FeatureScheme, Graph3D, featurize_nodes
from .config import RunConfig
from .distgeo import build_distgeo
from .errors import ConfigError, NumericError, ShapeError, TrainingDiverged
from .filters import GaussianBasis
from .model import (ModelParams, PreparedGraph, batch_graphs, forward_batch,
                    init_params, prepare_graph)
from .optim import AdamState, adam_step

RESULTS_FORMAT_VERSION = 1
CSV_COLUMNS = ("dataset", "model", "max_order", "pooling", "seed", "rmse", "seconds")


@dataclass
class TargetScaler:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, values: np.ndarray, enabled: bool = True) -> "TargetScaler":
        if not enabled:
            return cls()
        values = np.asarray(values, dtype=np.float64)
        std = float(values.std())
        if not np.isfinite(std) or std == 0.0:
            std = 1.0
        return cls(float(values.mean()), std)

    def normalize(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, y):
        return np.asarray(y, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, obj: dict) -> "TargetScaler":
        return cls(obj["mean"], obj["std"])


@dataclass
class Metrics:
    rmse: float
    val_rmse: float
    best_epoch: int
    epochs_run: int
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    seconds: float = 0.0
    test_predictions: list[float] = field(default_factory=list)
    test_targets: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse, "val_rmse": self.val_rmse,
            "best_epoch": self.best_epoch, "epochs_run": self.epochs_run,
            "train_curve": self.train_curve, "val_curve": self.val_curve,
            "seconds": self.seconds,
            "test_predictions": self.test_predictions,
            "test_targets": self.test_targets,
        }


def mse_loss(pred, target):
    """Mean squared error; taped when `pred` is a Tensor."""
    target = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    n = target.shape[0]
    if n == 0:
        raise ShapeError("mse_loss on empty vectors")
    pred_rows = pred.data.shape[0] if isinstance(pred, ad.Tensor) else \
        np.asarray(pred).reshape(-1, 1).shape[0]
    if pred_rows != n:
        raise ShapeError(f"mse_loss length mismatch: {pred_rows} vs {n}")
    if not isinstance(pred, ad.Tensor):
        pred = np.asarray(pred, dtype=np.float64).reshape(-1, 1)
    diff = ad.sub(pred, target)
    out = ad.mul(ad.sum_all(ad.mul(diff, diff)), 1.0 / n)
    return out if isinstance(out, ad.Tensor) else float(out)


def rmse_of(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size == 0:
        return float("nan")
    with np.errstate(over="ignore"):  # huge errors saturate to inf, fine here
        return float(np.sqrt(np.mean((pred - target) ** 2)))


def prepare_partition(graphs: Sequence[Graph3D], scheme: FeatureScheme,
                      cfg: RunConfig, basis: GaussianBasis,
                      require_targets: bool = True) -> list[PreparedGraph]:
    out = []
    for g in graphs:
        if require_targets and g.target is None:
            raise ConfigError(f"molecule {g.mol_id!r} has no target")
        dg = build_distgeo(featurize_nodes(g, scheme), cfg.max_order)
        out.append(prepare_graph(dg, cfg.model, cfg.max_order, basis,
                                 cfg.gcn_norm, cfg.r0, cfg.power_n))
    return out


def evaluate(params: ModelParams, prepared: Sequence[PreparedGraph],
             scaler: TargetScaler, chunk: int = 256) -> tuple[float, list[float]]:
    """Test/val RMSE in original units plus per-molecule predictions."""
    preds: list[float] = []
    for lo in range(0, len(prepared), chunk):
        batch = batch_graphs(prepared[lo:lo + chunk])
        out = forward_batch(params, batch)
        preds.extend(scaler.denormalize(out[:, 0]).tolist())
    targets = [pg.target for pg in prepared]
    return rmse_of(preds, targets), preds


def train_model(split: DatasetSplit, cfg: RunConfig) -> tuple[ModelParams, Metrics]:
    cfg.validate()
    t0 = time.perf_counter()
    basis = GaussianBasis.create(cfg.num_gaussians, cfg.d_cutoff, cfg.gamma)
    scheme = FeatureScheme.fit(split.train)
    train_pg = prepare_partition(split.train, scheme, cfg, basis)
    val_pg = prepare_partition(split.val, scheme, cfg, basis)
    test_pg = prepare_partition(split.test, scheme, cfg, basis,
                                require_targets=False)
    if not train_pg:
        raise ConfigError("empty training partition")
    scaler = TargetScaler.fit(np.array([pg.target for pg in train_pg]),
                              cfg.normalize_targets)

    params = init_params(scheme.dim, cfg.filter_width, cfg.k_layers,
                         cfg.num_gaussians, cfg.pooling, cfg.seed)
    state = AdamState.init(params.named_arrays())
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x736866]))

    best = {k: v.copy() for k, v in params.named_arrays().items()}
    best_val = float("inf")
    best_epoch = 0
    since_best = 0
    train_curve: list[float] = []
    val_curve: list[float] = []
    n_train = len(train_pg)

    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        try:
            for lo in range(0, n_train, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                batch = batch_graphs([train_pg[i] for i in idx])
                tape = ad.Tape()
                lifted = params.lifted(tape)
                pred = forward_batch(lifted, batch)
                loss = mse_loss(pred, scaler.normalize(batch.targets))
                grads = ad.backward(tape, loss)
                arrays, state = adam_step(params.named_arrays(), grads, state,
                                          lr=cfg.lr, beta1=cfg.beta1,
                                          beta2=cfg.beta2, eps=cfg.eps)
                params = ModelParams.from_named(arrays, cfg.pooling)
                epoch_loss += float(loss.data) * len(idx)
            val_rmse, _ = evaluate(params, val_pg, scaler)
        except NumericError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", epoch) from exc
        train_curve.append(epoch_loss / n_train)
        val_curve.append(val_rmse)
        if val_pg and np.isfinite(val_rmse) and val_rmse < best_val:
            best_val = val_rmse
            best_epoch = epoch
            best = {k: v.copy() for k, v in params.named_arrays().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    if not val_pg or not np.isfinite(best_val):
        # no validation signal: keep the final parameters
        best = params.named_arrays()
        best_epoch = epoch
    best_params = ModelParams.from_named(best, cfg.pooling)
    test_rmse, preds = evaluate(best_params, test_pg, scaler)
    metrics = Metrics(
        rmse=test_rmse,
        val_rmse=best_val if np.isfinite(best_val) else float("nan"),
        best_epoch=best_epoch, epochs_run=epoch,
        train_curve=train_curve, val_curve=val_curve,
        seconds=time.perf_counter() - t0,
        test_predictions=preds,
        test_targets=[pg.target for pg in test_pg])
    return best_params, metrics


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

def _run_cell(graphs: Sequence[Graph3D], cfg: RunConfig) -> dict:
    from .chemio import default_split_sizes, split_dataset
    sizes = cfg.split_sizes or default_split_sizes(len(graphs))
    row = {"dataset": cfg.label, "model": cfg.model, "max_order": cfg.max_order,
           "pooling": cfg.pooling, "seed": cfg.seed, "rmse": float("nan"),
           "seconds": 0.0, "error": "", "config": cfg.to_dict()}
    try:
        split = split_dataset(graphs, sizes, cfg.split_seed)
        _, metrics = train_model(split, cfg)
        row["rmse"] = metrics.rmse
        row["seconds"] = round(metrics.seconds, 3)
        row["val_rmse"] = metrics.val_rmse
        row["best_epoch"] = metrics.best_epoch
        row["epochs_run"] = metrics.epochs_run
    except Exception as exc:  # per-run failures recorded, grid continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Median test RMSE across seeds per (dataset, model, max_order, pooling)."""
    groups: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for row in rows:
        key = (row["dataset"], row["model"], row["max_order"], row["pooling"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in order:
        ok = [r["rmse"] for r in groups[key]
              if not r.get("error") and np.isfinite(r["rmse"])]
        out.append({
            "dataset": key[0], "model": key[1], "max_order": key[2],
            "pooling": key[3],
            "median_rmse": float(np.median(ok)) if ok else float("nan"),
            "n_seeds": len(ok),
        })
    return out


def write_results(rows: Sequence[dict], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in CSV_COLUMNS])
    with open(out_dir / "results.json", "w") as fh:
        json.dump({"format_version": RESULTS_FORMAT_VERSION, "rows": list(rows)},
                  fh, indent=1)
    summary = summarize(rows)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("dataset", "model", "max_order", "pooling",
                         "median_rmse", "n_seeds"))
        for row in summary:
            writer.writerow([row[c] for c in ("dataset", "model", "max_order",
                                              "pooling", "median_rmse", "n_seeds")])


def run_grid(graphs: Sequence[Graph3D], configs: Sequence[RunConfig],
             out_dir=None, workers: int = 1, progress=None) -> list[dict]:
    """One row per config; failures are recorded and the grid continues."""
    rows: list[dict] = []
    if workers > 1 and len(configs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, graphs, cfg) for cfg in configs]
            for fut in futures:
                rows.append(fut.result())
                if progress:
                    progress(rows[-1])
    else:
        for cfg in configs:
            rows.append(_run_cell(graphs, cfg))
            if progress:
                progress(rows[-1])
    if out_dir is not None:
        write_results(rows, out_dir)
    return rows
