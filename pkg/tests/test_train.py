"""Training-loop tests: loss, scaling, determinism, selection, the grid."""
import numpy as np
import pytest

from dggcn import autodiff as ad
from dggcn import synth
from dggcn.chemio import DatasetSplit, split_dataset
from dggcn.config import RunConfig
from dggcn.errors import ShapeError, TrainingDiverged
from dggcn.train import (CSV_COLUMNS, Metrics, TargetScaler, evaluate,
                         mse_loss, prepare_partition, rmse_of, run_grid,
                         summarize, train_model)

MOLS = synth.make_dataset(30, seed=5)
SPLIT = split_dataset(MOLS, (20, 5, 5), seed=0)


def _cfg(**kw):
    base = dict(model="dggcn", max_order=3, pooling="mean", k_layers=1,
                filter_width=8, num_gaussians=8, d_cutoff=6.0, epochs=4,
                patience=50, batch_size=8, seed=0, lr=1e-2)
    base.update(kw)
    return RunConfig(**base)


# -- loss and scaler ---------------------------------------------------------

def test_mse_zero_when_equal():
    v = np.array([1.0, -2.0, 0.5])
    assert mse_loss(v, v) == 0.0


def test_mse_hand_value():
    assert mse_loss(np.array([0.0]), np.array([2.0])) == 4.0


def test_rmse_is_sqrt_mse():
    rng = np.random.default_rng(0)
    p, t = rng.normal(size=12), rng.normal(size=12)
    assert rmse_of(p, t) == pytest.approx(np.sqrt(mse_loss(p, t)), rel=1e-12)


def test_mse_empty_raises():
    with pytest.raises(ShapeError, match="empty"):
        mse_loss(np.array([]), np.array([]))


def test_mse_length_mismatch_raises():
    with pytest.raises(ShapeError, match="mismatch"):
        mse_loss(np.zeros(3), np.zeros(4))


def test_mse_taped_gradient():
    pred = np.array([[1.0], [3.0]])
    target = np.array([2.0, 2.0])
    tape = ad.Tape()
    loss = mse_loss(tape.leaf(pred, "p"), target)
    grads = ad.backward(tape, loss)
    assert np.allclose(grads["p"], 2.0 * (pred - 2.0) / 2.0)


def test_scaler_round_trip():
    rng = np.random.default_rng(1)
    y = rng.normal(3.0, 2.5, size=200)
    s = TargetScaler.fit(y)
    assert np.max(np.abs(s.denormalize(s.normalize(y)) - y)) < 1e-12
    assert abs(s.normalize(y).mean()) < 1e-12
    assert s.normalize(y).std() == pytest.approx(1.0)


def test_scaler_constant_targets_safe():
    s = TargetScaler.fit(np.full(5, 7.0))
    assert s.std == 1.0
    assert s.normalize(7.0) == 0.0


def test_scaler_disabled_is_identity():
    s = TargetScaler.fit(np.array([5.0, 9.0]), enabled=False)
    assert (s.mean, s.std) == (0.0, 1.0)


# -- train_model -------------------------------------------------------------

def test_training_deterministic_bit_identical():
    p1, m1 = train_model(SPLIT, _cfg())
    p2, m2 = train_model(SPLIT, _cfg())
    assert m1.rmse == m2.rmse
    assert m1.train_curve == m2.train_curve
    assert m1.val_curve == m2.val_curve
    assert m1.test_predictions == m2.test_predictions
    a1, a2 = p1.named_arrays(), p2.named_arrays()
    for k in a1:
        assert np.array_equal(a1[k], a2[k]), k


def test_epochs_zero_returns_initialized_baseline():
    params, m = train_model(SPLIT, _cfg(epochs=0))
    assert m.epochs_run == 0 and m.best_epoch == 0
    assert m.train_curve == [] and m.val_curve == []
    assert np.isfinite(m.rmse)
    # params equal a fresh initialization under the same seed
    from dggcn.model import init_params
    fresh = init_params(5, 8, 1, 8, "mean", 0)
    for k, v in params.named_arrays().items():
        assert np.array_equal(v, fresh.named_arrays()[k])


def test_best_val_selection_and_curves():
    _, m = train_model(SPLIT, _cfg(epochs=6))
    assert len(m.val_curve) == m.epochs_run == 6
    assert m.val_rmse == min(m.val_curve)
    assert m.best_epoch == 1 + int(np.argmin(m.val_curve))


def test_patience_stops_early():
    _, m = train_model(SPLIT, _cfg(epochs=60, patience=2))
    assert m.epochs_run < 60


def test_reported_rmse_matches_recomputation():
    _, m = train_model(SPLIT, _cfg())
    again = rmse_of(m.test_predictions, m.test_targets)
    assert abs(m.rmse - again) <= 1e-12


def test_divergence_aborts_with_epoch():
    with pytest.raises(TrainingDiverged) as info:
        train_model(SPLIT, _cfg(lr=1e30, epochs=10))
    assert info.value.epoch >= 1


def test_overfit_ten_molecules():
    ten = MOLS[:10]
    split = DatasetSplit(list(ten), list(ten), list(ten))
    cfg = _cfg(k_layers=2, filter_width=32, num_gaussians=24, epochs=500,
               patience=500, batch_size=10, lr=1e-2)
    _, m = train_model(split, cfg)
    assert m.rmse < 0.05  # train==test here: capacity smoke test


def test_evaluate_chunking_consistent():
    cfg = _cfg()
    params, _ = train_model(SPLIT, cfg)
    from dggcn.chemio import FeatureScheme
    from dggcn.filters import GaussianBasis
    basis = GaussianBasis.create(cfg.num_gaussians, cfg.d_cutoff, cfg.gamma)
    scheme = FeatureScheme.fit(SPLIT.train)
    prepared = prepare_partition(SPLIT.test, scheme, cfg, basis)
    scaler = TargetScaler.fit(np.array([g.target for g in SPLIT.train]))
    r1, p1 = evaluate(params, prepared, scaler, chunk=2)
    r2, p2 = evaluate(params, prepared, scaler, chunk=256)
    assert r1 == pytest.approx(r2, abs=1e-12)
    assert np.allclose(p1, p2, atol=1e-12)


def test_missing_target_rejected():
    broken = [g for g in MOLS[:8]]
    broken[3] = synth.make_molecule(np.random.default_rng(99), index=99)
    broken[3].target = None
    split = DatasetSplit(broken, broken[:2], broken[:2])
    with pytest.raises(Exception, match="no target"):
        train_model(split, _cfg())


# -- grid --------------------------------------------------------------------

def test_run_grid_rows_and_files(tmp_path):
    configs = [_cfg(model="standard", epochs=2, seed=s,
                    split_sizes=(20, 5, 5), dataset_name="synth")
               for s in (0, 1)]
    configs.append(_cfg(model="dggcn", epochs=2, seed=0,
                        split_sizes=(20, 5, 5), dataset_name="synth"))
    rows = run_grid(MOLS, configs, out_dir=tmp_path)
    assert len(rows) == 3
    assert all(r["error"] == "" for r in rows)
    assert all(np.isfinite(r["rmse"]) for r in rows)
    assert rows[0]["config"]["model"] == "standard"

    header = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 4
    import json
    blob = json.loads((tmp_path / "results.json").read_text())
    assert blob["format_version"] == 1
    assert blob["rows"][2]["config"]["model"] == "dggcn"
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "dataset,model,max_order,pooling,median_rmse,n_seeds"
    assert len(summary) == 3  # (standard x2 seeds) grouped + dggcn


def test_run_grid_empty():
    assert run_grid(MOLS, []) == []


def test_run_grid_failure_recorded_and_continues(tmp_path):
    bad = _cfg(split_sizes=(900, 5, 5))  # exceeds dataset size
    good = _cfg(model="standard", epochs=1, split_sizes=(20, 5, 5))
    rows = run_grid(MOLS, [bad, good], out_dir=tmp_path)
    assert "ConfigError" in rows[0]["error"]
    assert not np.isfinite(rows[0]["rmse"])
    assert rows[1]["error"] == "" and np.isfinite(rows[1]["rmse"])


def test_summarize_medians():
    rows = [
        {"dataset": "d", "model": "m", "max_order": 3, "pooling": "mean",
         "seed": s, "rmse": r, "error": ""}
        for s, r in [(0, 1.0), (1, 3.0), (2, 2.0)]
    ]
    rows.append({"dataset": "d", "model": "m", "max_order": 3, "pooling": "mean",
                 "seed": 3, "rmse": float("nan"), "error": "boom"})
    out = summarize(rows)
    assert len(out) == 1
    assert out[0]["median_rmse"] == 2.0
    assert out[0]["n_seeds"] == 3


def test_grid_determinism():
    cfgs = [_cfg(epochs=2, split_sizes=(20, 5, 5))]
    r1 = run_grid(MOLS, cfgs)
    r2 = run_grid(MOLS, cfgs)
    assert r1[0]["rmse"] == r2[0]["rmse"]
