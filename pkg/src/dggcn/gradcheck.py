"""Finite-difference verification of the reverse-mode gradients.

Two levels of check:

* per-op: every differentiable tape op is exercised on small random inputs
  and its backward pass compared against central differences;
* full model: the complete message-passing network (embedding, CFConv
  layers, readout, pooling, MSE loss) on a batch of generated molecules.

Errors are reported as norm-scaled relative error
``max|a - b| / max(floor, max|a|, max|b|)`` - an elementwise quotient is
meaningless for entries that sit below the resolution of the difference
quotient itself (about 1e-10 in absolute terms for h = 1e-5).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import synth
from .chemio import FeatureScheme, featurize_nodes, split_dataset
from .config import RunConfig
from .distgeo import build_distgeo
from .filters import GaussianBasis
from .model import batch_graphs, forward_batch, init_params, prepare_graph
from .train import mse_loss

OP_TOL = 1e-4
MODEL_TOL = 1e-3
_FD_H = 1e-5


def _rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(floor, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def _fd_gradients(f, arrays: dict[str, np.ndarray], h: float = _FD_H
                  ) -> dict[str, np.ndarray]:
    """Central differences of a scalar function of several named arrays."""
    out = {}
    for name, base in arrays.items():
        g = np.zeros_like(base, dtype=np.float64)
        flat = g.ravel()
        work = {k: v.copy() for k, v in arrays.items()}
        wflat = work[name].ravel()
        for i in range(flat.size):
            keep = wflat[i]
            wflat[i] = keep + h
            up = f(work)
            wflat[i] = keep - h
            down = f(work)
            wflat[i] = keep
            flat[i] = (up - down) / (2.0 * h)
        out[name] = g
    return out


def _tape_gradients(build, arrays: dict[str, np.ndarray]
                    ) -> dict[str, np.ndarray]:
    tape = ad.Tape()
    leaves = {k: tape.leaf(v, k) for k, v in arrays.items()}
    loss = build(leaves)
    return ad.backward(tape, loss)


def _scalarize(t):
    """sum(x * x) - a scalar probe that keeps every entry's gradient alive."""
    return ad.sum_all(ad.mul(t, t))


def _op_cases(rng: np.random.Generator):
    a23 = rng.normal(size=(2, 3))
    b34 = rng.normal(size=(3, 4))
    x24 = rng.normal(size=(2, 4))
    row4 = rng.normal(size=(1, 4))
    msgs = rng.normal(size=(5, 3))
    seg = np.array([0, 0, 2, 1, 2])
    idx = np.array([1, 0, 1])
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=(2,))

    return {
        "matmul": ({"a": a23, "b": b34},
                   lambda lv: _scalarize(ad.matmul(lv["a"], lv["b"]))),
        "add": ({"a": x24, "b": row4},
                lambda lv: _scalarize(ad.add(lv["a"], lv["b"]))),
        "sub": ({"a": x24, "b": row4},
                lambda lv: _scalarize(ad.sub(lv["a"], lv["b"]))),
        "mul": ({"a": x24, "b": row4},
                lambda lv: _scalarize(ad.mul(lv["a"], lv["b"]))),
        "neg": ({"a": x24},
                lambda lv: _scalarize(ad.neg(lv["a"]))),
        "concat_rows": ({"a": a23, "b": msgs},
                        lambda lv: _scalarize(ad.concat_rows([lv["a"], lv["b"]]))),
        "gather_rows": ({"a": a23},
                        lambda lv: _scalarize(ad.gather_rows(lv["a"], idx))),
        "segment_sum": ({"a": msgs},
                        lambda lv: _scalarize(ad.segment_sum(lv["a"], seg, 3))),
        "sum_all": ({"a": msgs},
                    lambda lv: ad.mul(ad.sum_all(lv["a"]), ad.sum_all(lv["a"]))),
        "ssp": ({"a": x24},
                lambda lv: _scalarize(ad.ssp(lv["a"]))),
        "dense": ({"x": a23, "w": w, "b": b},
                  lambda lv: _scalarize(ad.dense(lv["x"], lv["w"], lv["b"]))),
    }


def check_op_gradients(seed: int = 0, h: float = _FD_H) -> dict[str, float]:
    """Worst relative error per op between tape and central differences."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6F7063]))
    errors: dict[str, float] = {}
    for name, (arrays, build) in _op_cases(rng).items():
        taped = _tape_gradients(build, arrays)

        def numeric(work, build=build):
            val = build({k: v for k, v in work.items()})
            return float(np.asarray(val))

        fd = _fd_gradients(numeric, arrays, h)
        errors[name] = max(_rel_err(taped[k], fd[k]) for k in arrays)
    return errors


def _model_case(seed: int):
    mols = synth.make_dataset(6, seed=seed)
    split = split_dataset(mols, (4, 1, 1), seed=0)
    scheme = FeatureScheme.fit(split.train)
    basis = GaussianBasis.create(num_gaussians=8, d_cutoff=6.0)
    prepared = [
        prepare_graph(build_distgeo(featurize_nodes(g, scheme), 3),
                      "dggcn", 3, basis, "target", 1.39, 4.55)
        for g in split.train[:3]
    ]
    batch = batch_graphs(prepared)
    params = init_params(scheme.dim, 8, 2, 8, "mean", seed)
    targets = np.nan_to_num(batch.targets)
    return params, batch, targets


def check_model_gradient(seed: int = 0, h: float = _FD_H) -> float:
    """Relative error of the full-network gradient on a small batch."""
    params, batch, targets = _model_case(seed)
    arrays = params.named_arrays()

    tape = ad.Tape()
    lifted = params.lifted(tape)
    loss = mse_loss(forward_batch(lifted, batch), targets)
    taped = ad.backward(tape, loss)

    def numeric(work):
        from .model import ModelParams
        p = ModelParams.from_named(work, params.pooling)
        val = mse_loss(forward_batch(p, batch), targets)
        return float(val)

    fd = _fd_gradients(numeric, arrays, h)
    return max(_rel_err(taped[k], fd[k]) for k in arrays)


@dataclass
class GradCheckReport:
    op_errors: dict[str, float] = field(default_factory=dict)
    model_error: float = float("nan")
    op_tol: float = OP_TOL
    model_tol: float = MODEL_TOL

    @property
    def max_op_error(self) -> float:
        return max(self.op_errors.values()) if self.op_errors else float("nan")

    @property
    def passed(self) -> bool:
        return (self.op_errors != {}
                and all(e < self.op_tol for e in self.op_errors.values())
                and self.model_error < self.model_tol)

    def lines(self) -> list[str]:
        out = [f"op {name:<12s} rel_err={err:.3e} "
               f"{'ok' if err < self.op_tol else 'FAIL'}"
               for name, err in sorted(self.op_errors.items())]
        out.append(f"model forward/backward rel_err={self.model_error:.3e} "
                   f"{'ok' if self.model_error < self.model_tol else 'FAIL'}")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{verdict} max_rel_err={max(self.max_op_error, self.model_error):.3e}")
        return out


def run_gradcheck(seed: int = 0) -> GradCheckReport:
    report = GradCheckReport(op_errors=check_op_gradients(seed))
    report.model_error = check_model_gradient(seed)
    return report
