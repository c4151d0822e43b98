"""Reverse-mode automatic differentiation on dense float64 tensors.

Define-by-run: every operation appends a node to an explicit ``Tape``, so
creation order is already a topological order and the backward pass is a
single reverse sweep.  The op set is the minimum the message-passing models
need: matrix multiply, broadcasting elementwise arithmetic, row gather /
segment-sum (the scatter pair used for edge aggregation and graph pooling),
row concatenation, full reduction, and the shifted-softplus nonlinearity.

Operations accept plain ``numpy`` arrays or scalars alongside ``Tensor``
arguments; plain values are treated as constants (no gradient).  When no
argument carries a tape the op runs untaped and returns a bare ``ndarray``,
so the same forward code serves both training and inference.

Every op validates that its result is finite; NaN/Inf raises
``NumericError`` immediately rather than surfacing as a corrupted update
many steps later.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

Array = np.ndarray


class Tape:
    """Append-only record of operations; holds nodes in creation order."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self._leaf_names: dict[str, Tensor] = {}

    def _append(self, t: "Tensor") -> int:
        self.nodes.append(t)
        return len(self.nodes) - 1

    def leaf(self, data: Array, name: str | None = None) -> "Tensor":
        """Register a differentiable leaf (a parameter)."""
        t = Tensor(np.asarray(data, dtype=np.float64), tape=self, parents=(), vjp=None)
        if name is not None:
            if name in self._leaf_names:
                raise ValueError(f"duplicate leaf name {name!r}")
            self._leaf_names[name] = t
        return t

    @property
    def leaves(self) -> dict[str, "Tensor"]:
        return dict(self._leaf_names)


class Tensor:
    """A float64 array recorded on a tape (or a detached constant result)."""

    __slots__ = ("data", "tape", "node_id", "parents", "vjp", "op")

    def __init__(
        self,
        data: Array,
        tape: Tape | None,
        parents: tuple["Tensor | None", ...] = (),
        vjp: Callable[[Array], tuple[Array | None, ...]] | None = None,
        op: str = "leaf",
    ) -> None:
        self.data = data
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.node_id = tape._append(self) if tape is not None else -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(op={self.op}, shape={self.data.shape})"


def _data(x) -> Array:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Tensor) and a.tape is not None:
            if tape is None:
                tape = a.tape
            elif tape is not a.tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _check_finite(arr: Array, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by op {op!r}")


def _result(data: Array, op: str, args: Sequence, vjp_builder) -> "Tensor | Array":
    """Wrap `data` as a taped Tensor when any argument is taped."""
    _check_finite(data, op)
    tape = _tape_of(*args)
    if tape is None:
        return data
    parents = tuple(
        a if isinstance(a, Tensor) and a.tape is tape else None for a in args
    )
    return Tensor(data, tape, parents=parents, vjp=vjp_builder, op=op)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce `grad` back to `shape` by summing over broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    ad, bd = _data(a), _data(b)
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def vjp(g: Array):
        return g @ bd.T, ad.T @ g

    return _result(out, "matmul", (a, b), vjp)


def _broadcast_binary(name: str, a, b, fwd, vjp_pair):
    ad, bd = _data(a), _data(b)
    try:
        with np.errstate(over="ignore"):  # overflow surfaces as NumericError below
            out = fwd(ad, bd)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {ad.shape} and {bd.shape}") from None
    if out.shape != np.broadcast_shapes(ad.shape, bd.shape):  # pragma: no cover
        raise ShapeError(f"{name}: incompatible shapes {ad.shape} and {bd.shape}")

    def vjp(g: Array):
        ga, gb = vjp_pair(g, ad, bd)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _result(out, name, (a, b), vjp)


def add(a, b):
    return _broadcast_binary("add", a, b, lambda x, y: x + y, lambda g, x, y: (g, g))


def sub(a, b):
    return _broadcast_binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: (g, -g))


def mul(a, b):
    return _broadcast_binary("mul", a, b, lambda x, y: x * y, lambda g, x, y: (g * y, g * x))


def neg(a):
    out = -_data(a)

    def vjp(g: Array):
        return (-g,)

    return _result(out, "neg", (a,), vjp)


def concat_rows(parts: Sequence):
    datas = [_data(p) for p in parts]
    if not datas:
        raise ShapeError("concat_rows: empty input")
    cols = {d.shape[1:] for d in datas}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: mismatched trailing shapes {sorted(cols)}")
    out = np.concatenate(datas, axis=0)
    offsets = np.cumsum([0] + [d.shape[0] for d in datas])

    def vjp(g: Array):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(datas)))

    return _result(out, "concat_rows", tuple(parts), vjp)


def gather_rows(a, indices):
    ad = _data(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= ad.shape[0]):
        raise ShapeError(
            f"gather_rows: index out of range for {ad.shape[0]} rows "
            f"(got min {idx.min()}, max {idx.max()})"
        )
    out = ad[idx]
    n_rows = ad.shape[0]

    def vjp(g: Array):
        return (_segment_sum_np(g, idx, n_rows),)

    return _result(out, "gather_rows", (a,), vjp)


def _segment_sum_np(data: Array, seg: Array, num_segments: int) -> Array:
    """Sum rows of `data` into `num_segments` buckets given by `seg`.

    Sort + cumsum-difference: empty segments fall out as zero rows without
    special-casing, and the row accumulation order is deterministic.
    """
    out_shape = (num_segments,) + data.shape[1:]
    if data.shape[0] == 0:
        return np.zeros(out_shape)
    perm = np.argsort(seg, kind="stable")
    sdata = data[perm]
    sseg = seg[perm]
    bounds = np.searchsorted(sseg, np.arange(num_segments + 1), side="left")
    csum = np.concatenate([np.zeros((1,) + data.shape[1:]), np.cumsum(sdata, axis=0)], axis=0)
    return csum[bounds[1:]] - csum[bounds[:-1]]


def segment_sum(messages, dst, num_segments: int):
    md = _data(messages)
    idx = np.asarray(dst, dtype=np.int64)
    if idx.shape[0] != md.shape[0]:
        raise ShapeError(
            f"segment_sum: {md.shape[0]} rows but {idx.shape[0]} segment ids"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= num_segments):
        raise ShapeError(
            f"segment_sum: segment id out of range for {num_segments} segments "
            f"(got min {idx.min()}, max {idx.max()})"
        )
    out = _segment_sum_np(md, idx, num_segments)

    def vjp(g: Array):
        return (g[idx],)

    return _result(out, "segment_sum", (messages,), vjp)


def sum_all(a):
    ad = _data(a)
    out = np.asarray(ad.sum())
    shape = ad.shape

    def vjp(g: Array):
        return (np.broadcast_to(g, shape).copy(),)

    return _result(out, "sum_all", (a,), vjp)


def _ssp_np(x: Array) -> Array:
    # ln(0.5 e^x + 0.5) == softplus(x) - ln 2, in the overflow-safe form
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))) - np.log(2.0)


def ssp(a):
    ad = _data(a)
    out = _ssp_np(ad)

    def vjp(g: Array):
        # d/dx ln(0.5 e^x + 0.5) = sigmoid(x); exp may overflow to inf,
        # in which case the quotient is exactly the limit 0
        with np.errstate(over="ignore"):
            return (g / (1.0 + np.exp(-ad)),)

    return _result(out, "ssp", (a,), vjp)


def dense(x, w, b):
    """Affine layer x @ w + b with b broadcast over rows."""
    return add(matmul(x, w), b)


# ---------------------------------------------------------------------------
# backward


def backward(tape: Tape, loss: Tensor) -> dict[str, Array]:
    """Gradients of a scalar `loss` w.r.t. every named leaf on `tape`.

    Leaves never touched by the loss get zero gradients.
    """
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        raise ValueError("loss is not recorded on this tape")
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")

    grads: list[Array | None] = [None] * len(tape.nodes)
    grads[loss.node_id] = np.ones(())
    for node in reversed(tape.nodes):
        g = grads[node.node_id]
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if parent is None or pg is None:
                continue
            if grads[parent.node_id] is None:
                grads[parent.node_id] = pg
            else:
                grads[parent.node_id] = grads[parent.node_id] + pg

    out: dict[str, Array] = {}
    for name, leaf in tape.leaves.items():
        g = grads[leaf.node_id]
        out[name] = np.zeros_like(leaf.data) if g is None else np.asarray(g)
    return out
