"""The networks: DG-GCN and the two baselines (standard GC, power-law
geometric GC), sharing one message-passing code path.

Per layer: h = lin_in(x); each directed edge (j -> i) carries the message
w_ij * (h_j ⊙ filter(d_ij)); messages and the self term are degree-
normalized, projected by lin_out and passed through shifted softplus.
The three model kinds differ only in edge set and edge weighting:

  standard   order-1 edges, w = 1, filter = ones
  geometric  all configured orders, w = (r0/d)^n fixed, filter = ones
  dggcn      all configured orders, w = cosine cutoff, filter = FGNet(d)

All forward code accepts parameter arrays that are either ndarrays or
taped Tensors, so the same path serves inference and training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, dense, ssp
from .distgeo import DistGeoGraph, GeoEdge
from .errors import ConfigError, GraphError, ShapeError
from .filters import GaussianBasis, cutoff_weight, powerlaw_weight, rbf_expand

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class FGNetParams:
    w1: np.ndarray  # (G, f)
    b1: np.ndarray  # (f,)
    w2: np.ndarray  # (f, f)
    b2: np.ndarray  # (f,)


@dataclass
class CFConvParams:
    lin_in_w: np.ndarray   # (f_in, f)
    lin_in_b: np.ndarray   # (f,)
    fgnet: FGNetParams
    lin_out_w: np.ndarray  # (f, f_out)
    lin_out_b: np.ndarray  # (f_out,)


@dataclass
class ModelParams:
    embed_w: np.ndarray    # (d, f)
    embed_b: np.ndarray    # (f,)
    layers: list[CFConvParams]
    readout_w1: np.ndarray  # (f, f//2)
    readout_b1: np.ndarray  # (f//2,)
    readout_w2: np.ndarray  # (f//2, 1)
    readout_b2: np.ndarray  # (1,)
    pooling: str = "mean"   # mean | sum

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for k, lyr in enumerate(self.layers):
            p = f"layers.{k}."
            out[p + "lin_in.w"] = lyr.lin_in_w
            out[p + "lin_in.b"] = lyr.lin_in_b
            out[p + "fgnet.w1"] = lyr.fgnet.w1
            out[p + "fgnet.b1"] = lyr.fgnet.b1
            out[p + "fgnet.w2"] = lyr.fgnet.w2
            out[p + "fgnet.b2"] = lyr.fgnet.b2
            out[p + "lin_out.w"] = lyr.lin_out_w
            out[p + "lin_out.b"] = lyr.lin_out_b
        out["readout.w1"] = self.readout_w1
        out["readout.b1"] = self.readout_b1
        out["readout.w2"] = self.readout_w2
        out["readout.b2"] = self.readout_b2
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], pooling: str) -> "ModelParams":
        n_layers = 1 + max(int(k.split(".")[1]) for k in arrays if k.startswith("layers."))
        layers = []
        for k in range(n_layers):
            p = f"layers.{k}."
            layers.append(CFConvParams(
                lin_in_w=arrays[p + "lin_in.w"], lin_in_b=arrays[p + "lin_in.b"],
                fgnet=FGNetParams(arrays[p + "fgnet.w1"], arrays[p + "fgnet.b1"],
                                  arrays[p + "fgnet.w2"], arrays[p + "fgnet.b2"]),
                lin_out_w=arrays[p + "lin_out.w"], lin_out_b=arrays[p + "lin_out.b"]))
        return cls(embed_w=arrays["embed.w"], embed_b=arrays["embed.b"],
                   layers=layers,
                   readout_w1=arrays["readout.w1"], readout_b1=arrays["readout.b1"],
                   readout_w2=arrays["readout.w2"], readout_b2=arrays["readout.b2"],
                   pooling=pooling)

    def lifted(self, tape: Tape) -> "ModelParams":
        """Copy with every array registered as a named leaf on `tape`."""
        leaves = {k: tape.leaf(v, k) for k, v in self.named_arrays().items()}
        return ModelParams.from_named(leaves, self.pooling)


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_params(d_in: int, f: int, k_layers: int, num_gaussians: int,
                pooling: str, seed: int) -> ModelParams:
    if k_layers < 1:
        raise ConfigError(f"need at least one conv layer, got {k_layers}")
    if pooling not in ("mean", "sum"):
        raise ConfigError(f"pooling must be 'mean' or 'sum', got {pooling!r}")
    h = f // 2
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D6F64]))
    layers = []
    for _ in range(k_layers):
        layers.append(CFConvParams(
            lin_in_w=_glorot(rng, f, f), lin_in_b=np.zeros(f),
            fgnet=FGNetParams(_glorot(rng, num_gaussians, f), np.zeros(f),
                              _glorot(rng, f, f), np.zeros(f)),
            lin_out_w=_glorot(rng, f, f), lin_out_b=np.zeros(f)))
    return ModelParams(
        embed_w=_glorot(rng, d_in, f), embed_b=np.zeros(f),
        layers=layers,
        readout_w1=_glorot(rng, f, h), readout_b1=np.zeros(h),
        readout_w2=_glorot(rng, h, 1), readout_b2=np.zeros(1),
        pooling=pooling)


# ---------------------------------------------------------------------------
# Batch assembly (constants precomputed outside the tape)
# ---------------------------------------------------------------------------

KINDS = ("standard", "geometric", "dggcn")


@dataclass
class PreparedGraph:
    x: np.ndarray          # (N, d)
    src: np.ndarray        # (E,)
    dst: np.ndarray        # (E,)
    weight: np.ndarray | None   # (E, 1) fixed edge weights; None means all-ones
    rbf: np.ndarray | None      # (E, G) for dggcn, else None
    c_edge: np.ndarray     # (E, 1) per-edge normalization
    c_self: np.ndarray     # (N, 1) self-term normalization
    target: float | None
    n_nodes: int


def _normalizers(src, dst, n_nodes, gcn_norm):
    indeg = np.bincount(dst, minlength=n_nodes).astype(np.float64)
    tilde = 1.0 + indeg
    if gcn_norm == "target":
        c_edge = 1.0 / tilde[dst]
        c_self = 1.0 / tilde
    elif gcn_norm == "symmetric":
        c_edge = 1.0 / np.sqrt(tilde[src] * tilde[dst])
        c_self = 1.0 / tilde
    else:
        raise ConfigError(f"gcn_norm must be 'target' or 'symmetric', got {gcn_norm!r}")
    return c_edge[:, None], c_self[:, None]


def prepare_graph(dg: DistGeoGraph, kind: str, max_order: int,
                  basis: GaussianBasis, gcn_norm: str = "target",
                  r0: float = 1.39, power_n: float = 4.55) -> PreparedGraph:
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    use = dg.restricted(1) if kind == "standard" else dg.restricted(max_order)
    src, dst, d = use.edge_src, use.edge_dst, use.edge_dist
    if kind == "standard":
        weight, rbf = None, None
    elif kind == "geometric":
        weight, rbf = powerlaw_weight(d, r0, power_n)[:, None], None
    else:
        weight = np.asarray(cutoff_weight(d, basis.d_cutoff))[:, None]
        rbf = rbf_expand(d, basis)
    c_edge, c_self = _normalizers(src, dst, dg.n_nodes, gcn_norm)
    return PreparedGraph(x=dg.x, src=src, dst=dst, weight=weight, rbf=rbf,
                         c_edge=c_edge, c_self=c_self, target=dg.target,
                         n_nodes=dg.n_nodes)


@dataclass
class GraphBatch:
    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray | None
    rbf: np.ndarray | None
    c_edge: np.ndarray
    c_self: np.ndarray
    node_graph: np.ndarray       # (N_total,) graph index per node
    n_graphs: int
    n_nodes: int
    inv_counts: np.ndarray       # (B, 1) 1/nodes-per-graph, for mean pooling
    targets: np.ndarray          # (B,) float64; NaN where absent


def batch_graphs(prepared: Sequence[PreparedGraph]) -> GraphBatch:
    if not prepared:
        raise ShapeError("cannot batch zero graphs")
    xs, srcs, dsts, ws, rbfs, ces, css, ngs = [], [], [], [], [], [], [], []
    offset = 0
    has_w = prepared[0].weight is not None
    has_rbf = prepared[0].rbf is not None
    for gi, pg in enumerate(prepared):
        xs.append(pg.x)
        srcs.append(pg.src + offset)
        dsts.append(pg.dst + offset)
        if has_w:
            ws.append(pg.weight)
        if has_rbf:
            rbfs.append(pg.rbf)
        ces.append(pg.c_edge)
        css.append(pg.c_self)
        ngs.append(np.full(pg.n_nodes, gi, dtype=np.int64))
        offset += pg.n_nodes
    counts = np.array([pg.n_nodes for pg in prepared], dtype=np.float64)
    targets = np.array([np.nan if pg.target is None else pg.target
                        for pg in prepared], dtype=np.float64)
    return GraphBatch(
        x=np.concatenate(xs, axis=0),
        src=np.concatenate(srcs), dst=np.concatenate(dsts),
        weight=np.concatenate(ws, axis=0) if has_w else None,
        rbf=np.concatenate(rbfs, axis=0) if has_rbf else None,
        c_edge=np.concatenate(ces, axis=0), c_self=np.concatenate(css, axis=0),
        node_graph=np.concatenate(ngs), n_graphs=len(prepared), n_nodes=offset,
        inv_counts=(1.0 / counts)[:, None], targets=targets)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _fgnet(rbf_const, p: FGNetParams):
    return ssp(dense(ssp(dense(rbf_const, p.w1, p.b1)), p.w2, p.b2))


def fgnet_forward(d: float, p: FGNetParams, basis: GaussianBasis):
    """Filter vector for one distance; shape (f,) when untaped."""
    out = _fgnet(rbf_expand(np.array([d]), basis), p)
    return out[0] if isinstance(out, np.ndarray) else out


def _conv_layer(h, lyr: CFConvParams, batch: GraphBatch, *,
                filter_mode: str, activation: str):
    hl = dense(h, lyr.lin_in_w, lyr.lin_in_b)
    msg = ad.gather_rows(hl, batch.src)
    if batch.rbf is not None and filter_mode == "fgnet":
        msg = ad.mul(msg, _fgnet(batch.rbf, lyr.fgnet))
    if batch.weight is not None:
        msg = ad.mul(msg, batch.weight)
    msg = ad.mul(msg, batch.c_edge)
    agg = ad.segment_sum(msg, batch.dst, batch.n_nodes)
    pre = ad.add(ad.mul(hl, batch.c_self), agg)
    out = dense(pre, lyr.lin_out_w, lyr.lin_out_b)
    return ssp(out) if activation == "ssp" else out


def pool_nodes(h, batch: GraphBatch, pooling: str):
    pooled = ad.segment_sum(h, batch.node_graph, batch.n_graphs)
    if pooling == "mean":
        pooled = ad.mul(pooled, batch.inv_counts)
    elif pooling != "sum":
        raise ConfigError(f"pooling must be 'mean' or 'sum', got {pooling!r}")
    return pooled


def forward_batch(params: ModelParams, batch: GraphBatch, *,
                  filter_mode: str = "fgnet", activation: str = "ssp"):
    """Predictions for a batch, shape (B, 1); Tensor when params are lifted."""
    if filter_mode not in ("fgnet", "ones"):
        raise ConfigError(f"filter_mode must be 'fgnet' or 'ones', got {filter_mode!r}")
    h = dense(batch.x, params.embed_w, params.embed_b)
    for lyr in params.layers:
        h = _conv_layer(h, lyr, batch, filter_mode=filter_mode,
                        activation=activation)
    pooled = pool_nodes(h, batch, params.pooling)
    hidden = ssp(dense(pooled, params.readout_w1, params.readout_b1))
    return dense(hidden, params.readout_w2, params.readout_b2)


def _forward_single(dg: DistGeoGraph, params: ModelParams, kind: str,
                    basis: GaussianBasis, max_order: int = 3,
                    gcn_norm: str = "target", r0: float = 1.39,
                    power_n: float = 4.55, **hooks):
    pg = prepare_graph(dg, kind, max_order, basis, gcn_norm, r0, power_n)
    out = forward_batch(params, batch_graphs([pg]), **hooks)
    return float(out[0, 0]) if isinstance(out, np.ndarray) else out


def dggcn_forward(dg: DistGeoGraph, params: ModelParams, basis: GaussianBasis,
                  **kw) -> float:
    """Scalar prediction over all edge orders present in `dg`."""
    return _forward_single(dg, params, "dggcn", basis, **kw)


def standard_gc_forward(dg: DistGeoGraph, params: ModelParams, **kw) -> float:
    """Baseline: order-1 edges only, all weights one, no distance filter."""
    basis = GaussianBasis.create(2, 1.0)  # unused by the standard path
    return _forward_single(dg, params, "standard", basis, **kw)


def geometric_gc_forward(dg: DistGeoGraph, params: ModelParams,
                         r0: float = 1.39, power_n: float = 4.55, **kw) -> float:
    """Baseline: fixed (r0/d)^n weights over all orders present in `dg`."""
    basis = GaussianBasis.create(2, 1.0)  # unused by the geometric path
    return _forward_single(dg, params, "geometric", basis,
                           r0=r0, power_n=power_n, **kw)


def cfconv_forward(x: np.ndarray, edges: Sequence[GeoEdge], p: CFConvParams,
                   basis: GaussianBasis, *, gcn_norm: str = "target",
                   filter_mode: str = "fgnet", activation: str = "ssp"):
    """One CFConv layer over an explicit edge list (single graph)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    src = np.array([e.src for e in edges], dtype=np.int64)
    dst = np.array([e.dst for e in edges], dtype=np.int64)
    d = np.array([e.distance for e in edges], dtype=np.float64)
    if src.size and (src.max() >= n or dst.max() >= n or src.min() < 0 or dst.min() < 0):
        raise GraphError(f"edge index out of range for {n} nodes")
    c_edge, c_self = _normalizers(src, dst, n, gcn_norm)
    batch = GraphBatch(
        x=x, src=src, dst=dst,
        weight=np.asarray(cutoff_weight(d, basis.d_cutoff)).reshape(-1, 1),
        rbf=rbf_expand(d, basis), c_edge=c_edge, c_self=c_self,
        node_graph=np.zeros(n, dtype=np.int64), n_graphs=1, n_nodes=n,
        inv_counts=np.array([[1.0 / max(n, 1)]]), targets=np.array([np.nan]))
    return _conv_layer(x, p, batch, filter_mode=filter_mode, activation=activation)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, basis: GaussianBasis,
                    extra: dict | None = None) -> None:
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "pooling": params.pooling,
        "arrays": {k: v.tolist() for k, v in params.named_arrays().items()},
        "basis": basis.to_dict(),
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_checkpoint(path) -> tuple[ModelParams, GaussianBasis, dict]:
    with open(path) as fh:
        obj = json.load(fh)
    version = obj.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(
            f"checkpoint format version {version!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in obj["arrays"].items()}
    params = ModelParams.from_named(arrays, obj["pooling"])
    basis = GaussianBasis.from_dict(obj["basis"])
    return params, basis, obj.get("extra", {})
