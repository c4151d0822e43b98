"""Model tests: parameter plumbing, forward semantics, reductions,
invariances, and end-to-end gradients vs finite differences.
"""
import numpy as np
import pytest

from dggcn import autodiff as ad
from dggcn import distgeo, model
from dggcn.errors import ConfigError
from dggcn.filters import GaussianBasis
from dggcn.model import (CFConvParams, FGNetParams, ModelParams, batch_graphs,
                         cfconv_forward, dggcn_forward, fgnet_forward,
                         forward_batch, geometric_gc_forward, init_params,
                         pool_nodes, prepare_graph, standard_gc_forward)

from molgen import permuted_copy, random_molecule, rigid_copy
from oracles import central_difference, random_rotation, relative_error

BASIS = GaussianBasis.create(num_gaussians=16, d_cutoff=8.0)
WIDE_BASIS = GaussianBasis.create(num_gaussians=16, d_cutoff=1e12)


def _params(d_in=5, f=8, k=2, pooling="mean", seed=0, gaussians=16):
    return init_params(d_in, f, k, gaussians, pooling, seed)


def _dg(g, order=3):
    return distgeo.build_distgeo(g, order)


# -- parameter plumbing ------------------------------------------------------

def test_named_arrays_round_trip():
    p = _params()
    arrays = p.named_arrays()
    assert "layers.1.fgnet.w2" in arrays
    q = ModelParams.from_named(arrays, p.pooling)
    for k, v in q.named_arrays().items():
        assert v is arrays[k]


def test_init_rejects_bad_config():
    with pytest.raises(ConfigError):
        init_params(5, 8, 0, 16, "mean", 0)
    with pytest.raises(ConfigError):
        init_params(5, 8, 2, 16, "max", 0)


def test_init_deterministic():
    a, b = _params(seed=3), _params(seed=3)
    for k, v in a.named_arrays().items():
        assert np.array_equal(v, b.named_arrays()[k])


def test_checkpoint_round_trip(tmp_path):
    p = _params()
    path = tmp_path / "ckpt.json"
    model.save_checkpoint(path, p, BASIS, {"note": "x"})
    q, basis, extra = model.load_checkpoint(path)
    assert basis == BASIS
    assert extra == {"note": "x"}
    for k, v in p.named_arrays().items():
        assert np.array_equal(v, q.named_arrays()[k])
    g = random_molecule(np.random.default_rng(0))
    assert dggcn_forward(_dg(g), p, BASIS) == dggcn_forward(_dg(g), q, basis)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "ckpt.json"
    p = _params()
    model.save_checkpoint(path, p, BASIS)
    blob = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(blob)
    with pytest.raises(ConfigError, match="version"):
        model.load_checkpoint(path)


# -- fgnet -------------------------------------------------------------------

def test_fgnet_same_distance_same_filter():
    p = _params().layers[0].fgnet
    a = fgnet_forward(1.7, p, BASIS)
    b = fgnet_forward(1.7, p, BASIS)
    assert np.array_equal(a, b)
    assert a.shape == (8,)


def test_fgnet_zero_params_zero_filter():
    p = FGNetParams(np.zeros((16, 8)), np.zeros(8), np.zeros((8, 8)), np.zeros(8))
    assert np.allclose(fgnet_forward(2.0, p, BASIS), 0.0, atol=1e-15)


def test_fgnet_gradient_matches_fd():
    rng = np.random.default_rng(5)
    w1 = rng.normal(size=(16, 8)) * 0.3
    rest = FGNetParams(w1, rng.normal(size=8) * 0.1,
                       rng.normal(size=(8, 8)) * 0.3, rng.normal(size=8) * 0.1)
    proj = rng.normal(size=8)
    d = 2.3

    def f(w):
        p = FGNetParams(w, rest.b1, rest.w2, rest.b2)
        return float(fgnet_forward(d, p, BASIS) @ proj)

    from dggcn.filters import rbf_expand
    tape = ad.Tape()
    lifted = FGNetParams(tape.leaf(w1, "w1"), rest.b1, rest.w2, rest.b2)
    out = model._fgnet(rbf_expand(np.array([d]), BASIS), lifted)
    loss = ad.sum_all(ad.mul(out, proj[None, :]))
    grad = ad.backward(tape, loss)["w1"]
    fd = central_difference(f, w1.copy())
    assert relative_error(grad, fd) < 1e-4


# -- cfconv ------------------------------------------------------------------

def test_cfconv_zero_edges_self_only():
    rng = np.random.default_rng(1)
    lyr = _params(d_in=8).layers[0]
    x = rng.normal(size=(3, 8))
    out = cfconv_forward(x, [], lyr, BASIS)
    h = x @ lyr.lin_in_w + lyr.lin_in_b
    expect = model.ssp(h @ lyr.lin_out_w + lyr.lin_out_b)
    assert np.allclose(out, expect, atol=1e-12)


def test_cfconv_reduces_to_unweighted_gcn():
    # ones filter, huge cutoff, identity lin_in/lin_out, no ssp:
    # output_i = (x_i + sum_j x_j) / (1 + deg_i)
    f = 4
    eye = np.eye(f)
    lyr = CFConvParams(eye, np.zeros(f),
                       FGNetParams(np.zeros((16, f)), np.zeros(f),
                                   np.zeros((f, f)), np.zeros(f)),
                       eye, np.zeros(f))
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, f))
    chain = [distgeo.GeoEdge(*e) for e in
             [(0, 1, 1, 1.0), (1, 0, 1, 1.0), (1, 2, 1, 1.2), (2, 1, 1, 1.2),
              (2, 3, 1, 0.9), (3, 2, 1, 0.9)]]
    out = cfconv_forward(x, chain, lyr, WIDE_BASIS,
                         filter_mode="ones", activation="identity")
    deg = np.array([1, 2, 2, 1], dtype=np.float64)
    neigh = np.stack([x[1], x[0] + x[2], x[1] + x[3], x[2]])
    expect = (x + neigh) / (1 + deg)[:, None]
    assert np.allclose(out, expect, atol=1e-10)


def test_cfconv_bad_edge_index():
    lyr = _params(d_in=4, f=4).layers[0]
    with pytest.raises(Exception, match="out of range"):
        cfconv_forward(np.zeros((2, 4)), [distgeo.GeoEdge(0, 5, 1, 1.0)], lyr, BASIS)


def test_cfconv_rigid_motion_and_permutation():
    rng = np.random.default_rng(3)
    g = random_molecule(rng, n_min=6, n_max=9, d_in=8)
    lyr = _params(d_in=8, f=8).layers[0]
    dg = _dg(g)
    base = cfconv_forward(dg.x @ np.eye(8), dg.edges, lyr, BASIS)
    # rigid motion: distances unchanged -> identical rows
    moved = rigid_copy(g, random_rotation(rng), rng.normal(size=3) * 4)
    dgm = _dg(moved)
    out_m = cfconv_forward(dgm.x, dgm.edges, lyr, BASIS)
    assert np.allclose(base, out_m, atol=1e-6)
    # permutation: rows permute
    perm = rng.permutation(g.n_atoms)
    dgp = _dg(permuted_copy(g, perm))
    out_p = cfconv_forward(dgp.x, dgp.edges, lyr, BASIS)
    assert np.allclose(out_p[perm], base, atol=1e-6)


# -- pooling and whole-model forward ----------------------------------------

def test_pooling_sum_is_n_times_mean_for_identical_states():
    h = np.tile(np.array([[1.5, -2.0, 0.25]]), (4, 1))
    g = random_molecule(np.random.default_rng(0), n_min=4, n_max=4, d_in=3)
    pg = prepare_graph(_dg(g), "dggcn", 3, BASIS)
    batch = batch_graphs([pg])
    mean = pool_nodes(h, batch, "mean")
    total = pool_nodes(h, batch, "sum")
    assert np.allclose(total, 4.0 * mean, atol=1e-12)


def test_single_atom_molecule():
    from dggcn import chemio
    g = chemio.Graph3D(atoms=[chemio.Atom("C", 6, np.zeros(3))], bonds=[])
    g.node_features = np.ones((1, 5))
    p = _params(pooling="sum")
    val = dggcn_forward(_dg(g), p, BASIS)
    assert np.isfinite(val)
    p_mean = ModelParams.from_named(p.named_arrays(), "mean")
    assert dggcn_forward(_dg(g), p_mean, BASIS) == pytest.approx(val, abs=1e-12)


def test_batched_forward_matches_single_graphs():
    rng = np.random.default_rng(4)
    graphs = [random_molecule(rng) for _ in range(6)]
    p = _params()
    singles = [dggcn_forward(_dg(g), p, BASIS) for g in graphs]
    pgs = [prepare_graph(_dg(g), "dggcn", 3, BASIS) for g in graphs]
    batched = forward_batch(p, batch_graphs(pgs))
    assert np.allclose(batched[:, 0], singles, atol=1e-10)


def test_prediction_invariances_all_model_kinds():
    rng = np.random.default_rng(6)
    g = random_molecule(rng, n_min=7, n_max=10)
    p = _params()
    rot, shift = random_rotation(rng), rng.normal(size=3) * 3
    perm = rng.permutation(g.n_atoms)
    cases = {
        "dggcn": lambda gg: dggcn_forward(_dg(gg), p, BASIS),
        "standard": lambda gg: standard_gc_forward(_dg(gg), p),
        "geometric": lambda gg: geometric_gc_forward(_dg(gg), p),
    }
    for name, fwd in cases.items():
        base = fwd(g)
        assert abs(fwd(rigid_copy(g, rot, shift)) - base) < 1e-6, name
        assert abs(fwd(permuted_copy(g, perm)) - base) < 1e-6, name


def test_standard_gc_ignores_coordinates_entirely():
    rng = np.random.default_rng(7)
    g = random_molecule(rng)
    p = _params()
    base = standard_gc_forward(_dg(g), p)
    g2 = rigid_copy(g, np.eye(3), np.zeros(3))
    while True:  # arbitrary non-rigid coordinate change, no coincidences
        pos = rng.normal(size=(g.n_atoms, 3)) * 2.0
        d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1) + np.eye(g.n_atoms)
        if d.min() > 1e-3:
            break
    for i, a in enumerate(g2.atoms):
        a.position = pos[i]
    assert standard_gc_forward(_dg(g2), p) == base


# -- reduction identities ----------------------------------------------------

def test_dggcn_order1_ones_filter_equals_standard():
    rng = np.random.default_rng(8)
    p = _params()
    for _ in range(5):
        g = random_molecule(rng)
        dg1 = _dg(g, order=1)
        a = dggcn_forward(dg1, p, WIDE_BASIS, filter_mode="ones")
        b = standard_gc_forward(dg1, p)
        assert abs(a - b) < 1e-10


def test_geometric_n0_equals_standard_same_edges():
    rng = np.random.default_rng(9)
    p = _params()
    for _ in range(5):
        g = random_molecule(rng)
        dg1 = _dg(g, order=1)
        a = geometric_gc_forward(dg1, p, power_n=0.0)
        b = standard_gc_forward(dg1, p)
        assert abs(a - b) < 1e-10
        # and over the expanded set, n=0 matches unweighted dggcn reduction
        dg3 = _dg(g, order=3)
        c = geometric_gc_forward(dg3, p, power_n=0.0)
        d = dggcn_forward(dg3, p, WIDE_BASIS, filter_mode="ones")
        assert abs(c - d) < 1e-10


def test_message_counts_nest_with_order():
    rng = np.random.default_rng(10)
    g = random_molecule(rng, n_min=8, n_max=12)
    dg = _dg(g, 3)
    counts = [prepare_graph(dg, "dggcn", mo, BASIS).src.size for mo in (1, 2, 3)]
    assert counts[0] <= counts[1] <= counts[2]
    assert prepare_graph(dg, "standard", 3, BASIS).src.size == counts[0]


def test_symmetric_norm_option_differs_but_is_invariant():
    rng = np.random.default_rng(11)
    g = random_molecule(rng, n_min=5, n_max=8)
    p = _params()
    a = standard_gc_forward(_dg(g), p, gcn_norm="symmetric")
    b = standard_gc_forward(_dg(g), p, gcn_norm="target")
    assert a != b
    perm = rng.permutation(g.n_atoms)
    ap = standard_gc_forward(_dg(permuted_copy(g, perm)), p, gcn_norm="symmetric")
    assert abs(ap - a) < 1e-6


# -- gradients ---------------------------------------------------------------

def test_full_model_gradient_matches_fd():
    rng = np.random.default_rng(12)
    graphs = [random_molecule(rng, n_min=3, n_max=7) for _ in range(3)]
    pgs = [prepare_graph(_dg(g), "dggcn", 3, BASIS) for g in graphs]
    batch = batch_graphs(pgs)
    targets = batch.targets[:, None]
    base = _params()

    def loss_value(arrays):
        p = ModelParams.from_named(arrays, "mean")
        pred = forward_batch(p, batch)
        return float(np.mean((pred - targets) ** 2))

    tape = ad.Tape()
    lifted = base.lifted(tape)
    pred = forward_batch(lifted, batch)
    diff = ad.sub(pred, targets)
    loss = ad.mul(ad.sum_all(ad.mul(diff, diff)), 1.0 / len(graphs))
    grads = ad.backward(tape, loss)
    arrays = base.named_arrays()
    worst = 0.0
    for name, val in arrays.items():
        def f(v, name=name):
            d = dict(arrays)
            d[name] = v
            return loss_value(d)
        fd = central_difference(f, val.copy())
        worst = max(worst, relative_error(grads[name], fd))
    assert worst < 1e-3, worst


def test_zero_edge_graph_gives_zero_fgnet_grads():
    from dggcn import chemio
    g = chemio.Graph3D(atoms=[chemio.Atom("C", 6, np.zeros(3))], bonds=[])
    g.node_features = np.ones((1, 5))
    p = _params()
    pg = prepare_graph(_dg(g), "dggcn", 3, BASIS)
    tape = ad.Tape()
    lifted = p.lifted(tape)
    pred = forward_batch(lifted, batch_graphs([pg]))
    grads = ad.backward(tape, ad.sum_all(pred))
    assert set(grads) == set(p.named_arrays())
    assert np.all(grads["layers.0.fgnet.w1"] == 0)
    assert np.any(grads["embed.w"] != 0)
