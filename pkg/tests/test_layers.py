import numpy as np
import pytest

from hypgnn import autodiff as ad
from hypgnn.graph import Graph, normalize_adjacency
from hypgnn.layers import HGNN, ModelConfig, init_embeddings, lift_features, make_batch, propagate
from hypgnn.manifolds import Lorentz, PoincareBall, get_manifold

from conftest import check_grad

KINDS = ("euclidean", "poincare", "lorentz")


def random_graph(rng, n_lo=4, n_hi=12, p=0.35):
    n = int(rng.integers(n_lo, n_hi + 1))
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < p
    return Graph.undirected(n, np.stack([iu[0][keep], iu[1][keep]], axis=1), label=0)


def dense_gcn_adjacency(n, edges):
    """Reference D^-1/2 (A + I) D^-1/2 built from an edge list, rows = receivers."""
    a = np.eye(n)
    for s, d in edges:
        a[d, s] += 1.0
    d_inv = 1.0 / np.sqrt(a.sum(axis=1))
    return d_inv[:, None] * a * d_inv[None, :]


def leaky(x, slope=0.5):
    return np.where(x > 0, x, slope * x)


# -- normalization ------------------------------------------------------------

def test_normalization_examples():
    assert np.array_equal(normalize_adjacency(Graph(1, [], [])).dense(), [[1.0]])
    two = normalize_adjacency(Graph.undirected(2, [[0, 1]])).dense()
    assert np.allclose(two, [[0.5, 0.5], [0.5, 0.5]])
    multi = Graph.from_edges(2, [(0, 1, 0, 1.0), (0, 1, 0, 2.0)])
    dense = normalize_adjacency(multi).dense()
    # in-block: row 1 receives A_10 = 3; D = [1, 4]
    assert np.allclose(dense, [[1.0, 0.0], [3.0 / 2.0, 1.0 / 4.0]])
    with pytest.raises(ValueError):
        normalize_adjacency(Graph(0, [], []))


def test_bidirectional_and_master_blocks():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    adj = normalize_adjacency(g, bidirectional=True, master_node=True)
    assert set(adj.blocks) == {(0, "in"), (0, "out"), (1, "in"), (1, "out")}
    assert adj.num_nodes == 4
    a_in = np.eye(3)
    a_in[1, 0] = a_in[2, 1] = 1.0
    d = 1.0 / np.sqrt(a_in.sum(axis=1))
    assert np.allclose(adj.dense(0, "in")[:3, :3], d[:, None] * a_in * d)
    a_out = a_in.T
    d = 1.0 / np.sqrt(a_out.sum(axis=1))
    assert np.allclose(adj.dense(0, "out")[:3, :3], d[:, None] * a_out * d)
    # The master relation links node 3 with everybody and nothing else.
    hub = adj.dense(1, "in")
    assert np.all(hub[3, :] > 0) and np.all(hub[:3, 3] > 0)
    assert np.count_nonzero(hub[:3, :3] - np.diag(np.diag(hub[:3, :3]))) == 0


def test_rows_all_have_self_loops():
    g = random_graph(np.random.default_rng(2))
    dense = normalize_adjacency(g).dense()
    assert np.all(np.diag(dense) > 0)


# -- lifting and initialization -------------------------------------------------

def test_lift_examples():
    v = np.array([[0.3, -0.2], [0.0, 0.0]])
    assert np.array_equal(lift_features(get_manifold("euclidean", 2), v).data, v)
    assert np.allclose(lift_features(PoincareBall(2), [[0.3, 0.0]]).data, [[np.tanh(0.3), 0.0]])
    for kind in KINDS:
        m = get_manifold(kind, 2)
        assert np.allclose(lift_features(m, np.zeros((1, 2))).data, m.origin(1))


def test_init_embeddings():
    for kind in KINDS:
        m = get_manifold(kind, 4)
        a = init_embeddings(m, 50, 0.01, 7)
        assert np.all(m.residual(a) < 1e-12)
        assert np.array_equal(a, init_embeddings(m, 50, 0.01, 7))
    lor = Lorentz(2)
    assert init_embeddings(lor, 1, 0.01, 0).shape == (1, 3)
    assert lor.project([[0.0, 0.01, 0.0]]).data[0, 0] == pytest.approx(np.sqrt(1.0001), abs=1e-12)
    assert np.sqrt(1.0001) == pytest.approx(1.000050, abs=1e-6)
    with pytest.raises(ValueError):
        init_embeddings(lor, 3, 0.0)


# -- propagation -----------------------------------------------------------

def test_single_self_loop_node_is_unchanged():
    adj = normalize_adjacency(Graph(1, [], [])).blocks
    for kind in ("euclidean", "poincare"):
        m = get_manifold(kind, 2)
        h = np.array([[0.2, 0.3]])
        out = propagate(m, h, adj, {(0, "in"): np.eye(2)}).data
        assert np.allclose(out, h, atol=1e-12)


def test_dimension_mismatch_is_an_error():
    adj = normalize_adjacency(Graph(1, [], [])).blocks
    with pytest.raises(ad.ShapeError):
        propagate(PoincareBall(2), np.zeros((1, 2)), adj, {(0, "in"): np.eye(3)})


def test_three_node_path_matches_scripted_oracle():
    rng = np.random.default_rng(42)
    g = Graph.undirected(3, [[0, 1], [1, 2]])
    h = rng.uniform(-0.4, 0.4, size=(3, 2))
    w = rng.normal(scale=0.8, size=(2, 2))
    out = propagate(PoincareBall(2), h, normalize_adjacency(g).blocks, {(0, "in"): w}).data

    # straight-line script: log at 0, linear map, aggregate, exp at 0, leaky ReLU
    a = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])  # A + I
    deg = a.sum(axis=1)
    a_hat = a / np.sqrt(np.outer(deg, deg))
    expected = np.zeros((3, 2))
    for u in range(3):
        msg = np.zeros(2)
        for v in range(3):
            hv = h[v]
            r = np.linalg.norm(hv)
            tangent = np.arctanh(r) * hv / r
            msg += a_hat[u, v] * (w @ tangent)
        r = np.linalg.norm(msg)
        point = np.tanh(r) * msg / r
        expected[u] = np.where(point > 0, point, 0.5 * point)
    assert np.abs(out - expected).max() < 1e-12


def gcn_reference(graph, x, weights, slope=0.5):
    """Vanilla GCN: H <- sigma(A_hat H W^T) with a dense A_hat."""
    a_hat = dense_gcn_adjacency(graph.n, zip(graph.src.tolist(), graph.dst.tolist()))
    h = x
    for w in weights:
        h = leaky(a_hat @ h @ w.T, slope)
    return h


def test_euclidean_model_equals_gcn_on_twenty_graphs():
    rng = np.random.default_rng(0)
    for trial in range(20):
        g = random_graph(rng)
        cfg = ModelConfig(manifold="euclidean", dim=4, layers=3, unit_ball=False)
        model = HGNN(cfg, seed=trial)
        batch = make_batch([g], cfg)
        x = model.params["embedding"].data[batch.node_index]
        weights = [model.params[HGNN.weight_name(k, 0, "in")].data for k in range(3)]
        out = model.forward(batch).data
        assert np.abs(out - gcn_reference(g, x, weights)).max() < 1e-6


@pytest.mark.parametrize("kind", ("poincare", "lorentz"))
def test_activation_before_exp_collapses_to_one_log_exp_pair(kind):
    rng = np.random.default_rng(1)
    g = random_graph(rng, 6, 10)
    layers = 4
    collapsed = ModelConfig(manifold=kind, dim=3, layers=layers, pre_exp_activation=True, init_range=0.3)
    model = HGNN(collapsed, seed=3)
    _scale_weights(model, 2.0)
    batch = make_batch([g], collapsed)
    m = model.manifold
    h0 = model.inputs(batch).data
    weights = [model.params[HGNN.weight_name(k, 0, "in")].data for k in range(layers)]
    t = m.logmap0(h0).data
    if kind == "lorentz":
        # time coordinate of the origin's tangent space is always zero
        weights = [w[1:, 1:] for w in weights]
        t = t[:, 1:]
    gcn = gcn_reference(g, t, weights)
    if kind == "lorentz":
        gcn = np.concatenate([np.zeros((g.n, 1)), gcn], axis=1)
    wrapped = m.expmap0(gcn).data
    out = model.forward(batch).data
    assert np.abs(out - wrapped).max() < 1e-6

    proper = ModelConfig(manifold=kind, dim=3, layers=layers, init_range=0.3)
    model2 = HGNN(proper, seed=3)
    _scale_weights(model2, 2.0)
    assert np.abs(model2.forward(make_batch([g], proper)).data - wrapped).max() > 1e-3


def _scale_weights(model, factor):
    # larger maps push points away from the origin, where curvature matters
    for name, p in model.params.items():
        if name.startswith("W"):
            p.data = p.data * factor


@pytest.mark.parametrize("kind", KINDS)
def test_permutation_equivariance(kind):
    rng = np.random.default_rng(5)
    g = random_graph(rng, 8, 12)
    perm = rng.permutation(g.n)
    cfg = ModelConfig(manifold=kind, dim=3, layers=2, init_range=0.3)
    model = HGNN(cfg, seed=1)
    out = model.forward(make_batch([g], cfg)).data
    out_p = model.forward(make_batch([g.permute(perm)], cfg)).data
    # equal up to the summation order inside each neighbourhood
    assert np.abs(out_p[perm] - out).max() < 1e-12


def test_forward_special_cases():
    g = random_graph(np.random.default_rng(3))
    for kind in KINDS:
        cfg = ModelConfig(manifold=kind, dim=3, layers=0)
        model = HGNN(cfg, seed=0)
        batch = make_batch([g], cfg)
        assert np.array_equal(model.forward(batch).data, model.inputs(batch).data)
        cfg2 = ModelConfig(manifold=kind, dim=3, layers=2)
        model2 = HGNN(cfg2, seed=0)
        for name, p in model2.params.items():
            if name.startswith("W"):
                p.data = np.zeros_like(p.data)
        out = model2.forward(make_batch([g], cfg2)).data
        assert np.allclose(out, model2.manifold.origin(g.n), atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_weight_gradient_on_five_node_graph(kind):
    g = Graph.undirected(5, [[0, 1], [1, 2], [2, 3], [1, 4], [3, 4]], label=1)
    cfg = ModelConfig(manifold=kind, dim=3, layers=2, init_range=0.3)
    model = HGNN(cfg, seed=2)
    batch = make_batch([g], cfg)
    w0 = model.params["W0_r0_in"]

    def loss_of(t):
        saved = model.params["W0_r0_in"]
        model.params["W0_r0_in"] = t
        try:
            return model.loss(batch)
        finally:
            model.params["W0_r0_in"] = saved

    check_grad(loss_of, w0.data.copy())


def test_eight_lorentz_layers_stay_on_the_hyperboloid():
    rng = np.random.default_rng(8)
    graphs = [random_graph(rng, 8, 20, 0.3) for _ in range(4)]
    cfg = ModelConfig(manifold="lorentz", dim=10, layers=8, init_range=0.5)
    model = HGNN(cfg, seed=0)
    for h in model.forward(make_batch(graphs, cfg), return_all=True):
        assert np.isfinite(h.data).all()
        assert model.manifold.residual(h.data).max() < 1e-6


def test_batch_is_block_diagonal():
    rng = np.random.default_rng(4)
    graphs = [random_graph(rng) for _ in range(3)]
    cfg = ModelConfig(manifold="poincare", dim=3, layers=2, init_range=0.3)
    model = HGNN(cfg, seed=0)
    joint = model.forward(make_batch(graphs, cfg)).data
    parts = np.concatenate([model.forward(make_batch([g], cfg)).data for g in graphs])
    assert np.abs(joint - parts).max() < 1e-14


def test_features_path_and_master_node():
    rng = np.random.default_rng(6)
    g = random_graph(rng)
    g.features = rng.normal(scale=0.2, size=(g.n, 5))
    cfg = ModelConfig(manifold="lorentz", dim=3, layers=2, input_dim=5, master_node=True, bidirectional=True)
    model = HGNN(cfg, seed=0)
    batch = make_batch([g], cfg)
    assert batch.num_nodes == g.n + 1
    h = model.forward(batch, return_all=True)
    assert np.array_equal(h[0].data[g.n], model.manifold.origin())
    assert model.manifold.residual(h[-1].data).max() < 1e-9
    bad = ModelConfig(manifold="lorentz", dim=3, input_dim=4)
    with pytest.raises(ad.ShapeError):
        make_batch([g], bad)
