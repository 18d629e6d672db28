import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnn_sngp.graphdata import LabeledGraph
from gnn_sngp.mpnn import (
    GraphBatch,
    MpnnConfig,
    embed_batch,
    embed_graph,
    init_dense_head,
    init_mpnn,
    message_weight,
    predict_logits_dense,
)
from gnn_sngp.numcore import ParamStore, ShapeError, Tensor, gradcheck, make_rng, softmax, softmax_cross_entropy
from gnn_sngp.specnorm import SnState, power_iterate, power_iterate_to_tol

from conftest import random_graph


def _setup(variant="baseline", d=5, d_node=4, d_edge=3, seed=0, ro=6, steps=3):
    cfg = MpnnConfig(d_node, d_edge, hidden_dim=d, n_steps=steps, variant=variant, readout_dim=ro)
    store = ParamStore()
    init_mpnn(store, cfg, make_rng(seed))
    sn = None
    if variant == "residual_sn":
        sn = SnState.init(2 * d + d_edge, d, make_rng(seed, 3))
        _, sn = power_iterate(store["msg/W"].data, sn, 50)
    return cfg, store, sn


def test_single_node_scalar_trace():
    cfg, store, _ = _setup(d=1, d_node=1, d_edge=1, ro=1, steps=3)
    r = np.random.default_rng(5)
    for k in store.names():
        store[k].data[...] = r.uniform(-1.5, 1.5, store[k].shape)
    P = {k: float(v.reshape(-1)[0]) if v.size == 1 else v for k, v in store.arrays().items()}
    x = 0.7
    g = LabeledGraph("a", np.array([[x]]), np.zeros((0, 2)), np.zeros((0, 1)), 0)

    sig = lambda t: 1.0 / (1.0 + math.exp(-t))  # noqa: E731
    h0 = x * P["embed/W"]
    h = h0
    for _ in range(3):
        z = sig(h * P["gru/U_z"] + P["gru/b_z"])
        rr = sig(h * P["gru/U_r"] + P["gru/b_r"])
        c = math.tanh(rr * h * P["gru/U_h"] + P["gru/b_h"])
        h = (1 - z) * h + z * c
    Wg = store["readout/W_gate"].data[:, 0]
    R = sig(h * Wg[0] + h0 * Wg[1]) * h * P["readout/W_proj"]
    assert embed_graph(g, store, cfg).vector[0] == pytest.approx(R, abs=1e-14)


@pytest.mark.parametrize("variant", ["baseline", "residual_sn"])
def test_permutation_invariance(variant):
    cfg, store, sn = _setup(variant)
    r = np.random.default_rng(1)
    worst = 0.0
    for i in range(100):
        g = random_graph(r, n_nodes=int(r.integers(1, 9)))
        a = embed_graph(g, store, cfg, sn).vector
        b = embed_graph(g.permuted(r.permutation(g.n_nodes)), store, cfg, sn).vector
        worst = max(worst, np.abs(a - b).max())
    assert worst < 1e-10


@given(st.integers(0, 2**32 - 1))
def test_disjoint_copies_double(seed):
    cfg, store, _ = _setup()
    r = np.random.default_rng(seed)
    g = random_graph(r)
    n = g.n_nodes
    twin = LabeledGraph(
        "twin",
        np.vstack([g.node_features, g.node_features]),
        np.vstack([g.edge_index, g.edge_index + n]),
        np.vstack([g.edge_features, g.edge_features]),
        g.label,
    )
    np.testing.assert_allclose(
        embed_graph(twin, store, cfg).vector, 2 * embed_graph(g, store, cfg).vector, rtol=1e-12, atol=1e-13
    )


def test_batch_equals_individual(rng):
    cfg, store, sn = _setup("residual_sn")
    graphs = [random_graph(rng, gid=f"g{i}") for i in range(6)]
    R, _ = embed_batch(GraphBatch.from_graphs(graphs), store, cfg, sn)
    for g, row in zip(graphs, R.data):
        np.testing.assert_allclose(row, embed_graph(g, store, cfg, sn).vector, atol=1e-13)


def test_width_mismatch(rng):
    cfg, store, _ = _setup(d_node=4)
    with pytest.raises(ShapeError):
        embed_graph(random_graph(rng, d_node=3), store, cfg)


def test_residual_variant_needs_sn_state(rng):
    cfg, store, _ = _setup("residual_sn")
    with pytest.raises(ValueError):
        message_weight(store, cfg, None)


def test_config_validation():
    with pytest.raises(ValueError):
        MpnnConfig(4, 3, hidden_dim=0)
    with pytest.raises(ValueError):
        MpnnConfig(4, 3, sn_bound=0)
    with pytest.raises(ValueError):
        MpnnConfig(4, 3, variant="gat")


def _head(ro=6, seed=0):
    store = ParamStore()
    init_dense_head(store, ro, make_rng(seed))
    return store


def test_dense_head_zero_weights():
    store = _head()
    store["head/W"].data[...] = 0.0
    logits = predict_logits_dense(Tensor(np.ones((1, 6))), store)
    np.testing.assert_array_equal(logits.data, [[0.0, 0.0]])
    np.testing.assert_array_equal(softmax(logits.data), [[0.5, 0.5]])


def test_dense_head_gradcheck(rng):
    store = _head()
    store["head/b"].data[...] = rng.standard_normal(2)
    R = rng.standard_normal((4, 6))
    y = np.array([0, 1, 1, 0])
    rep = gradcheck(lambda: softmax_cross_entropy(predict_logits_dense(Tensor(R), store), y), store)
    assert rep.max_error < 1e-4


@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_softmax_shift_invariance(seed, c):
    z = np.random.default_rng(seed).standard_normal((3, 2))
    np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_sn_message_map_is_lipschitz(seed):
    cfg, store, sn = _setup("residual_sn", seed=seed % 50)
    store["msg/W"].data[...] *= 5.0  # well outside the unit ball before projection
    _, sn, _ = power_iterate_to_tol(store["msg/W"].data, sn)
    W = message_weight(store, cfg, sn).data
    r = np.random.default_rng(seed)
    x1, x2 = r.standard_normal((2, 16, W.shape[0]))
    d_out = np.linalg.norm(x1 @ W - x2 @ W, axis=1)
    assert (d_out <= (1 + 1e-3) * np.linalg.norm(x1 - x2, axis=1)).all()
