"""Layer forwards against brute-force per-vertex oracles, plus gradient
checks through each layer type."""

import numpy as np
import pytest

from conftest import assert_grads_match
from metroflow import (
    EdgeWeightLearner,
    GcnLayer,
    Mlp,
    SageLayer,
    Tensor,
    edge_weight,
    gcn_forward,
    sage_aggregate,
    sage_forward,
    sage_forward_decomposed,
    temporal_forward,
)
from metroflow.errors import ContractError, DataError, ShapeError
from metroflow.layers import NeighborIndex, glorot
from metroflow.tensor import sum_all


def neighbor_lists(adj, weights=None):
    n = adj.shape[0]
    out = []
    for v in range(n):
        row = []
        for j in np.flatnonzero(adj[v]):
            w = 1.0 if weights is None else weights[v, j]
            row.append((int(j), float(w)))
        out.append(row)
    return out


def random_graph_lists(rng, n, p=0.4, weighted=False):
    a = (rng.random((n, n)) < p).astype(float)
    a = np.triu(a, 1)
    a = a + a.T
    w = None
    if weighted:
        w = rng.uniform(0.2, 2.0, size=(n, n))
        w = (w + w.T) / 2
    return a, neighbor_lists(a, w)


def relu_np(x):
    return np.maximum(x, 0.0)


def brute_force_max_pool(layer, h, lists):
    """Per-vertex loop evaluation of the pooled aggregation."""
    n = len(lists)
    d_pool = layer.w_pool.cols
    out = np.zeros((n, d_pool))
    for v, lst in enumerate(lists):
        if not lst:
            continue
        rows = [relu_np((w * h[u]) @ layer.w_pool.values + layer.b_pool.values[0])
                for u, w in lst]
        out[v] = np.max(rows, axis=0)
    return out


def brute_force_mean(h, lists):
    n, d = h.shape
    out = np.zeros((n, d))
    for v, lst in enumerate(lists):
        if lst:
            out[v] = np.mean([w * h[u] for u, w in lst], axis=0)
    return out


def brute_force_gcn(layer, h, lists):
    n = len(lists)
    deg = np.array([len(l) for l in lists], dtype=float)
    out = np.zeros((n, layer.w.cols))
    for v, lst in enumerate(lists):
        acc = h[v] / np.sqrt((deg[v] + 1) ** 2)  # self loop, c_vv = deg_v + 1
        for j, w in lst:
            acc = acc + w * h[j] / np.sqrt((deg[j] + 1) * (deg[v] + 1))
        out[v] = relu_np(acc @ layer.w.values + layer.b.values[0])
    return out


# ---------------------------------------------------------------------------
# SAGE aggregation


def test_single_neighbor_max_pool_is_transform_of_that_neighbor():
    rng = np.random.default_rng(0)
    layer = SageLayer.init(rng, d_in=3, d_out=2, d_pool=4)
    h = rng.standard_normal((2, 3))
    lists = [[(1, 1.0)], []]
    got = sage_aggregate(layer, Tensor(h), lists).values
    expect = relu_np(h[1] @ layer.w_pool.values + layer.b_pool.values[0])
    np.testing.assert_allclose(got[0], expect, atol=1e-12)
    np.testing.assert_array_equal(got[1], np.zeros(4))


def test_duplicate_neighbor_is_idempotent_under_max():
    rng = np.random.default_rng(1)
    layer = SageLayer.init(rng, d_in=3, d_out=2, d_pool=4)
    h = Tensor(rng.standard_normal((2, 3)))
    once = sage_aggregate(layer, h, [[(1, 1.0)], []]).values
    twice = sage_aggregate(layer, h, [[(1, 1.0), (1, 1.0)], []]).values
    np.testing.assert_array_equal(once, twice)


@pytest.mark.parametrize("weighted", [False, True])
def test_max_pool_matches_brute_force(weighted):
    rng = np.random.default_rng(2)
    layer = SageLayer.init(rng, d_in=5, d_out=3, d_pool=4)
    _, lists = random_graph_lists(rng, 6, weighted=weighted)
    h = rng.standard_normal((6, 5))
    got = sage_aggregate(layer, Tensor(h), lists).values
    np.testing.assert_allclose(got, brute_force_max_pool(layer, h, lists),
                               atol=1e-12)


@pytest.mark.parametrize("weighted", [False, True])
def test_mean_aggregator_matches_brute_force(weighted):
    rng = np.random.default_rng(3)
    layer = SageLayer.init(rng, d_in=5, d_out=3, aggregator="mean")
    _, lists = random_graph_lists(rng, 7, weighted=weighted)
    h = rng.standard_normal((7, 5))
    got = sage_aggregate(layer, Tensor(h), lists).values
    np.testing.assert_allclose(got, brute_force_mean(h, lists), atol=1e-12)


def test_learned_edge_weights_override_stored_ones():
    rng = np.random.default_rng(4)
    layer = SageLayer.init(rng, d_in=3, d_out=2, aggregator="mean")
    idx = NeighborIndex.ensure([[(1, 1.0)], [(0, 1.0)]])
    h = Tensor(rng.standard_normal((2, 3)))
    override = Tensor(np.array([[2.0], [0.5]]))
    got = sage_aggregate(layer, h, idx, edge_weights=override).values
    np.testing.assert_allclose(got[0], 2.0 * h.values[1], atol=1e-12)
    np.testing.assert_allclose(got[1], 0.5 * h.values[0], atol=1e-12)


def test_aggregate_rejects_row_count_mismatch():
    rng = np.random.default_rng(5)
    layer = SageLayer.init(rng, d_in=3, d_out=2)
    with pytest.raises(ShapeError):
        sage_aggregate(layer, Tensor(np.zeros((3, 3))), [[], []])


def test_sage_layer_config_validation():
    w = Tensor(np.zeros((4, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        SageLayer(w, None, None, aggregator="sum")
    with pytest.raises(ContractError):
        SageLayer(w, None, None, aggregator="max_pool")


# ---------------------------------------------------------------------------
# SAGE forward and decomposition


def test_sage_forward_zero_weights_give_zero():
    rng = np.random.default_rng(6)
    layer = SageLayer.init(rng, d_in=3, d_out=2, d_pool=4)
    layer.w.values[:] = 0.0
    _, lists = random_graph_lists(rng, 5)
    out = sage_forward(layer, Tensor(rng.standard_normal((5, 3))), lists)
    np.testing.assert_array_equal(out.values, np.zeros((5, 2)))


def test_sage_forward_edgeless_graph_uses_self_only():
    rng = np.random.default_rng(7)
    layer = SageLayer.init(rng, d_in=3, d_out=2, d_pool=4)
    h = rng.standard_normal((4, 3))
    out = sage_forward(layer, Tensor(h), [[] for _ in range(4)]).values
    w1 = layer.w.values[:3]
    np.testing.assert_allclose(out, relu_np(h @ w1), atol=1e-12)


def test_decomposition_sums_to_forward():
    rng = np.random.default_rng(8)
    for aggregator in ("max_pool", "mean"):
        layer = SageLayer.init(rng, d_in=4, d_out=3, aggregator=aggregator)
        _, lists = random_graph_lists(rng, 6, weighted=True)
        h = Tensor(rng.standard_normal((6, 4)))
        self_part, neighbor_part = sage_forward_decomposed(layer, h, lists)
        whole = sage_forward(layer, h, lists)
        np.testing.assert_allclose(
            relu_np(self_part.values + neighbor_part.values),
            whole.values, atol=1e-12)


def test_decomposition_zero_neighbor_features():
    rng = np.random.default_rng(9)
    layer = SageLayer.init(rng, d_in=3, d_out=2, aggregator="mean")
    h = Tensor(np.zeros((3, 3)))
    _, neighbor_part = sage_forward_decomposed(
        layer, h, [[(1, 1.0)], [(0, 1.0), (2, 1.0)], [(1, 1.0)]])
    np.testing.assert_array_equal(neighbor_part.values, np.zeros((3, 2)))


def test_identical_neighbor_sets_get_identical_neighbor_parts():
    rng = np.random.default_rng(10)
    layer = SageLayer.init(rng, d_in=3, d_out=2, aggregator="mean")
    # vertices 0 and 2 both see exactly {1}
    lists = [[(1, 1.0)], [(0, 1.0), (2, 1.0)], [(1, 1.0)]]
    h = Tensor(rng.standard_normal((3, 3)))
    self_part, neighbor_part = sage_forward_decomposed(layer, h, lists)
    np.testing.assert_array_equal(neighbor_part.values[0],
                                  neighbor_part.values[2])
    assert not np.array_equal(self_part.values[0], self_part.values[2])


def test_sage_permutation_equivariance():
    rng = np.random.default_rng(11)
    layer = SageLayer.init(rng, d_in=4, d_out=3, d_pool=5)
    adj, lists = random_graph_lists(rng, 8, weighted=True)
    weights = np.zeros((8, 8))
    for v, lst in enumerate(lists):
        for j, w in lst:
            weights[v, j] = w
    h = rng.standard_normal((8, 4))
    base = sage_forward(layer, Tensor(h), lists).values

    perm = rng.permutation(8)
    inv = np.argsort(perm)
    adj_p = adj[np.ix_(perm, perm)]
    weights_p = weights[np.ix_(perm, perm)]
    lists_p = neighbor_lists(adj_p, weights_p)
    permuted = sage_forward(layer, Tensor(h[perm]), lists_p).values
    np.testing.assert_allclose(permuted, base[perm], atol=1e-12)
    np.testing.assert_allclose(permuted[inv][perm], permuted, atol=0)


# ---------------------------------------------------------------------------
# GCN


def test_gcn_isolated_vertex_is_self_loop_only():
    rng = np.random.default_rng(12)
    layer = GcnLayer.init(rng, d_in=3, d_out=2)
    h = rng.standard_normal((1, 3))
    out = gcn_forward(layer, Tensor(h), [[]]).values
    expect = relu_np(h @ layer.w.values + layer.b.values[0])
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_gcn_complete_graph_identical_inputs_identical_outputs():
    rng = np.random.default_rng(13)
    layer = GcnLayer.init(rng, d_in=3, d_out=2)
    row = rng.standard_normal(3)
    h = np.tile(row, (5, 1))
    adj = np.ones((5, 5)) - np.eye(5)
    out = gcn_forward(layer, Tensor(h), neighbor_lists(adj)).values
    for v in range(1, 5):
        np.testing.assert_array_equal(out[v], out[0])


def test_gcn_matches_brute_force():
    rng = np.random.default_rng(14)
    layer = GcnLayer.init(rng, d_in=4, d_out=3)
    for trial in range(5):
        _, lists = random_graph_lists(rng, 6, weighted=True)
        h = rng.standard_normal((6, 4))
        got = gcn_forward(layer, Tensor(h), lists).values
        np.testing.assert_allclose(got, brute_force_gcn(layer, h, lists),
                                   atol=1e-12)


def test_gcn_permutation_equivariance():
    rng = np.random.default_rng(15)
    layer = GcnLayer.init(rng, d_in=4, d_out=3)
    adj, lists = random_graph_lists(rng, 7)
    h = rng.standard_normal((7, 4))
    base = gcn_forward(layer, Tensor(h), lists).values
    perm = rng.permutation(7)
    lists_p = neighbor_lists(adj[np.ix_(perm, perm)])
    permuted = gcn_forward(layer, Tensor(h[perm]), lists_p).values
    np.testing.assert_allclose(permuted, base[perm], atol=1e-12)


# ---------------------------------------------------------------------------
# MLP / learner / temporal


def test_mlp_width_chain_validated():
    rng = np.random.default_rng(16)
    w1 = glorot(rng, 3, 4)
    w2 = glorot(rng, 5, 2)  # does not chain
    b1 = Tensor(np.zeros((1, 4)), requires_grad=True)
    b2 = Tensor(np.zeros((1, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        Mlp([w1, w2], [b1, b2])
    with pytest.raises(ContractError):
        Mlp([], [])
    with pytest.raises(ShapeError):
        Mlp.init(rng, (3, 4, 2)).forward(Tensor(np.zeros((2, 5))))


def test_edge_weight_symmetry_and_range():
    rng = np.random.default_rng(17)
    # scales mirror how the model standardizes: per-feature stds
    learner = EdgeWeightLearner.init(rng, scales=np.array([1.5, 300.0, 7.0]))
    for _ in range(20):
        a = (rng.integers(1, 5), rng.uniform(100, 900), rng.uniform(70, 90))
        b = (rng.integers(1, 5), rng.uniform(100, 900), rng.uniform(70, 90))
        wab = edge_weight(learner, a, b)
        wba = edge_weight(learner, b, a)
        assert wab == wba
        assert 0.0 < wab < 1.0


def test_edge_weight_stays_in_open_interval_under_saturation():
    rng = np.random.default_rng(30)
    learner = EdgeWeightLearner.init(rng)  # unit scales: raw magnitudes
    w = edge_weight(learner, (1, 0.0, 0.0), (4, 1e9, 1e9))
    assert 0.0 < w < 1.0 and np.isfinite(w)


def test_edge_weight_identical_stations_share_one_value():
    rng = np.random.default_rng(18)
    learner = EdgeWeightLearner.init(rng)
    pairs = [(1, 200.0, 80.0), (4, 950.0, 71.5)]
    values = {edge_weight(learner, p, p) for p in pairs}
    assert len(values) == 1  # the zero-difference weight is a constant


def test_edge_weight_missing_feature_names_station():
    rng = np.random.default_rng(19)
    learner = EdgeWeightLearner.init(rng)
    with pytest.raises(DataError, match="life_expectancy"):
        edge_weight(learner, (1, 200.0, None), (2, 300.0, 80.0))
    with pytest.raises(DataError):
        edge_weight(learner, (1, 200.0), (2, 300.0, 80.0))


def test_learner_requires_3_to_1_mlp():
    rng = np.random.default_rng(20)
    with pytest.raises(ContractError):
        EdgeWeightLearner(Mlp.init(rng, (4, 8, 1)))
    with pytest.raises(ContractError):
        EdgeWeightLearner(Mlp.init(rng, (3, 8, 1)), scales=np.zeros(3))


def test_temporal_equal_series_equal_embeddings():
    rng = np.random.default_rng(21)
    mlp = Mlp.init(rng, (8, 6, 4))
    row = rng.standard_normal(8)
    series = Tensor(np.vstack([row, rng.standard_normal(8), row]))
    out = temporal_forward(mlp, series).values
    np.testing.assert_array_equal(out[0], out[2])


def test_temporal_zero_weights_constant_rows():
    rng = np.random.default_rng(22)
    mlp = Mlp.init(rng, (8, 6, 4))
    for w in mlp.weights:
        w.values[:] = 0.0
    out = temporal_forward(mlp, Tensor(rng.standard_normal((5, 8)))).values
    for v in range(1, 5):
        np.testing.assert_array_equal(out[v], out[0])


def test_temporal_rejects_wrong_width():
    rng = np.random.default_rng(23)
    mlp = Mlp.init(rng, (8, 6, 4))
    with pytest.raises(ShapeError):
        temporal_forward(mlp, Tensor(np.zeros((3, 7))))


# ---------------------------------------------------------------------------
# gradients through every layer type


def test_fd_sage_max_pool():
    rng = np.random.default_rng(24)
    layer = SageLayer.init(rng, d_in=4, d_out=3, d_pool=4)
    _, lists = random_graph_lists(rng, 6, weighted=True)
    h = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    assert_grads_match(
        lambda: sum_all(sage_forward(layer, h, lists)),
        layer.params() + [h], rng=rng)


def test_fd_sage_mean():
    rng = np.random.default_rng(25)
    layer = SageLayer.init(rng, d_in=4, d_out=3, aggregator="mean")
    _, lists = random_graph_lists(rng, 6)
    h = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    assert_grads_match(
        lambda: sum_all(sage_forward(layer, h, lists)),
        layer.params() + [h], rng=rng)


def test_fd_gcn():
    rng = np.random.default_rng(26)
    layer = GcnLayer.init(rng, d_in=4, d_out=3)
    _, lists = random_graph_lists(rng, 6, weighted=True)
    h = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    assert_grads_match(
        lambda: sum_all(gcn_forward(layer, h, lists)),
        layer.params() + [h], rng=rng)


def test_fd_temporal_mlp():
    rng = np.random.default_rng(27)
    mlp = Mlp.init(rng, (8, 6, 4))
    series = Tensor(rng.standard_normal((5, 8)), requires_grad=True)
    assert_grads_match(
        lambda: sum_all(temporal_forward(mlp, series)),
        mlp.params() + [series], rng=rng)


def test_fd_edge_weight_learner():
    rng = np.random.default_rng(28)
    learner = EdgeWeightLearner.init(rng)
    diffs = Tensor(np.abs(rng.standard_normal((7, 3))))
    assert_grads_match(
        lambda: sum_all(learner.weights_for(diffs)),
        learner.params(), rng=rng)
