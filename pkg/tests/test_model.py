"""Model assembly, configuration, forward semantics, checkpoints."""

import numpy as np
import pytest

from conftest import assert_grads_match
from metroflow import (
    ModelConfig,
    Tensor,
    assemble,
    build_khop,
    build_task,
    forward,
    load_checkpoint,
    predict_task,
    save_checkpoint,
    synthesize_dataset,
)
from metroflow.data import social_diff_matrix
from metroflow.errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    ShapeError,
)
from metroflow.model import VARIANTS
from metroflow.tensor import mul, sum_all
from metroflow.training import Standardizer


def small_config(**kw):
    base = dict(variant="main_body", k=2, num_sage_layers=2, hidden_width=8,
                pool_width=4, temporal_hidden=6, temporal_width=4,
                fusion_hidden=6, learner_hidden=4, seed=0)
    base.update(kw)
    return ModelConfig(**base)


# ---------------------------------------------------------------------------
# configuration


class TestModelConfig:
    def test_variant_whitelist(self):
        assert set(VARIANTS) == {
            "main_body", "kt", "kh", "kth",
            "sage_baseline", "gcn_baseline", "gcn_learned_weights"}
        with pytest.raises(ConfigError, match="nope"):
            ModelConfig(variant="nope")

    def test_sampling_rate_iff_hypergraph_variant(self):
        with pytest.raises(ConfigError):
            ModelConfig(variant="kh")  # rate required
        with pytest.raises(ConfigError):
            ModelConfig(variant="main_body", sampling_rate=0.9)
        with pytest.raises(ConfigError):
            ModelConfig(variant="kth", sampling_rate=1.5)
        ModelConfig(variant="kth", sampling_rate=0.9)

    def test_k_range(self):
        for bad in (0, 11):
            with pytest.raises(ConfigError):
                ModelConfig(k=bad)

    def test_aggregator_checked(self):
        with pytest.raises(ConfigError):
            ModelConfig(aggregator="sum")

    def test_label(self):
        assert ModelConfig(variant="kh", sampling_rate=0.9).label() == "kh@0.9"
        assert ModelConfig(variant="kt").label() == "kt"

    def test_config_file_round_trip(self, tmp_path):
        cfg = ModelConfig(variant="kth", sampling_rate=0.75, k=4,
                          hidden_width=32, epochs=250, seed=9)
        path = tmp_path / "model.cfg"
        cfg.to_config_file(path)
        assert ModelConfig.from_config_file(path) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="dropout"):
            ModelConfig.from_mapping({"variant": "kt", "dropout": "0.5"})


# ---------------------------------------------------------------------------
# assembly structure


def test_assemble_requires_branch_inputs(tiny_ds):
    cfg = small_config(variant="kh", sampling_rate=0.9)
    with pytest.raises(ConfigError):
        assemble(cfg, tiny_ds.base_graph, social=tiny_ds.social)  # no hypergraph
    with pytest.raises(ConfigError):
        assemble(small_config(), tiny_ds.base_graph)  # no social features


def test_main_body_k1_shares_topology_with_sage_baseline(tiny_ds):
    main = assemble(small_config(k=1), tiny_ds.base_graph,
                    social=tiny_ds.social)
    base = assemble(small_config(variant="sage_baseline", k=1),
                    tiny_ds.base_graph)
    np.testing.assert_array_equal(main.khop_index.src, base.khop_index.src)
    np.testing.assert_array_equal(main.khop_index.dst, base.khop_index.dst)
    assert main.learner is not None and base.learner is None
    khop = build_khop(tiny_ds.base_graph, 1)
    pairs = {(int(s), int(d)) for s, d in
             zip(main.khop_index.src, main.khop_index.dst)}
    assert pairs == {(i, j) for i, j in zip(*np.nonzero(khop.adj))}


def test_kt_fusion_input_width_is_sum_of_branches(tiny_ds):
    model = assemble(small_config(variant="kt"), tiny_ds.base_graph,
                     social=tiny_ds.social)
    cfg = model.config
    assert model.fusion.in_width == cfg.hidden_width + cfg.temporal_width
    full = assemble(small_config(variant="kth", sampling_rate=0.9),
                    tiny_ds.base_graph, hypergraph=tiny_ds.hypergraph(),
                    social=tiny_ds.social)
    assert full.fusion.in_width == cfg.hidden_width * 2 + cfg.temporal_width


def test_kth_parameter_count_is_sum_of_branch_counts(tiny_ds):
    cfg = small_config(variant="kth", sampling_rate=0.9)
    model = assemble(cfg, tiny_ds.base_graph,
                     hypergraph=tiny_ds.hypergraph(), social=tiny_ds.social)

    def linear(a, b, bias=True):
        return a * b + (b if bias else 0)

    d, p = cfg.hidden_width, cfg.pool_width
    sage_first = linear(8, p) + (8 + p) * d  # w_pool+b_pool, then w (no bias)
    sage_rest = linear(d, p) + (d + p) * d
    conv = sage_first + sage_rest  # num_sage_layers=2
    hyper = conv
    temporal = linear(8, cfg.temporal_hidden) + \
        linear(cfg.temporal_hidden, cfg.temporal_width)
    fusion = linear(model.fusion.in_width, cfg.fusion_hidden) + \
        linear(cfg.fusion_hidden, 1)
    learner = linear(3, cfg.learner_hidden) + linear(cfg.learner_hidden, 1)
    assert model.parameter_count() == conv + hyper + temporal + fusion + learner


def test_shared_components_draw_identical_initial_parameters(tiny_ds):
    """Adding a branch must not disturb the seed streams of the others.

    The fusion head is excluded: its input width is the sum of the active
    branch widths, so it is not a shared component across variants.
    """
    main = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    kt = assemble(small_config(variant="kt"), tiny_ds.base_graph,
                  social=tiny_ds.social)
    kth = assemble(small_config(variant="kth", sampling_rate=0.9),
                   tiny_ds.base_graph, hypergraph=tiny_ds.hypergraph(),
                   social=tiny_ds.social)
    kth_named = kth.named_params()
    for name, tensor in main.named_params().items():
        if name.split(".")[0] in ("conv", "learner"):
            np.testing.assert_array_equal(tensor.values, kth_named[name].values)
    for name, tensor in kt.named_params().items():
        if name.split(".")[0] in ("conv", "temporal", "learner"):
            np.testing.assert_array_equal(tensor.values, kth_named[name].values)


def test_same_seed_same_parameters_different_seed_differs(tiny_ds):
    a = assemble(small_config(seed=4), tiny_ds.base_graph, social=tiny_ds.social)
    b = assemble(small_config(seed=4), tiny_ds.base_graph, social=tiny_ds.social)
    c = assemble(small_config(seed=5), tiny_ds.base_graph, social=tiny_ds.social)
    for name, t in a.named_params().items():
        np.testing.assert_array_equal(t.values, b.named_params()[name].values)
    assert any(not np.array_equal(t.values, c.named_params()[name].values)
               for name, t in a.named_params().items())


# ---------------------------------------------------------------------------
# forward semantics


def test_zero_fusion_head_gives_zero_predictions(tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    for t in model.fusion.params():
        t.values[:] = 0.0
    x = np.random.default_rng(0).uniform(0, 1, size=(len(tiny_ds.stations), 8))
    out = forward(model, Tensor(x))
    np.testing.assert_array_equal(out.values, np.zeros((8, 1)))


def test_forward_output_shape_and_finiteness(tiny_ds):
    for variant, kw in [("main_body", {}), ("kt", {}),
                        ("kth", {"sampling_rate": 0.9}),
                        ("sage_baseline", {}), ("gcn_baseline", {}),
                        ("gcn_learned_weights", {})]:
        model = assemble(small_config(variant=variant, **kw),
                         tiny_ds.base_graph, hypergraph=tiny_ds.hypergraph(),
                         social=tiny_ds.social)
        x = np.random.default_rng(1).standard_normal((8, 8))
        out = forward(model, Tensor(x)).values
        assert out.shape == (8, 1)
        assert np.isfinite(out).all()


def test_forward_rejects_wrong_width(tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    with pytest.raises(ShapeError):
        forward(model, Tensor(np.zeros((8, 7))))


def test_model_permutation_equivariance():
    """Permuting stations (graph, social, features) permutes predictions."""
    ds = synthesize_dataset(10, 13, 2, seed=7)
    model = assemble(small_config(variant="main_body", k=2), ds.base_graph,
                     social=ds.social)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 2, size=(10, 8))
    base = forward(model, Tensor(x)).values

    perm = rng.permutation(10)
    sub = ds.subset(list(perm))  # subset with a permutation reorders in place
    permuted_model = assemble(small_config(variant="main_body", k=2),
                              sub.base_graph, social=sub.social)
    # same parameters, permuted topology
    for name, t in permuted_model.named_params().items():
        t.values[:] = model.named_params()[name].values
    permuted = forward(permuted_model, Tensor(x[perm])).values
    np.testing.assert_allclose(permuted, base[perm], atol=1e-10)


def test_fusion_concatenation_order_is_khop_temporal_hyper(tiny_ds):
    """Reconstruct forward() from the documented branch order."""
    from metroflow.layers import sage_forward, temporal_forward
    cfg = small_config(variant="kth", sampling_rate=0.9)
    model = assemble(cfg, tiny_ds.base_graph,
                     hypergraph=tiny_ds.hypergraph(), social=tiny_ds.social)
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(0, 1, size=(8, 8)))

    weights = model.learner.weights_for(model.edge_diffs)
    h = x
    for layer in model.conv_layers:
        h = sage_forward(layer, h, model.khop_index, edge_weights=weights)
    t = temporal_forward(model.temporal_mlp, x)
    g = x
    for layer in model.hyper_layers:
        g = sage_forward(layer, g, model.hyper_index)
    pieces = np.concatenate([h.values, t.values, g.values], axis=1)
    expect = model.fusion.forward(Tensor(pieces)).values
    np.testing.assert_allclose(forward(model, x).values, expect, atol=1e-12)


def test_fd_full_model_every_parameter_group(tiny_ds):
    """MSE-style loss through the whole model vs finite differences."""
    rng = np.random.default_rng(11)
    model = assemble(small_config(variant="kth", sampling_rate=0.9, seed=2),
                     tiny_ds.base_graph, hypergraph=tiny_ds.hypergraph(),
                     social=tiny_ds.social)
    x = Tensor(rng.uniform(-1, 1, size=(8, 8)))
    mask = Tensor(rng.uniform(0.5, 1.5, size=(8, 1)))
    params = model.params()
    assert {"conv", "temporal", "hyper", "fusion", "learner"} == \
        {name.split(".")[0] for name in model.named_params()}
    assert_grads_match(
        lambda: sum_all(mul(forward(model, x), mask)),
        params, rng=rng, max_coords=3)


def test_fd_gcn_learned_weights_model(tiny_ds):
    rng = np.random.default_rng(12)
    model = assemble(small_config(variant="gcn_learned_weights"),
                     tiny_ds.base_graph, social=tiny_ds.social)
    # Self-loop rows have all-zero social diffs, so with zero-initialised
    # biases the learner's hidden pre-activations sit exactly on the relu
    # kink where central differences are not a valid oracle. Nudge off it.
    model.learner.mlp.biases[0].values[:] = 0.3
    x = Tensor(rng.uniform(-1, 1, size=(8, 8)))
    assert_grads_match(
        lambda: sum_all(forward(model, x)),
        model.params(), rng=rng, max_coords=3)


# ---------------------------------------------------------------------------
# predict_task


def test_predict_task_identity_standardization_is_noop(tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    model.feature_std = Standardizer(np.zeros(8), np.ones(8))
    model.target_std = Standardizer(np.zeros(1), np.ones(1))
    model.trained_task = (5, "entry")
    year = tiny_ds.years[0]
    got = predict_task(model, tiny_ds, year, (5, "entry"))
    raw = forward(model, Tensor(build_task(tiny_ds, year, 5, "entry").X))
    np.testing.assert_allclose(got, raw.values[:, 0], atol=1e-12)


def test_predict_task_rejects_task_mismatch(tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    model.feature_std = Standardizer(np.zeros(8), np.ones(8))
    model.target_std = Standardizer(np.zeros(1), np.ones(1))
    model.trained_task = (5, "entry")
    with pytest.raises(ContractError):
        predict_task(model, tiny_ds, tiny_ds.years[0], (5, "exit"))
    with pytest.raises(ContractError):
        predict_task(model, tiny_ds, tiny_ds.years[0], "late_exit")


def test_untrained_model_cannot_predict(tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    with pytest.raises(ContractError):
        predict_task(model, tiny_ds, tiny_ds.years[0], (5, "entry"))


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_bit_identical(tmp_path, tiny_ds):
    cfg = small_config(variant="kth", sampling_rate=0.9, seed=3)
    model = assemble(cfg, tiny_ds.base_graph,
                     hypergraph=tiny_ds.hypergraph(), social=tiny_ds.social)
    model.feature_std = Standardizer(np.arange(8.0), np.arange(1.0, 9.0))
    model.target_std = Standardizer(np.array([3.0]), np.array([2.0]))
    model.trained_task = (5, "exit")
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)

    fresh = assemble(cfg, tiny_ds.base_graph,
                     hypergraph=tiny_ds.hypergraph(), social=tiny_ds.social)
    for t in fresh.params():
        t.values[:] = -1.0
    load_checkpoint(fresh, path)
    for name, t in model.named_params().items():
        np.testing.assert_array_equal(t.values,
                                      fresh.named_params()[name].values)
    np.testing.assert_array_equal(fresh.feature_std.mean, model.feature_std.mean)
    np.testing.assert_array_equal(fresh.feature_std.std, model.feature_std.std)
    np.testing.assert_array_equal(fresh.target_std.std, model.target_std.std)
    assert fresh.trained_task == (5, "exit")


def test_checkpoint_rejects_corruption(tmp_path, tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(model, path)


def test_checkpoint_rejects_shape_mismatch(tmp_path, tiny_ds):
    model = assemble(small_config(), tiny_ds.base_graph, social=tiny_ds.social)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    other = assemble(small_config(hidden_width=16), tiny_ds.base_graph,
                     social=tiny_ds.social)
    with pytest.raises(CheckpointError):
        load_checkpoint(other, path)


# ---------------------------------------------------------------------------
# edge diffs consumed by learned-weight variants


def test_edge_diffs_match_social_diff_matrix(tiny_ds):
    model = assemble(small_config(k=2), tiny_ds.base_graph,
                     social=tiny_ds.social)
    idx = model.khop_index
    expect = social_diff_matrix(tiny_ds.social, idx.src, idx.dst)
    np.testing.assert_allclose(model.edge_diffs.values, expect, atol=1e-15)
