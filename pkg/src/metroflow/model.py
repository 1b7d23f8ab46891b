"""Variant assembly: the k-hop convolution stack with its social
edge-weight learner, optional temporal and hypergraph branches, and the
concatenation fusion head.

Variants
--------
main_body        k-hop GraphSAGE stack, learned edge weights
kt               main body + temporal branch
kh               main body + hypergraph branch (sampled clique expansion)
kth              main body + both add-ons
sage_baseline    k-hop GraphSAGE stack, uniform edge weights, no learner
gcn_baseline     k-hop GCN stack, uniform weights
gcn_learned_weights  k-hop GCN stack with the social edge-weight learner
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, ContractError, ShapeError
from .graphs import BaseGraph, Hypergraph, build_khop, clique_expand, \
    neighbor_sets, sample_adjacency
from .layers import (
    EdgeWeightLearner,
    GcnLayer,
    Mlp,
    NeighborIndex,
    SageLayer,
    gcn_forward,
    sage_forward,
    temporal_forward,
)
from .data import DIRECTIONS, SocialFeatures, build_task, parse_task, \
    social_diff_matrix
from .tensor import Tensor, concat_cols, concat_rows

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "Model",
    "assemble",
    "forward",
    "predict_task",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("main_body", "kt", "kh", "kth", "sage_baseline",
            "gcn_baseline", "gcn_learned_weights")

_SAMPLED_VARIANTS = ("kh", "kth")
_LEARNER_VARIANTS = ("main_body", "kt", "kh", "kth", "gcn_learned_weights")
_GCN_VARIANTS = ("gcn_baseline", "gcn_learned_weights")
_TEMPORAL_VARIANTS = ("kt", "kth")

# fixed per-component seed streams so a component shared by two variants
# initializes identically regardless of which other branches exist
_STREAMS = {"conv": 0, "temporal": 1, "hyper": 2, "fusion": 3,
            "learner": 4, "sampling": 5}

_N_FEATURES = 8


@dataclass
class ModelConfig:
    """Declarative description of one model variant."""

    variant: str = "main_body"
    k: int = 1
    sampling_rate: float | None = None
    num_sage_layers: int = 3
    hidden_width: int = 64
    pool_width: int = 16
    temporal_hidden: int = 32
    temporal_width: int = 16
    fusion_hidden: int = 64
    learner_hidden: int = 8
    aggregator: str = "max_pool"
    epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant '{self.variant}'; expected one of {VARIANTS}"
            )
        if not 1 <= self.k <= 10:
            raise ConfigError(f"k must be 1..10, got {self.k}")
        needs_rate = self.variant in _SAMPLED_VARIANTS
        if needs_rate and self.sampling_rate is None:
            raise ConfigError(
                f"variant '{self.variant}' needs a sampling_rate"
            )
        if not needs_rate and self.sampling_rate is not None:
            raise ConfigError(
                f"variant '{self.variant}' does not take a sampling_rate"
            )
        if self.sampling_rate is not None and not 0.0 <= self.sampling_rate <= 1.0:
            raise ConfigError(
                f"sampling_rate must lie in [0, 1], got {self.sampling_rate}"
            )
        for name in ("num_sage_layers", "hidden_width", "pool_width",
                     "temporal_hidden", "temporal_width", "fusion_hidden",
                     "learner_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.aggregator not in ("max_pool", "mean"):
            raise ConfigError(
                f"aggregator must be max_pool or mean, got '{self.aggregator}'"
            )

    @property
    def has_temporal(self) -> bool:
        return self.variant in _TEMPORAL_VARIANTS

    @property
    def has_hyper(self) -> bool:
        return self.variant in _SAMPLED_VARIANTS

    @property
    def uses_learner(self) -> bool:
        return self.variant in _LEARNER_VARIANTS

    @property
    def uses_gcn(self) -> bool:
        return self.variant in _GCN_VARIANTS

    @property
    def fusion_in_width(self) -> int:
        width = self.hidden_width
        if self.has_temporal:
            width += self.temporal_width
        if self.has_hyper:
            width += self.hidden_width
        return width

    def label(self) -> str:
        if self.sampling_rate is not None:
            return f"{self.variant}@{self.sampling_rate:g}"
        return self.variant

    def to_config_file(self, path) -> None:
        """Flat key=value serialization; sampling_rate omitted when unset."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name}={value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_config_file(cls, path) -> "ModelConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_mapping(_parse_kv(text, path), source=str(path))

    @classmethod
    def from_mapping(cls, mapping: dict, source: str = "config") -> "ModelConfig":
        kinds = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in kinds:
                raise ConfigError(f"{source}: unknown config key '{key}'")
            if key in ("variant", "aggregator"):
                kwargs[key] = str(raw)
            elif key == "sampling_rate":
                kwargs[key] = None if str(raw).lower() == "none" else float(raw)
            else:
                try:
                    kwargs[key] = int(raw)
                except (TypeError, ValueError):
                    raise ConfigError(
                        f"{source}: key '{key}' needs an integer, got '{raw}'"
                    ) from None
        return cls(**kwargs)


def _parse_kv(text: str, path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path} line {lineno}: expected key=value, got '{line}'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


class Model:
    """An assembled, parameterized variant bound to one topology."""

    def __init__(self, config: ModelConfig, station_ids, khop_index,
                 conv_layers, hyper_index, hyper_layers, temporal_mlp,
                 fusion, learner, edge_diffs, gcn_edge_diffs):
        self.config = config
        self.station_ids = tuple(station_ids)
        self.n = len(self.station_ids)
        self.khop_index = khop_index
        self.conv_layers = conv_layers
        self.hyper_index = hyper_index
        self.hyper_layers = hyper_layers
        self.temporal_mlp = temporal_mlp
        self.fusion = fusion
        self.learner = learner
        self.edge_diffs = edge_diffs
        self.gcn_edge_diffs = gcn_edge_diffs
        self.feature_std = None
        self.target_std = None
        self.trained_task = None

    def params(self) -> list[Tensor]:
        return list(self.named_params().values())

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.conv_layers):
            if isinstance(layer, GcnLayer):
                out[f"conv.L{i}.w"] = layer.w
                out[f"conv.L{i}.b"] = layer.b
            else:
                if layer.aggregator == "max_pool":
                    out[f"conv.L{i}.w_pool"] = layer.w_pool
                    out[f"conv.L{i}.b_pool"] = layer.b_pool
                out[f"conv.L{i}.w"] = layer.w
        if self.temporal_mlp is not None:
            for i, (w, b) in enumerate(zip(self.temporal_mlp.weights,
                                           self.temporal_mlp.biases)):
                out[f"temporal.L{i}.w"] = w
                out[f"temporal.L{i}.b"] = b
        if self.hyper_layers is not None:
            for i, layer in enumerate(self.hyper_layers):
                if layer.aggregator == "max_pool":
                    out[f"hyper.L{i}.w_pool"] = layer.w_pool
                    out[f"hyper.L{i}.b_pool"] = layer.b_pool
                out[f"hyper.L{i}.w"] = layer.w
        for i, (w, b) in enumerate(zip(self.fusion.weights, self.fusion.biases)):
            out[f"fusion.L{i}.w"] = w
            out[f"fusion.L{i}.b"] = b
        if self.learner is not None:
            for i, (w, b) in enumerate(zip(self.learner.mlp.weights,
                                           self.learner.mlp.biases)):
                out[f"learner.L{i}.w"] = w
                out[f"learner.L{i}.b"] = b
        return out

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.params())

    def forward(self, node_features) -> Tensor:
        return forward(self, node_features)

    def snapshot(self) -> list[np.ndarray]:
        return [p.values.copy() for p in self.params()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, vals in zip(self.params(), snapshot):
            p.values[...] = vals


def assemble(config: ModelConfig, base_graph: BaseGraph,
             hypergraph: Hypergraph | None = None,
             social: SocialFeatures | None = None) -> Model:
    """Build a parameterized model with seeded initialization.

    The hypergraph is required by kh/kth; social features are required
    by every variant that runs the edge-weight learner.
    """
    config.validate()
    if config.has_hyper and hypergraph is None:
        raise ConfigError(
            f"variant '{config.variant}' needs hypergraph (line) data"
        )
    if config.uses_learner and social is None:
        raise ConfigError(
            f"variant '{config.variant}' needs social features for its "
            f"edge-weight learner"
        )
    if social is not None and social.n != base_graph.n:
        raise ConfigError(
            f"social features cover {social.n} stations, graph has {base_graph.n}"
        )

    khop = build_khop(base_graph, config.k)
    khop_index = NeighborIndex.from_lists(neighbor_sets(khop))

    def rng(component: str) -> np.random.Generator:
        return np.random.default_rng([config.seed, _STREAMS[component]])

    conv_rng = rng("conv")
    widths = [_N_FEATURES] + [config.hidden_width] * config.num_sage_layers
    if config.uses_gcn:
        conv_layers = [GcnLayer.init(conv_rng, d_in, d_out)
                       for d_in, d_out in zip(widths[:-1], widths[1:])]
    else:
        conv_layers = [
            SageLayer.init(conv_rng, d_in, d_out, d_pool=config.pool_width,
                           aggregator=config.aggregator)
            for d_in, d_out in zip(widths[:-1], widths[1:])
        ]

    temporal_mlp = None
    if config.has_temporal:
        temporal_mlp = Mlp.init(rng("temporal"),
                                (_N_FEATURES, config.temporal_hidden,
                                 config.temporal_width))

    hyper_index = None
    hyper_layers = None
    if config.has_hyper:
        delta = clique_expand(hypergraph)
        sampled = sample_adjacency(delta, config.sampling_rate,
                                   seed=[config.seed, _STREAMS["sampling"]])
        lists = [[(j, 1.0) for j, _ in row] for row in neighbor_sets(sampled)]
        hyper_index = NeighborIndex.from_lists(lists)
        hyper_rng = rng("hyper")
        hyper_layers = [
            SageLayer.init(hyper_rng, d_in, d_out, d_pool=config.pool_width,
                           aggregator=config.aggregator)
            for d_in, d_out in zip(widths[:-1], widths[1:])
        ]

    fusion = Mlp.init(rng("fusion"), (config.fusion_in_width,
                                      config.fusion_hidden, 1))

    learner = None
    edge_diffs = None
    gcn_edge_diffs = None
    if config.uses_learner:
        learner = EdgeWeightLearner.init(rng("learner"),
                                         hidden=config.learner_hidden,
                                         scales=social.diff_scales())
        if config.uses_gcn:
            loops = khop_index.with_self_loops()
            gcn_edge_diffs = Tensor(
                social_diff_matrix(social, loops.src, loops.dst))
        else:
            edge_diffs = Tensor(
                social_diff_matrix(social, khop_index.src, khop_index.dst))

    return Model(config, base_graph.station_ids, khop_index, conv_layers,
                 hyper_index, hyper_layers, temporal_mlp, fusion, learner,
                 edge_diffs, gcn_edge_diffs)


def forward(model: Model, node_features) -> Tensor:
    """Per-station predictions (rows x 1) for one or more stacked
    graph-signal samples.

    ``node_features`` has 8 columns and m*n rows for m samples over the
    model's n stations; samples are processed on m disjoint copies of
    the topology in one pass.
    """
    x = node_features if isinstance(node_features, Tensor) else Tensor(node_features)
    if x.cols != _N_FEATURES:
        raise ShapeError(
            f"model input needs {_N_FEATURES} feature columns, got {x.cols}"
        )
    if x.rows == 0 or x.rows % model.n != 0:
        raise ShapeError(
            f"model input rows ({x.rows}) must be a positive multiple of "
            f"the station count ({model.n})"
        )
    m = x.rows // model.n
    cfg = model.config

    idx = model.khop_index.replicated(m)
    weights = None
    if model.learner is not None:
        diffs = model.gcn_edge_diffs if cfg.uses_gcn else model.edge_diffs
        w1 = model.learner.weights_for(diffs)
        weights = concat_rows([w1] * m) if m > 1 else w1

    h = x
    if cfg.uses_gcn:
        for layer in model.conv_layers:
            h = gcn_forward(layer, h, idx, edge_weights=weights)
    else:
        for layer in model.conv_layers:
            h = sage_forward(layer, h, idx, edge_weights=weights)
    fused = h

    if model.temporal_mlp is not None:
        fused = concat_cols(fused, temporal_forward(model.temporal_mlp, x))

    if model.hyper_layers is not None:
        hidx = model.hyper_index.replicated(m)
        g = x
        for layer in model.hyper_layers:
            g = sage_forward(layer, g, hidx)
        fused = concat_cols(fused, g)

    return model.fusion.forward(fused)


def predict_task(model: Model, dataset, year: int, task) -> np.ndarray:
    """De-standardized per-station predictions for one year of the
    task the model was trained on."""
    ts, direction = parse_task(task) if isinstance(task, str) else task
    if model.trained_task is None or model.feature_std is None:
        raise ContractError(
            "predict_task needs a trained model (train() attaches the "
            "task and standardization)"
        )
    if tuple(model.trained_task) != (ts, direction):
        raise ContractError(
            f"model was trained for task {model.trained_task}, asked to "
            f"predict {(ts, direction)}"
        )
    tm = build_task(dataset, year, ts, direction)
    xs = model.feature_std.transform(tm.X)
    pred = forward(model, xs).values
    return model.target_std.inverse(pred).reshape(-1)


# ---------------------------------------------------------------------------
# checkpointing

_MAGIC = b"MFC1"
_VERSION = 1


def _std_extras(model: Model) -> dict[str, np.ndarray]:
    if model.trained_task is None:
        return {}
    ts, direction = model.trained_task
    return {
        "_meta.task": np.array([[float(ts), float(DIRECTIONS.index(direction))]]),
        "_meta.feature_mean": model.feature_std.mean,
        "_meta.feature_std": model.feature_std.std,
        "_meta.target_mean": model.target_std.mean,
        "_meta.target_std": model.target_std.std,
    }


def save_checkpoint(model: Model, path) -> None:
    """Versioned binary checkpoint: every named parameter with a shape
    header, plus standardization metadata when the model is trained."""
    entries = dict(model.named_params())
    entries = {name: t.values for name, t in entries.items()}
    entries.update(_std_extras(model))
    path = Path(path)
    with path.open("wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(entries)))
        for name in sorted(entries):
            arr = np.ascontiguousarray(entries[name], dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            f.write(arr.tobytes())


def load_checkpoint(model: Model, path) -> Model:
    """Load parameters saved by save_checkpoint into an assembled model
    of the identical configuration; returns the model."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise CheckpointError(
            f"{path} has checkpoint version {version}, expected {_VERSION}"
        )
    offset = 12
    loaded: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = rows * cols * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path} is truncated at parameter '{name}'")
        arr = np.frombuffer(blob[offset:offset + nbytes],
                            dtype="<f8").reshape(rows, cols).copy()
        offset += nbytes
        loaded[name] = arr

    params = model.named_params()
    extras = {k: v for k, v in loaded.items() if k.startswith("_meta.")}
    weights = {k: v for k, v in loaded.items() if not k.startswith("_meta.")}
    if set(weights) != set(params):
        missing = sorted(set(params) - set(weights))
        surplus = sorted(set(weights) - set(params))
        raise CheckpointError(
            f"{path} does not match the model: missing {missing or 'none'}, "
            f"unexpected {surplus or 'none'}"
        )
    for name, tensor in params.items():
        if weights[name].shape != tensor.values.shape:
            raise CheckpointError(
                f"{path}: parameter '{name}' has shape {weights[name].shape}, "
                f"model expects {tensor.values.shape}"
            )
        tensor.values[...] = weights[name]

    if extras:
        from .training import Standardizer
        needed = set(_std_extras_names())
        if not needed.issubset(extras):
            raise CheckpointError(
                f"{path}: incomplete standardization metadata"
            )
        ts = int(extras["_meta.task"][0, 0])
        direction = DIRECTIONS[int(extras["_meta.task"][0, 1])]
        model.trained_task = (ts, direction)
        model.feature_std = Standardizer(extras["_meta.feature_mean"],
                                         extras["_meta.feature_std"])
        model.target_std = Standardizer(extras["_meta.target_mean"],
                                        extras["_meta.target_std"])
    return model


def _std_extras_names() -> tuple[str, ...]:
    return ("_meta.task", "_meta.feature_mean", "_meta.feature_std",
            "_meta.target_mean", "_meta.target_std")
