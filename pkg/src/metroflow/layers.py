"""Neural building blocks: GraphSAGE convolution (max-pool and mean
aggregators), GCN convolution, plain MLPs, the social edge-weight
learner, and the per-station temporal MLP.

All layer forwards are pure functions of (parameters, inputs, topology)
and are batched: neighbor aggregation runs over a flattened edge index
(one row per directed edge) using segment reductions, so the tape cost
per layer does not grow with station count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, ShapeError
from .tensor import (
    GatherPlan,
    Segments,
    Tensor,
    add_bias,
    concat_cols,
    matmul,
    mul,
    relu,
    row_scale,
    segment_max,
    segment_sum,
    sigmoid,
    take_rows,
)

__all__ = [
    "NeighborIndex",
    "SageLayer",
    "GcnLayer",
    "Mlp",
    "EdgeWeightLearner",
    "glorot",
    "sage_aggregate",
    "sage_forward",
    "sage_forward_decomposed",
    "gcn_forward",
    "edge_weight",
    "temporal_forward",
]

_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "linear": lambda t: t}


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                  requires_grad=True)


class NeighborIndex:
    """Flattened directed-edge view of per-vertex neighbor lists.

    Edges are stored target-major: all edges pointing at vertex 0 first,
    then vertex 1, and so on; within one target, sources keep the list
    order. This makes segment reductions contiguous and deterministic.
    """

    __slots__ = ("n", "src", "dst", "base_weights", "segments", "plan",
                 "counts", "unit_weights", "_weight_tensor", "_replicas",
                 "_gcn", "_coeff_tensor")

    def __init__(self, n: int, src: np.ndarray, dst: np.ndarray,
                 base_weights: np.ndarray):
        self.n = int(n)
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)
        self.base_weights = np.asarray(base_weights, dtype=np.float64)
        if not (self.src.shape == self.dst.shape == self.base_weights.shape):
            raise ContractError("src, dst and weights must have equal length")
        self.segments = Segments.from_sorted_ids(self.dst, self.n)
        self.plan = GatherPlan(self.src, self.n)
        self.counts = self.segments.sizes.astype(np.float64)
        self.unit_weights = bool(np.all(self.base_weights == 1.0))
        self._weight_tensor = None
        self._replicas = {}
        self._gcn = None
        self._coeff_tensor = None

    @classmethod
    def from_lists(cls, neighbors) -> "NeighborIndex":
        """Build from per-vertex [(neighbor, weight), ...] lists."""
        n = len(neighbors)
        src, dst, w = [], [], []
        for v, lst in enumerate(neighbors):
            for j, wt in lst:
                if not 0 <= j < n:
                    raise ContractError(
                        f"neighbor index {j} of vertex {v} is outside [0, {n})"
                    )
                src.append(j)
                dst.append(v)
                w.append(wt)
        return cls(n, np.array(src, dtype=np.intp),
                   np.array(dst, dtype=np.intp), np.array(w))

    @classmethod
    def ensure(cls, neighbors) -> "NeighborIndex":
        if isinstance(neighbors, cls):
            return neighbors
        return cls.from_lists(neighbors)

    @property
    def n_edges(self) -> int:
        return self.src.size

    def weight_tensor(self) -> Tensor:
        """The constant base weights as an E x 1 tensor (cached)."""
        if self._weight_tensor is None:
            self._weight_tensor = Tensor(self.base_weights.reshape(-1, 1))
        return self._weight_tensor

    def replicated(self, copies: int) -> "NeighborIndex":
        """Disjoint union of `copies` shifted copies of this index.

        Copy i lives on vertex rows [i*n, (i+1)*n); target-major order
        is preserved, so batched multi-sample aggregation reuses the
        same segment machinery.
        """
        if copies == 1:
            return self
        cached = self._replicas.get(copies)
        if cached is None:
            offs = (np.arange(copies) * self.n)[:, None]
            src = (self.src[None, :] + offs).reshape(-1)
            dst = (self.dst[None, :] + offs).reshape(-1)
            w = np.tile(self.base_weights, copies)
            cached = NeighborIndex(self.n * copies, src, dst, w)
            self._replicas[copies] = cached
        return cached

    def with_self_loops(self) -> "NeighborIndex":
        """Self-loop-augmented copy with edges sorted by source within
        each target segment (deterministic summation order)."""
        if self._gcn is None:
            src = np.concatenate([self.src, np.arange(self.n)])
            dst = np.concatenate([self.dst, np.arange(self.n)])
            w = np.concatenate([self.base_weights, np.ones(self.n)])
            order = np.lexsort((src, dst))
            self._gcn = NeighborIndex(self.n, src[order], dst[order], w[order])
        return self._gcn

    def gcn_coefficients(self, weighted: bool = False) -> Tensor:
        """Constant 1/c_jv column for a self-loop-augmented index, with
        c_jv = sqrt((deg_j + 1)(deg_v + 1)) and deg counted without the
        self-loop. ``weighted`` folds the stored edge weights in
        ((w_jv/c_jv); the loop weight is 1)."""
        if self._coeff_tensor is None:
            deg = self.counts - 1.0
            c = np.sqrt((deg[self.src] + 1.0) * (deg[self.dst] + 1.0))
            inv = 1.0 / c
            self._coeff_tensor = (
                Tensor(inv.reshape(-1, 1)),
                Tensor((self.base_weights * inv).reshape(-1, 1)),
            )
        return self._coeff_tensor[1 if weighted else 0]


@dataclass
class SageLayer:
    """One GraphSAGE convolution.

    max_pool: every neighbor feature row is scaled by its edge weight,
    pushed through the pool transform relu(W_pool . + b_pool), and the
    neighborhood is reduced by elementwise max. mean: the weighted rows
    are averaged with no transform. The aggregate is concatenated with
    the vertex's own features and multiplied by W (no bias).
    """

    w: Tensor
    w_pool: Tensor | None
    b_pool: Tensor | None
    aggregator: str = "max_pool"
    activation: str = "relu"

    def __post_init__(self):
        if self.aggregator not in ("max_pool", "mean"):
            raise ContractError(
                f"aggregator must be max_pool or mean, got '{self.aggregator}'"
            )
        if self.activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation '{self.activation}'")
        if self.aggregator == "max_pool" and (
                self.w_pool is None or self.b_pool is None):
            raise ContractError("max_pool aggregation needs W_pool and b_pool")

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int,
             d_pool: int = 16, aggregator: str = "max_pool",
             activation: str = "relu") -> "SageLayer":
        if aggregator == "mean":
            # mean aggregation keeps raw neighbor features: width d_in
            w = glorot(rng, 2 * d_in, d_out)
            return cls(w, None, None, aggregator, activation)
        w_pool = glorot(rng, d_in, d_pool)
        b_pool = Tensor(np.zeros((1, d_pool)), requires_grad=True)
        w = glorot(rng, d_in + d_pool, d_out)
        return cls(w, w_pool, b_pool, aggregator, activation)

    @property
    def d_in(self) -> int:
        if self.aggregator == "mean":
            return self.w.rows // 2
        return self.w_pool.rows

    @property
    def d_out(self) -> int:
        return self.w.cols

    def params(self) -> list[Tensor]:
        if self.aggregator == "mean":
            return [self.w]
        return [self.w_pool, self.b_pool, self.w]


def _edge_rows(h: Tensor, idx: NeighborIndex, edge_weights: Tensor | None,
               pre_transform: tuple[Tensor, Tensor] | None) -> Tensor:
    """Per-edge feature rows, optionally transformed and weight-scaled.

    With a (w_pool, b_pool) pre-transform the node matrix is transformed
    first and rows gathered after, which is equivalent to transforming
    each weighted row (the transform is linear) but keeps the matmul at
    node scale.
    """
    if pre_transform is not None:
        w_pool, b_pool = pre_transform
        base = matmul(h, w_pool)
    else:
        base = h
    rows = take_rows(base, idx.plan)
    if edge_weights is not None:
        if edge_weights.shape != (idx.n_edges, 1):
            raise ShapeError(
                f"edge weights must be {idx.n_edges}x1 for this topology, "
                f"got {edge_weights.shape}"
            )
        rows = row_scale(rows, edge_weights)
    elif not idx.unit_weights:
        rows = row_scale(rows, idx.weight_tensor())
    if pre_transform is not None:
        rows = relu(add_bias(rows, pre_transform[1]))
    return rows


def sage_aggregate(layer: SageLayer, h: Tensor, neighbors,
                   edge_weights: Tensor | None = None) -> Tensor:
    """Aggregate neighbor features per vertex.

    Isolated vertices aggregate to the zero row. ``edge_weights``, when
    given, is an E x 1 tensor aligned with the index's edge order and
    overrides the stored weights (this is how learned weights enter).
    """
    idx = NeighborIndex.ensure(neighbors)
    if h.rows != idx.n:
        raise ShapeError(
            f"feature matrix has {h.rows} rows but the topology has "
            f"{idx.n} vertices"
        )
    if layer.aggregator == "max_pool":
        rows = _edge_rows(h, idx, edge_weights, (layer.w_pool, layer.b_pool))
        return segment_max(rows, idx.segments)
    rows = _edge_rows(h, idx, edge_weights, None)
    sums = segment_sum(rows, idx.segments)
    inv = np.divide(1.0, idx.counts, out=np.zeros(idx.n), where=idx.counts > 0)
    return row_scale(sums, Tensor(inv.reshape(-1, 1)))


def sage_forward(layer: SageLayer, h: Tensor, neighbors,
                 edge_weights: Tensor | None = None) -> Tensor:
    """sigma(W . CONCAT(h_v, aggregate(N(v)))) for every vertex."""
    agg = sage_aggregate(layer, h, neighbors, edge_weights)
    cat = concat_cols(h, agg)
    if cat.cols != layer.w.rows:
        raise ShapeError(
            f"layer weight expects {layer.w.rows} input columns, "
            f"got {cat.cols}"
        )
    return _ACTIVATIONS[layer.activation](matmul(cat, layer.w))


def sage_forward_decomposed(layer: SageLayer, h: Tensor, neighbors,
                            edge_weights: Tensor | None = None
                            ) -> tuple[Tensor, Tensor]:
    """The two pre-activation addends W1.h_v and W2.h_N(v), separately.

    W1 and W2 are the row blocks of W aligned with the concatenation,
    so sigma(self_part + neighbor_part) equals sage_forward exactly (up
    to float addition order).
    """
    agg = sage_aggregate(layer, h, neighbors, edge_weights)
    d_in = h.cols
    if d_in + agg.cols != layer.w.rows:
        raise ShapeError(
            f"layer weight expects {layer.w.rows} input columns, "
            f"got {d_in + agg.cols}"
        )
    w1 = take_rows(layer.w, np.arange(d_in))
    w2 = take_rows(layer.w, np.arange(d_in, layer.w.rows))
    return matmul(h, w1), matmul(agg, w2)


@dataclass
class GcnLayer:
    """One GCN convolution: sigma(b + sum_j (1/c_jv) w_j h_j W) over the
    self-loop-closed neighborhood, c_jv = sqrt((deg_j+1)(deg_v+1)).

    Normalization coefficients derive from the topology and are cached
    on the neighbor index, not stored here.
    """

    w: Tensor
    b: Tensor
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation '{self.activation}'")

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int,
             activation: str = "relu") -> "GcnLayer":
        return cls(glorot(rng, d_in, d_out),
                   Tensor(np.zeros((1, d_out)), requires_grad=True),
                   activation)

    @property
    def d_in(self) -> int:
        return self.w.rows

    @property
    def d_out(self) -> int:
        return self.w.cols

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


def gcn_forward(layer: GcnLayer, h: Tensor, neighbors,
                edge_weights: Tensor | None = None) -> Tensor:
    """GCN convolution over neighbors plus an implicit self-loop.

    ``neighbors`` describes the open neighborhoods; the self-loop and
    its normalization are added here. Stored topology weights scale
    their edges (the self-loop weighs 1). ``edge_weights``, when given,
    overrides the stored weights and must align with the self-loop
    augmented edge order (see NeighborIndex.with_self_loops).
    """
    idx = NeighborIndex.ensure(neighbors)
    loops = idx.with_self_loops()
    if h.rows != loops.n:
        raise ShapeError(
            f"feature matrix has {h.rows} rows but the topology has "
            f"{loops.n} vertices"
        )
    rows = take_rows(h, loops.plan)
    if edge_weights is not None:
        if edge_weights.shape != (loops.n_edges, 1):
            raise ShapeError(
                f"edge weights must be {loops.n_edges}x1 for the self-loop "
                f"augmented topology, got {edge_weights.shape}"
            )
        # explicit weights override the stored ones, as in sage_aggregate
        rows = row_scale(rows, mul(loops.gcn_coefficients(), edge_weights))
    else:
        rows = row_scale(rows, loops.gcn_coefficients(weighted=True))
    agg = segment_sum(rows, loops.segments)
    if agg.cols != layer.w.rows:
        raise ShapeError(
            f"layer weight expects {layer.w.rows} input columns, got {agg.cols}"
        )
    return _ACTIVATIONS[layer.activation](add_bias(matmul(agg, layer.w), layer.b))


@dataclass
class Mlp:
    """Plain fully-connected stack with a hidden activation and a
    configurable output activation."""

    weights: list[Tensor]
    biases: list[Tensor]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ContractError("an MLP needs matched weight/bias lists, >= 1 layer")
        for i in range(1, len(self.weights)):
            if self.weights[i - 1].cols != self.weights[i].rows:
                raise ShapeError(
                    f"MLP layer widths do not chain: layer {i - 1} emits "
                    f"{self.weights[i - 1].cols}, layer {i} expects "
                    f"{self.weights[i].rows}"
                )

    @classmethod
    def init(cls, rng: np.random.Generator, widths, hidden_activation="relu",
             output_activation="linear") -> "Mlp":
        widths = list(widths)
        if len(widths) < 2:
            raise ContractError(f"an MLP needs >= 2 widths, got {widths}")
        ws, bs = [], []
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            ws.append(glorot(rng, d_in, d_out))
            bs.append(Tensor(np.zeros((1, d_out)), requires_grad=True))
        return cls(ws, bs, hidden_activation, output_activation)

    @property
    def in_width(self) -> int:
        return self.weights[0].rows

    @property
    def out_width(self) -> int:
        return self.weights[-1].cols

    def forward(self, x: Tensor) -> Tensor:
        if x.cols != self.in_width:
            raise ShapeError(
                f"MLP expects {self.in_width} input columns, got {x.cols}"
            )
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add_bias(matmul(h, w), b)
            act = self.output_activation if i == last else self.hidden_activation
            h = _ACTIVATIONS[act](h)
        return h

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class EdgeWeightLearner:
    """Shared MLP mapping standardized absolute social differences
    (zone, housing price, life expectancy) of a station pair to one
    weight in (0, 1)."""

    mlp: Mlp
    scales: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        if self.mlp.in_width != 3 or self.mlp.out_width != 1:
            raise ContractError(
                f"edge-weight learner needs a 3 -> 1 MLP, got "
                f"{self.mlp.in_width} -> {self.mlp.out_width}"
            )
        scales = np.asarray(self.scales, dtype=np.float64).reshape(-1)
        if scales.size != 3 or not np.isfinite(scales).all() or scales.min() <= 0:
            raise ContractError("social scales must be 3 positive finite values")
        self.scales = scales

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = 8,
             scales=None) -> "EdgeWeightLearner":
        mlp = Mlp.init(rng, (3, hidden, 1), output_activation="sigmoid")
        return cls(mlp, np.ones(3) if scales is None else scales)

    def weights_for(self, diffs: Tensor) -> Tensor:
        """Weights for an E x 3 matrix of standardized absolute diffs."""
        return self.mlp.forward(diffs)

    def params(self) -> list[Tensor]:
        return self.mlp.params()


def _social_triple(social, station: str) -> np.ndarray:
    try:
        zone, price, life = social
    except (TypeError, ValueError):
        raise DataError(
            f"station '{station}' needs (zone, housing_price, "
            f"life_expectancy), got {social!r}"
        ) from None
    vals = [zone, price, life]
    names = ["zone", "housing_price", "life_expectancy"]
    for name, v in zip(names, vals):
        if v is None or not np.isfinite(float(v)):
            raise DataError(f"station '{station}' is missing {name}")
    return np.array([float(v) for v in vals])


def edge_weight(learner: EdgeWeightLearner, station_a_social,
                station_b_social) -> float:
    """Learned weight for one station pair; symmetric in its arguments.

    The result stays strictly inside (0, 1) even when the sigmoid
    saturates in floating point, so an emitted weight never deletes an
    edge outright.
    """
    a = _social_triple(station_a_social, "a")
    b = _social_triple(station_b_social, "b")
    diffs = np.abs(a - b) / learner.scales
    raw = learner.weights_for(Tensor(diffs.reshape(1, 3))).item()
    return min(max(raw, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))


def temporal_forward(mlp: Mlp, station_series: Tensor) -> Tensor:
    """Per-station temporal embedding; one MLP shared by all stations."""
    if station_series.cols != 8:
        raise ShapeError(
            f"temporal input needs 8 columns (the non-target "
            f"timestamp/direction pairs), got {station_series.cols}"
        )
    return mlp.forward(station_series)
