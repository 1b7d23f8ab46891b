"""Station graph structures: base adjacency, k-hop reach graphs,
line hypergraphs, clique expansion, and stochastic edge sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, GraphError, UnknownStationError

__all__ = [
    "BaseGraph",
    "KHopGraph",
    "Hypergraph",
    "WeightedGraph",
    "build_khop",
    "clique_expand",
    "sample_adjacency",
    "neighbor_sets",
    "neighborhood_overlap",
]


def _check_square_symmetric(mat: np.ndarray, what: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise GraphError(f"{what} must be square, got shape {mat.shape}")
    if not np.array_equal(mat, mat.T):
        raise GraphError(f"{what} must be symmetric")


def _check_binary_no_loops(adj: np.ndarray, what: str) -> None:
    _check_square_symmetric(adj, what)
    if not np.isin(adj, (0, 1)).all():
        raise GraphError(f"{what} entries must be 0 or 1")
    if np.any(np.diag(adj) != 0):
        raise GraphError(f"{what} must have a zero diagonal (no self-loops)")


@dataclass(frozen=True)
class BaseGraph:
    """Physical metro graph: stations and their direct track connections."""

    station_ids: tuple[str, ...]
    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj)
        _check_binary_no_loops(adj, "base adjacency")
        if adj.shape[0] != len(self.station_ids):
            raise GraphError(
                f"adjacency is {adj.shape[0]}x{adj.shape[0]} but there are "
                f"{len(self.station_ids)} station ids"
            )
        object.__setattr__(self, "adj", adj.astype(np.int8))
        object.__setattr__(self, "station_ids", tuple(self.station_ids))

    @classmethod
    def from_edges(cls, station_ids, edges) -> "BaseGraph":
        """Build from (id_a, id_b) pairs; ids must appear in station_ids."""
        ids = tuple(station_ids)
        index = {s: i for i, s in enumerate(ids)}
        adj = np.zeros((len(ids), len(ids)), dtype=np.int8)
        for a, b in edges:
            if a not in index:
                raise UnknownStationError(f"edge references unknown station '{a}'")
            if b not in index:
                raise UnknownStationError(f"edge references unknown station '{b}'")
            if a == b:
                raise GraphError(f"self-edge on station '{a}' is not allowed")
            adj[index[a], index[b]] = 1
            adj[index[b], index[a]] = 1
        return cls(ids, adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for j in np.flatnonzero(self.adj[v]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return bool(seen.all())


@dataclass(frozen=True)
class KHopGraph:
    """Edges join station pairs at shortest-path distance 1..k in the base
    graph (cumulative reach); the diagonal stays zero."""

    k: int
    adj: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ContractError(f"hop count must be >= 1, got {self.k}")
        adj = np.asarray(self.adj)
        _check_binary_no_loops(adj, "k-hop adjacency")
        object.__setattr__(self, "adj", adj.astype(np.int8))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def to_weighted(self) -> "WeightedGraph":
        return WeightedGraph(self.adj.astype(np.float64))


@dataclass(frozen=True)
class Hypergraph:
    """Incidence of stations (rows) to metro lines (hyperedge columns)."""

    incidence: np.ndarray
    edge_weights: np.ndarray
    station_ids: tuple[str, ...] | None = None
    line_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        m = np.asarray(self.incidence, dtype=np.int8)
        if m.ndim != 2:
            raise GraphError(f"incidence must be 2-D, got shape {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise GraphError("incidence entries must be 0 or 1")
        z = np.asarray(self.edge_weights, dtype=np.float64).reshape(-1)
        if z.size != m.shape[1]:
            raise GraphError(
                f"{m.shape[1]} hyperedges but {z.size} edge weights"
            )
        if z.size and (not np.isfinite(z).all() or z.min() <= 0):
            raise GraphError("hyperedge weights must be positive and finite")
        sizes = m.sum(axis=0)
        small = np.flatnonzero(sizes < 2)
        if small.size:
            e = int(small[0])
            name = self.line_ids[e] if self.line_ids else str(e)
            raise GraphError(
                f"hyperedge '{name}' has {int(sizes[e])} vertices; every "
                f"hyperedge needs at least 2"
            )
        memberships = m.sum(axis=1)
        orphans = np.flatnonzero(memberships < 1)
        if orphans.size:
            v = int(orphans[0])
            name = self.station_ids[v] if self.station_ids else str(v)
            raise GraphError(
                f"vertex '{name}' belongs to no hyperedge; every vertex "
                f"needs at least 1"
            )
        object.__setattr__(self, "incidence", m)
        object.__setattr__(self, "edge_weights", z)

    @classmethod
    def unit_weights(cls, incidence, station_ids=None, line_ids=None) -> "Hypergraph":
        m = np.asarray(incidence)
        return cls(m, np.ones(m.shape[1]), station_ids, line_ids)

    @property
    def n(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric nonnegative weight matrix over stations."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        _check_square_symmetric(w, "weight matrix")
        if not np.isfinite(w).all():
            raise GraphError("weight matrix entries must be finite")
        if w.size and w.min() < 0:
            raise GraphError("weight matrix entries must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def build_khop(g: BaseGraph, k: int) -> KHopGraph:
    """Adjacency over pairs reachable within k walks, self excluded.

    Union of the nonzero patterns of A^1 .. A^k with a zeroed diagonal,
    which equals "shortest-path distance between 1 and k".
    """
    if k < 1:
        raise ContractError(f"hop count must be >= 1, got {k}")
    a = g.adj.astype(np.float64)
    reach = a > 0
    cur = a
    for _ in range(k - 1):
        cur = (cur @ a > 0).astype(np.float64)
        reach |= cur > 0
    acc = reach.astype(np.int8)
    np.fill_diagonal(acc, 0)
    return KHopGraph(k, acc)


def clique_expand(h: Hypergraph) -> WeightedGraph:
    """Expand each hyperedge into a normalized clique.

    Returns D_V^{-1/2} M Z D_E^{-1} M^T D_V^{-1/2} where D_V[v] is the
    weighted number of hyperedges containing v and D_E[e] is the size of
    hyperedge e.
    """
    m = h.incidence.astype(np.float64)
    z = h.edge_weights
    d_v = m @ z
    bad = np.flatnonzero(d_v <= 0)
    if bad.size:
        v = int(bad[0])
        name = h.station_ids[v] if h.station_ids else str(v)
        raise GraphError(f"vertex '{name}' has zero hyperedge degree")
    d_e = m.sum(axis=0)
    inv_sqrt_dv = 1.0 / np.sqrt(d_v)
    scaled = m * (z / d_e)
    delta = (inv_sqrt_dv[:, None] * (scaled @ m.T)) * inv_sqrt_dv[None, :]
    delta = (delta + delta.T) / 2.0
    return WeightedGraph(delta)


def sample_adjacency(w: WeightedGraph, keep_rate: float, seed) -> WeightedGraph:
    """Zero out each off-diagonal pair with probability 1 - keep_rate.

    The mask is drawn once on i<j entries, mirrored for symmetry, and
    the diagonal is kept. Deterministic for a fixed seed (an int or any
    numpy seed sequence).
    """
    if not 0.0 <= keep_rate <= 1.0:
        raise ContractError(f"keep_rate must lie in [0, 1], got {keep_rate}")
    n = w.n
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < keep_rate
    mask = np.ones((n, n))
    mask[iu, ju] = keep
    mask[ju, iu] = keep
    return WeightedGraph(w.weights * mask)


def _weight_matrix(graph) -> np.ndarray:
    if isinstance(graph, WeightedGraph):
        return graph.weights
    if isinstance(graph, (BaseGraph, KHopGraph)):
        return graph.adj.astype(np.float64)
    raise ContractError(
        f"expected a graph structure, got {type(graph).__name__}"
    )


def neighbor_sets(graph, threshold: float = 0.0) -> list[list[tuple[int, float]]]:
    """Per-vertex (neighbor, weight) lists for entries strictly above
    threshold; self always excluded. Accepts any graph structure."""
    w = _weight_matrix(graph)
    n = w.shape[0]
    out = []
    for i in range(n):
        row = w[i]
        js = np.flatnonzero(row > threshold)
        out.append([(int(j), float(row[j])) for j in js if j != i])
    return out


def neighborhood_overlap(g, u: int, v: int) -> float:
    """Jaccard similarity of the (open) neighbor sets of u and v."""
    if u == v:
        raise ContractError(f"overlap needs two distinct vertices, got {u} twice")
    w = _weight_matrix(g)
    nu = w[u] > 0
    nv = w[v] > 0
    nu[u] = False
    nv[v] = False
    union = np.count_nonzero(nu | nv)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(nu & nv) / union)
