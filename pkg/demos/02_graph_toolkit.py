"""Station-graph machinery: k-hop widening, hypergraph expansion,
and edge sampling.

Uses a small hand-drawn network so every matrix fits on screen.
"""

import numpy as np

from metroflow import (
    BaseGraph,
    Hypergraph,
    build_khop,
    clique_expand,
    neighborhood_overlap,
    sample_adjacency,
)

# a path a-b-c-d plus a spur e hanging off b
ids = ("a", "b", "c", "d", "e")
adj = np.zeros((5, 5), dtype=int)
for u, v in [(0, 1), (1, 2), (2, 3), (1, 4)]:
    adj[u, v] = adj[v, u] = 1
base = BaseGraph(adj=adj, station_ids=ids)

print("base adjacency:")
print(base.adj)
for k in (1, 2, 3):
    kh = build_khop(base, k)
    print(f"\nk={k} edges (distance 1..{k}):")
    print(np.asarray(kh.adj))

# neighborhoods widen monotonically, so overlap between any two
# vertices can only grow with k
for k in (1, 2, 3):
    print(f"overlap(a, c) at k={k}: {neighborhood_overlap(build_khop(base, k), 0, 2):.3f}")

# two metro lines as hyperedges: one edge joins ALL its stations
incidence = np.array([[1, 0],
                      [1, 1],
                      [1, 0],
                      [1, 0],
                      [0, 1]])
hyper = Hypergraph(incidence=incidence, edge_weights=np.ones(2),
                   station_ids=ids)
delta = clique_expand(hyper)
print("\nclique-expanded weights (rows sum to <= 1):")
print(np.round(delta.weights, 3))

# sampling keeps each off-diagonal pair with the given probability;
# the matrix stays symmetric and the diagonal is untouched
sampled = sample_adjacency(delta, 0.5, seed=7)
kept = np.count_nonzero(sampled.weights) - np.count_nonzero(np.diag(sampled.weights))
total = np.count_nonzero(delta.weights) - np.count_nonzero(np.diag(delta.weights))
print(f"\nsampling at rate 0.5 kept {kept // 2} of {total // 2} edges")
assert np.array_equal(sampled.weights, sampled.weights.T)
