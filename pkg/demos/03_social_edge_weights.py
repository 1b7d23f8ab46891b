"""The social-feature edge-weight learner.

Every station carries three social descriptors (zone, housing price,
life expectancy). An edge's weight is produced by a small shared MLP
from the standardized absolute differences of those descriptors, so
similar neighborhoods get strong edges and dissimilar ones get weak
edges, and the mapping is symmetric by construction.
"""

import numpy as np

from metroflow import edge_weight, synthesize_dataset
from metroflow.layers import EdgeWeightLearner

ds = synthesize_dataset(20, 13, 2, seed=4)
social = ds.social

rng = np.random.default_rng(1)
learner = EdgeWeightLearner.init(rng, hidden=8, scales=social.diff_scales())

a, b, c = ds.stations[0], ds.stations[1], ds.stations[10]
print(f"{'pair':14s} zone  price   life   -> weight")
for u, v in [(a, b), (a, c), (b, c), (a, a)]:
    tu = social.triple(ds.station_index(u))
    tv = social.triple(ds.station_index(v))
    w = edge_weight(learner, tu, tv)
    print(f"{u}-{v}    {abs(tu[0] - tv[0]):4.1f} {abs(tu[1] - tv[1]):7.1f} "
          f"{abs(tu[2] - tv[2]):6.2f} -> {w:.4f}")

# symmetry and the open interval hold for every pair
ws = []
for i in range(len(ds.stations)):
    for j in range(i + 1, len(ds.stations)):
        w_uv = edge_weight(learner, social.triple(i), social.triple(j))
        assert w_uv == edge_weight(learner, social.triple(j), social.triple(i))
        assert 0.0 < w_uv < 1.0
        ws.append(w_uv)
print(f"\n{len(ws)} pairs checked: symmetric, all weights in (0, 1)")
print(f"weight spread: min {min(ws):.4f}, max {max(ws):.4f}")
