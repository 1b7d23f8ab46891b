"""Why wide receptive fields sink a spectral-style layer.

On a 12-station path, the 10-hop graph is nearly complete: the two
endpoints end up with *identical* closed neighborhoods, and the
interior stations form one big group. A GCN must then give group
members identical predictions no matter what the truth does; a
mean-aggregating SAGE layer keeps a separate self term and escapes.
"""

import tempfile
from pathlib import Path

import numpy as np

from metroflow import emit_report, oversmoothing_diagnostic, synthesize_dataset

ds = synthesize_dataset(n_stations=12, n_years=13, n_lines=1, seed=3)
report = oversmoothing_diagnostic(ds, "all", k=10, seeds=(0, 1, 2), epochs=200)

print(f"stations: {report.stations}")
print(f"k={report.k}, eval year {report.eval_year}")
print(f"closed-neighborhood groups: {report.closed_groups}")
print(f"open-neighborhood twins:    {report.twin_pairs}")

print("\nmean pairwise neighborhood overlap by hop:")
for h in (1, 2, 4, 6, 8, 10):
    stats = report.overlap_by_hop[h]
    print(f"  h={h:2d}  mean {stats['mean']:.3f}  "
          f"fully-overlapping pairs {stats['frac_full']:.3f}")

group = report.closed_groups[0]
print(f"\npredictions on the {len(group)}-station group (truth varies):")
print("  truth: ", np.round(report.truth[list(group)], 1))
print("  gcn:   ", np.round(report.gcn_predictions[list(group)], 1))
print("  sage:  ", np.round(report.sage_predictions[list(group)], 1))
spread = float(np.ptp(report.gcn_predictions[list(group)]))
print(f"  gcn spread across the group: {spread}")

print("\ntest MAPE per seed (gcn vs sage-mean):")
for s, g, m in zip(report.seeds, report.gcn_test_mapes,
                   report.sage_test_mapes):
    print(f"  seed {s}: {g:7.3f}%  vs  {m:7.3f}%")
print(f"sage wins {report.sage_wins} of {len(report.seeds)}")

with tempfile.TemporaryDirectory() as tmp:
    paths = emit_report(report, Path(tmp) / "diag")
    print("\nreport artifacts:", ", ".join(p.name for p in sorted(paths)))
