"""Sweep variants and hop depths, then render the report artifacts.

A scaled-down grid keeps this demo under a minute; the full default
grid behind `metroflow grid` is the same machinery with more cells.
"""

import tempfile
from pathlib import Path

from metroflow import (
    GridSpec,
    best_hop_summary,
    emit_report,
    run_grid,
    synthesize_dataset,
)

ds = synthesize_dataset(n_stations=24, n_years=13, n_lines=3, seed=7)

spec = GridSpec(
    variants=(("main_body", None), ("sage_baseline", None), ("kth", 0.9)),
    hops=(1, 2, 3),
    tasks=("late_entry",),
    seeds=(0, 1),
    epochs=120,
)
print(f"{len(list(spec.cells()))} cells")

result = run_grid(spec, ds, workers=1, log=print)

print("\nbest hop per variant (median test MAPE over seeds):")
for row in best_hop_summary(result):
    print(f"  {row.variant:14s} hop {row.best_hop}  "
          f"{row.median_test_mape:.3f}%")

with tempfile.TemporaryDirectory() as tmp:
    paths = emit_report(result, Path(tmp) / "report")
    print("\nreport artifacts:")
    for p in sorted(paths):
        print(f"  {p.name:26s} {p.stat().st_size:7d} bytes")
    summary = (Path(tmp) / "report" / "summary_late_entry.csv").read_text()
    print("\nsummary_late_entry.csv:")
    print(summary)
