"""Rendering of experiment output: result tables, per-task best-hop
summaries, MAPE-vs-hop line plots, and the diagnostic's prediction
overlay. Plots are plain hand-written SVG so the artifacts stay
dependency-free and diffable."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError, ReportError
from .experiments import (
    ExperimentResult,
    OversmoothingReport,
    RESULT_HEADER,
    best_hop_summary,
)

__all__ = ["emit_report"]

_PALETTE = ("#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910",
            "#16737e", "#7f8c8d", "#2c3e50")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 62, 150, 24, 46


def emit_report(result, out_dir) -> list[Path]:
    """Write the artifact set for a grid result or a diagnostic report
    into ``out_dir`` and return the created paths.

    ExperimentResult -> results.csv, timings.csv, one summary CSV and
    one MAPE-vs-hop SVG per task. OversmoothingReport -> diagnostic.json
    and a truth-vs-predictions SVG.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create report directory {out}: {exc}") from exc
    if isinstance(result, ExperimentResult):
        return _emit_grid(result, out)
    if isinstance(result, OversmoothingReport):
        return _emit_diagnostic(result, out)
    raise ContractError(
        f"emit_report renders ExperimentResult or OversmoothingReport, "
        f"got {type(result).__name__}"
    )


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def _emit_grid(result: ExperimentResult, out: Path) -> list[Path]:
    files = []
    lines = [RESULT_HEADER] + [r.csv_row() for r in result.rows]
    files.append(_write_text(out / "results.csv", "\n".join(lines) + "\n"))

    timing_lines = ["variant,sampling_rate,k,task,seed,wall_time"]
    for r in result.rows:
        rate = "" if r.sampling_rate is None else f"{r.sampling_rate:g}"
        wt = "" if r.wall_time is None else f"{r.wall_time:.3f}"
        timing_lines.append(f"{r.variant},{rate},{r.k},{r.task},{r.seed},{wt}")
    files.append(_write_text(out / "timings.csv",
                             "\n".join(timing_lines) + "\n"))

    summary = best_hop_summary(result)
    tasks = []
    for row in result.rows:
        if row.task not in tasks:
            tasks.append(row.task)
    for task in tasks:
        rows = sorted((s for s in summary if s.task == task),
                      key=lambda s: s.median_test_mape)
        body = ["variant,median_test_mape,hop"]
        body += [f"{s.label()},{s.median_test_mape!r},{s.best_hop}"
                 for s in rows]
        files.append(_write_text(out / f"summary_{task}.csv",
                                 "\n".join(body) + "\n"))
        files.append(_write_text(out / f"mape_vs_hop_{task}.svg",
                                 _hop_plot_svg(result, task)))
    return files


def _median_curves(result: ExperimentResult, task: str):
    """Per variant label: sorted (hop, median test MAPE) pairs."""
    series: dict[str, dict[int, list[float]]] = {}
    for r in result.rows:
        if r.task != task or not r.ok:
            continue
        series.setdefault(r.label(), {}).setdefault(r.k, []).append(r.test_mape)
    out = {}
    for label, by_hop in series.items():
        out[label] = sorted((k, float(np.median(v))) for k, v in by_hop.items())
    return out


def _svg_header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="16" font-family="sans-serif" font-size="13" '
        f'fill="#222">{title}</text>',
    ]


def _axes(x0: float, x1: float, y0: float, y1: float,
          x_label: str, y_label: str, x_ticks, y_ticks) -> list[str]:
    px0, px1 = _ML, _W - _MR
    py0, py1 = _H - _MB, _MT

    def sx(x):
        return px0 + (x - x0) / (x1 - x0) * (px1 - px0)

    def sy(y):
        return py0 - (y - y0) / (y1 - y0) * (py0 - py1)

    parts = [
        f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<text x="{(px0 + px1) / 2:.1f}" y="{_H - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" fill="#222">{x_label}</text>',
        f'<text x="14" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" fill="#222" '
        f'transform="rotate(-90 14 {(py0 + py1) / 2:.1f})">{y_label}</text>',
    ]
    for t in x_ticks:
        parts.append(f'<line x1="{sx(t):.1f}" y1="{py0}" x2="{sx(t):.1f}" '
                     f'y2="{py0 + 4}" stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{sx(t):.1f}" y="{py0 + 17}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11" fill="#222">{t:g}</text>')
    for t in y_ticks:
        parts.append(f'<line x1="{px0 - 4}" y1="{sy(t):.1f}" x2="{px0}" '
                     f'y2="{sy(t):.1f}" stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{px0 - 7}" y="{sy(t):.1f}" dy="4" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" fill="#222">{t:g}</text>')
    return parts


def _scalers(x0, x1, y0, y1):
    px0, px1 = _ML, _W - _MR
    py0, py1 = _H - _MB, _MT

    def sx(x):
        return px0 + (x - x0) / (x1 - x0) * (px1 - px0)

    def sy(y):
        return py0 - (y - y0) / (y1 - y0) * (py0 - py1)

    return sx, sy


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = float(min((s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag)
                      if s >= raw), default=raw))
    first = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(first, hi + step / 2, step)
            if lo <= t <= hi]


def _hop_plot_svg(result: ExperimentResult, task: str) -> str:
    curves = _median_curves(result, task)
    hops = sorted({k for pts in curves.values() for k, _ in pts}) or [1]
    values = [m for pts in curves.values() for _, m in pts] or [0.0, 1.0]
    x0, x1 = min(hops), max(hops)
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0 = 0.0
    y1 = max(values) * 1.08 or 1.0
    sx, sy = _scalers(x0, x1, y0, y1)

    parts = _svg_header(f"Median test MAPE vs hop: {task}")
    parts += _axes(x0, x1, y0, y1, "hop (k)", "test MAPE (%)",
                   hops, _ticks(y0, y1))
    for i, (label, pts) in enumerate(sorted(curves.items())):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(k):.1f},{sy(m):.1f}" for k, m in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        for k, m in pts:
            parts.append(f'<circle cx="{sx(k):.1f}" cy="{sy(m):.1f}" '
                         f'r="2.4" fill="{color}"/>')
        ly = _MT + 14 + i * 16
        lx = _W - _MR + 10
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{lx + 23}" y="{ly}" font-family="sans-serif" '
                     f'font-size="11" fill="#222">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _emit_diagnostic(report: OversmoothingReport, out: Path) -> list[Path]:
    files = []
    payload = json.dumps(report.to_json_dict(), indent=2) + "\n"
    files.append(_write_text(out / "diagnostic.json", payload))
    files.append(_write_text(out / "diagnostic_predictions.svg",
                             _prediction_svg(report)))
    return files


def _prediction_svg(report: OversmoothingReport) -> str:
    n = len(report.stations)
    series = [
        ("truth", report.truth, "#2c3e50"),
        ("gcn", report.gcn_predictions, "#c0392b"),
        ("sage_mean", report.sage_predictions, "#1b6ca8"),
    ]
    lo = min(float(np.min(v)) for _, v, _ in series)
    hi = max(float(np.max(v)) for _, v, _ in series)
    pad = (hi - lo) * 0.08 or 1.0
    y0, y1 = max(lo - pad, 0.0), hi + pad
    x0, x1 = 0, max(n - 1, 1)
    sx, sy = _scalers(x0, x1, y0, y1)

    parts = _svg_header(
        f"{report.task} truth vs predictions, year {report.eval_year} "
        f"(k={report.k})")
    x_ticks = list(range(0, n, max(1, n // 8)))
    parts += _axes(x0, x1, y0, y1, "station index", "flow",
                   x_ticks, _ticks(y0, y1))
    for i, (label, vec, color) in enumerate(series):
        coords = " ".join(f"{sx(j):.1f},{sy(float(vec[j])):.1f}"
                          for j in range(n))
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        ly = _MT + 14 + i * 16
        lx = _W - _MR + 10
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{lx + 23}" y="{ly}" font-family="sans-serif" '
                     f'font-size="11" fill="#222">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
