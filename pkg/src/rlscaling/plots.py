"""Plot-data assembly (long-format series) and a minimal static SVG renderer.

The SVG output is built by string concatenation with fixed formatting, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import math

import numpy as np

from .curves import LearningCurveSet
from .report import FitReport

PLOT_KINDS = ("learning_curves", "frontier", "optimal_size", "extrapolation")


def plot_series(report: FitReport, which: str, curve_set: LearningCurveSet | None = None):
    """Rows of (series, x, y) behind each supported view.

    ``learning_curves`` needs the ingested data and shows intrinsic
    performance against total compute per size, plus the y = x frontier.
    The other views derive from the fitted constants alone.
    """
    law = report.power_law
    if which == "learning_curves":
        if curve_set is None:
            raise ValueError("learning_curves view needs the input data")
        if report.intrinsic_map is None:
            raise ValueError("learning_curves view needs a fitted intrinsic map")
        rows = []
        f = report.intrinsic_map.f
        lo, hi = math.inf, 0.0
        for curve in curve_set:
            compute = curve.model_size * curve.interactions
            intrinsic = np.exp(f(curve.mean))
            lo = min(lo, float(compute.min()))
            hi = max(hi, float(compute.max()))
            label = f"N={curve.model_size:g}"
            rows.extend((label, float(x), float(y)) for x, y in zip(compute, intrinsic))
        for x in np.logspace(math.log10(lo), math.log10(hi), 64):
            rows.append(("frontier", float(x), float(x)))
        return rows
    if which == "frontier":
        sizes = np.logspace(math.log10(law.n_min), math.log10(law.n_max), 128)
        frontier = np.asarray(law.efficient_frontier(sizes))
        return [("frontier", float(n), float(e)) for n, e in zip(sizes, frontier)]
    if which == "optimal_size":
        budgets = np.logspace(math.log10(law.i_min), math.log10(law.i_max), 128)
        return [("optimal_size", float(c), float(law.optimal_size(c))) for c in budgets]
    if which == "extrapolation":
        e_lo, e_hi = report.diagnostics.e_window
        if not e_hi > 0:
            raise ValueError("report carries no data window for extrapolation")
        grid = np.logspace(math.log10(e_lo), math.log10(e_hi) + 2, 96)
        rows = []
        for size in sorted(report.diagnostics.per_size_rms):
            vals = np.asarray(law.intrinsic(size, grid))
            rows.extend((f"N={size:g}", float(e), float(i)) for e, i in zip(grid, vals))
        limit = np.asarray(law.limit_intrinsic("n_inf", grid))
        rows.extend(("n_inf", float(e), float(i)) for e, i in zip(grid, limit))
        return rows
    raise ValueError(f"unknown plot kind {which!r}; choose from {PLOT_KINDS}")


def write_series_csv(rows, stream) -> None:
    stream.write("series,x,y\n")
    for series, x, y in rows:
        stream.write(f"{series},{x!r},{y!r}\n")


_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def render_svg(rows, title="", xlabel="x", ylabel="y", width=720, height=540):
    """Log-log polyline chart as an SVG string (deterministic bytes)."""
    if not rows:
        raise ValueError("no data to plot")
    margin = 70
    xs = np.array([r[1] for r in rows])
    ys = np.array([r[2] for r in rows])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log plot needs positive values")
    lx0, lx1 = math.floor(math.log10(xs.min())), math.ceil(math.log10(xs.max()))
    ly0, ly1 = math.floor(math.log10(ys.min())), math.ceil(math.log10(ys.max()))
    lx1 = max(lx1, lx0 + 1)
    ly1 = max(ly1, ly0 + 1)

    def px(v):
        return margin + (math.log10(v) - lx0) / (lx1 - lx0) * (width - 2 * margin)

    def py(v):
        return height - margin - (math.log10(v) - ly0) / (ly1 - ly0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # axes box and decade ticks
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="black"/>'
    )
    for d in range(lx0, lx1 + 1):
        x = px(10.0**d)
        parts.append(
            f'<line x1="{x:.2f}" y1="{height - margin}" x2="{x:.2f}" '
            f'y2="{height - margin + 6}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{height - margin + 22}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">1e{d}</text>'
        )
    for d in range(ly0, ly1 + 1):
        y = py(10.0**d)
        parts.append(
            f'<line x1="{margin - 6}" y1="{y:.2f}" x2="{margin}" y2="{y:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{margin - 10}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">1e{d}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 14}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 18 {height / 2:.1f})">{ylabel}</text>'
    )

    series_names = list(dict.fromkeys(r[0] for r in rows))
    for k, name in enumerate(series_names):
        pts = [(px(r[1]), py(r[2])) for r in rows if r[0] == name]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        color = _COLORS[k % len(_COLORS)]
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - margin + 6}" y="{margin + 16 * k + 12}" font-size="11" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
