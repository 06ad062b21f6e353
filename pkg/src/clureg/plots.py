"""Self-contained SVG emission for run curves and feature scatters.

No plotting dependency: the files are small hand-built SVG documents,
deterministic for identical inputs, and valid XML.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = 56

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>',
        ]

    def axes(self, xlab: str, ylab: str):
        x0, y0 = MARGIN, HEIGHT - MARGIN
        x1, y1 = WIDTH - MARGIN, MARGIN
        self.parts.append(
            f'<path d="M {x0} {y1} L {x0} {y0} L {x1} {y0}" stroke="black" '
            'fill="none" stroke-width="1"/>')
        self.parts.append(
            f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlab}</text>')
        self.parts.append(
            f'<text x="18" y="{(y0 + y1) / 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 18 {(y0 + y1) / 2})">{ylab}</text>')

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _scaler(lo: float, hi: float, a: float, b: float):
    span = hi - lo if hi > lo else 1.0

    def to_px(v):
        return a + (v - lo) / span * (b - a)

    return to_px


def curve_svg(series: dict, title: str = "validation accuracy",
              xlab: str = "iteration", ylab: str = "accuracy") -> str:
    """series: name -> list of per-seed [(x, y), ...] polylines sharing
    a common x grid. One mean line per name plus a min/max band when
    there is more than one seed."""
    if not series:
        raise ValueError("nothing to plot")
    canvas = _Canvas(title)
    all_x = [x for runs in series.values() for run in runs for x, _ in run]
    all_y = [y for runs in series.values() for run in runs for _, y in run]
    sx = _scaler(min(all_x), max(all_x), MARGIN, WIDTH - MARGIN)
    sy = _scaler(min(all_y), max(all_y), HEIGHT - MARGIN, MARGIN)
    canvas.axes(xlab, ylab)

    for i, (name, runs) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        grid = [x for x, _ in runs[0]]
        for run in runs:
            if [x for x, _ in run] != grid:
                raise ValueError(f"series {name!r}: runs have mixed x grids")
        ys = np.array([[y for _, y in run] for run in runs])
        if len(runs) > 1:
            top = [(x, y) for x, y in zip(grid, ys.max(axis=0))]
            bot = [(x, y) for x, y in zip(grid, ys.min(axis=0))]
            pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in top + bot[::-1])
            canvas.parts.append(
                f'<polygon points="{pts}" fill="{color}" opacity="0.15" stroke="none"/>')
        mean = ys.mean(axis=0)
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(grid, mean))
        canvas.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        canvas.parts.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * i + 10}" '
            f'font-family="sans-serif" font-size="11" fill="{color}" '
            f'text-anchor="end">{name}</text>')
    return canvas.finish()


def scatter_svg(points: np.ndarray, labels: np.ndarray,
                domains: np.ndarray | None = None,
                title: str = "features") -> str:
    """2-D points colored by class; squares mark the second domain."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"scatter needs n x 2 points, got {points.shape}")
    if len(points) == 0:
        raise ValueError("nothing to plot")
    labels = np.asarray(labels)
    canvas = _Canvas(title)
    sx = _scaler(points[:, 0].min(), points[:, 0].max(), MARGIN, WIDTH - MARGIN)
    sy = _scaler(points[:, 1].min(), points[:, 1].max(), HEIGHT - MARGIN, MARGIN)
    canvas.axes("component 1", "component 2")
    for i, (p, lab) in enumerate(zip(points, labels)):
        color = PALETTE[int(lab) % len(PALETTE)]
        x, y = sx(p[0]), sy(p[1])
        if domains is not None and domains[i]:
            canvas.parts.append(
                f'<rect x="{_fmt(x - 2.5)}" y="{_fmt(y - 2.5)}" width="5" height="5" '
                f'fill="none" stroke="{color}" stroke-width="1"/>')
        else:
            canvas.parts.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.5" fill="{color}" '
                'fill-opacity="0.7"/>')
    return canvas.finish()


def emit_plot(input_data, kind: str, path) -> None:
    """Write a curve or scatter plot; see curve_svg/scatter_svg for the
    expected input shapes."""
    if kind == "curve":
        records = list(input_data)
        if not records:
            raise ValueError("no records to plot")
        versions = {r.schema_version for r in records}
        if len(versions) > 1:
            raise ValueError(f"mixed record schema versions: {sorted(versions)}")
        by_hash: dict[str, list] = {}
        for r in records:
            by_hash.setdefault(r.config_hash, []).append(
                [(int(s), float(a)) for s, a in r.val_curve])
        svg = curve_svg(by_hash)
    elif kind == "scatter":
        points, labels, domains = input_data
        svg = scatter_svg(points, labels, domains)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    Path(path).write_text(svg)
