"""Minimal dependency-free SVG charts.

Each series is emitted as a ``<polyline>`` (or bar group) carrying a
``data-series`` attribute, so tests can read plotted values back from the
markup.  No timestamps or random ids are embedded.
"""
from __future__ import annotations

import re
from html import escape
from typing import Mapping, Sequence

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _scale(lo: float, hi: float, a: float, b: float):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / (hi - lo)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1, y0, y1 = MARGIN, WIDTH - MARGIN / 2, HEIGHT - MARGIN, MARGIN / 2
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 15}" font-size="10">{_fmt(xr[0])}</text>',
        f'<text x="{x1}" y="{y0 + 15}" font-size="10" text-anchor="end">{_fmt(xr[1])}</text>',
        f'<text x="{x0 - 5}" y="{y0}" font-size="10" text-anchor="end">{_fmt(yr[0])}</text>',
        f'<text x="{x0 - 5}" y="{y1 + 10}" font-size="10" text-anchor="end">{_fmt(yr[1])}</text>',
    ]


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = MARGIN / 2 + 14 * i + 10
        out.append(f'<rect x="{WIDTH - 170}" y="{y - 8}" width="10" height="10" fill="{COLORS[i % len(COLORS)]}"/>')
        out.append(f'<text x="{WIDTH - 155}" y="{y + 1}" font-size="11">{escape(name)}</text>')
    return out


def line_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
              xlabel: str = "", ylabel: str = "") -> str:
    xs = [np.asarray(x, dtype=float) for x, _ in series.values()]
    ys = [np.asarray(y, dtype=float) for _, y in series.values()]
    finite_x = np.concatenate([x for x in xs if x.size] or [np.zeros(1)])
    finite_y = np.concatenate([y for y in ys if y.size] or [np.zeros(1)])
    xr = (float(finite_x.min()), float(finite_x.max()))
    yr = (float(finite_y.min()), float(finite_y.max()))
    sx = _scale(*xr, MARGIN, WIDTH - MARGIN / 2)
    sy = _scale(*yr, HEIGHT - MARGIN, MARGIN / 2)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    for i, (name, x, y) in enumerate(zip(series, xs, ys)):
        data = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(x, y))
        points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(sx(x), sy(y)))
        parts.append(f'<polyline data-series="{escape(name)}" data-values="{data}" points="{points}" '
                     f'fill="none" stroke="{COLORS[i % len(COLORS)]}" stroke-width="1.5"/>')
    parts += _legend(list(series))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_plot(series: Mapping[str, Sequence[float]], title: str = "", xlabel: str = "",
             ylabel: str = "") -> str:
    """Grouped bars, one group per bin index."""
    values = [np.asarray(v, dtype=float) for v in series.values()]
    n_bins = max(v.size for v in values)
    top = max(float(v.max()) for v in values) or 1.0
    sy = _scale(0.0, top, HEIGHT - MARGIN, MARGIN / 2)
    slot = (WIDTH - 1.5 * MARGIN) / n_bins
    width = 0.8 * slot / len(values)
    parts = _frame(title, xlabel, ylabel, (0, n_bins - 1), (0.0, top))
    for i, (name, v) in enumerate(zip(series, values)):
        data = " ".join(_fmt(a) for a in v)
        parts.append(f'<g data-series="{escape(name)}" data-values="{data}" fill="{COLORS[i % len(COLORS)]}">')
        for b, a in enumerate(v):
            x = MARGIN + b * slot + 0.1 * slot + i * width
            y = float(sy(a))
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(width)}" '
                         f'height="{_fmt(HEIGHT - MARGIN - y)}"/>')
        parts.append("</g>")
    parts += _legend(list(series))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_series(svg: str) -> dict[str, list[float]]:
    """Recover ``data-values`` per series (y values for line plots)."""
    out = {}
    for name, values in re.findall(r'data-series="([^"]*)" data-values="([^"]*)"', svg):
        nums = []
        for token in values.split():
            nums.append(float(token.split(",")[-1]))
        out[name] = nums
    return out
