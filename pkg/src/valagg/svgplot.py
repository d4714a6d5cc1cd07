"""Log-log SVG line charts written by hand, no plotting dependency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 860, 560
LEFT, RIGHT, TOP, BOTTOM = 90, 230, 50, 70


@dataclass(frozen=True)
class Series:
    label: str
    n: np.ndarray
    y: np.ndarray
    dashed: bool = False
    color: str | None = None


def thin_indices(length: int, max_points: int = 400) -> np.ndarray:
    """Geometrically spaced 0-based indices, always keeping first and last."""
    if length <= max_points:
        return np.arange(length)
    idx = np.unique(np.round(np.geomspace(1, length, max_points)).astype(int) - 1)
    return idx


def _positive(series: Series):
    keep = (np.asarray(series.y) > 0) & np.isfinite(series.y) & (np.asarray(series.n) > 0)
    return np.asarray(series.n, dtype=float)[keep], np.asarray(series.y, dtype=float)[keep]


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def render_loglog(series: list[Series], title: str, x_label: str, y_label: str) -> str:
    pts = [_positive(s) for s in series]
    if not any(len(n) for n, _ in pts):
        raise ValueError("nothing to plot: no positive values")
    xs = np.concatenate([n for n, _ in pts])
    ys = np.concatenate([y for _, y in pts])
    xd, yd = _decades(xs.min(), xs.max()), _decades(ys.min(), ys.max())
    x0, x1 = xd[0], max(xd[-1], xd[0] + 1)
    y0, y1 = yd[0], max(yd[-1], yd[0] + 1)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(n):
        return LEFT + (math.log10(n) - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (math.log10(v) - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="28" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]
    for k in range(x0, x1 + 1):
        x = LEFT + (k - x0) / (x1 - x0) * pw
        out.append(f'<line x1="{x:.2f}" y1="{TOP}" x2="{x:.2f}" y2="{TOP + ph}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 20}" text-anchor="middle" font-size="12" '
                   f'font-family="sans-serif">1e{k}</text>')
    for k in range(y0, y1 + 1):
        y = TOP + ph - (k - y0) / (y1 - y0) * ph
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="12" '
                   f'font-family="sans-serif">1e{k}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 20}" text-anchor="middle" font-size="14" '
               f'font-family="sans-serif">{escape(x_label)}</text>')
    cy = TOP + ph / 2
    out.append(f'<text x="24" y="{cy:.1f}" text-anchor="middle" font-size="14" font-family="sans-serif" '
               f'transform="rotate(-90 24 {cy:.1f})">{escape(y_label)}</text>')

    for i, (s, (n, y)) in enumerate(zip(series, pts)):
        color = s.color or COLORS[i % len(COLORS)]
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(n, y))
        out.append(f'<polyline class="{"envelope" if s.dashed else "empirical"}" fill="none" '
                   f'stroke="{color}" stroke-width="2"{dash} points="{coords}"/>')
        ly = TOP + 14 + 22 * i
        lx = LEFT + pw + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text class="legend" x="{lx + 30}" y="{ly + 4}" font-size="12" '
                   f'font-family="sans-serif">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
