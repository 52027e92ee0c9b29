"""Minimal self-contained SVG line and scatter plots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=64, right=20, top=36, bottom=52)
PALETTE = ("#1f4e9c", "#c0392b", "#27864a", "#7d3c98", "#b9770e")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    style: str = "line"  # or "points"
    dashed: bool = False


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    hlines: list[tuple[float, str]] = field(default_factory=list)
    diagonal: bool = False

    def add(self, *args, **kwargs) -> "Figure":
        self.series.append(Series(*args, **kwargs))
        return self

    def to_svg(self) -> str:
        xs = np.concatenate([np.asarray(s.x, float) for s in self.series])
        ys = np.concatenate([np.asarray(s.y, float) for s in self.series]
                            + [np.array([h for h, _ in self.hlines], float)])
        x0, x1 = _padded(xs.min(), xs.max())
        y0, y1 = _padded(ys.min(), ys.max())
        if self.diagonal:
            x0 = y0 = min(x0, y0)
            x1 = y1 = max(x1, y1)
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def sx(v):
            return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

        def sy(v):
            return MARGIN["top"] + (1 - (v - y0) / (y1 - y0)) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
               f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
               f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               'fill="none" stroke="#333"/>']
        for t in _ticks(x0, x1):
            X = sx(t)
            out.append(f'<line x1="{X:.2f}" y1="{MARGIN["top"] + ph}" x2="{X:.2f}" '
                       f'y2="{MARGIN["top"] + ph + 5}" stroke="#333"/>')
            out.append(f'<text x="{X:.2f}" y="{MARGIN["top"] + ph + 18}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1):
            Y = sy(t)
            out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{Y:.2f}" x2="{MARGIN["left"]}" '
                       f'y2="{Y:.2f}" stroke="#333"/>')
            out.append(f'<text x="{MARGIN["left"] - 8}" y="{Y + 4:.2f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
        if self.diagonal:
            out.append(f'<line x1="{sx(x0):.2f}" y1="{sy(y0):.2f}" x2="{sx(x1):.2f}" '
                       f'y2="{sy(y1):.2f}" stroke="#999" stroke-dasharray="4 3"/>')
        for value, label in self.hlines:
            Y = sy(value)
            out.append(f'<line x1="{MARGIN["left"]}" y1="{Y:.2f}" x2="{MARGIN["left"] + pw}" '
                       f'y2="{Y:.2f}" stroke="#777" stroke-dasharray="6 4"/>')
            if label:
                out.append(f'<text x="{MARGIN["left"] + pw - 4}" y="{Y - 5:.2f}" '
                           f'text-anchor="end" fill="#555">{escape(label)}</text>')
        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            pts = [(sx(a), sy(b)) for a, b in zip(s.x, s.y)]
            if s.style == "points":
                out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}" '
                           'fill-opacity="0.75"/>' for a, b in pts)
            else:
                dash = ' stroke-dasharray="5 3"' if s.dashed else ""
                path = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
                out.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                           f'stroke-width="1.8"{dash}/>')
            if s.label:
                ly = MARGIN["top"] + 16 + 16 * i
                out.append(f'<text x="{MARGIN["left"] + 10}" y="{ly}" fill="{color}">'
                           f'{escape(s.label)}</text>')
        if self.title:
            out.append(f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" '
                       f'font-size="14">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 12}" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cy = MARGIN["top"] + ph / 2
            out.append(f'<text x="16" y="{cy}" text-anchor="middle" '
                       f'transform="rotate(-90 16 {cy})">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step) + 1)]


def _fmt(v: float) -> str:
    return f"{v:.6g}" if abs(v) > 1e-12 else "0"
