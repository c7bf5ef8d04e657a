"""Self-contained SVG charts: ROC curves and score timelines."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .evaluation import RocResult
from .video import AnomalyAnnotation

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=20, top=36, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str, x_range, y_range):
        self.parts = []
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.parts.append(f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
        self.parts.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
                          f'{escape(x_label)}</text>')
        self.parts.append(f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" font-size="12" '
                          f'transform="rotate(-90 16 {HEIGHT / 2:.0f})">{escape(y_label)}</text>')

    def sx(self, x):
        span = (self.x1 - self.x0) or 1.0
        return MARGIN["left"] + (x - self.x0) / span * self.pw

    def sy(self, y):
        span = (self.y1 - self.y0) or 1.0
        return MARGIN["top"] + self.ph - (y - self.y0) / span * self.ph

    def axes(self, x_ticks, y_ticks):
        l, t = MARGIN["left"], MARGIN["top"]
        self.parts.append(f'<rect x="{l}" y="{t}" width="{self.pw}" height="{self.ph}" fill="none" stroke="#333"/>')
        for v in x_ticks:
            x = _f(self.sx(v))
            self.parts.append(f'<line x1="{x}" y1="{t + self.ph}" x2="{x}" y2="{t + self.ph + 4}" stroke="#333"/>')
            self.parts.append(f'<text x="{x}" y="{t + self.ph + 17}" text-anchor="middle" font-size="10">{v:g}</text>')
        for v in y_ticks:
            y = _f(self.sy(v))
            self.parts.append(f'<line x1="{l - 4}" y1="{y}" x2="{l}" y2="{y}" stroke="#333"/>')
            self.parts.append(f'<text x="{l - 7}" y="{y}" text-anchor="end" dominant-baseline="middle" '
                              f'font-size="10">{v:g}</text>')

    def polyline(self, xs, ys, color, width=1.5, dash=None):
        pts = " ".join(f"{_f(self.sx(x))},{_f(self.sy(y))}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>')

    def band(self, x_lo, x_hi, color="#f4b6b6"):
        x_lo, x_hi = max(x_lo, self.x0), min(x_hi, self.x1)
        x = self.sx(x_lo)
        self.parts.append(f'<rect x="{_f(x)}" y="{MARGIN["top"]}" width="{_f(self.sx(x_hi) - x)}" '
                          f'height="{self.ph}" fill="{color}" fill-opacity="0.5"/>')

    def legend(self, labels: Sequence[str], colors: Sequence[str], corner="bottom-right"):
        x = MARGIN["left"] + self.pw - 190 if corner.endswith("right") else MARGIN["left"] + 10
        y = MARGIN["top"] + self.ph - 16 * len(labels) - 6 if corner.startswith("bottom") else MARGIN["top"] + 8
        for i, (lab, c) in enumerate(zip(labels, colors)):
            yy = y + 16 * i
            self.parts.append(f'<line x1="{x}" y1="{yy + 6}" x2="{x + 18}" y2="{yy + 6}" stroke="{c}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x + 24}" y="{yy + 10}" font-size="11">{escape(lab)}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
                f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n{body}\n</svg>\n')


def roc_svg(curves: Mapping[str, RocResult], title: str = "Frame-level ROC") -> str:
    c = _Canvas(title, "false positive rate", "true positive rate", (0.0, 1.0), (0.0, 1.0))
    ticks = [0, 0.2, 0.4, 0.6, 0.8, 1]
    c.axes(ticks, ticks)
    c.polyline([0, 1], [0, 1], "#999", 1, "4 3")
    labels, colors = [], []
    for i, (name, roc) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        c.polyline(roc.fpr, roc.tpr, color)
        labels.append(f"{name} (AUC {roc.auc:.3f})")
        colors.append(color)
    c.legend(labels, colors)
    return c.render()


def timeline_svg(frames: Sequence[int], values: Sequence[float], annotation: AnomalyAnnotation | None,
                 title: str = "Anomaly score", label: str = "normalized score") -> str:
    """Score against frame index, with the annotated window shaded."""
    frames = list(frames)
    vals = np.asarray(values, dtype=np.float64)
    n = max(frames[-1] if frames else 1, 1)
    hi = max(1.0, float(vals.max())) if vals.size else 1.0
    c = _Canvas(title, "frame", label, (0.0, float(n)), (0.0, hi))
    if annotation is not None:
        c.band(annotation.start - 0.5, annotation.end + 0.5)
    step = max(1, int(np.ceil(n / 8 / 5.0)) * 5)
    c.axes(list(range(0, n + 1, step)), [round(hi * k / 5, 3) for k in range(6)])
    if frames:
        c.polyline(frames, vals, PALETTE[0])
    return c.render()
