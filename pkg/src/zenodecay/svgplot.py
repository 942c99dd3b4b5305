"""Minimal static SVG line plots with byte-deterministic output."""

from __future__ import annotations

import os
from xml.sax.saxutils import escape

import numpy as np

from .exceptions import OutputError, ValidationError

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _fmt(v):
    return f"{v:.2f}"


def _tick_label(v):
    return f"{v:.3g}"


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def render_svg(curves, title="", xlabel="", ylabel="", log_y=False) -> str:
    """SVG document for ``curves``, a mapping ``name -> (x, y)``.

    With ``log_y`` non-positive values are dropped from the plotted series.
    """
    if not curves:
        raise ValidationError("no series to plot")
    series = []
    for name, (x, y) in curves.items():
        x = np.asarray(x, float).ravel()
        y = np.asarray(y, float).ravel()
        if x.size == 0 or x.shape != y.shape:
            raise ValidationError(f"series {name!r} is empty or has mismatched x/y")
        keep = np.isfinite(x) & np.isfinite(y)
        if log_y:
            keep &= y > 0
        if not keep.any():
            raise ValidationError(f"series {name!r} has no plottable points")
        yy = np.log10(y[keep]) if log_y else y[keep]
        series.append((str(name), x[keep], yy))

    xmin = min(s[1].min() for s in series)
    xmax = max(s[1].max() for s in series)
    ymin = min(s[2].min() for s in series)
    ymax = max(s[2].max() for s in series)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax == ymin:
        pad = 0.5 if ymin == 0 else 0.1 * abs(ymin)
        ymin, ymax = ymin - pad, ymax + pad

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - xmin) / (xmax - xmin) * pw

    def py(v):
        return MARGIN["top"] + (1 - (v - ymin) / (ymax - ymin)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
            f'font-size="15">{escape(title)}</text>'
        )
    for v in _ticks(xmin, xmax):
        x = px(v)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN["top"] + ph}" x2="{_fmt(x)}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{escape(_tick_label(v))}</text>')
    for v in _ticks(ymin, ymax):
        y = py(v)
        label = _tick_label(10**v) if log_y else _tick_label(v)
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{_fmt(y)}" x2="{MARGIN["left"]}" '
                   f'y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{escape(label)}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        yl = ylabel + (" (log scale)" if log_y else "")
        cy = MARGIN["top"] + ph / 2
        out.append(f'<text x="16" y="{cy:.2f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 16 {cy:.2f})">{escape(yl)}</text>')

    for i, (name, x, y) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')

    lx, ly = MARGIN["left"] + 12, MARGIN["top"] + 16
    out.append('<g class="legend">')
    for i, (name, _, _) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        y = ly + 16 * i
        out.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 20}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{y}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(curves, path, **kwargs):
    """Write :func:`render_svg` output to ``path`` and return the path."""
    text = render_svg(curves, **kwargs)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write plot to {os.fspath(path)}: {exc}") from exc
    return path
