"""Minimal deterministic SVG scatter plots.

Output depends only on the inputs: no timestamps, no random ids, fixed
number formatting.
"""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")
GREY = "#c8c8c8"
BLACK = "#000000"


def _color(value: int) -> str:
    return PALETTE[int(value) % len(PALETTE)]


def _panel(Q, colors, x0, y0, size, title, frame_rows=None, background=None) -> list:
    """SVG elements for one square panel. ``background`` points are drawn first in grey."""
    pts = [np.asarray(Q, dtype=float)[:, :2] if np.ndim(Q) == 2 and np.shape(Q)[1] >= 2
           else np.column_stack((np.ravel(Q), np.zeros(np.size(Q))))]
    if background is not None and len(background):
        bg = np.asarray(background, dtype=float)[:, :2]
        allpts = np.vstack((pts[0], bg))
    else:
        bg = None
        allpts = pts[0]
    lo = allpts.min(axis=0) if allpts.size else np.zeros(2)
    hi = allpts.max(axis=0) if allpts.size else np.ones(2)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    pad = 0.05 * size

    def xy(p):
        u = (p - lo) / span
        return x0 + pad + u[:, 0] * (size - 2 * pad), y0 + size - pad - u[:, 1] * (size - 2 * pad)

    out = [f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="white" stroke="#888"/>',
           f'<text x="{x0 + size / 2:.1f}" y="{y0 - 6}" text-anchor="middle" '
           f'font-size="13" font-family="sans-serif">{escape(title)}</text>']
    if bg is not None:
        bx, by = xy(bg)
        out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.6" fill="{GREY}"/>' for a, b in zip(bx, by)]
    px, py = xy(pts[0])
    out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.8" fill="{c}"/>'
            for a, b, c in zip(px, py, colors)]
    if frame_rows is not None and len(frame_rows):
        fx, fy = px[frame_rows], py[frame_rows]
        out.append(f'<rect x="{fx.min() - 4:.2f}" y="{fy.min() - 4:.2f}" '
                   f'width="{fx.max() - fx.min() + 8:.2f}" height="{fy.max() - fy.min() + 8:.2f}" '
                   f'fill="none" stroke="{BLACK}" stroke-width="2"/>')
    return out


def _document(width, height, body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def scatter_svg(Q, labels=None, title: str = "", size: int = 420) -> str:
    """One scatter panel coloured by integer label (black when unlabelled)."""
    Q = np.asarray(Q, dtype=float)
    colors = [BLACK] * Q.shape[0] if labels is None else [_color(v) for v in labels]
    return _document(size + 20, size + 40, _panel(Q, colors, 10, 30, size, title))


def triptych_svg(Q, background_Q: Optional[np.ndarray], cluster_labels: Sequence[int],
                 truth_labels: Optional[Sequence[int]], distinct_mask, title: str = "",
                 size: int = 320) -> str:
    """Three stacked panels for one exploration round.

    Top: unexplored points in black over already explored points in grey.
    Middle: unexplored points coloured by cluster, the chosen cluster(s) framed.
    Bottom: unexplored points coloured by ground truth (omitted when unknown).
    """
    Q = np.asarray(Q, dtype=float)
    distinct_mask = np.asarray(distinct_mask, dtype=bool)
    body = [f'<text x="{(size + 20) / 2:.1f}" y="18" text-anchor="middle" font-size="15" '
            f'font-family="sans-serif">{escape(title)}</text>']
    y = 50
    body += _panel(Q, [BLACK] * len(Q), 10, y, size, "projection", background=background_Q)
    y += size + 30
    body += _panel(Q, [_color(v) for v in cluster_labels], 10, y, size, "clusters",
                   frame_rows=np.flatnonzero(distinct_mask))
    y += size + 30
    if truth_labels is not None:
        body += _panel(Q, [_color(v) for v in truth_labels], 10, y, size, "ground truth")
        y += size + 10
    return _document(size + 20, y, body)
