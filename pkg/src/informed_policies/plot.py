"""Deterministic SVG phase-plane plots of two-state trajectories."""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .model import Box

WIDTH, HEIGHT, MARGIN = 640, 480, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _n(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def phase_plane_svg(trajectories: Sequence[np.ndarray], labels: Sequence[str], X: Optional[Box] = None,
                    alphas: Sequence[float] = (), title: str = "") -> str:
    """SVG text with one polyline per (T+1, 2) state array, the box X and vertical alpha lines."""
    if not trajectories:
        raise ValueError("nothing to plot")
    pts = []
    for tr in trajectories:
        tr = np.asarray(tr, dtype=float)
        if tr.ndim != 2 or tr.shape[1] != 2:
            raise ValueError("phase-plane plots need two-state trajectories")
        if tr.shape[0] == 0:
            raise ValueError("empty trajectory")
        pts.append(tr)
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    if X is not None:
        lo, hi = np.minimum(lo, X.lo), np.maximum(hi, X.hi)
    for a in alphas:
        lo[0], hi[0] = min(lo[0], a), max(hi[0], a)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    span = hi - lo

    def sx(v):
        return MARGIN + (v - lo[0]) / span[0] * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - lo[1]) / span[1] * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>')
    # axes
    out.append(f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" '
               f'stroke="black"/>')
    out.append(f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>')
    for k in range(5):
        vx = lo[0] + span[0] * k / 4
        vy = lo[1] + span[1] * k / 4
        out.append(f'<text x="{_n(sx(vx))}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                   f'font-size="11">{_n(vx)}</text>')
        out.append(f'<text x="{MARGIN - 6}" y="{_n(sy(vy) + 4)}" text-anchor="end" font-size="11">{_n(vy)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">x1</text>')
    out.append(f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="13">x2</text>')
    if X is not None:
        out.append(f'<rect x="{_n(sx(X.lo[0]))}" y="{_n(sy(X.hi[1]))}" width="{_n(sx(X.hi[0]) - sx(X.lo[0]))}" '
                   f'height="{_n(sy(X.lo[1]) - sy(X.hi[1]))}" fill="none" stroke="gray" '
                   f'stroke-dasharray="6,3"/>')
    for k, a in enumerate(alphas):
        col = COLORS[k % len(COLORS)]
        out.append(f'<line x1="{_n(sx(a))}" y1="{MARGIN}" x2="{_n(sx(a))}" y2="{HEIGHT - MARGIN}" '
                   f'stroke="{col}" stroke-dasharray="2,3"/>')
    for k, tr in enumerate(pts):
        col = COLORS[k % len(COLORS)]
        path = " ".join(f"{_n(sx(p[0]))},{_n(sy(p[1]))}" for p in tr)
        out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<circle cx="{_n(sx(tr[0, 0]))}" cy="{_n(sy(tr[0, 1]))}" r="3" fill="{col}"/>')
    # legend
    for k, lab in enumerate(labels):
        col = COLORS[k % len(COLORS)]
        y = MARGIN + 16 * k
        out.append(f'<line x1="{WIDTH - MARGIN - 120}" y1="{y}" x2="{WIDTH - MARGIN - 100}" y2="{y}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 95}" y="{y + 4}" font-size="12">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
