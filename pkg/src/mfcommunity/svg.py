"""Minimal static SVG output: a PER heatmap and PER/MMP-vs-T line plots."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .experiment import SWEEPABLE, CellResult

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _grey(v: float) -> str:
    g = int(round(255 * min(max(v, 0.0), 1.0)))
    return f"rgb({g},{g},{g})"


def _doc(width: int, height: int, body: list[str]) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )


def heatmap_svg(cells: list[CellResult]) -> str:
    """PER over the (N, T) grid, black = never recovered, white = always.

    T runs along x on a log scale; the green polyline is ``T = N^2``.
    """
    ns = sorted({c.params.n_components for c in cells})
    ts = sorted({c.t_samples for c in cells})
    per = {(c.params.n_components, c.t_samples): c.per_hat for c in cells}
    cw, ch, left, top = 48, 28, 60, 20
    w, h = left + cw * len(ts) + 20, top + ch * len(ns) + 50
    body = []
    for yi, n in enumerate(reversed(ns)):
        y = top + yi * ch
        body.append(f'<text x="{left - 6}" y="{y + ch / 2 + 4}" text-anchor="end">{n}</text>')
        for xi, t in enumerate(ts):
            v = per.get((n, t))
            fill = _grey(v) if v is not None else "#f4c2c2"
            body.append(f'<rect x="{left + xi * cw}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#888" stroke-width="0.5"/>')
    for xi, t in enumerate(ts):
        body.append(f'<text x="{left + xi * cw + cw / 2}" y="{top + ch * len(ns) + 14}" text-anchor="middle">{t:g}</text>')
    body.append(f'<text x="{left + cw * len(ts) / 2}" y="{h - 8}" text-anchor="middle">T</text>')
    body.append(f'<text x="14" y="{top + ch * len(ns) / 2}" transform="rotate(-90 14 {top + ch * len(ns) / 2})" text-anchor="middle">N</text>')

    # T = N^2 in cell coordinates, interpolating log T between grid columns
    if len(ts) > 1:
        lt = [math.log(t) for t in ts]
        pts = []
        for yi, n in enumerate(reversed(ns)):
            target = 2 * math.log(n)
            if target < lt[0] or target > lt[-1]:
                continue
            k = max(i for i in range(len(lt)) if lt[i] <= target)
            frac = 0.0 if k == len(lt) - 1 else (target - lt[k]) / (lt[k + 1] - lt[k])
            pts.append(f"{left + (k + frac) * cw + cw / 2:.1f},{top + yi * ch + ch / 2:.1f}")
        if len(pts) >= 2:
            body.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#00a000" stroke-width="2"/>')
    return _doc(w, h, body)


def sweep_svg(cells: list[CellResult], parameter: str) -> str:
    """PER (dashed) and MMP (solid) against log T, one colour per sweep value."""
    groups: dict[float, list[CellResult]] = {}
    for c in cells:
        groups.setdefault(_value(c, parameter), []).append(c)
    ts = sorted({c.t_samples for c in cells})
    left, top, pw, ph = 60, 20, 420, 240
    w, h = left + pw + 140, top + ph + 50
    lo = math.log(ts[0])
    hi = math.log(ts[-1]) if ts[-1] > ts[0] else lo + 1

    def sx(t):
        return left + (math.log(t) - lo) / (hi - lo) * pw

    def sy(v):
        return top + (1 - v) * ph

    body = [f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in ts:
        body.append(f'<text x="{sx(t):.1f}" y="{top + ph + 14}" text-anchor="middle">{t:g}</text>')
    for v in (0, 0.5, 1):
        body.append(f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:g}</text>')
    for gi, (val, rows) in enumerate(sorted(groups.items())):
        col = PALETTE[gi % len(PALETTE)]
        rows = sorted(rows, key=lambda c: c.t_samples)
        per = " ".join(f"{sx(c.t_samples):.1f},{sy(c.per_hat):.1f}" for c in rows)
        mmp = " ".join(f"{sx(c.t_samples):.1f},{sy(c.mmp_hat):.1f}" for c in rows)
        body.append(f'<polyline points="{per}" fill="none" stroke="{col}" stroke-dasharray="5,3" stroke-width="1.5"/>')
        body.append(f'<polyline points="{mmp}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        ly = top + 14 + gi * 16
        body.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 32}" y2="{ly - 4}" stroke="{col}" stroke-width="2"/>')
        body.append(f'<text x="{left + pw + 38}" y="{ly}">{escape(parameter)} = {val:g}</text>')
    body.append(f'<text x="{left + pw / 2}" y="{h - 8}" text-anchor="middle">T (dashed: PER, solid: MMP)</text>')
    return _doc(w, h, body)


def _value(c: CellResult, parameter: str) -> float:
    return float(getattr(c.params, SWEEPABLE[parameter]))


def write_svg(text: str, path: str | Path) -> None:
    Path(path).write_text(text)
