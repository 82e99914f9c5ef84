"""Minimal self-contained SVG line charts (one panel per metric)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

LABELS = {
    "lambda": "arrival rate lambda (packages / unit time)",
    "mu": "verification rate mu (1 / unit time)",
    "f": "Byzantine bound f (nodes)",
    "c": "block reward c (reward units)",
    "e_k": "E[K] (packages)",
    "e_m": "E[M] (nodes)",
    "gamma": "gamma (blocks / unit time)",
    "upsilon": "Upsilon (reward units / unit time)",
}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

PANEL_W, PANEL_H = 420, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _panel(rows, x, curve, metric, ox: float) -> list[str]:
    pts = [(r[x], r[metric], r.get(curve) if curve else None) for r in rows
           if r.get(metric) is not None and math.isfinite(r[metric])]
    out = []
    w = PANEL_W - MARGIN_L - MARGIN_R
    h = PANEL_H - MARGIN_T - MARGIN_B
    x0, y0 = ox + MARGIN_L, MARGIN_T
    out.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000"/>')
    if not pts:
        return out
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if yhi - ylo < 1e-12 * max(abs(yhi), 1.0):
        pad = max(abs(yhi) * 0.05, 1e-9)
        ylo, yhi = ylo - pad, yhi + pad
    if xhi == xlo:
        xhi = xlo + 1.0

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * w

    def sy(v):
        return y0 + h - (v - ylo) / (yhi - ylo) * h

    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{sx(t):.2f}" y1="{y0 + h}" x2="{sx(t):.2f}" y2="{y0 + h + 5}" stroke="#000"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{y0 + h + 18}" font-size="10" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{x0 - 5}" y1="{sy(t):.2f}" x2="{x0}" y2="{sy(t):.2f}" stroke="#000"/>')
        out.append(f'<text x="{x0 - 8}" y="{sy(t) + 3:.2f}" font-size="10" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{x0 + w / 2}" y="{PANEL_H - 10}" font-size="11" text-anchor="middle">'
               f'{escape(LABELS.get(x, x))}</text>')
    out.append(f'<text x="{ox + 14}" y="{y0 + h / 2}" font-size="11" text-anchor="middle" '
               f'transform="rotate(-90 {ox + 14} {y0 + h / 2})">{escape(LABELS.get(metric, metric))}</text>')

    groups: dict = {}
    for p in pts:
        groups.setdefault(p[2], []).append(p)
    for i, (key, gp) in enumerate(groups.items()):
        gp.sort(key=lambda p: p[0])
        color = COLORS[i % len(COLORS)]
        path = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py, _ in gp)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        if curve is not None:
            ly = y0 + 14 + 14 * i
            out.append(f'<line x1="{x0 + w - 80}" y1="{ly}" x2="{x0 + w - 62}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{x0 + w - 58}" y="{ly + 4}" font-size="10">{escape(curve)}={key}</text>')
    return out


def render_svg(rows: list[dict], x: str, curve: str | None, panels: tuple[str, ...],
               title: str = "") -> str:
    width = PANEL_W * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H + 20}" '
        f'viewBox="0 0 {width} {PANEL_H + 20}">',
        '<rect width="100%" height="100%" fill="#fff"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="16" font-size="13" text-anchor="middle">{escape(title)}</text>')
    parts.append('<g transform="translate(0,20)">')
    for i, metric in enumerate(panels):
        parts.extend(_panel(rows, x, curve, metric, i * PANEL_W))
    parts.append("</g></svg>")
    return "\n".join(parts) + "\n"
