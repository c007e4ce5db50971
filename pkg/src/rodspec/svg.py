"""Minimal static SVG line plots (log-log convergence and profile curves)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 560, 400, 60


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    t = math.ceil(lo / step) * step
    out = []
    while t <= hi + 1e-12 * step:
        out.append(t)
        t += step
    return out


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              loglog: bool = False) -> str:
    """Render ``{label: (xs, ys)}`` as an SVG document string.

    With ``loglog`` the axes show decades and non-positive points are dropped.
    """
    tr = (lambda v: math.log10(v)) if loglog else (lambda v: v)
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(tr(x), tr(y)) for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y) and (not loglog or (x > 0 and y > 0))]
        if pts:
            clean[label] = pts
    allp = [p for pts in clean.values() for p in pts] or [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    sx = lambda x: PAD + (x - x0) / (x1 - x0) * (W - 2 * PAD)
    sy = lambda y: H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>']
    fmt = (lambda t: f"1e{t:g}") if loglog else (lambda t: f"{t:.3g}")
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.1f}" y="{H - PAD + 16}" font-size="11" text-anchor="middle">{fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{PAD - 6}" y="{sy(t) + 4:.1f}" font-size="11" text-anchor="end">{fmt(t)}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD / 2}" font-size="14" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 15}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{H / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>')
    for i, (label, pts) in enumerate(clean.items()):
        col = _COLORS[i % len(_COLORS)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        if len(pts) < 30:
            out.extend(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{col}"/>' for x, y in pts)
        out.append(f'<text x="{W - PAD - 4}" y="{PAD + 16 + 14 * i}" font-size="11" '
                   f'text-anchor="end" fill="{col}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
