"""Minimal static SVG charts (line plots and heatmaps) with no plotting dependency."""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=64, right=150, top=28, bottom=44)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.4g}"


def _ticks(lo, hi, k=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, k)


def line_chart(path, x, series: dict, title="", xlabel="t", ylabel="", log_y=False):
    """Write one SVG with a polyline per entry of ``series`` (label -> values)."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if log_y:
        ys = {k: np.log10(np.maximum(v, 1e-16)) for k, v in ys.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.zeros(1)
    y_lo, y_hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(x.min()), float(x.max()) if x.size else 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN["top"] + (1 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [_header(title)]
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               'fill="none" stroke="#444"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN["bottom"] + 16}" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        label = _fmt(10**t) if log_y else _fmt(t)
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2})">{ylabel}</text>')
    for i, (label, v) in enumerate(ys.items()):
        c = COLORS[i % len(COLORS)]
        ok = np.isfinite(v)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], v[ok]))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{label}</text>')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def heatmap(path, values, title=""):
    """Square heatmap of a 2D array indexed ``[i1, i2]`` (x1 to the right, x2 up)."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo if hi > lo else 1.0
    n1, n2 = v.shape
    size = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    cw, ch = size / n1, size / n2
    out = [_header(title)]
    for i in range(n1):
        for j in range(n2):
            s = (v[i, j] - lo) / span
            r, g, b = _viridis(s)
            x = MARGIN["left"] + i * cw
            y = MARGIN["top"] + (n2 - 1 - j) * ch
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.05:.2f}" height="{ch + 0.05:.2f}" '
                       f'fill="rgb({r},{g},{b})"/>')
    lx = MARGIN["left"] + size + 20
    out.append(f'<text x="{lx}" y="{MARGIN["top"] + 10}">max {_fmt(hi)}</text>')
    out.append(f'<text x="{lx}" y="{MARGIN["top"] + size}">min {_fmt(lo)}</text>')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def _viridis(s):
    stops = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)
    s = min(max(s, 0.0), 1.0) * (len(stops) - 1)
    k = min(int(s), len(stops) - 2)
    c = stops[k] + (s - k) * (stops[k + 1] - stops[k])
    return tuple(int(round(a)) for a in c)


def _header(title):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'font-family="sans-serif" font-size="11">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n'
            f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>')
