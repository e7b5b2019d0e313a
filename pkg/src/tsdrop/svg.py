"""Minimal SVG line charts for the three trajectory panels."""
from __future__ import annotations

import math

import numpy as np

WIDTH, HEIGHT = 640, 300
MARGIN = dict(left=64, right=120, top=28, bottom=40)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def line_chart(series: list[tuple[str, np.ndarray, np.ndarray]], title: str,
               xlabel: str = "t", log_y: bool = False) -> str:
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    if log_y:
        ys = np.log10(np.maximum(ys, 1e-300))
    finite = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys[finite].min()), float(ys[finite].max())) if finite.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="16" text-anchor="middle" font-size="13">{title}</text>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
           f'fill="none" stroke="black"/>']
    for tx in _ticks(x0, x1):
        out.append(f'<text x="{px(tx):.1f}" y="{HEIGHT - MARGIN["bottom"] + 14}" '
                   f'text-anchor="middle">{tx:.4g}</text>')
    for ty in _ticks(y0, y1):
        label = f"1e{ty:.2g}" if log_y else f"{ty:.3g}"
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{py(ty) + 4:.1f}" text-anchor="end">{label}</text>')
        out.append(f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{py(ty):.1f}" '
                   f'y2="{py(ty):.1f}" stroke="#ddd"/>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 6}" text-anchor="middle">{xlabel}</text>')
    for k, (label, x, y) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if log_y:
            y = np.log10(np.maximum(y, 1e-300))
        pts = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if math.isfinite(b)]
        color = COLORS[k % len(COLORS)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        ly = MARGIN["top"] + 12 + 14 * k
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" x2="{lx + 16}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 20}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_charts(records) -> dict[str, str]:
    """mse.svg, w.svg and qr.svg text for a record list."""
    t = np.array([r.t for r in records])
    K, M = records[0].R.shape
    mse = line_chart([("MSE (window)", t, [r.mse_window for r in records]),
                      ("eps_g", t, [r.eg_analytic for r in records])],
                     "(a) mean squared error", log_y=True)
    w = line_chart([(f"w_{i + 1}", t, [r.w[i] for r in records]) for i in range(K)],
                   "(b) hidden-to-output weights w")
    iu = list(zip(*np.triu_indices(K)))
    qr = [(f"Q_{i + 1}{j + 1}", t, [r.Q[k] for r in records]) for k, (i, j) in enumerate(iu)]
    qr += [(f"R_{i + 1}{n + 1}", t, [r.R[i, n] for r in records]) for i in range(K) for n in range(M)]
    return {"mse.svg": mse, "w.svg": w, "qr.svg": line_chart(qr, "(c) order parameters Q and R")}
