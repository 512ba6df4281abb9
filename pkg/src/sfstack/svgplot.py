"""Minimal SVG line plots (mean line plus confidence band), no plotting deps.

The emitted file is plain SVG 1.1; the data CSV written alongside by the CLI
is the reproducibility contract, the image is a convenience.
"""

from __future__ import annotations

import numpy as np

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2",
)

WIDTH, HEIGHT = 860, 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 210, 40, 55


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 0.5, step)


def _fmt(v: float) -> str:
    return format(float(v), "g")


def line_plot_svg(series, title: str, xlabel: str, ylabel: str) -> str:
    """Render series = [{label, x, y, lo, hi}] into an SVG string.

    lo/hi bound the confidence band and may equal y (band collapses onto the
    line when there is a single sample per point).
    """
    xs = np.concatenate([np.asarray(s["x"], dtype=float) for s in series])
    ys = np.concatenate(
        [np.asarray(s[k], dtype=float) for s in series for k in ("y", "lo", "hi")]
    )
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{MARGIN_L + plot_w / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    # axes and ticks
    axis = f'stroke="#333" stroke-width="1"'
    out.append(f'<line x1="{MARGIN_L}" y1="{py(y_lo)}" x2="{MARGIN_L}" y2="{py(y_hi)}" {axis}/>')
    out.append(
        f'<line x1="{MARGIN_L}" y1="{py(y_lo)}" x2="{MARGIN_L + plot_w}" y2="{py(y_lo)}" {axis}/>'
    )
    for tx in _ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{px(tx)}" y1="{py(y_lo)}" x2="{px(tx)}" y2="{py(y_lo) + 5}" {axis}/>'
            f'<text x="{px(tx)}" y="{py(y_lo) + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{MARGIN_L - 5}" y1="{py(ty)}" x2="{MARGIN_L}" y2="{py(ty)}" {axis}/>'
            f'<text x="{MARGIN_L - 9}" y="{py(ty) + 4}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(ty)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + plot_w / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2})">{ylabel}</text>'
    )
    # bands then lines so lines stay visible
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        x = np.asarray(s["x"], dtype=float)
        lo = np.asarray(s["lo"], dtype=float)
        hi = np.asarray(s["hi"], dtype=float)
        band = [f"{px(a)},{py(b)}" for a, b in zip(x, hi)]
        band += [f"{px(a)},{py(b)}" for a, b in zip(x[::-1], lo[::-1])]
        out.append(f'<polygon points="{" ".join(band)}" fill="{color}" fill-opacity="0.15"/>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        x = np.asarray(s["x"], dtype=float)
        y = np.asarray(s["y"], dtype=float)
        pts = " ".join(f"{px(a)},{py(b)}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        ly = MARGIN_T + 16 + 18 * i
        lx = MARGIN_L + plot_w + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2.5"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                   f'font-size="12">{s["label"]}</text>')
    out.append("</svg>")
    return "\n".join(out)
