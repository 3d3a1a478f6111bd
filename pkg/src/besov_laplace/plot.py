"""Minimal static SVG log-log plot for rate studies."""

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 480
MARGIN = {"left": 80, "right": 30, "top": 40, "bottom": 60}


def _ticks(lo, hi):
    """Decade and half-decade ticks between ``lo`` and ``hi`` (log10 values)."""
    out = []
    k = math.floor(lo)
    while k <= math.ceil(hi):
        for m in (1, 2, 5):
            v = k + math.log10(m)
            if lo - 1e-9 <= v <= hi + 1e-9:
                out.append(v)
        k += 1
    return out


def rate_plot(ns, medians, slope, intercept, ref_slope, title="", iqr=None):
    """Return an SVG 1.1 document with points, fitted and reference slope lines.

    The reference line has slope ``ref_slope`` and passes through the
    geometric centre of the medians.
    """
    lx = [math.log10(n) for n in ns]
    ly = [math.log10(m) for m in medians]
    lows = [math.log10(a) for a, _ in iqr] if iqr else ly
    highs = [math.log10(b) for _, b in iqr] if iqr else ly
    x0, x1 = min(lx) - 0.1, max(lx) + 0.1
    cx = sum(lx) / len(lx)
    cy = sum(ly) / len(ly)
    fit = lambda x: (slope * x * math.log(10) + intercept) / math.log(10)  # noqa: E731
    ref = lambda x: cy + ref_slope * (x - cx)  # noqa: E731
    ys = lows + highs + [fit(x0), fit(x1), ref(x0), ref(x1)]
    y0, y1 = min(ys) - 0.05, max(ys) + 0.05

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    parts = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        parts.append(
            f'<text x="{px(t):.2f}" y="{HEIGHT - MARGIN["bottom"] + 18}" font-size="11" '
            f'text-anchor="middle">{10 ** t:.3g}</text>'
        )
    for t in _ticks(y0, y1):
        parts.append(
            f'<text x="{MARGIN["left"] - 6}" y="{py(t) + 4:.2f}" font-size="11" '
            f'text-anchor="end">{10 ** t:.3g}</text>'
        )
    parts.append(
        f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 15}" font-size="13" '
        'text-anchor="middle">sample size n</text>'
    )
    parts.append(
        f'<text x="18" y="{MARGIN["top"] + ph / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.2f})">median L2 error</text>'
    )
    parts.append(
        f'<line x1="{px(x0):.2f}" y1="{py(fit(x0)):.2f}" x2="{px(x1):.2f}" y2="{py(fit(x1)):.2f}" '
        'stroke="#1f77b4" stroke-width="2"/>'
    )
    parts.append(
        f'<line x1="{px(x0):.2f}" y1="{py(ref(x0)):.2f}" x2="{px(x1):.2f}" y2="{py(ref(x1)):.2f}" '
        'stroke="#d62728" stroke-width="2" stroke-dasharray="6,4"/>'
    )
    for x, y, lo, hi in zip(lx, ly, lows, highs):
        parts.append(
            f'<line x1="{px(x):.2f}" y1="{py(lo):.2f}" x2="{px(x):.2f}" y2="{py(hi):.2f}" '
            'stroke="black"/>'
        )
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="black"/>')
    legend = [
        ("#1f77b4", "", f"fitted slope {slope:.3f}"),
        ("#d62728", ' stroke-dasharray="6,4"', f"reference slope {ref_slope:.3f}"),
    ]
    for i, (color, dash, label) in enumerate(legend):
        yy = MARGIN["top"] + 18 + 18 * i
        xx = WIDTH - MARGIN["right"] - 190
        parts.append(
            f'<line x1="{xx}" y1="{yy}" x2="{xx + 30}" y2="{yy}" stroke="{color}" '
            f'stroke-width="2"{dash}/>'
        )
        parts.append(f'<text x="{xx + 36}" y="{yy + 4}" font-size="12">{escape(label)}</text>')
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.0f}" y="24" font-size="14" text-anchor="middle">'
            f"{escape(title)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
