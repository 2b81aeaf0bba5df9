"""Minimal SVG line-chart writer (no plotting dependency).

Good enough for log-log tail plots and profile overlays; the CSV files
remain the primary data product.
"""

from __future__ import annotations

import math

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, log):
    if log:
        lo_e = math.floor(lo)
        hi_e = math.ceil(hi)
        step = max(1, int((hi_e - lo_e) / 6))
        return [(e, f"1e{int(e)}") for e in range(int(lo_e), int(hi_e) + 1, step)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    t0 = math.ceil(lo / step) * step
    out = []
    while t0 <= hi + 1e-12 * span:
        out.append((t0, f"{t0:g}"))
        t0 += step
    return out


def line_chart(path, curves, title="", xlabel="", ylabel="",
               xlog=False, ylog=False, width=720, height=480):
    """curves: list of (label, x array, y array). Writes an SVG file."""
    ml, mr, mt, mb = 70, 20, 36, 48
    pw, ph = width - ml - mr, height - mt - mb
    pts = []
    for _, xs, ys in curves:
        for x, y in zip(xs, ys):
            if ylog and (y is None or y <= 0):
                continue
            if xlog and (x is None or x <= 0):
                continue
            pts.append((math.log10(x) if xlog else float(x),
                        math.log10(y) if ylog else float(y)))
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width/2:.0f}" y="20" text-anchor="middle" '
             f'font-size="15" font-family="sans-serif">{title}</text>']
    # axes
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                 f'fill="none" stroke="#444"/>')
    for tx, lab in _ticks(x0, x1, xlog):
        if x0 <= tx <= x1:
            parts.append(f'<line x1="{sx(tx):.1f}" y1="{mt+ph}" '
                         f'x2="{sx(tx):.1f}" y2="{mt+ph+5}" stroke="#444"/>')
            parts.append(f'<text x="{sx(tx):.1f}" y="{mt+ph+18}" '
                         f'text-anchor="middle" font-size="11" '
                         f'font-family="sans-serif">{lab}</text>')
    for ty, lab in _ticks(y0, y1, ylog):
        if y0 <= ty <= y1:
            parts.append(f'<line x1="{ml-5}" y1="{sy(ty):.1f}" x2="{ml}" '
                         f'y2="{sy(ty):.1f}" stroke="#444"/>')
            parts.append(f'<text x="{ml-8}" y="{sy(ty)+4:.1f}" '
                         f'text-anchor="end" font-size="11" '
                         f'font-family="sans-serif">{lab}</text>')
    parts.append(f'<text x="{ml+pw/2:.0f}" y="{height-8}" text-anchor="middle" '
                 f'font-size="12" font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt+ph/2:.0f}" text-anchor="middle" '
                 f'font-size="12" font-family="sans-serif" '
                 f'transform="rotate(-90 16 {mt+ph/2:.0f})">{ylabel}</text>')
    for ci, (label, xs, ys) in enumerate(curves):
        color = _COLORS[ci % len(_COLORS)]
        seg = []
        d = []
        for x, y in zip(xs, ys):
            ok = (not ylog or y > 0) and (not xlog or x > 0) \
                and y is not None and math.isfinite(y)
            if ok:
                px = math.log10(x) if xlog else x
                py = math.log10(y) if ylog else y
                seg.append(f"{sx(px):.2f},{sy(py):.2f}")
            elif seg:
                d.append("M " + " L ".join(seg))
                seg = []
        if seg:
            d.append("M " + " L ".join(seg))
        if d:
            parts.append(f'<path d="{" ".join(d)}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{ml+10}" y="{mt+16+14*ci}" font-size="12" '
                     f'fill="{color}" font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
