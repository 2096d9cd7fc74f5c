"""Minimal dependency-free SVG line plots for sweep and stability reports."""

from __future__ import annotations

import math
from pathlib import Path

PANEL_W = 640
PANEL_H = 300
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 36, 46


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _panel_svg(panel: dict, y_offset: int) -> list:
    series = panel["series"]
    xs = [x for _, sx, _, _ in series for x in sx]
    ys = [y for _, _, sy, _ in series for y in sy]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    plot_h = PANEL_H - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return y_offset + MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = []
    top = y_offset + MARGIN_T
    out.append(f'<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" '
               f'height="{plot_h}" fill="none" stroke="#444"/>')
    out.append(f'<text x="{MARGIN_L}" y="{top - 12}" font-size="14" '
               f'fill="#111">{panel.get("title", "")}</text>')

    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            px = sx(t)
            out.append(f'<line x1="{px:.1f}" y1="{top + plot_h}" x2="{px:.1f}" '
                       f'y2="{top + plot_h + 5}" stroke="#444"/>')
            out.append(f'<text x="{px:.1f}" y="{top + plot_h + 18}" '
                       f'font-size="11" text-anchor="middle" fill="#333">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        if y_lo <= t <= y_hi:
            py = sy(t)
            out.append(f'<line x1="{MARGIN_L - 5}" y1="{py:.1f}" x2="{MARGIN_L}" '
                       f'y2="{py:.1f}" stroke="#444"/>')
            out.append(f'<text x="{MARGIN_L - 8}" y="{py + 4:.1f}" font-size="11" '
                       f'text-anchor="end" fill="#333">{t:.4g}</text>')

    out.append(f'<text x="{MARGIN_L + plot_w / 2}" y="{top + plot_h + 36}" '
               f'font-size="12" text-anchor="middle" fill="#111">'
               f'{panel.get("xlabel", "")}</text>')
    out.append(f'<text x="16" y="{top + plot_h / 2}" font-size="12" fill="#111" '
               f'transform="rotate(-90 16 {top + plot_h / 2})" '
               f'text-anchor="middle">{panel.get("ylabel", "")}</text>')

    legend_x = MARGIN_L + 10
    for label, series_x, series_y, color in series:
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}"
                       for x, y in zip(series_x, series_y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<line x1="{legend_x}" y1="{top + 12}" x2="{legend_x + 18}" '
                   f'y2="{top + 12}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{legend_x + 22}" y="{top + 16}" font-size="11" '
                   f'fill="#333">{label}</text>')
        legend_x += 28 + 7 * len(label)
    return out


def multi_panel_line_plot(path, panels: list) -> None:
    """Write stacked line-plot panels to an SVG file."""
    height = PANEL_H * len(panels)
    body = []
    for i, panel in enumerate(panels):
        body.extend(_panel_svg(panel, i * PANEL_H))
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" '
           f'height="{height}" font-family="sans-serif">\n'
           f'<rect width="{PANEL_W}" height="{height}" fill="white"/>\n'
           + "\n".join(body) + "\n</svg>\n")
    Path(path).write_text(svg, encoding="utf-8")
