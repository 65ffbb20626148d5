"""Static SVG line plots of aggregate nCER curves.

The SVG text is built by hand with fixed number formatting, so identical
aggregate files always give identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from causalda.evaluation import GROUP_COORDS, SweepResult, read_aggregate

LOG_AXES = ("alpha", "gamma")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 24, 52
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [float(e) for e in range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)]
    step = (hi - lo) / 5
    return [lo + i * step for i in range(6)]


def _label(v: float, log: bool) -> str:
    if log:
        return f"1e{round(math.log10(v)):d}"
    return f"{v:.3g}"


def render_svg(result: SweepResult, axis: str) -> str:
    """SVG document for mean nCER against ``axis``, one line per method."""
    if axis not in GROUP_COORDS:
        raise ValueError(f"axis must be one of {GROUP_COORDS}, got {axis!r}")
    log = axis in LOG_AXES
    series: dict[str, list[tuple[float, float, float, float]]] = {}
    for g in result.groups:
        x = g.coord(axis)
        if log and not x > 0:
            continue
        series.setdefault(g.method, []).append(
            (math.log10(x) if log else x, g.mean_ncer, g.ci_low, g.ci_high))
    for pts in series.values():
        pts.sort()
    xs = [p[0] for pts in series.values() for p in pts]
    if xs:
        x_lo, x_hi = min(xs), max(xs)
    else:
        x_lo, x_hi = (0.0, 1.0)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 1.0 if log else x_lo - 0.5, x_hi + 1.0 if log else x_hi + 0.5
    y_top = max([p[3] for pts in series.values() for p in pts] + [0.0])
    y_hi = min(1.0, max(0.1, math.ceil(y_top * 10 - 1e-9) / 10))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x: float) -> float:
        return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y: float) -> float:
        y = min(max(y, 0.0), y_hi)
        return TOP + ph - y / y_hi * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{LEFT}" y1="{_f(TOP + ph)}" x2="{_f(LEFT + pw)}" y2="{_f(TOP + ph)}" '
           'stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{_f(TOP + ph)}" stroke="black"/>']
    for t in _ticks(x_lo, x_hi, log):
        x = px(t)
        out.append(f'<line x1="{_f(x)}" y1="{_f(TOP + ph)}" x2="{_f(x)}" y2="{_f(TOP + ph + 4)}" '
                   'stroke="black"/>')
        text = _label(10.0 ** t if log else t, log)
        out.append(f'<text x="{_f(x)}" y="{_f(TOP + ph + 16)}" text-anchor="middle">{text}</text>')
    for i in range(6):
        yv = y_hi * i / 5
        y = py(yv)
        out.append(f'<line x1="{LEFT - 4}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 7}" y="{_f(y + 4)}" text-anchor="end">{yv:.2f}</text>')
    out.append(f'<text x="{_f(LEFT + pw / 2)}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(axis)}{" (log scale)" if log else ""}</text>')
    out.append(f'<text x="16" y="{_f(TOP + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_f(TOP + ph / 2)})">mean nCER</text>')
    for i, method in enumerate(sorted(series)):
        pts = series[method]
        colour = PALETTE[i % len(PALETTE)]
        if len(pts) == 1:
            x, m, lo, hi = pts[0]
            out.append(f'<line x1="{_f(px(x))}" y1="{_f(py(lo))}" x2="{_f(px(x))}" '
                       f'y2="{_f(py(hi))}" stroke="{colour}" stroke-width="1.5"/>')
            for yy in (lo, hi):
                out.append(f'<line x1="{_f(px(x) - 4)}" y1="{_f(py(yy))}" x2="{_f(px(x) + 4)}" '
                           f'y2="{_f(py(yy))}" stroke="{colour}" stroke-width="1.5"/>')
        else:
            band = [(px(p[0]), py(p[3])) for p in pts] + [(px(p[0]), py(p[2])) for p in reversed(pts)]
            out.append('<polygon points="' + " ".join(f"{_f(a)},{_f(b)}" for a, b in band)
                       + f'" fill="{colour}" fill-opacity="0.2" stroke="none"/>')
            out.append('<polyline points="' + " ".join(f"{_f(px(p[0]))},{_f(py(p[1]))}" for p in pts)
                       + f'" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        for p in pts:
            out.append(f'<circle cx="{_f(px(p[0]))}" cy="{_f(py(p[1]))}" r="2.5" fill="{colour}"/>')
        ly = TOP + 14 + 18 * i
        lx = WIDTH - RIGHT + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{colour}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(aggregate_csv, svg_path, axis: str = "kappa") -> Path:
    """Render an aggregate CSV to ``svg_path``; raises ValueError on a bad schema."""
    svg = render_svg(read_aggregate(aggregate_csv), axis)
    path = Path(svg_path)
    path.write_text(svg)
    return path
