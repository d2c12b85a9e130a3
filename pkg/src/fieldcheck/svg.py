"""Hand-emitted SVG decile plots: found rate against bin midpoint plus a dotted identity line."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .eval import DecileTable

WIDTH = 360
HEIGHT = 320
MARGIN_LEFT = 52
MARGIN_RIGHT = 16
MARGIN_TOP = 34
MARGIN_BOTTOM = 46


def _fmt(v: float) -> str:
    # fixed precision keeps output byte-stable across platforms
    return f"{v:.2f}"


def _x(v: float) -> float:
    return MARGIN_LEFT + v * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)


def _y(v: float) -> float:
    return HEIGHT - MARGIN_BOTTOM - v * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)


def decile_svg(table: DecileTable, title: str = "") -> str:
    """Render one decile table.

    Empty bins are skipped by the rate polyline and marked with a hollow
    tick on the x axis so a reader can tell "no data" from "rate 0".
    """
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')

    x0, x1, y0, y1 = _x(0), _x(1), _y(0), _y(1)
    out.append('<g class="axes" stroke="black" stroke-width="1">')
    out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}"/>')
    out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}"/>')
    for k in range(11):
        v = k / 10
        out.append(f'<line x1="{_fmt(_x(v))}" y1="{_fmt(y0)}" x2="{_fmt(_x(v))}" y2="{_fmt(y0 + 4)}"/>')
        out.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(_y(v))}" x2="{_fmt(x0)}" y2="{_fmt(_y(v))}"/>')
    out.append("</g>")
    out.append('<g class="labels" fill="black">')
    for k in range(0, 11, 2):
        v = k / 10
        out.append(f'<text x="{_fmt(_x(v))}" y="{_fmt(y0 + 16)}" text-anchor="middle">{v:.1f}</text>')
        out.append(f'<text x="{_fmt(x0 - 7)}" y="{_fmt(_y(v) + 4)}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{HEIGHT - 10}" text-anchor="middle">predicted probability (bin midpoint)</text>')
    out.append(
        f'<text x="14" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_fmt((y0 + y1) / 2)})">share found</text>'
    )
    out.append("</g>")

    out.append(
        f'<line class="reference" x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y1)}" '
        'stroke="black" stroke-width="1" stroke-dasharray="2,3"/>'
    )
    pts = [(b.midpoint, b.rate) for b in table.bins if b.rate is not None]
    coords = " ".join(f"{_fmt(_x(m))},{_fmt(_y(r))}" for m, r in pts)
    out.append(f'<polyline class="rate" points="{coords}" fill="none" stroke="#c0392b" stroke-width="2"/>')
    out.append('<g class="markers" fill="#c0392b">')
    for m, r in pts:
        out.append(f'<circle cx="{_fmt(_x(m))}" cy="{_fmt(_y(r))}" r="3"/>')
    out.append("</g>")
    empty = [b.midpoint for b in table.bins if b.count == 0]
    if empty:
        out.append('<g class="empty-bins" fill="none" stroke="#888888">')
        for m in empty:
            out.append(f'<circle cx="{_fmt(_x(m))}" cy="{_fmt(y0)}" r="3"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
