"""Minimal static SVG plot of m_x(t) series."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = 60


def series_svg(measured, reference=None, title="transverse magnetization") -> str:
    """Points with error bars for ``measured``, a solid line for ``reference``."""
    curves = [measured] + ([reference] if reference is not None else [])
    t = np.concatenate([c.t for c in curves])
    lo = np.concatenate([c.m_x - c.total_err for c in curves])
    hi = np.concatenate([c.m_x + c.total_err for c in curves])
    t0, t1 = float(t.min()), float(t.max())
    y0, y1 = float(lo.min()), float(hi.max())
    if t1 == t0:
        t1 = t0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return MARGIN + (v - t0) / (t1 - t0) * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">t</text>',
        f'<text x="18" y="{HEIGHT / 2:.1f}" font-size="13">m_x</text>',
    ]
    for v in np.linspace(y0, y1, 5):
        parts.append(
            f'<text x="{MARGIN - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>'
        )
    for v in np.linspace(t0, t1, 5):
        parts.append(
            f'<text x="{sx(v):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" font-size="10">{v:.2f}</text>'
        )
    if reference is not None:
        points = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(reference.t, reference.m_x))
        parts.append(f'<polyline points="{points}" fill="none" stroke="black" stroke-width="1.5"/>')
    for a, b, e in zip(measured.t, measured.m_x, measured.total_err):
        x = sx(a)
        if e > 0:
            parts.append(
                f'<line x1="{x:.2f}" y1="{sy(b - e):.2f}" x2="{x:.2f}" y2="{sy(b + e):.2f}" stroke="red"/>'
            )
            for edge in (b - e, b + e):
                parts.append(
                    f'<line x1="{x - 3:.2f}" y1="{sy(edge):.2f}" x2="{x + 3:.2f}" y2="{sy(edge):.2f}" stroke="red"/>'
                )
        parts.append(f'<circle cx="{x:.2f}" cy="{sy(b):.2f}" r="3" fill="none" stroke="red"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
