"""Band diagrams as plain SVG 1.1 (no plotting dependency, byte-stable)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .floquet import BandStructure


@dataclass(frozen=True)
class SvgStyle:
    width: int = 800
    height: int = 160
    margin: int = 40
    band_fill: str = "#4a7ab5"
    flat_fill: str = "#c0392b"
    grid_stroke: str = "#cccccc"
    font_size: int = 10
    max_gridlines: int = 40


def _f(x: float) -> str:
    return f"{x:.2f}"


def render_band_svg(b: BandStructure, style: SvgStyle = SvgStyle()) -> str:
    """Horizontal lambda axis with band rectangles and flat-band diamonds.

    Touching bands are merged into one rectangle, gridlines mark
    ``(l pi / 2)**2`` and gaps are simply left blank.
    """
    if not b.bands:
        raise ValueError("nothing to draw: band structure has no bands")
    W, H, m = style.width, style.height, style.margin
    x0, x1 = m, W - m
    yaxis = H - m
    scale = (x1 - x0) / b.cutoff

    def X(lam):
        return x0 + lam * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<title>{escape(b.group)} {escape(b.model)}'
        + (f" c={b.c:g}" if b.c is not None else "") + "</title>",
        f'<g id="grid" stroke="{style.grid_stroke}" stroke-width="1">',
    ]
    nmax = int(math.floor(2 * math.sqrt(b.cutoff) / math.pi))
    stride = max(1, math.ceil(nmax / style.max_gridlines))
    for l in range(1, nmax + 1, stride):
        x = X((l * math.pi / 2) ** 2)
        out.append(f'<line x1="{_f(x)}" y1="{m / 2:.2f}" x2="{_f(x)}" y2="{_f(yaxis)}"/>')
    out.append("</g>")
    out.append(f'<g id="bands" fill="{style.band_fill}">')
    top, hgt = yaxis - 50, 40
    for lo, hi in _merged(b.bands):
        out.append(f'<rect x="{_f(X(lo))}" y="{_f(top)}" width="{_f(max(X(hi) - X(lo), 0.5))}" '
                   f'height="{hgt}"/>')
    out.append("</g>")
    out.append(f'<g id="flat-bands" fill="{style.flat_fill}" font-size="{style.font_size}" '
               f'font-family="sans-serif" text-anchor="middle">')
    cy = top + hgt / 2
    for f in b.flat_bands:
        x = X(f.lam)
        pts = f"{_f(x)},{_f(cy - 6)} {_f(x + 6)},{_f(cy)} {_f(x)},{_f(cy + 6)} {_f(x - 6)},{_f(cy)}"
        out.append(f'<polygon points="{pts}"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(top - 4)}">{f.multiplicity}</text>')
    out.append("</g>")
    out.append(f'<g id="axis" stroke="black" font-size="{style.font_size}" font-family="sans-serif">')
    out.append(f'<line x1="{x0}" y1="{_f(yaxis)}" x2="{x1}" y2="{_f(yaxis)}"/>')
    for t in _ticks(b.cutoff):
        x = X(t)
        out.append(f'<line x1="{_f(x)}" y1="{_f(yaxis)}" x2="{_f(x)}" y2="{_f(yaxis + 4)}"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(yaxis + 16)}" stroke="none" '
                   f'text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{x1}" y="{_f(yaxis + 30)}" stroke="none" text-anchor="end">lambda</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _merged(bands, rtol: float = 1e-12) -> list[tuple[float, float]]:
    """Touching bands drawn as one rectangle."""
    out: list[list[float]] = []
    for lo, hi in bands:
        if out and lo <= out[-1][1] * (1 + rtol) + rtol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, c) for a, c in out]


def _ticks(cutoff: float, target: int = 8) -> list[float]:
    raw = cutoff / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    n = int(math.floor(cutoff / step + 1e-9))
    return [i * step for i in range(n + 1)]
