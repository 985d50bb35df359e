"""SVG rendering of rectangle heatmaps.

Cells are drawn in threshold-index space (one unit per partition interval)
with the threshold values as tick labels, which keeps log-spaced
partitions readable.  For more than two species every requested pair of
axes gets its own panel showing the projected rectangle set; a projected
cell takes the largest heat of the rectangles mapping onto it.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

from .model import BiochemicalSystem

CELL = 28
MARGIN = 60
GAP = 40


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def project(heatmap: dict, i: int, j: int) -> dict:
    """Heat of every cell of the ``(i, j)`` plane: the maximum over rectangles projecting onto it."""
    out: dict = {}
    for r, h in heatmap.items():
        key = (r[i], r[j])
        out[key] = max(out.get(key, 0.0), h)
    return out


def _panel(system: BiochemicalSystem, heat: dict, initial: set, i: int, j: int, x0: float, y0: float) -> tuple:
    ti, tj = system.partition.thresholds[i], system.partition.thresholds[j]
    nx, ny = len(ti) - 1, len(tj) - 1
    w, h = nx * CELL, ny * CELL
    parts = [f'<g transform="translate({x0},{y0})">']
    parts.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="white" stroke="#999" stroke-width="0.5"/>')
    for a in range(nx):
        for b in range(ny):
            y = (ny - 1 - b) * CELL
            v = heat.get((a, b))
            if v is None:
                parts.append(f'<rect x="{a * CELL}" y="{y}" width="{CELL}" height="{CELL}" fill="none" '
                             f'stroke="#ddd" stroke-width="0.5"/>')
                continue
            stroke = "black" if (a, b) in initial else "#1f4e9e"
            sw = 2 if (a, b) in initial else 1
            parts.append(f'<rect x="{a * CELL}" y="{y}" width="{CELL}" height="{CELL}" fill="#1f4e9e" '
                         f'fill-opacity="{max(0.0, min(1.0, v)):.4f}" stroke="{stroke}" stroke-width="{sw}">'
                         f'<title>{escape(str((a, b)))}: {v:.4g}</title></rect>')
    for a, t in enumerate(ti):
        parts.append(f'<text x="{a * CELL}" y="{h + 14}" font-size="8" text-anchor="middle">{_fmt(t)}</text>')
    for b, t in enumerate(tj):
        parts.append(f'<text x="-4" y="{h - b * CELL + 3}" font-size="8" text-anchor="end">{_fmt(t)}</text>')
    names = system.species
    parts.append(f'<text x="{w / 2}" y="{h + 30}" font-size="11" text-anchor="middle">{escape(names[i])}</text>')
    parts.append(f'<text x="-40" y="{h / 2}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 -40 {h / 2})">{escape(names[j])}</text>')
    parts.append("</g>")
    return parts, w, h


def heatmap_svg(system: BiochemicalSystem, heatmap: dict, projections=None, title: str = "") -> str:
    """SVG document for a rectangle heatmap.

    ``projections`` lists axis pairs; the default is ``[(0, 1)]``, which for
    a two-species system is the full picture.
    """
    n = system.dimension
    if projections is None:
        projections = [(0, 1)] if n >= 2 else [(0, 0)]
    for i, j in projections:
        if not (0 <= i < n and 0 <= j < n) or (i == j and n > 1):
            raise ValueError(f"invalid projection pair ({i}, {j}) for {n} species")
    panels = []
    x = MARGIN
    height = 0
    for i, j in projections:
        heat = project(heatmap, i, j)
        initial = {(r[i], r[j]) for r in system.initial}
        parts, w, h = _panel(system, heat, initial, i, j, x, MARGIN)
        panels.extend(parts)
        x += w + MARGIN + GAP
        height = max(height, h)
    width = x - GAP
    total_h = height + 2 * MARGIN
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
            f'viewBox="0 0 {width} {total_h}">',
            f'<text x="{MARGIN}" y="24" font-size="13">{escape(title or system.name)}</text>']
    return "\n".join(head + panels + ["</svg>"]) + "\n"
