"""Minimal SVG heatmaps of gridded fields."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

COLORMAPS = {
    "viridis": [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
    "coolwarm": [(59, 76, 192), (141, 176, 254), (221, 221, 221), (244, 154, 123), (180, 4, 38)],
    "magma": [(0, 0, 4), (81, 18, 124), (183, 55, 121), (252, 137, 97), (252, 253, 191)],
}


class IrregularGridError(ValueError):
    def __init__(self, missing):
        self.missing = missing
        shown = ", ".join(f"({a:g}, {b:g})" for a, b in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        super().__init__(f"field is not on a regular grid; missing lattice points: {shown}{more}")


def color(value: float, lo: float, hi: float, colormap: str = "viridis") -> str:
    anchors = np.asarray(COLORMAPS[colormap], dtype=float)
    s = 0.5 if hi <= lo else float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))
    pos = s * (len(anchors) - 1)
    i = min(int(pos), len(anchors) - 2)
    frac = pos - i
    rgb = anchors[i] * (1 - frac) + anchors[i + 1] * frac
    return "#{:02x}{:02x}{:02x}".format(*(int(round(c)) for c in rgb))


def read_field(field_csv, column: str, axes=None):
    with open(field_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.asarray(rows[1:], dtype=float)
    if column not in header:
        raise KeyError(f"column {column!r} not in {header}")
    if axes is None:
        coord_cols = [c for c in ("x", "y", "t") if c in header]
        varying = [c for c in coord_cols if np.unique(body[:, header.index(c)]).size > 1]
        axes = tuple(varying[:2]) if len(varying) >= 2 else tuple(coord_cols[:2])
    a = body[:, header.index(axes[0])]
    b = body[:, header.index(axes[1])]
    return axes, a, b, body[:, header.index(column)]


def to_lattice(a, b, values):
    ua, ub = np.unique(a), np.unique(b)
    ia, ib = np.searchsorted(ua, a), np.searchsorted(ub, b)
    grid = np.full((ua.size, ub.size), np.nan)
    grid[ia, ib] = values
    missing = np.argwhere(np.isnan(grid))
    if missing.size:
        raise IrregularGridError([(ua[i], ub[j]) for i, j in missing])
    return ua, ub, grid


def render_heatmap(field_csv, output_svg, column: str = "mean_u", colormap: str = "viridis",
                   axes=None, cell: float = 3.0, title: str | None = None) -> Path:
    """Write an SVG with one rect per lattice cell and a colorbar.

    The first axis runs horizontally, the second vertically (upwards).
    """
    axes, a, b, v = read_field(field_csv, column, axes)
    ua, ub, grid = to_lattice(a, b, v)
    lo, hi = float(grid.min()), float(grid.max())
    na, nb = grid.shape
    cw = max(cell, 300.0 / na)
    ch = max(cell, 200.0 / nb)
    left, top = 50.0, 30.0
    width, height = na * cw, nb * ch
    bar_x = left + width + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{bar_x + 90:.0f}" '
        f'height="{top + height + 45:.0f}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18">{title or column}</text>',
        '<g shape-rendering="crispEdges">',
    ]
    for i in range(na):
        for j in range(nb):
            x = left + i * cw
            y = top + (nb - 1 - j) * ch
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                f'fill="{color(grid[i, j], lo, hi, colormap)}"/>'
            )
    parts.append("</g>")
    parts.append(
        f'<text x="{left + width / 2:.1f}" y="{top + height + 30:.1f}" '
        f'text-anchor="middle">{axes[0]} [{ua[0]:g}, {ua[-1]:g}]</text>'
    )
    parts.append(
        f'<text x="15" y="{top + height / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {top + height / 2:.1f})">{axes[1]} [{ub[0]:g}, {ub[-1]:g}]</text>'
    )
    steps = 32
    parts.append('<g class="colorbar">')
    for k in range(steps):
        val = lo + (hi - lo) * k / (steps - 1)
        y = top + height - (k + 1) * height / steps
        parts.append(
            f'<rect x="{bar_x:.1f}" y="{y:.2f}" width="14" height="{height / steps + 0.5:.2f}" '
            f'fill="{color(val, lo, hi, colormap)}"/>'
        )
    parts.append("</g>")
    parts.append(f'<text x="{bar_x + 18:.1f}" y="{top + 8:.1f}">{hi:.3g}</text>')
    parts.append(f'<text x="{bar_x + 18:.1f}" y="{top + height:.1f}">{lo:.3g}</text>')
    parts.append("</svg>")
    out = Path(output_svg)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
