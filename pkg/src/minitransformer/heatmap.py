"""Standalone SVG heatmap for the context-effect statistic matrix.

Hand-written SVG 1.1, no plotting dependency: a grid of cells on a
diverging palette (dark blue for the smallest values through white at
zero to dark red for the largest), with row/column labels and a legend
annotating the minimum and maximum.  Output is deterministic for a given
matrix.
"""

from __future__ import annotations

import numpy as np

CELL = 44
MARGIN_LEFT = 90
MARGIN_TOP = 70
LEGEND_HEIGHT = 70

_BLUE = (28, 54, 140)
_WHITE = (247, 247, 247)
_RED = (150, 20, 30)


def _mix(a, b, t: float) -> str:
    rgb = [round(a[i] + (b[i] - a[i]) * t) for i in range(3)]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _color(value: float, vmax: float) -> str:
    if vmax <= 0:
        return _mix(_WHITE, _WHITE, 0.0)
    t = max(-1.0, min(1.0, value / vmax))
    if t < 0:
        return _mix(_WHITE, _BLUE, -t)
    return _mix(_WHITE, _RED, t)


def render_heatmap_svg(matrix: np.ndarray, row_labels: list[str],
                       col_labels: list[str], title: str = "") -> str:
    """SVG document for a (rows x cols) matrix on the diverging palette."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = matrix.shape
    if len(row_labels) != n_rows or len(col_labels) != n_cols:
        raise ValueError("label counts must match the matrix shape")
    vmax = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    width = MARGIN_LEFT + n_cols * CELL + 30
    height = MARGIN_TOP + n_rows * CELL + LEGEND_HEIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'font-family="Helvetica, Arial, sans-serif" font-size="13">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{MARGIN_LEFT}" y="24" font-size="16">{title}</text>')
    for c, label in enumerate(col_labels):
        x = MARGIN_LEFT + c * CELL + CELL // 2
        parts.append(
            f'<text x="{x}" y="{MARGIN_TOP - 10}" text-anchor="middle">{label}</text>')
    for r, label in enumerate(row_labels):
        y = MARGIN_TOP + r * CELL + CELL // 2 + 5
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{y}" text-anchor="end">{label}</text>')
    for r in range(n_rows):
        for c in range(n_cols):
            x = MARGIN_LEFT + c * CELL
            y = MARGIN_TOP + r * CELL
            color = _color(matrix[r, c], vmax)
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{color}" stroke="#888" stroke-width="0.5">'
                f'<title>{row_labels[r]} / {col_labels[c]}: {matrix[r, c]:.6g}</title>'
                f'</rect>')
    # legend: blue-to-red ramp annotated with -vmax, 0, +vmax
    ly = MARGIN_TOP + n_rows * CELL + 26
    lx = MARGIN_LEFT
    lw = max(120, n_cols * CELL)
    steps = 60
    for i in range(steps):
        t = 2.0 * i / (steps - 1) - 1.0
        color = _color(t * vmax if vmax > 0 else 0.0, vmax if vmax > 0 else 1.0)
        parts.append(
            f'<rect x="{lx + i * lw / steps:.1f}" y="{ly}" '
            f'width="{lw / steps + 0.5:.1f}" height="12" fill="{color}"/>')
    parts.append(
        f'<text x="{lx}" y="{ly + 28}" text-anchor="start">{-vmax:.4g}</text>')
    parts.append(
        f'<text x="{lx + lw / 2:.1f}" y="{ly + 28}" text-anchor="middle">0</text>')
    parts.append(
        f'<text x="{lx + lw:.1f}" y="{ly + 28}" text-anchor="end">{vmax:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_heatmap_svg(matrix: np.ndarray, row_labels: list[str],
                     col_labels: list[str], path, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(render_heatmap_svg(matrix, row_labels, col_labels, title))
