"""Flat SVG scatter of reconstructed points, no plotting dependency.

Output is byte-deterministic: fixed decimal formatting, no timestamps or
generated ids. Scenes are projected onto a configurable axis pair (xy by
default, matching the planar test geometries).
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_scatter_svg"]

_SIZE = 640
_MARGIN = 40


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def write_scatter_svg(path, points, truth_center=None, truth_radius=None,
                      axes=(0, 1), title="") -> None:
    """Scatter the points (N,3) on the chosen axis pair.

    truth_center/truth_radius, when given, draw the obstacle cross-section
    outline under the points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    ax, ay = axes
    xs = pts[:, ax] if len(pts) else np.zeros(0)
    ys = pts[:, ay] if len(pts) else np.zeros(0)

    bounds = []
    if len(pts):
        bounds.append((xs.min(), xs.max(), ys.min(), ys.max()))
    if truth_center is not None and truth_radius is not None:
        cx, cy = float(truth_center[ax]), float(truth_center[ay])
        bounds.append((cx - truth_radius, cx + truth_radius,
                       cy - truth_radius, cy + truth_radius))
    if not bounds:
        bounds.append((0.0, 1.0, 0.0, 1.0))
    x0 = min(b[0] for b in bounds)
    x1 = max(b[1] for b in bounds)
    y0 = min(b[2] for b in bounds)
    y1 = max(b[3] for b in bounds)
    span = max(x1 - x0, y1 - y0, 1e-9)
    scale = (_SIZE - 2 * _MARGIN) / span

    def to_px(x, y):
        # y axis points up in scene coordinates, down in SVG
        return (_MARGIN + (x - x0) * scale, _SIZE - _MARGIN - (y - y0) * scale)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">',
        f'<rect width="{_SIZE}" height="{_SIZE}" fill="white"/>',
    ]
    if title:
        lines.append(f'<text x="{_MARGIN}" y="24" font-family="monospace" '
                     f'font-size="14">{title}</text>')
    if truth_center is not None and truth_radius is not None:
        cpx, cpy = to_px(float(truth_center[ax]), float(truth_center[ay]))
        lines.append(f'<circle cx="{_fmt(cpx)}" cy="{_fmt(cpy)}" '
                     f'r="{_fmt(truth_radius * scale)}" fill="none" '
                     f'stroke="#888888" stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        px, py = to_px(float(x), float(y))
        lines.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="#c0392b"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
