"""Static SVG emitters for the spectrum bar plot and the section quiver.

Hand-rolled SVG keeps the output byte-identical across runs (no library
version strings or timestamps creep in).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

__all__ = ["spectrum_bar_svg", "section_quiver_svg"]


def _svg_header(width: int, height: int) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )


def spectrum_bar_svg(eigenvalues: np.ndarray, width: int = 640, height: int = 360) -> str:
    """Bar plot of an ascending eigenvalue list (index vs eigenvalue)."""
    vals = np.asarray(eigenvalues, dtype=float)
    n = vals.size
    parts = [_svg_header(width, height)]
    if n:
        margin = 40
        plot_w = width - 2 * margin
        plot_h = height - 2 * margin
        vmax = max(float(vals.max()), 1e-300)
        bar_w = plot_w / n
        parts.append(
            f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
            f'y2="{height - margin}" stroke="black"/>\n'
        )
        parts.append(
            f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
            f'y2="{height - margin}" stroke="black"/>\n'
        )
        for k, v in enumerate(vals):
            h = plot_h * max(v, 0.0) / vmax
            x = margin + k * bar_w
            y = height - margin - h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{max(bar_w - 1.0, 0.5):.2f}" '
                f'height="{h:.2f}" fill="steelblue"/>\n'
            )
        parts.append(
            f'<text x="{margin}" y="{margin - 10}" font-size="12">'
            f"max eigenvalue {vmax:.6g}</text>\n"
        )
    parts.append("</svg>\n")
    return "".join(parts)


def section_quiver_svg(
    base_points: np.ndarray,
    vectors: np.ndarray,
    anchor_index: Optional[int] = None,
    width: int = 520,
    arrow_scale: float = 0.08,
) -> str:
    """Orthographic front-hemisphere quiver of a tangent vector field on S^2.

    Projects along +z: points with z >= 0 are drawn at their (x, y)
    coordinates inside the unit disc, each with an arrow along the projected
    tangent vector.  The anchor arrow, when given, is drawn in red.
    """
    base_points = np.asarray(base_points, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    height = width
    c = width / 2.0
    r = 0.46 * width
    parts = [_svg_header(width, height)]
    parts.append(
        f'<circle cx="{c}" cy="{c}" r="{r:.2f}" fill="none" stroke="gray"/>\n'
    )
    front = np.nonzero(base_points[:, 2] >= 0.0)[0]
    for k in front:
        px, py = base_points[k, 0], base_points[k, 1]
        vx, vy = vectors[k, 0], vectors[k, 1]
        x0 = c + r * px
        y0 = c - r * py
        x1 = c + r * (px + arrow_scale * vx)
        y1 = c - r * (py + arrow_scale * vy)
        color = "red" if k == anchor_index else "black"
        parts.append(
            f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
            f'stroke="{color}" stroke-width="1"/>\n'
        )
        parts.append(
            f'<circle cx="{x0:.2f}" cy="{y0:.2f}" r="1.2" fill="{color}"/>\n'
        )
    parts.append("</svg>\n")
    return "".join(parts)
