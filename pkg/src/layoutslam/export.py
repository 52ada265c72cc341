"""Map export: birds-eye SVG and a JSON model that round-trips."""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .geometry import Axis
from .solver.merge import LayoutStructure

AXIS_COLORS = {Axis.X: "red", Axis.Y: "green"}
MAP_FORMATS = ("svg", "json")


def map_to_dict(structures: Sequence[LayoutStructure], positions) -> dict:
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    return {
        "planes": [s.to_dict() for s in structures],
        "poses": pos.tolist(),
    }


def map_from_dict(data: dict) -> tuple[list[LayoutStructure], np.ndarray]:
    structures = [LayoutStructure.from_dict(p) for p in data["planes"]]
    poses = np.asarray(data["poses"], dtype=float).reshape(-1, 3)
    return structures, poses


def map_to_svg(structures: Sequence[LayoutStructure], positions, scale: float = 40.0, margin: float = 20.0) -> str:
    """Top-down drawing: x-planes red, y-planes green, trajectory black.

    Horizontal (z) planes are not drawn. Planes without a known extent are
    skipped.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    xs, ys = list(pos[:, 0]), list(pos[:, 1])
    lines = []
    for s in structures:
        if s.axis == Axis.Z or s.extent is None:
            continue
        # in-plane u is the other horizontal coordinate for both vertical axes
        if s.axis == Axis.X:
            seg = ((s.offset, s.extent.umin), (s.offset, s.extent.umax))
        else:
            seg = ((s.extent.umin, s.offset), (s.extent.umax, s.offset))
        lines.append((AXIS_COLORS[s.axis], seg))
        xs += [seg[0][0], seg[1][0]]
        ys += [seg[0][1], seg[1][1]]
    if not xs:
        xs, ys = [0.0], [0.0]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    width = (x1 - x0) * scale + 2 * margin
    height = (y1 - y0) * scale + 2 * margin

    def px(x, y):
        return f"{(x - x0) * scale + margin:.3f},{(y1 - y) * scale + margin:.3f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3f}" height="{height:.3f}" '
        f'viewBox="0 0 {width:.3f} {height:.3f}">',
        f'<rect x="0" y="0" width="{width:.3f}" height="{height:.3f}" fill="white"/>',
    ]
    for color, (a, b) in lines:
        pa, pb = px(*a).split(","), px(*b).split(",")
        out.append(
            f'<line x1="{pa[0]}" y1="{pa[1]}" x2="{pb[0]}" y2="{pb[1]}" stroke="{color}" stroke-width="2"/>'
        )
    if len(pos):
        pts = " ".join(px(x, y) for x, y in pos[:, :2])
        out.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_map(structures: Sequence[LayoutStructure], positions, fmt: str) -> str:
    """Render the model in ``fmt`` ("svg" or "json")."""
    if fmt == "svg":
        return map_to_svg(structures, positions)
    if fmt == "json":
        return json.dumps(map_to_dict(structures, positions), indent=1, sort_keys=True) + "\n"
    raise ValueError(f"unknown map format {fmt!r}; expected one of {MAP_FORMATS}")
