"""Builders for hand-made worlds and segment observations used across tests."""

from __future__ import annotations

import numpy as np

from layoutslam.geometry import Axis, Rect, SegmentObservation
from layoutslam.sim import generate_world


def wall_world(offset: float = 3.0, facing: int = -1, half: float = 20.0):
    """A single large x-plane."""
    return generate_world(
        {"primitives": [{"type": "plane", "axis": "x", "offset": offset, "facing": facing, "extent": [-half, half, -half, half]}]}
    )


def seg(sid: int, frame: int, axis: Axis, d: float, facing: int | None = None, extent=(-1.0, 1.0, -1.0, 1.0)):
    """Segment observation shorthand for hand-built graphs."""
    if facing is None:
        facing = -int(np.sign(d))
    return SegmentObservation(frame, Axis(axis), float(d), facing, Rect(*extent), 100, sid)
