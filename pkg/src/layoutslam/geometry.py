"""Shared domain types: axes, in-plane rectangles, poses, segment observations.

Conventions used throughout the package:

* The aligned (Manhattan) frame has ``Z`` up. Axes are indexed 0, 1, 2.
* A plane perpendicular to axis ``a`` has in-plane coordinates ``(u, v)``
  taken from the remaining axes in increasing order: X-planes use ``(y, z)``,
  Y-planes ``(x, z)`` and Z-planes ``(x, y)``.
* ``facing`` is the sign of the surface normal along the plane axis.
* Camera frames are x-right, y-down, z-forward with the optical axis kept
  horizontal (gravity is known), so a pose is a position plus a yaw: the
  heading of the optical axis measured from +X towards +Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class Axis(IntEnum):
    X = 0
    Y = 1
    Z = 2

    @classmethod
    def parse(cls, value) -> "Axis":
        if isinstance(value, Axis):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown axis {value!r}") from None
        return cls(int(value))

    @property
    def inplane(self) -> tuple[int, int]:
        return IN_PLANE[self]

    @property
    def label(self) -> str:
        return self.name.lower()


IN_PLANE = {Axis.X: (1, 2), Axis.Y: (0, 2), Axis.Z: (0, 1)}


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[umin, umax] x [vmin, vmax]`` in plane coordinates."""

    umin: float
    umax: float
    vmin: float
    vmax: float

    @property
    def area(self) -> float:
        return max(0.0, self.umax - self.umin) * max(0.0, self.vmax - self.vmin)

    @property
    def width(self) -> float:
        return self.umax - self.umin

    @property
    def height(self) -> float:
        return self.vmax - self.vmin

    def shifted(self, du: float, dv: float) -> "Rect":
        return Rect(self.umin + du, self.umax + du, self.vmin + dv, self.vmax + dv)

    def intersection(self, other: "Rect") -> "Rect | None":
        r = Rect(
            max(self.umin, other.umin),
            min(self.umax, other.umax),
            max(self.vmin, other.vmin),
            min(self.vmax, other.vmax),
        )
        if r.umax <= r.umin or r.vmax <= r.vmin:
            return None
        return r

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.umin, other.umin),
            max(self.umax, other.umax),
            min(self.vmin, other.vmin),
            max(self.vmax, other.vmax),
        )

    def contains(self, u, v, tol: float = 0.0):
        return (
            (u >= self.umin - tol)
            & (u <= self.umax + tol)
            & (v >= self.vmin - tol)
            & (v <= self.vmax + tol)
        )

    def to_list(self) -> list[float]:
        return [self.umin, self.umax, self.vmin, self.vmax]

    @classmethod
    def from_list(cls, values) -> "Rect":
        umin, umax, vmin, vmax = (float(x) for x in values)
        return cls(umin, umax, vmin, vmax)


def overlap_ratio(a: Rect, b: Rect) -> float:
    """Intersection area over the smaller of the two areas (0 when disjoint)."""
    inter = a.intersection(b)
    if inter is None:
        return 0.0
    smaller = min(a.area, b.area)
    return inter.area / smaller if smaller > 0 else 0.0


@dataclass(frozen=True)
class FramePose:
    position: tuple[float, float, float]
    yaw: float

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


def wrap_yaw(yaw: float) -> float:
    """Map an angle to ``[0, 2*pi)``."""
    w = math.fmod(yaw, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    if w >= 2.0 * math.pi:
        w = 0.0
    return w


def wrap_pi(angle: float) -> float:
    """Map an angle to ``[-pi, pi)``."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def yaw_rotation(yaw: float) -> np.ndarray:
    """3x3 rotation about Z by ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def camera_to_aligned(yaw: float) -> np.ndarray:
    """Rotation taking camera coordinates (x right, y down, z forward) to the aligned frame."""
    c, s = math.cos(yaw), math.sin(yaw)
    forward = [c, s, 0.0]
    right = [s, -c, 0.0]
    down = [0.0, 0.0, -1.0]
    return np.column_stack([right, down, forward])


@dataclass
class SegmentObservation:
    """A planar fragment seen in one frame, at signed offset ``d`` from the sensor.

    ``extent`` is expressed in in-plane coordinates relative to the sensor
    position of ``frame_index``.
    """

    frame_index: int
    axis: Axis
    d: float
    facing: int
    extent: Rect
    inlier_count: int
    segment_id: int
    source_plane: int | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {
            "segment_id": self.segment_id,
            "frame_index": self.frame_index,
            "axis": self.axis.label,
            "d": self.d,
            "facing": self.facing,
            "extent": self.extent.to_list(),
            "inlier_count": self.inlier_count,
        }
        if self.source_plane is not None:
            out["source_plane"] = self.source_plane
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentObservation":
        return cls(
            frame_index=int(data["frame_index"]),
            axis=Axis.parse(data["axis"]),
            d=float(data["d"]),
            facing=int(data["facing"]),
            extent=Rect.from_list(data["extent"]),
            inlier_count=int(data["inlier_count"]),
            segment_id=int(data["segment_id"]),
            source_plane=data.get("source_plane"),
        )


@dataclass(frozen=True)
class CorrespondenceEdge:
    segment_id_a: int
    segment_id_b: int
    axis: Axis
    kind: str = "temporal"

    def to_dict(self) -> dict:
        return {
            "a": self.segment_id_a,
            "b": self.segment_id_b,
            "axis": self.axis.label,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorrespondenceEdge":
        return cls(int(data["a"]), int(data["b"]), Axis.parse(data["axis"]), data.get("kind", "temporal"))
