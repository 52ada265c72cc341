"""Synthetic Manhattan worlds, trajectories, odometry, range observations and depth frames.

Random draws come from numpy's PCG64 bit generator. Each consumer uses its
own stream keyed by ``SeedSequence([seed, stream])`` so that, for example,
changing the range noise never perturbs the odometry draws.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    Axis,
    FramePose,
    Rect,
    SegmentObservation,
    camera_to_aligned,
    wrap_pi,
    wrap_yaw,
)

STREAM_ODOMETRY = 1
STREAM_YAW = 2
STREAM_RANGE = 3
STREAM_DEPTH = 4

DEFAULT_HEIGHT = 2.5
DEFAULT_MAX_RANGE = 6.0


def make_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


# ---------------------------------------------------------------------------
# World
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorldPlane:
    axis: Axis
    offset: float
    facing: int
    extent: Rect
    name: str = ""

    @property
    def key(self) -> tuple[int, float, int]:
        """Identity of the infinite layout plane this piece lies on."""
        return (int(self.axis), round(self.offset, 9), self.facing)


@dataclass
class ManhattanWorld:
    planes: list[WorldPlane]
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]]

    def layout_planes(self) -> list[tuple[int, float, int]]:
        """Distinct infinite planes, in first-seen order."""
        return list(dict.fromkeys(p.key for p in self.planes))


class WorldSpecError(ValueError):
    pass


_SIDES = {
    # side -> (axis, which bound, facing for a box / room interior)
    "xmin": (Axis.X, 0, +1),
    "xmax": (Axis.X, 1, -1),
    "ymin": (Axis.Y, 0, +1),
    "ymax": (Axis.Y, 1, -1),
}


def _split_span(lo: float, hi: float, openings: list[tuple[float, float]]) -> list[tuple[float, float]]:
    pieces = [(lo, hi)]
    for a, b in sorted(openings):
        nxt = []
        for s, e in pieces:
            if b <= s or a >= e:
                nxt.append((s, e))
                continue
            if a > s:
                nxt.append((s, a))
            if b < e:
                nxt.append((b, e))
        pieces = nxt
    return [(s, e) for s, e in pieces if e - s > 1e-9]


def _rect_walls(prim: dict, inward: bool, index: int) -> list[WorldPlane]:
    x0, y0 = (float(v) for v in prim["min"])
    x1, y1 = (float(v) for v in prim["max"])
    if not (x1 > x0 and y1 > y0):
        raise WorldSpecError(f"primitive {index}: max must exceed min")
    height = float(prim.get("height", DEFAULT_HEIGHT))
    z0 = float(prim.get("z", 0.0))
    openings: dict[str, list[tuple[float, float]]] = {}
    for op in prim.get("openings", []):
        side = op["side"]
        if side not in _SIDES:
            raise WorldSpecError(f"primitive {index}: unknown opening side {side!r}")
        openings.setdefault(side, []).append((float(op["start"]), float(op["end"])))
    planes = []
    for side, (axis, which, facing) in _SIDES.items():
        offset = (x0, x1)[which] if axis == Axis.X else (y0, y1)[which]
        lo, hi = (y0, y1) if axis == Axis.X else (x0, x1)
        if not inward:
            facing = -facing
        for s, e in _split_span(lo, hi, openings.get(side, [])):
            planes.append(
                WorldPlane(axis, offset, facing, Rect(s, e, z0, z0 + height), f"p{index}.{side}")
            )
    return planes


def generate_world(world: dict) -> ManhattanWorld:
    """Build the plane set described by a world description.

    Supported primitive types:

    ``box`` / ``room``
        ``min``, ``max`` (xy corners), ``height``; four inward-facing walls,
        a floor and a ceiling. ``openings`` cut full-height gaps into walls.
    ``corridor``
        ``origin`` (xy), ``width`` (along x), ``length`` (along y); a box.
    ``block``
        Solid obstacle: four outward-facing walls of ``height``, plus an
        upward-facing top when ``top`` is true.
    ``plane``
        Explicit ``axis``, ``offset``, ``facing``, ``extent``.
    """
    prims = world.get("primitives", [])
    planes: list[WorldPlane] = []
    for i, prim in enumerate(prims):
        kind = prim.get("type")
        if kind == "corridor":
            ox, oy = (float(v) for v in prim.get("origin", (0.0, 0.0)))
            prim = dict(prim, min=[ox, oy], max=[ox + float(prim["width"]), oy + float(prim["length"])])
            kind = "box"
        if kind in ("box", "room"):
            planes.extend(_rect_walls(prim, inward=True, index=i))
            x0, y0 = (float(v) for v in prim["min"])
            x1, y1 = (float(v) for v in prim["max"])
            z0 = float(prim.get("z", 0.0))
            h = float(prim.get("height", DEFAULT_HEIGHT))
            if prim.get("floor", True):
                planes.append(WorldPlane(Axis.Z, z0, +1, Rect(x0, x1, y0, y1), f"p{i}.floor"))
            if prim.get("ceiling", True):
                planes.append(WorldPlane(Axis.Z, z0 + h, -1, Rect(x0, x1, y0, y1), f"p{i}.ceiling"))
        elif kind == "block":
            planes.extend(_rect_walls(prim, inward=False, index=i))
            if prim.get("top", False):
                x0, y0 = (float(v) for v in prim["min"])
                x1, y1 = (float(v) for v in prim["max"])
                ztop = float(prim.get("z", 0.0)) + float(prim.get("height", DEFAULT_HEIGHT))
                planes.append(WorldPlane(Axis.Z, ztop, +1, Rect(x0, x1, y0, y1), f"p{i}.top"))
        elif kind == "plane":
            facing = int(prim["facing"])
            if facing not in (-1, 1):
                raise WorldSpecError(f"primitive {i}: facing must be +1 or -1")
            planes.append(
                WorldPlane(
                    Axis.parse(prim["axis"]),
                    float(prim["offset"]),
                    facing,
                    Rect.from_list(prim["extent"]),
                    prim.get("name", f"p{i}"),
                )
            )
        else:
            raise WorldSpecError(f"primitive {i}: unknown type {kind!r}")
    if not planes:
        raise WorldSpecError("no planes")
    for p in planes:
        if p.extent.area <= 0:
            raise WorldSpecError(f"plane {p.name}: degenerate extent")
    for i, a in enumerate(planes):
        for b in planes[i + 1 :]:
            if (
                a.axis == b.axis
                and abs(a.offset - b.offset) < 1e-9
                and a.facing != b.facing
                and a.extent.intersection(b.extent) is not None
            ):
                raise WorldSpecError(
                    f"contradictory planes {a.name} and {b.name}: same {a.axis.label}={a.offset} "
                    "with opposite facing and overlapping extent"
                )
    lo = [math.inf] * 3
    hi = [-math.inf] * 3
    for p in planes:
        a = int(p.axis)
        iu, iv = p.axis.inplane
        for idx, vmin, vmax in ((a, p.offset, p.offset), (iu, p.extent.umin, p.extent.umax), (iv, p.extent.vmin, p.extent.vmax)):
            lo[idx] = min(lo[idx], vmin)
            hi[idx] = max(hi[idx], vmax)
    return ManhattanWorld(planes, (tuple(lo), tuple(hi)))


# ---------------------------------------------------------------------------
# Trajectory and noise
# ---------------------------------------------------------------------------


@dataclass
class GroundTruthTrajectory:
    poses: list[FramePose]
    closed: bool = False

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses], dtype=float)

    def yaws(self) -> np.ndarray:
        return np.array([p.yaw for p in self.poses], dtype=float)

    def __len__(self) -> int:
        return len(self.poses)


def make_trajectory(
    waypoints,
    step: float,
    height: float = 1.2,
    yaw_offset: float = 0.0,
    world: ManhattanWorld | None = None,
) -> GroundTruthTrajectory:
    """Sample poses every ``step`` meters along a polyline of xy waypoints.

    Yaw follows the travel direction of the current leg. The final waypoint
    is always included, so a polyline ending at its start yields a closed loop.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two xy waypoints")
    if step <= 0:
        raise ValueError("step must be positive")
    poses: list[FramePose] = []
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        seg = b - a
        length = float(np.hypot(*seg))
        if length == 0:
            continue
        yaw = wrap_yaw(math.atan2(seg[1], seg[0]) + yaw_offset)
        n = max(1, int(round(length / step)))
        for j in range(n):
            q = a + seg * (j / n)
            poses.append(FramePose((float(q[0]), float(q[1]), height), yaw))
    last = pts[-1]
    poses.append(FramePose((float(last[0]), float(last[1]), height), poses[-1].yaw))
    closed = bool(np.allclose(pts[0], pts[-1]))
    if world is not None:
        lo, hi = np.array(world.bounds[0]), np.array(world.bounds[1])
        for p in poses:
            if np.any(p.p < lo) or np.any(p.p > hi):
                raise ValueError(f"pose {p.position} outside world bounds")
    return GroundTruthTrajectory(poses, closed)


@dataclass
class NoiseSpec:
    odom_sigma: float = 0.0
    odom_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    range_sigma: float = 0.0
    yaw_sigma: float = 0.0
    depth_sigma_rel: float = 0.005
    seed: int = 0

    def __post_init__(self):
        for name in ("odom_sigma", "range_sigma", "yaw_sigma", "depth_sigma_rel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        self.odom_bias = tuple(float(b) for b in self.odom_bias)
        if len(self.odom_bias) != 3:
            raise ValueError("odom_bias must be a 3-vector")


def simulate_odometry(traj: GroundTruthTrajectory, noise: NoiseSpec) -> np.ndarray:
    """Aligned-frame inter-frame translations, shape ``(n-1, 3)``."""
    if len(traj) < 2:
        raise ValueError("need at least two poses")
    pos = traj.positions()
    delta = np.diff(pos, axis=0)
    rng = make_rng(noise.seed, STREAM_ODOMETRY)
    jitter = rng.standard_normal(delta.shape) * noise.odom_sigma
    return delta + np.asarray(noise.odom_bias) + jitter


def simulate_yaw_deltas(traj: GroundTruthTrajectory, noise: NoiseSpec) -> np.ndarray:
    """Relative yaw increments as a VIO would report them, shape ``(n-1,)``."""
    yaws = traj.yaws()
    delta = np.array([wrap_pi(b - a) for a, b in zip(yaws[:-1], yaws[1:])])
    rng = make_rng(noise.seed, STREAM_YAW)
    return delta + rng.standard_normal(delta.shape) * noise.yaw_sigma


# ---------------------------------------------------------------------------
# Direct range observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorModel:
    hfov_deg: float = 100.0
    vfov_deg: float = 85.0
    max_range: float = DEFAULT_MAX_RANGE
    min_extent: float = 0.25


def _clip_halfplane(poly: list[tuple[float, float]], a: float, b: float, c: float):
    """Keep the part of a convex polygon where ``a*u + b*v + c >= 0``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _inside_convex(poly, u: float, v: float) -> bool:
    sign = 0
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        cross = (q[0] - p[0]) * (v - p[1]) - (q[1] - p[1]) * (u - p[0])
        if abs(cross) < 1e-12:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _disk_polygon_bbox(poly, radius: float) -> Rect | None:
    cands = [p for p in poly if p[0] ** 2 + p[1] ** 2 <= radius**2]
    n = len(poly)
    for i in range(n):
        p, q = np.array(poly[i]), np.array(poly[(i + 1) % n])
        dvec = q - p
        aa = dvec @ dvec
        if aa == 0:
            continue
        bb = 2 * p @ dvec
        cc = p @ p - radius**2
        disc = bb * bb - 4 * aa * cc
        if disc < 0:
            continue
        sq = math.sqrt(disc)
        for t in ((-bb - sq) / (2 * aa), (-bb + sq) / (2 * aa)):
            if 0.0 <= t <= 1.0:
                cands.append(tuple(p + t * dvec))
    for u, v in ((radius, 0.0), (-radius, 0.0), (0.0, radius), (0.0, -radius)):
        if _inside_convex(poly, u, v):
            cands.append((u, v))
    if not cands:
        return None
    arr = np.array(cands)
    r = Rect(float(arr[:, 0].min()), float(arr[:, 0].max()), float(arr[:, 1].min()), float(arr[:, 1].max()))
    return r if r.area > 0 else None


def visible_extent(plane: WorldPlane, pose: FramePose, sensor: SensorModel) -> Rect | None:
    """Bounding rectangle, relative to the sensor, of the part of ``plane`` inside the sensing wedge.

    Occlusion by other planes is ignored.
    """
    a = int(plane.axis)
    iu, iv = plane.axis.inplane
    p = pose.p
    d = plane.offset - p[a]
    if abs(d) < 1e-9 or -d * plane.facing <= 0 or abs(d) >= sensor.max_range:
        return None
    e = plane.extent.shifted(-p[iu], -p[iv])
    poly = [(e.umin, e.vmin), (e.umax, e.vmin), (e.umax, e.vmax), (e.umin, e.vmax)]
    th = math.tan(math.radians(sensor.hfov_deg) / 2)
    tv = math.tan(math.radians(sensor.vfov_deg) / 2)
    rot = camera_to_aligned(pose.yaw)
    for n_cam in ((-1.0, 0.0, th), (1.0, 0.0, th), (0.0, -1.0, tv), (0.0, 1.0, tv)):
        n = rot @ np.array(n_cam)
        poly = _clip_halfplane(poly, n[iu], n[iv], n[a] * d)
        if len(poly) < 3:
            return None
    radius = math.sqrt(sensor.max_range**2 - d * d)
    return _disk_polygon_bbox(poly, radius)


def simulate_range_measurements(
    world: ManhattanWorld,
    traj: GroundTruthTrajectory,
    noise: NoiseSpec,
    sensor: SensorModel | None = None,
) -> list[SegmentObservation]:
    """One observation per (pose, visible plane piece), with signed range ``d = offset - p[axis]``."""
    if not world.planes:
        raise ValueError("world has no planes")
    sensor = sensor or SensorModel()
    rng = make_rng(noise.seed, STREAM_RANGE)
    out: list[SegmentObservation] = []
    for i, pose in enumerate(traj.poses):
        for j, plane in enumerate(world.planes):
            ext = visible_extent(plane, pose, sensor)
            if ext is None or ext.area < sensor.min_extent:
                continue
            d_true = plane.offset - pose.p[int(plane.axis)]
            d = d_true + noise.range_sigma * rng.standard_normal()
            out.append(
                SegmentObservation(
                    frame_index=i,
                    axis=plane.axis,
                    d=float(d),
                    facing=plane.facing,
                    extent=ext,
                    inlier_count=0,
                    segment_id=len(out),
                    source_plane=j,
                )
            )
    return out


# ---------------------------------------------------------------------------
# Depth rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 100.0, vfov_deg: float = 85.0) -> "Intrinsics":
        fx = (width / 2) / math.tan(math.radians(hfov_deg) / 2)
        fy = (height / 2) / math.tan(math.radians(vfov_deg) / 2)
        return cls(width, height, fx, fy, (width - 1) / 2, (height - 1) / 2)

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions with unit z, shape ``(H, W, 3)``."""
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)


@dataclass
class DepthImage:
    width: int
    height: int
    depth: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    frame_index: int = 0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float).reshape(self.height, self.width)

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.width, self.height, self.fx, self.fy, self.cx, self.cy)

    def points_camera(self) -> np.ndarray:
        """Back-projected camera-frame points, shape ``(H, W, 3)`` (NaN where no return)."""
        return self.intrinsics.pixel_rays() * self.depth[..., None]

    _HEADER = struct.Struct("<4sHIIddddq")
    _MAGIC = b"MWDI"

    def to_bytes(self) -> bytes:
        head = self._HEADER.pack(
            self._MAGIC, 1, self.width, self.height, self.fx, self.fy, self.cx, self.cy, self.frame_index
        )
        return head + self.depth.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DepthImage":
        magic, version, w, h, fx, fy, cx, cy, idx = cls._HEADER.unpack_from(blob)
        if magic != cls._MAGIC or version != 1:
            raise ValueError("not a depth image file")
        data = np.frombuffer(blob, dtype="<f4", offset=cls._HEADER.size, count=w * h)
        return cls(w, h, data.astype(float), fx, fy, cx, cy, idx)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DepthImage":
        return cls.from_bytes(Path(path).read_bytes())

    def to_pgm(self, max_range: float = DEFAULT_MAX_RANGE) -> bytes:
        """16-bit binary PGM in millimeters; no-return pixels are 0."""
        mm = np.nan_to_num(self.depth * 1000.0, nan=0.0)
        mm = np.clip(np.rint(mm), 0, 65535).astype(">u2")
        head = f"P5\n{self.width} {self.height}\n65535\n".encode()
        return head + mm.tobytes()


def raycast(
    world: ManhattanWorld, pose: FramePose, intrinsics: Intrinsics, max_range: float = DEFAULT_MAX_RANGE
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel z-depth and index of the nearest front-facing plane hit (-1 where none)."""
    rays = intrinsics.pixel_rays()
    dirs = rays @ camera_to_aligned(pose.yaw).T
    norms = np.linalg.norm(rays, axis=-1)
    p = pose.p
    best = np.full(rays.shape[:2], np.inf)
    hit = np.full(rays.shape[:2], -1, dtype=int)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, plane in enumerate(world.planes):
            a = int(plane.axis)
            iu, iv = plane.axis.inplane
            da = dirs[..., a]
            t = (plane.offset - p[a]) / da
            front = (da * plane.facing) < 0
            u = p[iu] + t * dirs[..., iu]
            v = p[iv] + t * dirs[..., iv]
            ok = front & (t > 0) & plane.extent.contains(u, v, tol=1e-9) & (t * norms <= max_range) & (t < best)
            best = np.where(ok, t, best)
            hit = np.where(ok, j, hit)
    depth = np.where(hit >= 0, best, np.nan)
    return depth, hit


def render_depth_frame(
    world: ManhattanWorld,
    pose: FramePose,
    intrinsics: Intrinsics,
    max_range: float = DEFAULT_MAX_RANGE,
    noise: NoiseSpec | None = None,
    frame_index: int = 0,
    return_hits: bool = False,
):
    """Ray-cast a depth frame; optional per-pixel noise with sigma proportional to depth.

    With ``return_hits`` the per-pixel plane index image is returned as well.
    """
    depth, hit = raycast(world, pose, intrinsics, max_range)
    if noise is not None and noise.depth_sigma_rel > 0:
        rng = make_rng(noise.seed, STREAM_DEPTH * 1_000_003 + frame_index)
        depth = depth * (1.0 + noise.depth_sigma_rel * rng.standard_normal(depth.shape))
    k = intrinsics
    image = DepthImage(k.width, k.height, depth, k.fx, k.fy, k.cx, k.cy, frame_index)
    return (image, hit) if return_hits else image


@dataclass
class Scenario:
    """A fully specified simulation: world, trajectory, noise and sensing mode."""

    name: str
    world: ManhattanWorld
    trajectory: GroundTruthTrajectory
    noise: NoiseSpec
    sensor: SensorModel = field(default_factory=SensorModel)
    mode: str = "range"
    intrinsics: Intrinsics | None = None
    config: dict = field(default_factory=dict)
