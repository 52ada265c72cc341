"""Depth-frame front end: yaw from an entropy compass, per-pixel axis labels,
axis-constrained plane fitting, and frame-to-frame segment correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import (
    Axis,
    CorrespondenceEdge,
    Rect,
    SegmentObservation,
    camera_to_aligned,
    overlap_ratio,
)
from .sim import DepthImage


class Label(IntEnum):
    X = 0
    Y = 1
    Z = 2
    UNKNOWN = 3
    NODATA = 4


@dataclass
class AxisLabelImage:
    width: int
    height: int
    labels: np.ndarray  # (H, W) int8 of Label codes


@dataclass(frozen=True)
class FrontendParams:
    k: int = 5
    min_fraction: float = 0.6
    plane_tol: float = 0.03
    min_inliers: int = 50
    min_extent: float = 0.25
    ransac_iters: int = 100
    ransac_tol: float = 0.03
    max_planes_per_component: int = 3
    overlap_min: float = 0.3
    match_gate: float = 0.1
    histogram_bin: float = 0.05
    seed: int = 0


# ---------------------------------------------------------------------------
# Orientation
# ---------------------------------------------------------------------------


def _entropy(values: np.ndarray, width: float) -> float:
    mid = 0.5 * (values.min() + values.max())
    idx = np.floor((values - mid) / width).astype(np.int64)
    counts = np.bincount(idx - idx.min())
    p = counts[counts > 0] / values.size
    return float(-(p * np.log(p)).sum())


def compass_objective(points2d: np.ndarray, yaw: float, bin_width: float = 0.05) -> float:
    """Sum of x- and y-histogram entropies after rotating points by ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    x = c * points2d[:, 0] - s * points2d[:, 1]
    y = s * points2d[:, 0] + c * points2d[:, 1]
    return _entropy(x, bin_width) + _entropy(y, bin_width)


def compass_grid(center_yaw: float, radius: float, step: float) -> np.ndarray:
    """Candidate yaws ordered by distance from the center (center first, then -1, +1, -2, ...)."""
    n = int(math.floor(radius / step + 1e-9))
    order = [0]
    for k in range(1, n + 1):
        order += [-k, k]
    return center_yaw + step * np.array(order, dtype=float)


def entropy_compass(
    points2d,
    center_yaw: float = 0.0,
    radius: float = math.radians(45.0),
    step: float = math.radians(1.0),
    bin_width: float = 0.05,
) -> float | None:
    """Yaw in the search window that minimizes the axis-histogram entropy.

    Returns None when fewer than 10 points are available. Ties go to the
    candidate nearest ``center_yaw``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pts = np.asarray(points2d, dtype=float).reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) < 10:
        return None
    best_yaw, best = None, math.inf
    for yaw in compass_grid(center_yaw, radius, step):
        h = compass_objective(pts, yaw, bin_width)
        if h < best - 1e-12:
            best, best_yaw = h, float(yaw)
    return best_yaw


def fuse_orientation(odom_yaw_deltas: Sequence[float], compass_yaws: Sequence[float | None]) -> list[float]:
    """Absolute yaw per frame: compass when available, otherwise dead reckoning."""
    n = len(compass_yaws)
    if len(odom_yaw_deltas) != max(n - 1, 0):
        raise ValueError("need exactly one odometry delta between consecutive frames")
    first = next((i for i, c in enumerate(compass_yaws) if c is not None), None)
    yaw0 = 0.0 if first is None else compass_yaws[first] - float(np.sum(odom_yaw_deltas[:first]))
    out = [compass_yaws[0] if compass_yaws[0] is not None else yaw0]
    for i in range(1, n):
        c = compass_yaws[i]
        out.append(float(c) if c is not None else out[-1] + float(odom_yaw_deltas[i - 1]))
    return out


def horizontal_points(depth: DepthImage, stride: int = 2) -> np.ndarray:
    """Gravity-plane projection (forward, left) of every ``stride``-th finite pixel."""
    pts = depth.points_camera()[::stride, ::stride].reshape(-1, 3)
    pts = pts[np.isfinite(pts[:, 2])]
    return np.column_stack([pts[:, 2], -pts[:, 0]])


def aligned_points(depth: DepthImage, yaw: float) -> np.ndarray:
    """Camera points rotated into the aligned frame (sensor at origin), shape ``(H, W, 3)``."""
    return depth.points_camera() @ camera_to_aligned(yaw).T


# ---------------------------------------------------------------------------
# Pixel labels
# ---------------------------------------------------------------------------


def label_axis_alignment(
    depth: DepthImage,
    yaw: float,
    k: int = 5,
    min_fraction: float = 0.6,
    plane_tol: float = 0.03,
) -> AxisLabelImage:
    """Assign each pixel the major axis whose perpendicular plane through it holds most k x k neighbors.

    Ties in the neighbor count are broken by the smaller truncated deviation
    sum over the window.
    """
    if k < 3 or k % 2 == 0:
        raise ValueError("k must be odd and at least 3")
    pts = aligned_points(depth, yaw)
    valid = np.isfinite(depth.depth)
    h, w = valid.shape
    r = k // 2
    pad_pts = np.pad(pts, ((r, r), (r, r), (0, 0)), constant_values=np.nan)
    pad_valid = np.pad(valid, r, constant_values=False)
    counts = np.zeros((3, h, w))
    cost = np.zeros((3, h, w))
    n_valid = np.zeros((h, w))
    for dy in range(k):
        for dx in range(k):
            q = pad_pts[dy : dy + h, dx : dx + w]
            qv = pad_valid[dy : dy + h, dx : dx + w] & valid
            n_valid += qv
            with np.errstate(invalid="ignore"):
                dev = np.abs(q - pts)
            for a in range(3):
                da = np.where(qv, dev[..., a], np.inf)
                counts[a] += da < plane_tol
                cost[a] += np.where(qv, np.minimum(da, plane_tol), 0.0)
    score = counts - cost / (plane_tol * (k * k + 1))
    best = np.argmax(score, axis=0)
    best_count = np.take_along_axis(counts, best[None], axis=0)[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(n_valid > 0, best_count / n_valid, 0.0)
    labels = np.where(frac >= min_fraction, best, Label.UNKNOWN).astype(np.int8)
    labels[n_valid < r + 1] = Label.UNKNOWN
    labels[~valid] = Label.NODATA
    return AxisLabelImage(w, h, labels)


# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def ransac_offset(values: np.ndarray, iters: int, tol: float, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """One-point RANSAC for a constant; refit is the inlier median."""
    best_mask = None
    best_count = -1
    for _ in range(iters):
        guess = values[rng.integers(values.size)]
        mask = np.abs(values - guess) < tol
        c = int(mask.sum())
        if c > best_count:
            best_count, best_mask = c, mask
    offset = float(np.median(values[best_mask]))
    mask = np.abs(values - offset) < tol
    return offset, mask


def extract_segments(
    labels: AxisLabelImage,
    depth: DepthImage,
    yaw: float,
    params: FrontendParams = FrontendParams(),
    first_id: int = 0,
) -> list[SegmentObservation]:
    """Connected components per axis label, each fitted with an axis-constrained plane.

    Fits from different components of one frame that share axis and facing
    and lie within ``plane_tol`` of each other are pooled into one segment,
    so a plane split by an occluder still yields a single observation.
    """
    if labels.labels.shape != depth.depth.shape:
        raise ValueError("label and depth images differ in size")
    pts = aligned_points(depth, yaw)
    rng = np.random.default_rng([params.seed, depth.frame_index])
    out: list[SegmentObservation] = []
    for axis in Axis:
        comp, n = ndimage.label(labels.labels == axis, structure=_FOUR_CONNECTED)
        if n == 0:
            continue
        fits: list[tuple[float, np.ndarray]] = []
        for sl_idx, sl in enumerate(ndimage.find_objects(comp), start=1):
            cloud = pts[sl][comp[sl] == sl_idx]
            for _ in range(params.max_planes_per_component):
                if len(cloud) < params.min_inliers:
                    break
                offset, inl = ransac_offset(cloud[:, axis], params.ransac_iters, params.ransac_tol, rng)
                fits.append((offset, cloud[inl]))
                cloud = cloud[~inl]
        for members in _pool_coplanar(fits, axis, params.plane_tol):
            offset = float(np.median(members[:, axis]))
            if len(members) < params.min_inliers or abs(offset) < 1e-6:
                continue
            iu, iv = axis.inplane
            ext = Rect(
                float(members[:, iu].min()),
                float(members[:, iu].max()),
                float(members[:, iv].min()),
                float(members[:, iv].max()),
            )
            if ext.area < params.min_extent:
                continue
            out.append(
                SegmentObservation(
                    frame_index=depth.frame_index,
                    axis=axis,
                    d=offset,
                    facing=-int(np.sign(offset)),
                    extent=ext,
                    inlier_count=len(members),
                    segment_id=first_id + len(out),
                )
            )
    return out


def _pool_coplanar(fits, axis: Axis, tol: float) -> list[np.ndarray]:
    """Group plane fits of one axis whose offsets chain within ``tol`` on the same side of the sensor."""
    order = sorted(range(len(fits)), key=lambda i: fits[i][0])
    groups: list[list[int]] = []
    for i in order:
        off = fits[i][0]
        if groups:
            last = fits[groups[-1][-1]][0]
            if off - last < tol and np.sign(off) == np.sign(last):
                groups[-1].append(i)
                continue
        groups.append([i])
    pooled = [np.vstack([fits[i][1] for i in g]) for g in groups]
    # keep output order stable: by the first fit found in each group
    firsts = [min(g) for g in groups]
    return [pooled[k] for k in np.argsort(firsts, kind="stable")]


def temporal_correspondences(
    prev: Sequence[SegmentObservation],
    curr: Sequence[SegmentObservation],
    rel_motion,
    overlap_min: float = 0.3,
    gate: float = 0.1,
) -> list[CorrespondenceEdge]:
    """Link segments of consecutive frames that agree in axis, facing, offset and extent.

    ``rel_motion`` is the aligned-frame translation from the ``prev`` frame to
    the ``curr`` frame; ``curr`` offsets and extents are moved into the
    ``prev`` frame before comparison.
    """
    t = np.asarray(rel_motion, dtype=float)
    edges = []
    for a in prev:
        for b in curr:
            if a.axis != b.axis or a.facing != b.facing:
                continue
            ax = int(a.axis)
            if abs(a.d - (b.d + t[ax])) >= gate:
                continue
            iu, iv = a.axis.inplane
            if overlap_ratio(a.extent, b.extent.shifted(t[iu], t[iv])) < overlap_min:
                continue
            edges.append(CorrespondenceEdge(a.segment_id, b.segment_id, a.axis, "temporal"))
    return edges


def process_frame(
    depth: DepthImage,
    yaw: float,
    params: FrontendParams = FrontendParams(),
    first_id: int = 0,
) -> tuple[AxisLabelImage, list[SegmentObservation]]:
    labels = label_axis_alignment(depth, yaw, params.k, params.min_fraction, params.plane_tol)
    return labels, extract_segments(labels, depth, yaw, params, first_id)
