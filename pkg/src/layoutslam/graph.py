"""Factor graph over frame positions and layout-plane slots, and the sparse systems built from it.

Parameter vector layout: ``[p_0 (x,y,z), ..., p_{n-1}, m^x slots, m^y slots, m^z slots]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import Axis, CorrespondenceEdge, SegmentObservation
from .unionfind import UnionFind


@dataclass
class PlaneSlot:
    slot_id: int
    axis: Axis
    facing: int
    members: list[int]  # segment ids


@dataclass
class RangeFactor:
    frame: int
    slot: int
    axis: Axis
    d: float
    segment_id: int


@dataclass
class FactorGraph:
    n_frames: int
    slots: list[PlaneSlot]
    range_factors: list[RangeFactor]
    odometry: np.ndarray  # (n_frames - 1, 3)
    segments: list[SegmentObservation] = field(default_factory=list)
    slot_of_segment: dict[int, int] = field(default_factory=dict)

    def slots_on(self, axis: Axis) -> list[PlaneSlot]:
        return [s for s in self.slots if s.axis == axis]


class GraphInputError(ValueError):
    pass


def build_graph(
    segments: Sequence[SegmentObservation],
    temporal_edges: Sequence[CorrespondenceEdge],
    odometry,
) -> FactorGraph:
    """Group segments into plane slots by union-find over correspondence edges.

    Slots are numbered axis by axis (X, then Y, then Z), each axis in order
    of its earliest member segment.
    """
    odometry = np.asarray(odometry, dtype=float).reshape(-1, 3)
    n_frames = len(odometry) + 1
    by_id = {s.segment_id: s for s in segments}
    if len(by_id) != len(segments):
        raise GraphInputError("duplicate segment ids")
    for s in segments:
        if not 0 <= s.frame_index < n_frames:
            raise GraphInputError(f"segment {s.segment_id} references frame {s.frame_index} of {n_frames}")
    uf = UnionFind(s.segment_id for s in segments)
    for e in temporal_edges:
        a, b = by_id.get(e.segment_id_a), by_id.get(e.segment_id_b)
        if a is None or b is None:
            raise GraphInputError(f"edge {e} references an unknown segment")
        if a.axis != b.axis:
            raise GraphInputError(f"edge joins {a.axis.name} segment {a.segment_id} with {b.axis.name} segment {b.segment_id}")
        if a.facing != b.facing:
            raise GraphInputError(f"edge joins opposite-facing segments {a.segment_id} and {b.segment_id}")
        uf.union(a.segment_id, b.segment_id)
    groups = uf.groups()
    slots: list[PlaneSlot] = []
    for axis in Axis:
        for members in groups:
            first = by_id[members[0]]
            if first.axis == axis:
                slots.append(PlaneSlot(len(slots), axis, first.facing, list(members)))
    slot_of = {sid: slot.slot_id for slot in slots for sid in slot.members}
    factors = [RangeFactor(s.frame_index, slot_of[s.segment_id], s.axis, s.d, s.segment_id) for s in segments]
    return FactorGraph(n_frames, slots, factors, odometry, list(segments), slot_of)


@dataclass(frozen=True)
class ParameterIndex:
    n_frames: int
    slot_axes: tuple[Axis, ...]

    @classmethod
    def for_graph(cls, graph: FactorGraph) -> "ParameterIndex":
        axes = tuple(s.axis for s in graph.slots)
        if list(axes) != sorted(axes):
            raise ValueError("slots must be ordered by axis")
        return cls(graph.n_frames, axes)

    @property
    def dim(self) -> int:
        return 3 * self.n_frames + len(self.slot_axes)

    @property
    def n_slots(self) -> int:
        return len(self.slot_axes)

    def pose(self, frame: int, component: int) -> int:
        if not (0 <= frame < self.n_frames and 0 <= component < 3):
            raise IndexError((frame, component))
        return 3 * frame + component

    def slot(self, slot_id: int) -> int:
        if not 0 <= slot_id < self.n_slots:
            raise IndexError(slot_id)
        return 3 * self.n_frames + slot_id

    def entity(self, column: int) -> tuple[str, int, int]:
        """Inverse map: ``("p", frame, component)`` or ``("m", slot_id, axis)``."""
        if not 0 <= column < self.dim:
            raise IndexError(column)
        if column < 3 * self.n_frames:
            return ("p", column // 3, column % 3)
        sid = column - 3 * self.n_frames
        return ("m", sid, int(self.slot_axes[sid]))

    def name(self, column: int) -> str:
        kind, i, c = self.entity(column)
        if kind == "p":
            return f"p{i}.{'xyz'[c]}"
        return f"m{'xyz'[c]}[{i}]"

    def to_dict(self) -> dict:
        return {"n_frames": self.n_frames, "slot_axes": [a.label for a in self.slot_axes], "dim": self.dim}


@dataclass
class Triplets:
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def from_lists(cls, rows, cols, vals, shape) -> "Triplets":
        return cls(
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=float),
            (int(shape[0]), int(shape[1])),
        )

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.tocsr().toarray()

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "vals": self.vals.tolist(),
        }


@dataclass
class SparseSystem:
    """Measurement system ``A xi = b`` with per-row weights and row provenance."""

    A: Triplets
    b: np.ndarray
    weights: np.ndarray
    row_kind: list[str]
    index: ParameterIndex

    def weighted(self) -> tuple[sp.csr_matrix, np.ndarray]:
        W = sp.diags(self.weights)
        return (W @ self.A.tocsr()).tocsr(), self.weights * self.b

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


def assemble_measurement_system(
    graph: FactorGraph,
    anchor_weight: float = 1e3,
    origin=(0.0, 0.0, 0.0),
    range_sigma: float | None = None,
    odom_sigma: float | None = None,
) -> SparseSystem:
    """Stack range rows ``m - p[axis] = d``, odometry rows ``p_{i+1} - p_i = t_i`` and an anchor ``p_0 = origin``.

    Rows are unweighted unless a sigma is given, in which case the matching
    rows get weight ``1/sigma``.
    """
    if graph.n_frames == 0:
        raise ValueError("empty graph")
    index = ParameterIndex.for_graph(graph)
    rows, cols, vals, b, w, kind = [], [], [], [], [], []
    r = 0
    w_range = 1.0 / range_sigma if range_sigma else 1.0
    w_odom = 1.0 / odom_sigma if odom_sigma else 1.0
    for f in graph.range_factors:
        rows += [r, r]
        cols += [index.slot(f.slot), index.pose(f.frame, int(f.axis))]
        vals += [1.0, -1.0]
        b.append(f.d)
        w.append(w_range)
        kind.append("range")
        r += 1
    for i, t in enumerate(graph.odometry):
        for c in range(3):
            rows += [r, r]
            cols += [index.pose(i + 1, c), index.pose(i, c)]
            vals += [1.0, -1.0]
            b.append(float(t[c]))
            w.append(w_odom)
            kind.append("odometry")
            r += 1
    for c in range(3):
        rows.append(r)
        cols.append(index.pose(0, c))
        vals.append(1.0)
        b.append(float(origin[c]))
        w.append(anchor_weight)
        kind.append("anchor")
        r += 1
    A = Triplets.from_lists(rows, cols, vals, (r, index.dim))
    return SparseSystem(A, np.asarray(b, dtype=float), np.asarray(w, dtype=float), kind, index)


@dataclass(frozen=True)
class Hypothesis:
    axis: Axis
    slot_a: int
    slot_b: int

    def to_dict(self) -> dict:
        return {"axis": self.axis.label, "a": self.slot_a, "b": self.slot_b}


def slot_offsets(graph: FactorGraph, xi: np.ndarray) -> np.ndarray:
    base = 3 * graph.n_frames
    return np.asarray(xi)[base : base + len(graph.slots)]


def generate_hypotheses(graph: FactorGraph, xi_init, max_gap: float = 1.0) -> list[Hypothesis]:
    """All same-axis, same-facing slot pairs whose offsets at ``xi_init`` differ by at most ``max_gap``.

    Returned sorted by ``(slot_a, slot_b)`` with ``slot_a < slot_b``.
    """
    offsets = slot_offsets(graph, xi_init)
    groups: dict[tuple[Axis, int], list[int]] = {}
    for s in graph.slots:
        groups.setdefault((s.axis, s.facing), []).append(s.slot_id)
    found = []
    for (axis, _), ids in groups.items():
        order = sorted(ids, key=lambda i: offsets[i])
        lo = 0
        for hi, j in enumerate(order):
            while offsets[j] - offsets[order[lo]] > max_gap:
                lo += 1
            for i in order[lo:hi]:
                a, b = min(i, j), max(i, j)
                found.append(Hypothesis(axis, a, b))
    return sorted(found, key=lambda h: (h.slot_a, h.slot_b))


def build_equivalence_matrix(hypotheses: Sequence[Hypothesis], index: ParameterIndex) -> Triplets:
    rows, cols, vals = [], [], []
    for r, h in enumerate(hypotheses):
        if index.slot_axes[h.slot_a] != h.axis or index.slot_axes[h.slot_b] != h.axis:
            raise ValueError(f"hypothesis {h} mixes axes")
        rows += [r, r]
        cols += [index.slot(h.slot_a), index.slot(h.slot_b)]
        vals += [1.0, -1.0]
    return Triplets.from_lists(rows, cols, vals, (len(hypotheses), index.dim))


def build_topology_constraints(graph: FactorGraph, index: ParameterIndex, min_abs_d: float = 1e-6) -> Triplets:
    """Rows ``-sign(d) * (m - p[axis]) <= 0``; near-zero ranges carry no side information and are skipped."""
    rows, cols, vals = [], [], []
    r = 0
    for f in graph.range_factors:
        if abs(f.d) < min_abs_d:
            continue
        s = float(np.sign(f.d))
        rows += [r, r]
        cols += [index.slot(f.slot), index.pose(f.frame, int(f.axis))]
        vals += [-s, s]
        r += 1
    return Triplets.from_lists(rows, cols, vals, (r, index.dim))


def system_to_json(system: SparseSystem, E: Triplets | None = None, D: Triplets | None = None) -> str:
    out = {
        "index": system.index.to_dict(),
        "columns": [system.index.name(c) for c in range(system.index.dim)],
        "A": system.A.to_dict(),
        "b": system.b.tolist(),
        "weights": system.weights.tolist(),
        "row_kind": system.row_kind,
    }
    if E is not None:
        out["E"] = E.to_dict()
    if D is not None:
        out["D"] = D.to_dict()
    return json.dumps(out, indent=1)
