"""Turning a relaxed solution into an explicit merged layout model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..geometry import Axis, Rect
from ..graph import FactorGraph, Hypothesis
from ..unionfind import UnionFind
from .lsq import solve_inequality_ls


class MergeError(ValueError):
    pass


@dataclass
class MergeSet:
    accepted: list[int]
    classes: list[list[int]]  # partition of slot ids

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def merge_classes(n_slots: int, hypotheses: Sequence[Hypothesis], accepted: Sequence[int]) -> list[list[int]]:
    uf = UnionFind(range(n_slots))
    for r in accepted:
        h = hypotheses[r]
        uf.union(h.slot_a, h.slot_b)
    return [sorted(g) for g in uf.groups()]


def threshold_equivalences(E, xi, mu: float, hypotheses: Sequence[Hypothesis], n_slots: int) -> MergeSet:
    """Accept hypothesis rows with ``|(E xi)_r| <= mu`` and close them transitively."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    gaps = np.abs(sp.csr_matrix(E.tocsr() if hasattr(E, "tocsr") else E) @ np.asarray(xi))
    accepted = [int(r) for r in np.flatnonzero(gaps <= mu)]
    return MergeSet(accepted, merge_classes(n_slots, hypotheses, accepted))


@dataclass
class LayoutStructure:
    axis: Axis
    facing: int
    offset: float
    slots: list[int]
    extent: Rect | None = None

    def to_dict(self) -> dict:
        return {
            "axis": self.axis.label,
            "facing": self.facing,
            "offset": self.offset,
            "slots": list(self.slots),
            "extent": self.extent.to_list() if self.extent is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayoutStructure":
        ext = data.get("extent")
        return cls(
            Axis.parse(data["axis"]),
            int(data["facing"]),
            float(data["offset"]),
            [int(s) for s in data["slots"]],
            Rect.from_list(ext) if ext is not None else None,
        )


@dataclass
class ResolvedModel:
    xi: np.ndarray
    structures: list[LayoutStructure]
    residual: float
    max_ineq_violation: float
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def positions(self, n_frames: int) -> np.ndarray:
        return self.xi[: 3 * n_frames].reshape(n_frames, 3)


def collapse_matrix(graph: FactorGraph, classes: Sequence[Sequence[int]]) -> tuple[sp.csr_matrix, list[list[int]]]:
    """Map reduced parameters to full ones: poses unchanged, one column per slot class."""
    n_pose = 3 * graph.n_frames
    n_slots = len(graph.slots)
    seen = sorted(s for c in classes for s in c)
    if seen != list(range(n_slots)):
        raise MergeError("classes must partition the plane slots")
    ordered = sorted((sorted(c) for c in classes), key=lambda c: c[0])
    for c in ordered:
        axes = {graph.slots[s].axis for s in c}
        facings = {graph.slots[s].facing for s in c}
        if len(axes) > 1:
            raise MergeError(f"class {c} mixes axes")
        if len(facings) > 1:
            raise MergeError(f"class {c} merges opposite-facing slots")
    rows = list(range(n_pose))
    cols = list(range(n_pose))
    for k, c in enumerate(ordered):
        for s in c:
            rows.append(n_pose + s)
            cols.append(n_pose + k)
    P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_pose + n_slots, n_pose + len(ordered)))
    return P, ordered


def collapse_and_resolve(graph: FactorGraph, classes: Sequence[Sequence[int]], A, b, D=None) -> ResolvedModel:
    """Least squares with every class sharing one offset, subject to ``D xi <= 0``.

    Equalities hold exactly because each class is a single stored scalar.
    """
    P, ordered = collapse_matrix(graph, classes)
    A = sp.csr_matrix(A)
    Ar = (A @ P).tocsr()
    Dr = (sp.csr_matrix(D) @ P).tocsr() if D is not None and D.shape[0] else None
    xr, eta = solve_inequality_ls(Ar, b, Dr)
    xi = P @ xr
    n_pose = 3 * graph.n_frames
    structures = []
    for k, c in enumerate(ordered):
        slot = graph.slots[c[0]]
        structures.append(LayoutStructure(slot.axis, slot.facing, float(xr[n_pose + k]), list(c)))
    dx = D @ xi if D is not None and D.shape[0] else np.zeros(0)
    return ResolvedModel(
        xi=xi,
        structures=structures,
        residual=float(np.linalg.norm(A @ xi - b)),
        max_ineq_violation=float(max(0.0, dx.max())) if dx.size else 0.0,
        multipliers=eta,
    )


def model_extents(xi, graph: FactorGraph, model: ResolvedModel) -> list[LayoutStructure]:
    """Attach to each structure the union of its member segments' extents, placed with the solved poses."""
    pos = np.asarray(xi)[: 3 * graph.n_frames].reshape(graph.n_frames, 3)
    seg_by_id = {s.segment_id: s for s in graph.segments}
    for st in model.structures:
        iu, iv = st.axis.inplane
        ext = None
        for sid in st.slots:
            for seg_id in graph.slots[sid].members:
                seg = seg_by_id[seg_id]
                p = pos[seg.frame_index]
                r = seg.extent.shifted(p[iu], p[iv])
                ext = r if ext is None else ext.union(r)
        st.extent = ext
    return model.structures
