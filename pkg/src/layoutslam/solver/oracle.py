"""Exhaustive L0 model selection, for testing the relaxation on small instances."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .lsq import solve_inequality_ls
from .selection import FEAS_TOL, _Classes, _csr


@dataclass
class OracleResult:
    subset: tuple[int, ...] | None
    xi: np.ndarray | None
    residual: float
    feasible: bool
    evaluated: int


def brute_force_l0(E, A, b, delta: float, D=None, k_max: int = 16, feas_tol: float = FEAS_TOL) -> OracleResult:
    """Largest set of enforced equivalences whose collapsed model stays within the residual ball.

    Subsets are visited by decreasing size and, within a size, in
    lexicographic order, so the first feasible one is the answer. Subsets
    with the same transitive closure share one solve.
    """
    A = sp.csr_matrix(A)
    n = A.shape[1]
    E, D = _csr(E, n), _csr(D, n)
    k = E.shape[0]
    if k > k_max:
        raise ValueError(f"{k} hypotheses exceed the exhaustive-search limit of {k_max}")
    pairs = [tuple(E.getrow(r).indices) for r in range(k)]
    cache: dict[tuple, tuple[bool, np.ndarray, float]] = {}

    def evaluate(subset):
        cls = _Classes(n, [pairs[r] for r in subset])
        key = tuple(cls.col)
        if key not in cache:
            P = cls.P
            Dr = (D @ P).tocsr() if D.shape[0] else None
            xr, _ = solve_inequality_ls((A @ P).tocsr(), b, Dr)
            xi = P @ xr
            res = float(np.linalg.norm(A @ xi - b))
            viol = float((D @ xi).max()) if D.shape[0] else 0.0
            cache[key] = (res <= delta and viol <= feas_tol, xi, res)
        return cache[key]

    evaluated = 0
    for size in range(k, -1, -1):
        for subset in combinations(range(k), size):
            evaluated += 1
            ok, xi, res = evaluate(subset)
            if ok:
                return OracleResult(subset, xi, res, True, evaluated)
    _, xi, res = evaluate(())
    return OracleResult(None, None, res, False, evaluated)
