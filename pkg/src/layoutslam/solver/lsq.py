"""Sparse least squares and inequality-constrained least squares."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import nnls


class GaugeError(np.linalg.LinAlgError):
    """Raised when the measurement matrix does not determine every parameter."""

    def __init__(self, message: str, null_vector: np.ndarray | None = None):
        super().__init__(message)
        self.null_vector = null_vector


class InfeasibleError(ValueError):
    """Raised when no point satisfies the constraints; ``certificate`` holds the evidence."""

    def __init__(self, message: str, certificate: dict | None = None):
        super().__init__(message)
        self.certificate = certificate or {}


def _describe_null(A, names) -> tuple[str, np.ndarray]:
    G = np.asarray((A.T @ A).todense()) if sp.issparse(A) else A.T @ A
    w, V = np.linalg.eigh(G)
    v = V[:, 0]
    top = np.argsort(-np.abs(v))[:6]
    label = (lambda j: names[j]) if names is not None else (lambda j: f"col{j}")
    terms = ", ".join(f"{label(j)}:{v[j]:+.3f}" for j in top if abs(v[j]) > 1e-3)
    return terms, v


def solve_least_squares(A, b, names=None, refine: int = 2) -> np.ndarray:
    """Minimize ``||A x - b||_2`` for full-column-rank sparse ``A``.

    Normal equations factored by SuperLU, followed by ``refine`` steps of
    iterative refinement on the normal-equation residual. A rank-deficient
    ``A`` raises :class:`GaugeError` naming the dominant entries of the null
    direction.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    G = (A.T @ A).tocsc()
    rhs = A.T @ b
    try:
        lu = spla.splu(G)
        diag = np.abs(lu.U.diagonal())
        if diag.size and diag.min() <= 1e-11 * diag.max():
            raise RuntimeError("singular")
    except RuntimeError:
        terms, v = _describe_null(A, names)
        raise GaugeError(f"rank-deficient system; null direction {terms}", v) from None
    x = lu.solve(rhs)
    for _ in range(refine):
        res = rhs - G @ x
        x = x + lu.solve(res)
    return x


def _lsi_dense(A: np.ndarray, b: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least distance programming route (Lawson & Hanson) for ``min ||Ax-b|| s.t. Dx <= 0``.

    Returns ``(x, multipliers)`` with multipliers >= 0 on the rows of ``D``
    for the problem in ``0.5 ||Ax - b||^2`` form.
    """
    Q, R = la.qr(A, mode="economic")
    f = Q.T @ b
    # x = R^{-1}(y + f); D x <= 0  <=>  G y >= h with G = -D R^{-1}, h = D R^{-1} f
    DRinv = la.solve_triangular(R, D.T, trans="T").T
    G = -DRinv
    h = DRinv @ f
    n = G.shape[1]
    M = np.vstack([G.T, h[None, :]])
    e = np.zeros(n + 1)
    e[-1] = 1.0
    u, _ = nnls(M, e, maxiter=50 * max(M.shape))
    r = M @ u - e
    if abs(r[-1]) < 1e-14:
        raise InfeasibleError("inequality constraints are infeasible")
    y = -r[:n] / r[-1]
    x = la.solve_triangular(R, y + f)
    # multipliers of 0.5||Ax-b||^2: A^T(Ax-b) + D^T eta = 0
    eta = u / (-r[-1])
    return x, eta


def solve_inequality_ls(A, b, D=None, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ``||A x - b||`` subject to ``D x <= 0``.

    The unconstrained optimum is returned directly when it already satisfies
    ``D``; otherwise the problem is solved exactly by an active-set NNLS on
    the equivalent least-distance program. Returns ``(x, eta)`` where ``eta``
    are the inequality multipliers (zeros when no row is active).
    """
    x = solve_least_squares(A, b)
    if D is None or D.shape[0] == 0:
        return x, np.zeros(0)
    Dm = D.toarray() if sp.issparse(D) else np.asarray(D, dtype=float)
    viol = Dm @ x
    if viol.max() <= tol * max(1.0, np.abs(x).max()):
        return x, np.zeros(Dm.shape[0])
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return _lsi_dense(Ad, np.asarray(b, dtype=float), Dm)
