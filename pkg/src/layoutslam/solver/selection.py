"""L1 model selection: minimize ``||E xi||_1`` s.t. ``||A xi - b||_2 <= delta`` and ``D xi <= 0``.

The solver is a primal log-barrier method on the epigraph form

    minimize 1^T s  subject to  -s <= E xi <= s,  D xi <= 0,  ||A xi - b||^2 <= delta^2

with Newton steps whose slack block is eliminated in closed form, leaving one
sparse ``n x n`` solve (plus a rank-one correction for the ball) per step.

Interior iterates never have exact zeros, so the barrier solution is used
only to guess the active set: which rows of ``E xi`` vanish, their signs
elsewhere, and which rows of ``D`` are tight. The solution is then polished
in closed form on that set and accepted only if it passes
:func:`kkt_residuals`, which recovers multipliers independently by bounded
least squares.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import lsq_linear

from .lsq import InfeasibleError, solve_inequality_ls

log = logging.getLogger(__name__)

DELTA_FLOOR = 1e-6
FEAS_TOL = 1e-6


def compute_delta(residual_lin: float, epsilon: float, floor: float = DELTA_FLOOR) -> float:
    """Radius of the residual ball: ``(1 + epsilon) * residual_lin``, never below ``floor``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if residual_lin < 0:
        raise ValueError("residual must be non-negative")
    if residual_lin < floor:
        return floor
    return (1.0 + epsilon) * residual_lin


@dataclass
class ConvexSolution:
    xi: np.ndarray
    objective: float
    residual: float
    max_ineq_violation: float
    iterations: int
    converged: bool
    delta: float = 0.0
    kkt: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "residual": self.residual,
            "delta": self.delta,
            "max_ineq_violation": self.max_ineq_violation,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt": self.kkt,
        }


def _csr(M, n: int) -> sp.csr_matrix:
    if M is None:
        return sp.csr_matrix((0, n))
    if hasattr(M, "tocsr") and not sp.issparse(M):
        M = M.tocsr()
    return sp.csr_matrix(M)


def kkt_residuals(E, A, b, delta: float, D, xi, zero_tol: float = 1e-9, active_tol: float = 1e-7) -> dict:
    """Certify optimality of ``xi`` for the L1 selection problem.

    Stationarity: ``E^T g + lam * A^T r + D^T eta = 0`` with ``g`` in the
    subdifferential of the l1 norm at ``E xi``, ``lam >= 0`` and ``eta >= 0``.
    Multipliers are the bounded least-squares fit of that equation, so the
    reported stationarity residual is the smallest achievable.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    E, A, D = _csr(E, n), _csr(A, n), _csr(D, n)
    r = A @ xi - b
    rnorm = float(np.linalg.norm(r))
    ex = E @ xi
    dx = D @ xi
    scale = max(1.0, float(np.abs(xi).max()))
    zero = np.abs(ex) <= zero_tol * scale
    g_fixed = np.where(zero, 0.0, np.sign(ex))
    base = E.T @ g_fixed
    cols, lb, ub, kinds = [], [], [], []
    Ez = E[np.flatnonzero(zero)]
    if Ez.shape[0]:
        cols.append(Ez.T.toarray())
        lb += [-1.0] * Ez.shape[0]
        ub += [1.0] * Ez.shape[0]
        kinds += ["g"] * Ez.shape[0]
    act = np.flatnonzero(dx >= -active_tol * scale)
    if act.size:
        cols.append(D[act].T.toarray())
        lb += [0.0] * act.size
        ub += [np.inf] * act.size
        kinds += ["eta"] * act.size
    ball_active = rnorm >= delta * (1 - 1e-6)
    if ball_active:
        cols.append((A.T @ r)[:, None])
        lb.append(0.0)
        ub.append(np.inf)
        kinds.append("lam")
    denom = max(1.0, float(np.abs(base).max()) if base.size else 1.0)
    lam = 0.0
    eta = np.zeros(D.shape[0])
    if cols:
        M = np.hstack(cols)
        colscale = np.maximum(np.linalg.norm(M, axis=0), 1e-300)
        sol = lsq_linear(
            M / colscale,
            -base,
            bounds=(np.array(lb) * colscale, np.array(ub) * colscale),
            method="bvls",
            tol=1e-14,
        )
        mult = sol.x / colscale
        stat = base + M @ mult
        kinds = np.array(kinds)
        if ball_active:
            lam = float(mult[kinds == "lam"][0])
        eta[act] = mult[kinds == "eta"]
    else:
        stat = base
    stationarity = float(np.abs(stat).max()) / denom if stat.size else 0.0
    primal = max(0.0, rnorm - delta) / max(1.0, delta)
    primal = max(primal, float(max(0.0, dx.max())) / scale if dx.size else 0.0)
    comp = lam * abs(delta - rnorm) / max(1.0, delta)
    if dx.size:
        comp = max(comp, float(np.abs(eta * dx).max()) / scale)
    return {
        "stationarity": stationarity,
        "primal": primal,
        "complementarity": comp,
        "lambda": lam,
        "n_zero_rows": int(zero.sum()),
        "n_active_ineq": int(np.count_nonzero(eta)),
        "ball_active": bool(ball_active),
    }


def kkt_ok(report: dict, tol: float = 1e-6) -> bool:
    return report["stationarity"] <= tol and report["primal"] <= tol and report["complementarity"] <= tol


class _Classes:
    """Column collapse for equality pairs ``x_a = x_b`` (union-find over columns)."""

    def __init__(self, n: int, pairs):
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(i) for i in range(n)})
        pos = {r: k for k, r in enumerate(roots)}
        self.col = np.array([pos[find(i)] for i in range(n)])
        self.P = sp.csr_matrix((np.ones(n), (np.arange(n), self.col)), shape=(n, len(roots)))


def polish(E, A, b, delta: float, D, zero_rows, signs, active_ineq) -> np.ndarray | None:
    """Closed-form solution on a guessed active set.

    Zero rows of ``E`` become column merges, active rows of ``D`` become
    equalities, and the remaining l1 terms become the linear objective
    ``c = E_N^T s``. Minimizing ``c^T x`` over the residual ball intersected
    with the equality subspace gives ``x = x_ls + alpha * w`` where ``x_ls``
    is the equality-constrained least-squares point and ``w`` the
    constrained Newton direction of ``c``.
    """
    n = A.shape[1]
    pairs = []
    for r in np.flatnonzero(zero_rows):
        row = E.getrow(r)
        if row.nnz != 2:
            return None
        pairs.append(tuple(row.indices))
    cls = _Classes(n, pairs)
    P = cls.P
    nonzero = np.flatnonzero(~zero_rows)
    c = (E[nonzero].T @ signs[nonzero]) if nonzero.size else np.zeros(n)
    Ar = (A @ P).toarray()
    cr = P.T @ c
    C = (D[np.flatnonzero(active_ineq)] @ P).toarray() if np.any(active_ineq) else np.zeros((0, P.shape[1]))
    k = P.shape[1]
    H = Ar.T @ Ar
    m = C.shape[0]
    K = np.zeros((k + m, k + m))
    K[:k, :k] = H
    K[:k, k:] = C.T
    K[k:, :k] = C
    rhs = np.zeros((k + m, 2))
    rhs[:k, 0] = Ar.T @ b
    rhs[:k, 1] = -cr
    try:
        if m == 0:
            sol = la.solve(H, rhs[:k], assume_a="pos")
        else:
            sol = la.lstsq(K, rhs, cond=1e-13)[0]
    except (la.LinAlgError, ValueError):
        return None
    x_ls, w = sol[:k, 0], sol[:k, 1]
    r = Ar @ x_ls - b
    Aw = Ar @ w
    qa, qb, qc = Aw @ Aw, 2 * (r @ Aw), r @ r - delta * delta
    if qc > 0:
        return None
    if qa <= 1e-30 * max(1.0, r @ r) or np.abs(cr).max(initial=0.0) == 0.0:
        return P @ x_ls
    alpha = (-qb + math.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa)
    return P @ (x_ls + alpha * w)


class _Barrier:
    """Log-barrier objective of the epigraph problem at barrier weight ``tau``."""

    def __init__(self, E, A, b, delta, D, dtol):
        self.E, self.A, self.b, self.D = E, A, b, D
        self.delta2 = delta * delta
        self.dtol = dtol
        self.Et = E.T.tocsr()
        self.AtA = (A.T @ A).tocsc()

    def slacks(self, x, s):
        ex = self.E @ x
        r = self.A @ x - self.b
        return s - ex, s + ex, self.dtol - self.D @ x, self.delta2 - r @ r, r

    def feasible(self, x, s) -> bool:
        lo, hi, sd, sb, _ = self.slacks(x, s)
        return lo.min(initial=1.0) > 0 and hi.min(initial=1.0) > 0 and sd.min(initial=1.0) > 0 and sb > 0

    def value(self, x, s, tau) -> float:
        lo, hi, sd, sb, _ = self.slacks(x, s)
        return tau * s.sum() - np.log(lo).sum() - np.log(hi).sum() - np.log(sd).sum() - math.log(sb)

    def newton(self, x, s, tau):
        lo, hi, sd, sb, r = self.slacks(x, s)
        ia, ic = 1 / lo, 1 / hi
        g_s = tau - ia - ic
        grad_q = 2 * (self.A.T @ r)
        g_x = self.Et @ (ia - ic) + self.D.T @ (1 / sd) + grad_q / sb
        h = ia**2 + ic**2
        k = ic**2 - ia**2
        w = h - k * k / h
        M = (self.Et @ sp.diags(w) @ self.E + self.D.T @ sp.diags(1 / sd**2) @ self.D + (2 / sb) * self.AtA).tocsc()
        rhs = -(g_x - self.Et @ (k / h * g_s))
        lu = spla.splu(M)
        u = grad_q / sb
        y1 = lu.solve(rhs)
        y2 = lu.solve(u)
        dx = y1 - y2 * (u @ y1) / (1 + u @ y2)
        ds = -(g_s + k * (self.E @ dx)) / h
        dec = -(g_x @ dx + g_s @ ds)
        return dx, ds, dec


def _barrier_solve(E, A, b, delta, D, x0, max_newton: int, gap_tol: float, dtol: float):
    bar = _Barrier(E, A, b, delta, D, dtol)
    x = x0.copy()
    s = np.abs(E @ x) + max(1.0, float(np.abs(E @ x).max(initial=0.0)))
    m_total = 2 * E.shape[0] + D.shape[0] + 1
    tau = max(1.0, m_total / max(s.sum(), 1.0))
    steps = 0
    while True:
        for _ in range(100):
            try:
                dx, ds, dec = bar.newton(x, s, tau)
            except RuntimeError:
                # Newton matrix numerically singular: slacks have collapsed,
                # the iterate is as good as the barrier can make it
                return x, steps, m_total / tau
            steps += 1
            if not np.isfinite(dec) or dec / 2 <= 1e-10 or steps >= max_newton:
                break
            f0 = bar.value(x, s, tau)
            t = 1.0
            while not bar.feasible(x + t * dx, s + t * ds):
                t *= 0.5
                if t < 1e-16:
                    break
            while t >= 1e-16 and bar.value(x + t * dx, s + t * ds, tau) > f0 - 0.01 * t * dec:
                t *= 0.5
            if t < 1e-16:
                break
            x, s = x + t * dx, s + t * ds
        if m_total / tau < gap_tol or steps >= max_newton:
            return x, steps, m_total / tau
        tau *= 20.0


def _support_candidates(ex: np.ndarray, dx_: np.ndarray, scale: float):
    """Active-set guesses from an interior point, coarse to fine thresholds."""
    mags = np.abs(ex)
    seen = set()
    for thr in (1e-6, 1e-5, 1e-7, 1e-4, 1e-8, 1e-3):
        zero = mags <= thr * scale
        act = dx_ >= -thr * scale
        key = (zero.tobytes(), act.tobytes())
        if key in seen:
            continue
        seen.add(key)
        yield zero, np.sign(ex), act


def solve_sparse_selection(
    E,
    A,
    b,
    delta: float,
    D=None,
    max_iter: int = 20000,
    feas_tol: float = FEAS_TOL,
    kkt_tol: float = 1e-6,
    gap_tol: float = 1e-9,
) -> ConvexSolution:
    """Minimize ``||E xi||_1`` subject to ``||A xi - b||_2 <= delta`` and ``D xi <= 0``.

    Raises :class:`InfeasibleError` if even the smallest residual achievable
    under ``D`` exceeds ``delta``; the certificate carries that point.
    ``max_iter`` caps the total number of Newton steps.
    """
    t0 = time.perf_counter()
    A = sp.csr_matrix(A)
    n = A.shape[1]
    E, D = _csr(E, n), _csr(D, n)
    b = np.asarray(b, dtype=float)
    x_min, _ = solve_inequality_ls(A, b, D if D.shape[0] else None)
    rmin = float(np.linalg.norm(A @ x_min - b))
    if rmin > delta * (1 + 1e-12):
        raise InfeasibleError(
            f"minimum residual {rmin:.6g} under D exceeds delta {delta:.6g}",
            {"xi": x_min, "residual": rmin, "delta": delta},
        )

    def finish(x, iters, converged, report=None):
        report = report if report is not None else kkt_residuals(E, A, b, delta, D, x)
        dx = D @ x
        return ConvexSolution(
            xi=x,
            objective=float(np.abs(E @ x).sum()),
            residual=float(np.linalg.norm(A @ x - b)),
            max_ineq_violation=float(max(0.0, dx.max())) if dx.size else 0.0,
            iterations=iters,
            converged=converged,
            delta=delta,
            kkt=report,
            seconds=time.perf_counter() - t0,
        )

    def certified(x, iters):
        rep = kkt_residuals(E, A, b, delta, D, x)
        return (finish(x, iters, True, rep) if kkt_ok(rep, kkt_tol) else None), rep

    if E.shape[0] == 0 or not np.any(E @ x_min):
        return finish(x_min, 0, True)
    if delta * delta - rmin * rmin <= 1e-12 * delta * delta:
        # the ball has no interior; its only admissible point is the minimizer
        sol, rep = certified(x_min, 0)
        return sol or finish(x_min, 0, False, rep)

    scale = max(1.0, float(np.abs(x_min).max()))
    dtol = 1e-9 * scale
    x, steps, gap = _barrier_solve(E, A, b, delta, D, x_min, max_iter, gap_tol, dtol)
    best = None
    for zero, signs, act in _support_candidates(E @ x, D @ x, scale):
        cand = polish(E, A, b, delta, D, zero, signs, act)
        if cand is None:
            continue
        sol, rep = certified(cand, steps)
        if sol is not None:
            return sol
        if best is None or rep["stationarity"] < best[1]["stationarity"]:
            best = (cand, rep)
    log.warning("selection solver: no polished point passed the KKT check (gap %.2e)", gap)
    rep = kkt_residuals(E, A, b, delta, D, x)
    return finish(x, steps, False, rep)
