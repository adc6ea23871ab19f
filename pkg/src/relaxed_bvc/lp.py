"""Dense two-phase simplex solver (Dantzig pricing, Bland's rule on degenerate stalls).

Small and self-contained on purpose: every hull-membership, region-emptiness and
L1/L-infinity distance question in the package reduces to one of these LPs, and
the problems are tiny (tens to a few hundred variables), so a dense tableau is
the simplest thing that works.

Convention follows ``scipy.optimize.linprog``::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi        (per-variable bounds, default (0, None))
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SolverError, UsageError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

INFEASIBLE_TOL = 1e-6
PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    status: str
    x: Optional[np.ndarray] = None
    fun: Optional[float] = None
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE


def _as_matrix(A, b, ncols, name):
    if A is None:
        return np.zeros((0, ncols)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != ncols or A.shape[0] != b.shape[0]:
        raise UsageError(f"{name}: shape mismatch {A.shape} vs rhs {b.shape}, {ncols} variables")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise UsageError(f"{name}: non-finite coefficient")
    return A, b


def _normalize_bounds(bounds, n):
    if bounds is None:
        return [(0.0, None)] * n
    if isinstance(bounds, tuple) and len(bounds) == 2 and not isinstance(bounds[0], (tuple, list)):
        bounds = [bounds] * n
    if len(bounds) != n:
        raise UsageError(f"bounds: expected {n} pairs, got {len(bounds)}")
    out = []
    for lo, hi in bounds:
        lo = None if lo is None or lo == -np.inf else float(lo)
        hi = None if hi is None or hi == np.inf else float(hi)
        out.append((lo, hi))
    return out


class _Tableau:
    """Canonical-form tableau; the last row holds reduced costs, the last column the rhs.

    Keeps the original rows so the tableau can be rebuilt from the current
    basis (``B^-1 [A | b]``); this is done every ``REFRESH_EVERY`` pivots to
    stop round-off from accumulating on long degenerate runs.
    """

    REFRESH_EVERY = 50
    STALL = 50

    def __init__(self, T, basis, pivot_tol, max_iter):
        self.T = T
        self.basis = basis
        self.pivot_tol = pivot_tol
        self.max_iter = max_iter
        self.iterations = 0
        m = T.shape[0] - 1
        self.A0 = T[:m, :-1].copy()
        self.b0 = T[:m, -1].copy()
        self.cost = None

    def set_problem(self, A0, b0, cost):
        self.A0, self.b0, self.cost = A0, b0, cost

    def pivot(self, r, j):
        T = self.T
        prow = T[r] / T[r, j]
        T -= np.outer(T[:, j], prow)
        T[r] = prow
        self.basis[r] = j

    def refresh(self) -> None:
        if self.cost is None:
            return
        B = self.A0[:, self.basis]
        try:
            X = np.linalg.solve(B, np.hstack([self.A0, self.b0[:, None]]))
        except np.linalg.LinAlgError:
            return
        if not np.all(np.isfinite(X)):
            return
        cb = self.cost[self.basis]
        T = self.T
        ncols = self.A0.shape[1]
        T[:-1, :ncols] = X[:, :ncols]
        T[:-1, -1] = X[:, -1]
        T[-1, :ncols] = self.cost - cb @ X[:, :ncols]
        T[-1, -1] = -(cb @ X[:, -1])

    def run(self, ncols) -> str:
        """Minimize the objective row over the first ``ncols`` columns.

        Dantzig pricing with the largest pivot among ratio-test ties keeps the
        basis well conditioned; after ``STALL`` consecutive degenerate pivots
        the rule switches to Bland's (smallest index in and out), which cannot
        cycle, until the objective moves again.
        """
        T = self.T
        m = T.shape[0] - 1
        tol = self.pivot_tol
        since = 0
        stall = 0
        while True:
            if since >= self.REFRESH_EVERY:
                self.refresh()
                since = 0
            reduced = T[-1, :ncols]
            bland = stall >= self.STALL
            if bland:
                entering = np.flatnonzero(reduced < -tol)
                if entering.size == 0:
                    return OPTIMAL
                j = int(entering[0])
            else:
                j = int(np.argmin(reduced))
                if reduced[j] >= -tol:
                    return OPTIMAL
            col = T[:m, j]
            pos = np.flatnonzero(col > tol)
            if pos.size == 0:
                return UNBOUNDED
            ratios = np.maximum(T[pos, -1], 0.0) / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * (1.0 + best)]
            if bland:
                basis = self.basis
                r = int(min(ties, key=lambda i: basis[i]))
            else:
                r = int(ties[np.argmax(col[ties])])
            stall = stall + 1 if best <= 1e-12 else 0
            self.pivot(r, j)
            self.iterations += 1
            since += 1
            if self.iterations > self.max_iter:
                raise SolverError(
                    f"simplex exceeded iteration cap {self.max_iter}",
                    best_bound=-float(T[-1, -1]),
                )


def solve_lp(
    c: Sequence[float],
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    bounds=None,
    *,
    maximize: bool = False,
    infeasible_tol: float = INFEASIBLE_TOL,
    pivot_tol: float = PIVOT_TOL,
    max_iter: Optional[int] = None,
) -> LPResult:
    """Solve a dense LP by the two-phase simplex method.

    Returns an :class:`LPResult` whose status is ``OPTIMAL``, ``INFEASIBLE``
    (phase-1 optimum above ``infeasible_tol``) or ``UNBOUNDED``.  Raises
    :class:`SolverError` when the pivot count exceeds the cap
    ``10 * (rows + cols)**2``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    if not np.all(np.isfinite(c)):
        raise UsageError("objective has non-finite coefficients")
    A_ub, b_ub = _as_matrix(A_ub, b_ub, n, "A_ub")
    A_eq, b_eq = _as_matrix(A_eq, b_eq, n, "A_eq")
    bnds = _normalize_bounds(bounds, n)
    if maximize:
        c = -c

    # Substitute x = offset + M @ z with z >= 0.
    offset = np.zeros(n)
    cols = []
    extra_rows = []  # (column index in z, upper bound)
    for j, (lo, hi) in enumerate(bnds):
        if lo is not None:
            if hi is not None and hi < lo - pivot_tol:
                return LPResult(INFEASIBLE)
            offset[j] = lo
            cols.append((j, 1.0))
            if hi is not None:
                extra_rows.append((len(cols) - 1, hi - lo))
        elif hi is not None:
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    k = len(cols)
    M = np.zeros((n, k))
    for z, (j, s) in enumerate(cols):
        M[j, z] = s

    Aub = A_ub @ M
    bub = b_ub - A_ub @ offset
    if extra_rows:
        B = np.zeros((len(extra_rows), k))
        for r, (z, ub) in enumerate(extra_rows):
            B[r, z] = 1.0
        Aub = np.vstack([Aub, B])
        bub = np.concatenate([bub, [ub for _, ub in extra_rows]])
    Aeq = A_eq @ M
    beq = b_eq - A_eq @ offset
    cz = c @ M
    const = float(c @ offset)

    # Scale rows, drop empty ones.
    def _scaled(A, b, is_eq):
        keepA, keepb = [], []
        for a, rhs in zip(A, b):
            s = np.abs(a).max() if a.size else 0.0
            if s <= pivot_tol:
                if (is_eq and abs(rhs) > infeasible_tol) or (not is_eq and rhs < -infeasible_tol):
                    return None
                continue
            keepA.append(a / s)
            keepb.append(rhs / s)
        if not keepA:
            return np.zeros((0, k)), np.zeros(0)
        return np.array(keepA), np.array(keepb)

    su = _scaled(Aub, bub, False)
    se = _scaled(Aeq, beq, True)
    if su is None or se is None:
        return LPResult(INFEASIBLE)
    Aub, bub = su
    Aeq, beq = se
    mu, me = Aub.shape[0], Aeq.shape[0]
    m = mu + me

    # Columns: z (k) | slacks (mu) | artificials.
    art_rows = [i for i in range(mu) if bub[i] < 0] + [mu + i for i in range(me)]
    na = len(art_rows)
    N = k + mu + na
    T = np.zeros((m + 1, N + 1))
    basis = [0] * m
    for i in range(mu):
        sign = -1.0 if bub[i] < 0 else 1.0
        T[i, :k] = sign * Aub[i]
        T[i, k + i] = sign
        T[i, -1] = sign * bub[i]
        basis[i] = k + i
    for i in range(me):
        sign = -1.0 if beq[i] < 0 else 1.0
        T[mu + i, :k] = sign * Aeq[i]
        T[mu + i, -1] = sign * beq[i]
    for a, row in enumerate(art_rows):
        T[row, k + mu + a] = 1.0
        basis[row] = k + mu + a

    if max_iter is None:
        max_iter = 10 * (m + N) ** 2
    tab = _Tableau(T, basis, pivot_tol, max_iter)
    A0, b0 = tab.A0, tab.b0

    if na:
        cost1 = np.zeros(N)
        cost1[k + mu:] = 1.0
        tab.set_problem(A0, b0, cost1)
        T[-1, :] = 0.0
        for row in art_rows:
            T[-1, :] -= T[row, :]
        T[-1, k + mu:N] = 0.0
        tab.run(N)
        if -T[-1, -1] > infeasible_tol:
            return LPResult(INFEASIBLE, iterations=tab.iterations)
        # Drive remaining artificials out of the basis; drop redundant rows.
        drop = []
        for r in range(m):
            if tab.basis[r] >= k + mu:
                cand = np.flatnonzero(np.abs(T[r, :k + mu]) > pivot_tol)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                else:
                    drop.append(r)
        if drop:
            keep = [r for r in range(m) if r not in set(drop)]
            tab.basis = [tab.basis[r] for r in keep]
            T = np.vstack([T[keep], T[-1:]])
            A0, b0 = A0[keep], b0[keep]
            m = len(keep)
        T = np.hstack([T[:, :k + mu], T[:, -1:]])
        A0 = A0[:, :k + mu]
        tab.T = T

    N = k + mu
    cfull = np.concatenate([cz, np.zeros(mu)])
    tab.set_problem(A0, b0, cfull)
    T[-1, :N] = cfull
    T[-1, -1] = 0.0
    for r in range(m):
        cb = cfull[tab.basis[r]]
        if cb != 0.0:
            T[-1, :] -= cb * T[r, :]
    status = tab.run(N)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, iterations=tab.iterations)

    z = np.zeros(N)
    for r in range(m):
        z[tab.basis[r]] = T[r, -1]
    x = offset + M @ z[:k]
    fun = float(c @ x)
    if maximize:
        fun = -fun
    return LPResult(OPTIMAL, x=x, fun=fun, iterations=tab.iterations)


class LinearProgram:
    """Incremental builder for sparse-looking LPs that are solved densely.

    Variables are allocated in blocks; constraints are given as
    (indices, coefficients, rhs).  Keeps the LP formulations in the hull code
    readable.
    """

    def __init__(self):
        self._bounds: list = []
        self._eq: list = []
        self._ub: list = []

    @property
    def num_vars(self) -> int:
        return len(self._bounds)

    def variables(self, count: int, lo: Optional[float] = 0.0, hi: Optional[float] = None) -> np.ndarray:
        start = len(self._bounds)
        self._bounds.extend([(lo, hi)] * count)
        return np.arange(start, start + count)

    def add_eq(self, idx, coef, rhs: float) -> None:
        self._eq.append((np.asarray(idx, dtype=int), np.asarray(coef, dtype=float), float(rhs)))

    def add_le(self, idx, coef, rhs: float) -> None:
        self._ub.append((np.asarray(idx, dtype=int), np.asarray(coef, dtype=float), float(rhs)))

    def _dense(self, rows):
        if not rows:
            return None, None
        A = np.zeros((len(rows), self.num_vars))
        b = np.zeros(len(rows))
        for r, (idx, coef, rhs) in enumerate(rows):
            np.add.at(A[r], idx, coef)
            b[r] = rhs
        return A, b

    def solve(self, objective=None, maximize: bool = False, **kw) -> LPResult:
        c = np.zeros(self.num_vars)
        if objective is not None:
            idx, coef = objective
            np.add.at(c, np.asarray(idx, dtype=int), np.asarray(coef, dtype=float))
        A_ub, b_ub = self._dense(self._ub)
        A_eq, b_eq = self._dense(self._eq)
        return solve_lp(c, A_ub, b_ub, A_eq, b_eq, self._bounds, maximize=maximize, **kw)
