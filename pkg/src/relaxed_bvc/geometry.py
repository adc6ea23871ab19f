"""Norms, convex-hull membership and distance, affine rank.

Points are 1-D float64 arrays; multisets are 2-D arrays with one point per row
(row order is the insertion order and is preserved everywhere).  Norms are
given by their exponent ``p``: ``1``, ``2``, ``math.inf`` or any real ``p > 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import SolverError, UsageError
from .lp import LinearProgram, OPTIMAL

Norm = Union[int, float, str]

INF = math.inf
WOLFE_TOL = 1e-9
FW_REL_TOL = 1e-6
FW_MAX_ITER = 20_000

_NORM_NAMES = {"ONE": 1.0, "1": 1.0, "TWO": 2.0, "2": 2.0, "INF": INF, "INFINITY": INF, "MAX": INF}


def parse_norm(p: Norm) -> float:
    """Normalize a norm spec (``1``, ``2``, ``'inf'``, ``'TWO'``, ``3.5`` ...) to a float."""
    if isinstance(p, str):
        key = p.strip().upper()
        if key in _NORM_NAMES:
            return _NORM_NAMES[key]
        try:
            p = float(p)
        except ValueError:
            raise UsageError(f"unrecognized norm {p!r}") from None
    p = float(p)
    if math.isnan(p) or p < 1:
        raise UsageError(f"norm exponent must satisfy p >= 1, got {p}")
    return p


def norm_name(p: float) -> str:
    p = parse_norm(p)
    return "inf" if p == INF else f"{p:g}"


def as_point(u, d: Optional[int] = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.ndim != 1 or u.size == 0:
        raise UsageError(f"a point must be a non-empty vector, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise UsageError("point has non-finite coordinates")
    if d is not None and u.size != d:
        raise UsageError(f"dimension mismatch: expected {d}, got {u.size}")
    return u


def as_multiset(S, d: Optional[int] = None) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, 1) if d == 1 else S.reshape(1, -1)
    if S.ndim != 2 or S.shape[0] == 0 or S.shape[1] == 0:
        raise UsageError(f"a multiset must be a non-empty (n, d) array, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise UsageError("multiset has non-finite coordinates")
    if d is not None and S.shape[1] != d:
        raise UsageError(f"dimension mismatch: expected {d}, got {S.shape[1]}")
    return S


def vector_norm(x, p: Norm = 2) -> float:
    p = parse_norm(p)
    x = np.asarray(x, dtype=float)
    if p == INF:
        return float(np.abs(x).max()) if x.size else 0.0
    if p == 1.0:
        return float(np.abs(x).sum())
    if p == 2.0:
        return float(np.sqrt(x @ x))
    a = np.abs(x)
    m = a.max() if a.size else 0.0
    if m == 0.0:
        return 0.0
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def lp_distance(u, v, p: Norm = 2) -> float:
    u = as_point(u)
    v = as_point(v, u.size)
    return vector_norm(u - v, p)


def pairwise_distances(S, p: Norm = 2) -> np.ndarray:
    """Distances between all pairs i < j (the edge set E of the multiset)."""
    S = as_multiset(S)
    n = S.shape[0]
    i, j = np.triu_indices(n, 1)
    diff = S[i] - S[j]
    p = parse_norm(p)
    if p == INF:
        return np.abs(diff).max(axis=1)
    if p == 2.0:
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return np.array([vector_norm(x, p) for x in diff])


@dataclass(frozen=True)
class LpDistanceResult:
    distance: float
    witness: np.ndarray
    weights: np.ndarray


# --- LP building blocks ---------------------------------------------------

def add_hull_block(lp: LinearProgram, u_vars, P: np.ndarray, delta=0.0, p: Norm = INF, delta_var=None):
    """Constrain the LP variables ``u_vars`` to lie within ``delta`` of H(P).

    ``P`` has one point per row with ``len(u_vars)`` columns.  The relaxation
    is measured in the L1 or L-infinity norm (the LP-expressible ones); pass
    ``delta_var`` to make the radius itself an LP variable.  Returns the
    indices of the convex-weight variables.
    """
    P = np.asarray(P, dtype=float)
    m, k = P.shape
    lam = lp.variables(m)
    lp.add_eq(lam, np.ones(m), 1.0)
    p = parse_norm(p)
    exact = delta_var is None and delta == 0.0
    if not exact and p not in (1.0, INF):
        raise UsageError("LP hull blocks support only the L1 and L-infinity norms")
    slack = lp.variables(k) if (not exact and p == 1.0) else None
    for c in range(k):
        idx = np.concatenate([[u_vars[c]], lam])
        coef = np.concatenate([[1.0], -P[:, c]])
        if exact:
            lp.add_eq(idx, coef, 0.0)
            continue
        if p == INF:
            extra_idx = [delta_var] if delta_var is not None else []
            extra_coef = [-1.0] if delta_var is not None else []
            rhs = 0.0 if delta_var is not None else float(delta)
        else:
            extra_idx, extra_coef, rhs = [slack[c]], [-1.0], 0.0
        lp.add_le(np.concatenate([idx, extra_idx]), np.concatenate([coef, extra_coef]), rhs)
        lp.add_le(np.concatenate([idx, extra_idx]), np.concatenate([-coef, extra_coef]), rhs)
    if slack is not None:
        if delta_var is not None:
            lp.add_le(np.concatenate([slack, [delta_var]]), np.concatenate([np.ones(k), [-1.0]]), 0.0)
        else:
            lp.add_le(slack, np.ones(k), float(delta))
    return lam


# --- membership -----------------------------------------------------------

def hull_membership(u, S, tol: float = 1e-7) -> Tuple[bool, Optional[np.ndarray]]:
    """Is ``u`` within L-infinity distance ``tol`` of H(S)?  Returns (verdict, weights)."""
    S = as_multiset(S)
    u = as_point(u, S.shape[1])
    n, d = S.shape
    if n == 1:
        ok = bool(np.abs(u - S[0]).max() <= tol)
        return ok, (np.ones(1) if ok else None)
    if d == 1:
        lo, hi = int(np.argmin(S[:, 0])), int(np.argmax(S[:, 0]))
        a, b, x = S[lo, 0], S[hi, 0], u[0]
        if x < a - tol or x > b + tol:
            return False, None
        w = np.zeros(n)
        if b - a <= tol:
            w[lo] = 1.0
        else:
            t = min(max((x - a) / (b - a), 0.0), 1.0)
            w[lo] += 1.0 - t
            w[hi] += t
        return True, w
    lp = LinearProgram()
    uv = lp.variables(d, lo=None)
    for c in range(d):
        lp.add_eq([uv[c]], [1.0], u[c])
    lam = add_hull_block(lp, uv, S, delta=tol, p=INF)
    res = lp.solve()
    if res.status != OPTIMAL:
        return False, None
    # re-solve with exact equality so the weights reproduce u, not just a point within tol
    exact = LinearProgram()
    lam0 = exact.variables(n)
    exact.add_eq(lam0, np.ones(n), 1.0)
    for c in range(d):
        exact.add_eq(lam0, S[:, c], u[c])
    res0 = exact.solve()
    if res0.status == OPTIMAL and np.abs(res0.x @ S - u).max() <= tol:
        res, lam = res0, lam0
    w = np.clip(res.x[lam], 0.0, None)
    return True, w / w.sum()


# --- distance -------------------------------------------------------------

def _min_norm_point(P: np.ndarray, tol: float = WOLFE_TOL):
    """Wolfe's algorithm: minimum-norm point of conv(rows of P); returns weights."""
    m = P.shape[0]
    sq = np.einsum("ij,ij->i", P, P)
    scale = max(float(sq.max()), 1e-300)
    j0 = int(np.argmin(sq))
    active = [j0]
    lam = np.ones(1)
    x = P[j0].copy()
    for _ in range(50 * m + 1000):
        dots = P @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        for _minor in range(len(active) + 5):
            A = P[active]
            k = len(active)
            K = np.ones((k + 1, k + 1))
            K[:k, :k] = A @ A.T
            K[k, k] = 0.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            neg = alpha <= 1e-14
            denom = lam[neg] - alpha[neg]
            ratios = np.where(denom > 0, lam[neg] / np.where(denom > 0, denom, 1.0), np.inf)
            theta = min(float(ratios.min()), 1.0)
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-14
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ P[active]
    else:
        raise SolverError("min-norm-point iteration did not terminate", best_bound=float(np.sqrt(x @ x)))
    w = np.zeros(m)
    w[active] = lam
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def _lp_distance_to_hull(u, S, p):
    n, d = S.shape
    lp = LinearProgram()
    uv = lp.variables(d, lo=None)
    for c in range(d):
        lp.add_eq([uv[c]], [1.0], u[c])
    t = lp.variables(1)[0]
    lam = add_hull_block(lp, uv, S, p=p, delta_var=t)
    res = lp.solve(objective=([t], [1.0]))
    if res.status != OPTIMAL:
        raise SolverError(f"distance LP ended with status {res.status}")
    w = np.clip(res.x[lam], 0.0, None)
    return w / w.sum()


def _frank_wolfe(u, S, p, rel_tol=FW_REL_TOL, max_iter=FW_MAX_ITER):
    """Away-step Frank-Wolfe on phi(w) = ||S^T w - u||_p^p over the weight simplex."""
    n = S.shape[0]
    scale = float(np.abs(S - u).max()) or 1.0
    X = (S - u) / scale  # residual r = X^T w, work in unit scale
    w = np.zeros(n)
    w[int(np.argmin(np.abs(X).max(axis=1)))] = 1.0
    r = w @ X
    best = np.inf

    def grad_r(r):
        return p * np.sign(r) * np.abs(r) ** (p - 1)

    for it in range(max_iter):
        phi = float(np.sum(np.abs(r) ** p))
        g = X @ grad_r(r)
        s = int(np.argmin(g))
        gap = float(g @ w - g[s])
        dist = phi ** (1.0 / p)
        lower = max(phi - gap, 0.0) ** (1.0 / p)
        best = min(best, dist)
        if dist - lower <= rel_tol * dist + 1e-12:
            return w
        act = np.flatnonzero(w > 0)
        a = int(act[np.argmax(g[act])])
        away_gap = float(g[a] - g @ w)
        if gap >= away_gap:
            direction = -w.copy()
            direction[s] += 1.0
            gmax = 1.0
        else:
            direction = w.copy()
            direction[a] -= 1.0
            gmax = w[a] / (1.0 - w[a]) if w[a] < 1.0 else 1e12
        q = direction @ X

        def dphi(t):
            return float(grad_r(r + t * q) @ q)

        if dphi(gmax) <= 0:
            step = gmax
        else:
            step = brentq(dphi, 0.0, gmax, xtol=1e-15, rtol=1e-12)
        w = w + step * direction
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        r = w @ X
    raise SolverError(f"Frank-Wolfe did not reach tolerance in {max_iter} iterations", best_bound=best * scale)


def _conic_distance(u, S, p):
    """Fallback for ill-conditioned hulls: min ||S^T w - u||_p over the weight simplex as a conic program."""
    import cvxpy as cp

    scale = float(np.abs(S - u).max()) or 1.0
    X = (S - u) / scale
    w = cp.Variable(S.shape[0], nonneg=True)
    prob = cp.Problem(cp.Minimize(cp.pnorm(X.T @ w, p)), [cp.sum(w) == 1])
    for solver in ("CLARABEL", "SCS"):
        try:
            prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and w.value is not None:
            wv = np.clip(np.asarray(w.value, dtype=float), 0.0, None)
            return wv / wv.sum()
    raise SolverError(f"conic distance solve failed with status {prob.status}")


def hull_distance(u, S, p: Norm = 2) -> LpDistanceResult:
    """L_p distance from ``u`` to the convex hull of ``S`` with a certificate.

    p=2 uses Wolfe's minimum-norm-point algorithm, p in {1, inf} an exact LP,
    other p an away-step Frank-Wolfe iteration (a conic program if it stalls).
    """
    S = as_multiset(S)
    u = as_point(u, S.shape[1])
    p = parse_norm(p)
    n = S.shape[0]
    if n == 1:
        w = np.ones(1)
    elif p == 2.0:
        w = _min_norm_point(S - u)
    elif p in (1.0, INF):
        w = _lp_distance_to_hull(u, S, p)
    else:
        inside, wi = hull_membership(u, S, tol=1e-12)
        if inside:
            w = wi
        else:
            try:
                w = _frank_wolfe(u, S, p)
            except SolverError:
                w = _conic_distance(u, S, p)
    witness = w @ S
    return LpDistanceResult(vector_norm(u - witness, p), witness, w)


def affine_rank(S) -> int:
    """Rank of {s_i - s_n} via Gaussian elimination with partial pivoting."""
    S = as_multiset(S)
    A = (S[:-1] - S[-1]).copy()
    if A.shape[0] == 0:
        return 0
    thresh = 1e-10 * float(np.sqrt(np.einsum("ij,ij->i", A, A)).max())
    if thresh == 0.0:
        return 0
    rows, cols = A.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        piv = rank + int(np.argmax(np.abs(A[rank:, c])))
        if abs(A[piv, c]) <= thresh:
            continue
        A[[rank, piv]] = A[[piv, rank]]
        A[rank + 1:] -= np.outer(A[rank + 1:, c] / A[rank, c], A[rank])
        rank += 1
    return rank
