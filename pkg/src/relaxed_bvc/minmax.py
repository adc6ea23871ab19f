"""Exact convex programs for  min_x max_i dist_p(x, H(P_i)).

The value is the smallest relaxation delta for which the intersection of the
(delta, p)-expanded hulls of the sub-multisets P_i is non-empty.  For p in
{1, inf} the program is an LP solved by the in-house simplex; for other p it
is a second-order / power-cone program handed to cvxpy (Clarabel), with the
problem object cached per shape so repeated solves skip canonicalization.
"""
from __future__ import annotations

import functools
from typing import Sequence, Tuple

import cvxpy as cp
import numpy as np

from .errors import SolverError
from .geometry import INF, add_hull_block, parse_norm
from .lp import LinearProgram, OPTIMAL


def _normalize(S):
    center = S.mean(axis=0)
    scale = float(np.abs(S - center).max())
    if scale == 0.0:
        scale = 1.0
    return (S - center) / scale, center, scale


def _minmax_lp(S, subsets, p):
    n, d = S.shape
    lp = LinearProgram()
    x = lp.variables(d, lo=None)
    t = lp.variables(1)[0]
    for idx in subsets:
        add_hull_block(lp, x, S[list(idx)], p=p, delta_var=t)
    res = lp.solve(objective=([t], [1.0]))
    if res.status != OPTIMAL:
        raise SolverError(f"min-max LP ended with status {res.status}")
    return res.x[x]


@functools.lru_cache(maxsize=64)
def _conic_problem(n: int, d: int, subsets: Tuple[Tuple[int, ...], ...], p: float):
    S = cp.Parameter((n, d))
    x = cp.Variable(d)
    t = cp.Variable()
    cons = []
    for idx in subsets:
        lam = cp.Variable(len(idx), nonneg=True)
        cons.append(cp.sum(lam) == 1)
        cons.append(cp.norm(x - S[list(idx)].T @ lam, p) <= t)
    prob = cp.Problem(cp.Minimize(t), cons)
    return prob, S, x


def _minmax_conic(S, subsets, p):
    n, d = S.shape
    prob, S_par, x = _conic_problem(n, d, tuple(tuple(i) for i in subsets), p)
    S_par.value = S
    for solver in ("CLARABEL", "SCS"):
        try:
            prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and x.value is not None:
            return np.array(x.value, dtype=float)
    raise SolverError(f"conic min-max solve failed with status {prob.status}")


def minmax_point(S: np.ndarray, subsets: Sequence[Sequence[int]], p=2) -> np.ndarray:
    """Return a minimizer of max_i dist_p(x, H(S[subsets[i]]))."""
    p = parse_norm(p)
    Z, center, scale = _normalize(np.asarray(S, dtype=float))
    if p in (1.0, INF):
        z = _minmax_lp(Z, subsets, p)
    else:
        z = _minmax_conic(Z, subsets, p)
    return center + scale * z
