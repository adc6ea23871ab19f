"""delta*(S): the smallest relaxation that makes the fault-tolerant safe region non-empty.

    delta*(S) = min_x max_i dist_p(x, H(P_i)),

with P_i ranging over the size-(n - f) sub-multisets of S.  Four solution
paths:

* ``CLOSED_FORM``   -- f=1, n=d+1, affinely independent, p=2: the simplex
  inradius, attained at the incenter;
* ``RANK_DEFICIENT`` -- n >= (r+1) f + 1 where r is the affine rank of S: the
  plain safe region is already non-empty (Tverberg), so delta* = 0 and the
  point comes from the region LP;
* ``CONVEX_PROGRAM`` -- the general case, solved exactly as an LP (p in {1, inf})
  or a conic program (other p);
* ``SUBGRADIENT``   -- staged subgradient descent on the max-of-distances,
  available on request; it yields an upper bound only.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import UsageError
from .geometry import affine_rank, as_multiset, hull_distance, parse_norm
from .hulls import PLAIN, incenter, inradius, psi_find_point, sub_multisets
from .minmax import minmax_point

CLOSED_FORM = "CLOSED_FORM"
RANK_DEFICIENT = "RANK_DEFICIENT"
CONVEX_PROGRAM = "CONVEX_PROGRAM"
SUBGRADIENT = "SUBGRADIENT"
METHODS = ("auto", CLOSED_FORM, RANK_DEFICIENT, CONVEX_PROGRAM, SUBGRADIENT)


@dataclass(frozen=True)
class DeltaStarResult:
    delta_star: float
    argmin_point: np.ndarray
    per_subset_distances: List[float] = field(default_factory=list)
    method: str = CONVEX_PROGRAM

    def to_dict(self):
        return {
            "delta_star": self.delta_star,
            "argmin_point": self.argmin_point.tolist(),
            "per_subset_distances": list(self.per_subset_distances),
            "method": self.method,
        }


def _distances(x, S, subsets, p):
    return [hull_distance(x, S[list(T)], p).distance for T in subsets]


class _Distances:
    """Distances from x to every H(P_i) with their nearest points.

    Fast path (L2): for an affinely independent P_i, if the orthogonal projection
    of x onto its affine hull has non-negative barycentric weights, that
    projection is the nearest point of H(P_i).  All subsets are projected in one
    batched product; the rest fall back to :func:`hull_distance`.
    """

    def __init__(self, S, subsets, p):
        self.P = [S[list(T)] for T in subsets]
        self.p = p
        self.batched = False
        if p == 2.0:
            base = np.array([P[-1] for P in self.P])
            M = np.array([(P[:-1] - P[-1]).T for P in self.P])  # (m, d, k)
            if M.shape[2] and all(np.linalg.matrix_rank(Mi) == M.shape[2] for Mi in M):
                self.base, self.M, self.pinv = base, M, np.linalg.pinv(M)
                self.batched = True

    def __call__(self, x):
        m = len(self.P)
        vals = np.empty(m)
        wits = np.empty((m, x.size))
        slow = range(m)
        if self.batched:
            mu = np.einsum("mkd,md->mk", self.pinv, x - self.base)
            wits[:] = self.base + np.einsum("mdk,mk->md", self.M, mu)
            vals[:] = np.linalg.norm(x - wits, axis=1)
            slow = np.flatnonzero((mu.min(axis=1) < 0.0) | (mu.sum(axis=1) > 1.0))
        for i in slow:
            r = hull_distance(x, self.P[i], self.p)
            vals[i], wits[i] = r.distance, r.witness
        return vals, wits


SUBGRADIENT_STAGES = 4
SUBGRADIENT_SHRINK = 5.0


def _subgradient(S, subsets, p, restarts, iterations, seed):
    """Staged subgradient descent: each stage restarts from the best iterate with a smaller step."""
    n, d = S.shape
    diam = float(np.max(np.abs(S - S.mean(axis=0)))) or 1.0
    rng = np.random.default_rng(seed)
    dist = _Distances(S, subsets, p)
    starts = [S.mean(axis=0)] + [S.mean(axis=0) + 0.1 * diam * rng.standard_normal(d) for _ in range(restarts - 1)]
    per_stage = max(1, iterations // SUBGRADIENT_STAGES)
    best_val, best_x = np.inf, starts[0]
    for start in starts:
        run_val, run_x = np.inf, start.copy()
        scale = 0.1 * diam
        for _ in range(SUBGRADIENT_STAGES):
            x = run_x.copy()
            for t in range(1, per_stage + 1):
                vals, wits = dist(x)
                i = int(np.argmax(vals))  # first maximal index
                if vals[i] < run_val:
                    run_val, run_x = vals[i], x.copy()
                if vals[i] == 0.0:
                    break
                x = x - (scale / np.sqrt(t)) * (x - wits[i]) / vals[i]
            scale /= SUBGRADIENT_SHRINK
        if run_val < best_val:
            best_val, best_x = run_val, run_x
    return best_x


def _delta_star(S, f, p, method, restarts, iterations, seed):
    n, d = S.shape
    subsets = list(sub_multisets(n, f))
    if method == "auto":
        r = affine_rank(S)
        if p == 2.0 and f == 1 and n == d + 1 and r == d:
            method = CLOSED_FORM
        elif n >= (r + 1) * f + 1:
            method = RANK_DEFICIENT
        else:
            method = CONVEX_PROGRAM
    if method == CLOSED_FORM:
        if not (p == 2.0 and f == 1 and n == d + 1):
            raise UsageError("the closed form needs f=1, n=d+1 and the L2 norm")
        x = incenter(S)
        return DeltaStarResult(inradius(S), x, _distances(x, S, subsets, p), CLOSED_FORM)
    if method == RANK_DEFICIENT:
        x = psi_find_point(S, f, PLAIN)
        if x is not None:
            dist = _distances(x, S, subsets, p)
            return DeltaStarResult(max(dist), x, dist, RANK_DEFICIENT)
        method = CONVEX_PROGRAM  # numerically borderline: fall back to the exact program
    if method == SUBGRADIENT:
        x = _subgradient(S, subsets, p, restarts, iterations, seed)
    else:
        method = CONVEX_PROGRAM
        x = minmax_point(S, subsets, p)
    dist = _distances(x, S, subsets, p)
    return DeltaStarResult(max(dist), x, dist, method)


@functools.lru_cache(maxsize=4096)
def _cached(key, shape, f, p, method, restarts, iterations, seed):
    S = np.frombuffer(key, dtype=np.float64).reshape(shape)
    res = _delta_star(S, f, p, method, restarts, iterations, seed)
    res.argmin_point.setflags(write=False)  # shared through the cache
    return res


def delta_star(S, f: int, p=2, method: str = "auto", *, restarts: int = 1, iterations: int = 4_000,
               seed: int = 0) -> DeltaStarResult:
    """Compute delta*(S) for fault bound ``f`` under the L_p norm.

    ``method="auto"`` picks the closed form, the rank-deficiency shortcut or the
    exact convex program.  The function is pure, so results are memoized on the
    exact bytes of S (repeated calls on identical inputs return the identical
    result object).
    """
    S = np.ascontiguousarray(as_multiset(S), dtype=np.float64)
    p = parse_norm(p)
    if not 0 <= f < S.shape[0]:
        raise UsageError(f"need 0 <= f < n, got f={f}, n={S.shape[0]}")
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {METHODS}")
    return _cached(S.tobytes(), S.shape, f, p, method, restarts, iterations, seed)
