"""Relaxed convex hulls, the safe-region intersections built from them, and
simplex inradius machinery.

Coordinate subsets ``D`` are tuples of 0-based coordinate indices.  Sub-multiset
enumeration (size ``n - f`` subsets of the input) is ``itertools.combinations``
order, and coordinate subsets of size ``k`` are enumerated lexicographically;
both orders are fixed so that every process computes identical regions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateSimplexError, UsageError
from .geometry import (
    INF,
    add_hull_block,
    affine_rank,
    as_multiset,
    as_point,
    hull_distance,
    hull_membership,
    parse_norm,
)
from .lp import LinearProgram, OPTIMAL
from .minmax import minmax_point

MEMBERSHIP_TOL = 1e-7
DISTANCE_SLACK = 1e-9


# --- region variants --------------------------------------------------------

@dataclass(frozen=True)
class Plain:
    """Ordinary convex hull H(T)."""

    def __str__(self):
        return "PLAIN"


@dataclass(frozen=True)
class KRelaxed:
    """k-relaxed hull: every k-coordinate projection lies in the projected hull."""

    k: int

    def __str__(self):
        return f"K_RELAXED({self.k})"


@dataclass(frozen=True)
class DeltaRelaxed:
    """Points within L_p distance ``delta`` of the hull."""

    delta: float
    p: float = 2.0

    def __post_init__(self):
        if self.delta < 0:
            raise UsageError("delta must be non-negative")
        object.__setattr__(self, "p", parse_norm(self.p))

    def __str__(self):
        return f"DELTA_RELAXED({self.delta:g}, {self.p:g})"


PLAIN = Plain()
Variant = Union[Plain, KRelaxed, DeltaRelaxed]


# --- projections ------------------------------------------------------------

def project(u, D: Sequence[int]) -> np.ndarray:
    """g_D: keep the coordinates listed in D (0-based, increasing)."""
    u = np.asarray(u, dtype=float)
    D = tuple(D)
    d = u.shape[-1]
    if not D or any(b <= a for a, b in zip(D, D[1:])) or D[0] < 0 or D[-1] >= d:
        raise UsageError(f"invalid coordinate subset {D} for dimension {d}")
    return u[..., list(D)]


def coordinate_subsets(d: int, k: int) -> Iterator[Tuple[int, ...]]:
    """D_k in lexicographic order."""
    if not 1 <= k <= d:
        raise UsageError(f"need 1 <= k <= d, got k={k}, d={d}")
    return itertools.combinations(range(d), k)


def sub_multisets(n: int, f: int) -> Iterator[Tuple[int, ...]]:
    """Index tuples of every size-(n - f) sub-multiset, in combination order."""
    if not 0 <= f < n:
        raise UsageError(f"need 0 <= f < n, got n={n}, f={f}")
    return itertools.combinations(range(n), n - f)


# --- memberships --------------------------------------------------------------

def k_hull_membership(u, S, k: int, tol: float = MEMBERSHIP_TOL) -> bool:
    S = as_multiset(S)
    u = as_point(u, S.shape[1])
    d = S.shape[1]
    if k == d:
        return hull_membership(u, S, tol)[0]
    if k == 1:
        return bool(np.all(u >= S.min(axis=0) - tol) and np.all(u <= S.max(axis=0) + tol))
    for D in coordinate_subsets(d, k):
        if not hull_membership(u[list(D)], S[:, list(D)], tol)[0]:
            return False
    return True


def delta_hull_membership(u, S, delta: float, p=2) -> bool:
    if delta < 0:
        raise UsageError("delta must be non-negative")
    return hull_distance(u, S, p).distance <= delta + DISTANCE_SLACK


def variant_membership(u, T, variant: Variant, tol: float = MEMBERSHIP_TOL) -> bool:
    if isinstance(variant, Plain):
        return hull_membership(u, T, tol)[0]
    if isinstance(variant, KRelaxed):
        return k_hull_membership(u, T, variant.k, tol)
    if isinstance(variant, DeltaRelaxed):
        return delta_hull_membership(u, T, variant.delta, variant.p)
    raise UsageError(f"unknown region variant {variant!r}")


def gamma_region_membership(u, Y, f: int, variant: Variant = PLAIN, tol: float = MEMBERSHIP_TOL) -> bool:
    """Is u in the chosen hull of every size-(|Y| - f) sub-multiset of Y?"""
    Y = as_multiset(Y)
    u = as_point(u, Y.shape[1])
    return all(variant_membership(u, Y[list(T)], variant, tol) for T in sub_multisets(len(Y), f))


# --- region emptiness -----------------------------------------------------------

def region_blocks(Y: np.ndarray, f: int, variant: Variant):
    """(coordinate subset, point indices) pairs whose hull constraints define the region."""
    n, d = Y.shape
    subsets = list(sub_multisets(n, f))
    if isinstance(variant, KRelaxed) and variant.k < d:
        Ds = list(coordinate_subsets(d, variant.k))
    else:
        Ds = [tuple(range(d))]
    return [(D, T) for D in Ds for T in subsets]


def add_region(lp: LinearProgram, u_vars, Y: np.ndarray, blocks, variant: Variant) -> None:
    """Add hull constraints for every block, on the shared point variables ``u_vars``."""
    delta, p = 0.0, INF
    if isinstance(variant, DeltaRelaxed):
        delta, p = variant.delta, variant.p
        if p not in (1.0, INF):
            raise UsageError("LP regions support only L1 / L-infinity relaxations")
    for D, T in blocks:
        add_hull_block(lp, [u_vars[c] for c in D], Y[np.ix_(list(T), list(D))], delta=delta, p=p)


def _region_lp_point(Y, f, variant) -> Optional[np.ndarray]:
    d = Y.shape[1]
    lp = LinearProgram()
    u = lp.variables(d, lo=None)
    add_region(lp, u, Y, region_blocks(Y, f, variant), variant)
    res = lp.solve()
    return res.x[u] if res.status == OPTIMAL else None


def _project_onto_expanded_hull(x, T, delta):
    r = hull_distance(x, T, 2)
    if r.distance <= delta:
        return x, 0.0
    return r.witness + (x - r.witness) * (delta / r.distance), r.distance - delta


def _alternating_projections(Y, subsets, delta, sweeps=10_000, tol=1e-8):
    """Cyclic projections onto the expanded hulls; (point, residual) or (None, residual)."""
    x = Y.mean(axis=0)
    scale = float(np.abs(Y - x).max()) or 1.0
    worst = np.inf
    for _ in range(sweeps):
        start = x
        worst = 0.0
        for T in subsets:
            x, excess = _project_onto_expanded_hull(x, Y[list(T)], delta)
            worst = max(worst, excess)
        if worst <= tol:
            return x, worst
        if float(np.abs(x - start).max()) <= 1e-12 * scale:
            break  # settled on a limit cycle: the sets do not meet
    return None, worst


def psi_find_point(Y, f: int, variant: Variant = PLAIN, *, sweeps: int = 10_000) -> Optional[np.ndarray]:
    """A point of the intersection over size-(|Y| - f) sub-multisets, or None if empty.

    Plain, k-relaxed and L1/L-infinity relaxed regions are decided by one joint
    LP.  For other norms, alternating projections are tried first; emptiness is
    then certified by the L-infinity relaxation LP (which contains the L_p
    region) or, failing that, decided exactly by the min-max convex program.
    """
    Y = as_multiset(Y)
    n, d = Y.shape
    if not 0 <= f < n:
        raise UsageError(f"need 0 <= f < |Y|, got f={f}, |Y|={n}")
    if isinstance(variant, KRelaxed):
        if not 1 <= variant.k <= d:
            raise UsageError(f"need 1 <= k <= d, got k={variant.k}, d={d}")
        if variant.k == 1:
            subsets = list(sub_multisets(n, f))
            lo = np.max([Y[list(T)].min(axis=0) for T in subsets], axis=0)
            hi = np.min([Y[list(T)].max(axis=0) for T in subsets], axis=0)
            if np.any(lo > hi + MEMBERSHIP_TOL):
                return None
            return np.where(lo <= hi, (lo + hi) / 2, lo)
    if isinstance(variant, DeltaRelaxed) and variant.p not in (1.0, INF):
        subsets = list(sub_multisets(n, f))
        if variant.p == 2.0:
            x, _ = _alternating_projections(Y, subsets, variant.delta, sweeps)
            if x is not None:
                return x
        if _region_lp_point(Y, f, DeltaRelaxed(variant.delta, INF)) is None:
            return None
        x = minmax_point(Y, subsets, variant.p)
        worst = max(hull_distance(x, Y[list(T)], variant.p).distance for T in subsets)
        return x if worst <= variant.delta + DISTANCE_SLACK else None
    return _region_lp_point(Y, f, variant)


# --- simplex machinery ----------------------------------------------------------

@dataclass(frozen=True)
class SimplexDual:
    """Dual basis of a simplex: rows b_1..b_d of (A^-1)^T, plus b_{d+1} = -sum."""

    vertices: np.ndarray
    b: np.ndarray

    def pairing(self) -> np.ndarray:
        """Matrix of <a_i - a_j, b_k> indexed [i, j, k]."""
        a = self.vertices
        diff = a[:, None, :] - a[None, :, :]
        return np.einsum("ijc,kc->ijk", diff, self.b)


def _simplex(S):
    S = as_multiset(S)
    n, d = S.shape
    if n != d + 1:
        raise DegenerateSimplexError(f"a simplex in R^{d} needs {d + 1} vertices, got {n}")
    if affine_rank(S) != d:
        raise DegenerateSimplexError("vertices are affinely dependent")
    return S


def simplex_dual(S) -> SimplexDual:
    S = _simplex(S)
    d = S.shape[1]
    A = (S[:d] - S[d]).T  # columns a_i - a_{d+1}
    B = np.linalg.inv(A).T  # columns b_i
    b = np.vstack([B.T, -B.T.sum(axis=0)])
    return SimplexDual(S, b)


def inradius(S) -> float:
    b = simplex_dual(S).b
    return float(1.0 / np.linalg.norm(b, axis=1).sum())


def incenter(S) -> np.ndarray:
    dual = simplex_dual(S)
    w = np.linalg.norm(dual.b, axis=1)
    return (w / w.sum()) @ dual.vertices


def facet_inradius(S, k: int) -> float:
    """Inradius of the facet opposite vertex ``k`` (0-based)."""
    b = simplex_dual(S).b
    d = b.shape[1]
    if d < 2:
        raise UsageError("facet inradius needs d >= 2")
    if not 0 <= k <= d:
        raise UsageError(f"vertex index {k} out of range")
    bk = b[k]
    others = np.delete(b, k, axis=0)
    proj = others - np.outer(others @ bk / (bk @ bk), bk)
    return float(1.0 / np.linalg.norm(proj, axis=1).sum())
