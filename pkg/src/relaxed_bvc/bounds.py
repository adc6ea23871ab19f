"""Bounds laboratory.

Impossibility constructions (as point multisets, one row per process),
LP certificates that the constructions behave as claimed, Tverberg partition
search, the upper bounds on delta* and randomized stress tests for the
conjectured bounds.

Matrix convention: the constructions are usually written as d x n matrices
whose columns are process inputs; the builders here return the transposed
(n, d) arrays.  Coordinates and processes are 0-based in code.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .deltastar import delta_star
from .errors import UsageError
from .geometry import INF, add_hull_block, as_multiset, hull_distance, hull_membership, pairwise_distances, parse_norm
from .hulls import (
    PLAIN,
    DeltaRelaxed,
    KRelaxed,
    Plain,
    Variant,
    coordinate_subsets,
    k_hull_membership,
    psi_find_point,
)
from .lp import OPTIMAL, LinearProgram
from .minmax import minmax_point
from .simnet import INPUT_STRATEGIES, adversary_inputs_for_bound_test, make_rng

LP_TOL = 1e-7
WITNESS_TOL = 1e-7
STRESS_TOL = 1e-6  # accuracy of the delta* solver, relative to the input scale

EMPTY = "EMPTY"
NONEMPTY = "NONEMPTY"
CONTRADICTION = "CONTRADICTION"
NO_CONTRADICTION = "NO_CONTRADICTION"
AGREEMENT_VIOLATED = "AGREEMENT_VIOLATED"
NO_VIOLATION = "NO_VIOLATION"
POTENTIAL_COUNTEREXAMPLE = "POTENTIAL_COUNTEREXAMPLE"


# --- fixtures ------------------------------------------------------------------------

def sync_k_matrix(d: int, gamma: float, epsilon: float) -> np.ndarray:
    """d+1 inputs: process i has zeros before coordinate i, gamma at i, epsilon after; the last is -gamma."""
    S = np.zeros((d + 1, d))
    for i in range(d):
        S[i, i] = gamma
        S[i, i + 1:] = epsilon
    S[d] = -gamma
    return S


def sync_delta_matrix(d: int, x: float) -> np.ndarray:
    """d+1 inputs: x times each unit vector, then the origin."""
    return np.vstack([x * np.eye(d), np.zeros((1, d))])


def async_k_matrix(d: int, gamma: float, epsilon: float) -> np.ndarray:
    """d+2 inputs: like :func:`sync_k_matrix` with 2*epsilon below the diagonal, plus the origin."""
    S = sync_k_matrix(d, gamma, 2 * epsilon)
    return np.vstack([S, np.zeros((1, d))])


def async_delta_matrix(d: int, x: float) -> np.ndarray:
    return np.vstack([x * np.eye(d), np.zeros((2, d))])


@dataclass(frozen=True)
class CounterexampleFixture:
    name: str
    params: Dict[str, float]
    points: np.ndarray
    expected: str

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params), "points": self.points.tolist(),
                "expected": self.expected}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise UsageError(msg)


def _check_d(d) -> int:
    _require(isinstance(d, (int, np.integer)) and d >= 1, f"dimension must be a positive integer, got {d!r}")
    return int(d)


def fixture(name: str, **params) -> CounterexampleFixture:
    """Build a named construction: sync-k, sync-delta, async-k or async-delta."""
    d = _check_d(params.get("d", 3))
    if name == "sync-k":
        g, e = float(params.get("gamma", 1.0)), float(params.get("epsilon", 1.0))
        return CounterexampleFixture(name, {"d": d, "gamma": g, "epsilon": e}, sync_k_matrix(d, g, e), EMPTY)
    if name == "sync-delta":
        delta = float(params.get("delta", 1.0))
        x = float(params.get("x", 2 * d * delta + 1.0))
        return CounterexampleFixture(name, {"d": d, "x": x, "delta": delta}, sync_delta_matrix(d, x), CONTRADICTION)
    if name == "async-k":
        g, e = float(params.get("gamma", 1.0)), float(params.get("epsilon", 0.2))
        return CounterexampleFixture(name, {"d": d, "gamma": g, "epsilon": e}, async_k_matrix(d, g, e),
                                     AGREEMENT_VIOLATED)
    if name == "async-delta":
        delta, e = float(params.get("delta", 0.5)), float(params.get("epsilon", 0.1))
        x = float(params.get("x", 2 * d * delta + e + 0.1))
        return CounterexampleFixture(name, {"d": d, "x": x, "delta": delta, "epsilon": e},
                                     async_delta_matrix(d, x), AGREEMENT_VIOLATED)
    raise UsageError(f"unknown fixture {name!r}; choose from {FIXTURES}")


FIXTURES = ("sync-k", "sync-delta", "async-k", "async-delta")


# --- region LPs ----------------------------------------------------------------------

def _add_blocks(lp, u, Y, blocks, delta=0.0, p=INF):
    for D, T in blocks:
        add_hull_block(lp, [u[c] for c in D], Y[np.ix_(list(T), list(D))], delta=delta, p=p)


def _extreme(Y, blocks, objective, maximize, d, delta=0.0, p=INF):
    """Optimize a linear objective over the intersection of the block hulls (None if empty)."""
    lp = LinearProgram()
    u = lp.variables(d, lo=None)
    _add_blocks(lp, u, Y, blocks, delta, p)
    res = lp.solve((u, np.asarray(objective, dtype=float)), maximize=maximize)
    return res.fun if res.status == OPTIMAL else None


def _min_max_coordinate(Y, blocks, d, delta=0.0, p=INF):
    """min over the region of max_c u_c (None if empty)."""
    lp = LinearProgram()
    u = lp.variables(d, lo=None)
    t = lp.variables(1, lo=None)[0]
    _add_blocks(lp, u, Y, blocks, delta, p)
    for c in range(d):
        lp.add_le([u[c], t], [1.0, -1.0], 0.0)
    res = lp.solve(([t], [1.0]))
    return res.fun if res.status == OPTIMAL else None


def _without(n, *drop):
    return tuple(i for i in range(n) if i not in drop)


# --- synchronous constructions ------------------------------------------------------------

def check_sync_k_counterexample(d: int, gamma: float, epsilon: float, k: int = 2) -> dict:
    """Certify that the k=2 safe region of the sync-k construction (f=1) is empty.

    Besides the emptiness verdict, four families of one-block LP facts are
    checked; together they force the last coordinate to be both <= 0 and
    >= epsilon.
    """
    d = _check_d(d)
    _require(d >= 3, "the construction needs d >= 3")
    _require(0 < epsilon <= gamma, f"need 0 < epsilon <= gamma, got epsilon={epsilon}, gamma={gamma}")
    S = sync_k_matrix(d, gamma, epsilon)
    n = d + 1
    point = psi_find_point(S, 1, KRelaxed(k))
    tol = LP_TOL * max(1.0, gamma)
    facts = []

    # every coordinate is non-negative once the negative input is dropped
    vals = []
    for i in range(d):
        D = tuple(sorted((i, i + 1 if i + 1 < d else i - 1)))
        obj = np.zeros(d)
        obj[i] = 1.0
        vals.append(_extreme(S, [(D, _without(n, d))], obj, False, d))
    facts.append({"observation": 1, "claim": "u_i >= 0", "values": vals,
                  "holds": all(v is not None and v >= -tol for v in vals)})

    # successor <= predecessor
    vals = []
    for i in range(d - 1):
        obj = np.zeros(d)
        obj[i + 1], obj[i] = 1.0, -1.0
        vals.append(_extreme(S, [((i, i + 1), _without(n, i + 1))], obj, True, d))
    facts.append({"observation": 2, "claim": "u_{i+1} - u_i <= 0", "values": vals,
                  "holds": all(v is not None and v <= tol for v in vals)})

    obj = np.zeros(d)
    obj[0] = 1.0
    v = _extreme(S, [((0, 1), _without(n, 0))], obj, True, d)
    facts.append({"observation": 3, "claim": "u_1 <= 0", "values": [v], "holds": v is not None and v <= tol})

    obj = np.zeros(d)
    obj[d - 1] = 1.0
    v = _extreme(S, [((d - 2, d - 1), _without(n, d))], obj, False, d)
    facts.append({"observation": 4, "claim": "u_d >= epsilon", "values": [v],
                  "holds": v is not None and v >= epsilon - tol})

    return {
        "fixture": "sync-k", "params": {"d": d, "gamma": gamma, "epsilon": epsilon, "k": k, "f": 1},
        "points": S.tolist(),
        "verdict": EMPTY if point is None else NONEMPTY,
        "point": None if point is None else point.tolist(),
        "observations": facts,
        "observations_hold": all(fct["holds"] for fct in facts),
    }


def check_sync_delta_counterexample(d: int, x: float, delta: float) -> dict:
    """The sync-delta construction under (delta, inf) relaxation with f=1.

    Dropping input i caps coordinate i at delta; dropping the origin forces
    some coordinate up to at least x/d - delta.  CONTRADICTION when the safe
    region is empty (expected exactly when x > 2 d delta).
    """
    d = _check_d(d)
    _require(delta > 0, "delta must be positive")
    S = sync_delta_matrix(d, x)
    n = d + 1
    full = tuple(range(d))
    caps = []
    for i in range(d):
        obj = np.zeros(d)
        obj[i] = 1.0
        caps.append(_extreme(S, [(full, _without(n, i))], obj, True, d, delta, INF))
    floor = _min_max_coordinate(S, [(full, _without(n, d))], d, delta, INF)
    point = psi_find_point(S, 1, DeltaRelaxed(delta, INF))
    tol = LP_TOL * max(1.0, abs(x))
    facts = [
        {"observation": 1, "claim": "u_i <= delta", "values": caps,
         "holds": all(c is not None and c <= delta + tol for c in caps)},
        {"observation": 2, "claim": "max_c u_c >= x/d - delta", "values": [floor],
         "holds": floor is not None and floor >= x / d - delta - tol},
    ]
    return {
        "fixture": "sync-delta", "params": {"d": d, "x": x, "delta": delta, "f": 1, "p": "INF"},
        "points": S.tolist(),
        "precondition": x > 2 * d * delta,
        "verdict": CONTRADICTION if point is None else NO_CONTRADICTION,
        "point": None if point is None else point.tolist(),
        "observations": facts,
        "observations_hold": all(fct["holds"] for fct in facts),
    }


# --- asynchronous constructions --------------------------------------------------------

def _async_psi_blocks(d, i, k):
    """Blocks of Psi_i: every hull of the first d+1 inputs minus one input j != i."""
    n0 = d + 1
    Ds = list(coordinate_subsets(d, k)) if k < d else [tuple(range(d))]
    return [(D, _without(n0, j)) for j in range(n0) if j != i for D in Ds]


def _psi_pair(S, d, blocks1, blocks2, delta, p):
    """Extremes of the first coordinate on both regions and their min L-inf distance."""
    e0 = np.zeros(d)
    e0[0] = 1.0
    out = {
        "psi1_first_min": _extreme(S, blocks1, e0, False, d, delta, p),
        "psi1_first_max": _extreme(S, blocks1, e0, True, d, delta, p),
        "psi2_first_min": _extreme(S, blocks2, e0, False, d, delta, p),
        "psi2_first_max": _extreme(S, blocks2, e0, True, d, delta, p),
    }
    lp = LinearProgram()
    u1 = lp.variables(d, lo=None)
    u2 = lp.variables(d, lo=None)
    t = lp.variables(1)[0]
    _add_blocks(lp, u1, S, blocks1, delta, p)
    _add_blocks(lp, u2, S, blocks2, delta, p)
    for c in range(d):
        lp.add_le([u1[c], u2[c], t], [1.0, -1.0, -1.0], 0.0)
        lp.add_le([u1[c], u2[c], t], [-1.0, 1.0, -1.0], 0.0)
    res = lp.solve(([t], [1.0]))
    out["gap"] = res.fun if res.status == OPTIMAL else None
    return out


def check_async_counterexamples(d: int, params: Optional[dict] = None, which: str = "both") -> dict:
    """Certify the asynchronous constructions with f=1, n=d+2.

    Psi_i is the region process i must output into when the last process is
    silent: the intersection over j != i (j among the first d+1) of the hulls
    of the first d+1 inputs without input j.  ``k`` construction: k=2 relaxed
    hulls; ``delta`` construction: (delta, inf) relaxed hulls.  The verdict is
    AGREEMENT_VIOLATED when both regions are non-empty but every pair of
    outputs is more than epsilon apart in L-inf.
    """
    d = _check_d(d)
    _require(d >= 2, "the constructions need d >= 2")
    params = dict(params or {})
    report = {"d": d}
    if which in ("both", "k"):
        g, e = float(params.get("gamma", 1.0)), float(params.get("epsilon", 0.2))
        _require(d >= 3, "the k construction needs d >= 3")
        _require(g > 0 and e > 0, "gamma and epsilon must be positive")
        S = async_k_matrix(d, g, e)
        r = _psi_pair(S, d, _async_psi_blocks(d, 0, 2), _async_psi_blocks(d, 1, 2), 0.0, INF)
        r.update(_verdict(r, e))
        r.update({"params": {"gamma": g, "epsilon": e, "k": 2}, "precondition": 0 < 2 * e < g,
                  "points": S.tolist(),
                  "claims": {"psi1_first_ge_2eps": r["psi1_first_min"] is not None
                             and r["psi1_first_min"] >= 2 * e - LP_TOL,
                             "psi2_first_eq_0": r["psi2_first_min"] is not None
                             and abs(r["psi2_first_min"]) <= LP_TOL and abs(r["psi2_first_max"]) <= LP_TOL}})
        report["k"] = r
    if which in ("both", "delta"):
        delta, e = float(params.get("delta", 0.5)), float(params.get("epsilon", 0.1))
        x = float(params.get("x", 2 * d * delta + e + 0.1))
        _require(delta > 0 and e > 0, "delta and epsilon must be positive")
        S = async_delta_matrix(d, x)
        r = _psi_pair(S, d, _async_psi_blocks(d, 0, d), _async_psi_blocks(d, 1, d), delta, INF)
        r.update(_verdict(r, e))
        tol = LP_TOL * max(1.0, abs(x))
        r.update({"params": {"x": x, "delta": delta, "epsilon": e, "p": "INF"},
                  "precondition": x > 2 * d * delta + e, "points": S.tolist(),
                  "claims": {"psi1_first_ge": r["psi1_first_min"] is not None
                             and r["psi1_first_min"] >= x - (2 * d - 1) * delta - tol,
                             "psi2_first_le_delta": r["psi2_first_max"] is not None
                             and r["psi2_first_max"] <= delta + tol}})
        report["delta"] = r
    if which not in ("both", "k", "delta"):
        raise UsageError(f"which must be 'both', 'k' or 'delta', got {which!r}")
    return report


def _verdict(r, epsilon):
    if r["psi1_first_min"] is None or r["psi2_first_min"] is None:
        return {"verdict": EMPTY}
    return {"verdict": AGREEMENT_VIOLATED if r["gap"] > epsilon + LP_TOL else NO_VIOLATION}


# --- Tverberg ---------------------------------------------------------------------------

MAX_TVERBERG_POINTS = 12


@dataclass(frozen=True)
class TverbergVerdict:
    partition: Optional[List[Tuple[int, ...]]]
    witness: Optional[np.ndarray]
    checked: int = 0

    @property
    def found(self) -> bool:
        return self.partition is not None

    def to_dict(self):
        return {"partition": None if self.partition is None else [list(p) for p in self.partition],
                "witness": None if self.witness is None else self.witness.tolist(),
                "checked": self.checked}


def set_partitions(n: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Restricted growth strings: each unordered partition of range(n) into exactly ``parts`` blocks once."""
    if parts < 1 or parts > n:
        return
    a = [0] * n

    def rec(i, used):
        if n - i < parts - used:
            return
        if i == n:
            if used == parts:
                yield tuple(a)
            return
        for v in range(min(used + 1, parts)):
            a[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(0, 0)


def _blocks_of(labels, parts):
    return [tuple(i for i, l in enumerate(labels) if l == b) for b in range(parts)]


def hulls_intersect(Y, parts: Sequence[Sequence[int]], variant: Variant = PLAIN) -> Optional[np.ndarray]:
    """A common point of the (relaxed) hulls of ``Y[part]`` for every part, or None."""
    Y = as_multiset(Y)
    d = Y.shape[1]
    parts = [tuple(p) for p in parts]
    if isinstance(variant, DeltaRelaxed) and variant.delta == 0.0:
        variant = PLAIN
    if isinstance(variant, DeltaRelaxed) and variant.p not in (1.0, INF):
        x = minmax_point(Y, parts, variant.p)
        worst = max(hull_distance(x, Y[list(P)], variant.p).distance for P in parts)
        return x if worst <= variant.delta + 1e-9 else None
    lp = LinearProgram()
    u = lp.variables(d, lo=None)
    if isinstance(variant, KRelaxed) and variant.k < d:
        blocks = [(D, P) for P in parts for D in coordinate_subsets(d, variant.k)]
    else:
        blocks = [(tuple(range(d)), P) for P in parts]
    if isinstance(variant, DeltaRelaxed):
        _add_blocks(lp, u, Y, blocks, variant.delta, variant.p)
    else:
        _add_blocks(lp, u, Y, blocks)
    res = lp.solve()
    return res.x[u] if res.status == OPTIMAL else None


def _witness_ok(x, Y, parts, variant) -> bool:
    for P in parts:
        T = Y[list(P)]
        if isinstance(variant, KRelaxed):
            ok = k_hull_membership(x, T, variant.k, WITNESS_TOL)
        elif isinstance(variant, DeltaRelaxed) and variant.delta > 0:
            ok = hull_distance(x, T, variant.p).distance <= variant.delta + 1e-6 * max(1.0, variant.delta)
        else:
            ok = hull_membership(x, T, WITNESS_TOL)[0]
        if not ok:
            return False
    return True


def tverberg_relaxed_search(Y, f: int, variant: Variant = PLAIN) -> TverbergVerdict:
    """Brute-force search for f+1 parts whose (relaxed) hulls share a point.

    Partitions are enumerated once each (unordered parts), most balanced
    first, since balanced splits are the likely ones to succeed.
    """
    Y = as_multiset(Y)
    n = len(Y)
    if n > MAX_TVERBERG_POINTS:
        raise UsageError(f"brute-force Tverberg search is capped at {MAX_TVERBERG_POINTS} points, got {n}")
    if f < 0:
        raise UsageError("f must be non-negative")
    parts = f + 1
    if parts > n:
        return TverbergVerdict(None, None, 0)
    cands = list(set_partitions(n, parts))
    cands.sort(key=lambda lab: max(np.bincount(lab, minlength=parts)))
    for checked, labels in enumerate(cands, 1):
        blocks = _blocks_of(labels, parts)
        x = hulls_intersect(Y, blocks, variant)
        if x is not None and _witness_ok(x, Y, blocks, variant):
            return TverbergVerdict(blocks, x, checked)
    return TverbergVerdict(None, None, len(cands))


def tverberg_search(Y, f: int) -> TverbergVerdict:
    return tverberg_relaxed_search(Y, f, PLAIN)


def helly_check(hulls: Sequence[np.ndarray]) -> Tuple[bool, bool]:
    """(every (d+1)-subfamily intersects, the whole family intersects), both decided by LP."""
    hulls = [as_multiset(h) for h in hulls]
    d = hulls[0].shape[1]
    Y = np.vstack(hulls)
    offsets = np.cumsum([0] + [len(h) for h in hulls])
    idx = [tuple(range(offsets[i], offsets[i + 1])) for i in range(len(hulls))]
    m = min(d + 1, len(hulls))
    local = all(hulls_intersect(Y, [idx[i] for i in sub]) is not None
                for sub in itertools.combinations(range(len(hulls)), m))
    whole = hulls_intersect(Y, idx) is not None
    return local, whole


# --- input generators -------------------------------------------------------------------

GENERATORS = ("uniform", "clustered", "near_degenerate", "moment")


def moment_curve(n: int, d: int, ts=None, rng=None) -> np.ndarray:
    """Points (t, t^2, ..., t^d); any d+1 of them are affinely independent."""
    if ts is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        ts = np.sort(rng.uniform(-1.0, 1.0, size=n))
    ts = np.asarray(ts, dtype=float)
    return np.vander(ts, d + 1, increasing=True)[:, 1:]


def generate_points(kind: str, n: int, d: int, rng) -> np.ndarray:
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, d))
    if kind == "clustered":
        centers = rng.uniform(-1.0, 1.0, size=(2, d))
        return centers[rng.integers(2, size=n)] + 0.05 * rng.standard_normal((n, d))
    if kind == "near_degenerate":
        basis = rng.standard_normal((max(1, d - 1), d))
        return rng.uniform(-1.0, 1.0, size=(n, len(basis))) @ basis + 1e-3 * rng.standard_normal((n, d))
    if kind == "moment":
        return moment_curve(n, d, rng=rng)
    raise UsageError(f"unknown generator {kind!r}; choose from {GENERATORS}")


# --- upper bounds ------------------------------------------------------------------------

def _edges(N, p=2):
    N = as_multiset(N)
    if len(N) < 2:
        return np.zeros(1)
    return pairwise_distances(N, p)


def holder_factor(d: int, p) -> float:
    """d^|1/2 - 1/p|: converts an L2 bound into an L_p bound."""
    p = parse_norm(p)
    inv = 0.0 if p == INF else 1.0 / p
    return float(d) ** abs(0.5 - inv)


def theorem16_bound(nonfaulty, n: int) -> float:
    """f=1, 4 <= n <= d+1, affinely independent inputs: min(e_min/2, e_max/(n-2)) over non-faulty edges."""
    e = _edges(nonfaulty)
    return float(min(e.min() / 2, e.max() / (n - 2)))


def theorem20_bound(nonfaulty, d: int) -> float:
    """f >= 2, n = (d+1) f: e_max/(d-1) over non-faulty edges."""
    return float(_edges(nonfaulty).max() / (d - 1))


def conjecture_bound(nonfaulty, n: int, f: int, d: int, p=2, asynchronous: bool = False) -> float:
    """d^(1/2-1/p) e_max,p / (floor(n/f) - 2), or - 3 in the asynchronous form."""
    p = parse_norm(p)
    denom = n // f - (3 if asynchronous else 2)
    if denom < 1:
        raise UsageError(f"the conjectured bound is undefined for n={n}, f={f}")
    return holder_factor(d, p) * float(_edges(nonfaulty, p).max()) / denom


def kappa(n: int, f: int, d: int, p=2) -> Tuple[float, str]:
    """Coefficient c with delta*_p(S) < c * max non-faulty L_p edge, and where it comes from.

    Returns (0, "exact") when the plain safe region is guaranteed non-empty.
    Sources marked ``conjecture`` are unproven.
    """
    p = parse_norm(p)
    if f == 0 or n >= (d + 1) * f + 1:
        return 0.0, "exact"
    if n <= 3 * f:
        return math.inf, "impossible"
    h = holder_factor(d, p)
    if f == 1 and d >= 3 and 4 <= n <= d + 1:
        return h / (n - 2), "theorem16"
    if f >= 2 and d >= 3 and n == (d + 1) * f:
        return h / (d - 1), "theorem20"
    return h / (n // f - 2), "conjecture"


def applicable_bounds(S, nonfaulty_idx: Sequence[int], f: int, p=2) -> List[dict]:
    """Every bound that applies to the multiset S with the given non-faulty rows."""
    S = as_multiset(S)
    n, d = S.shape
    N = S[list(nonfaulty_idx)]
    p = parse_norm(p)
    out = []
    if f == 1 and d >= 3 and 4 <= n <= d + 1 and p == 2.0:
        out.append({"name": "theorem16", "bound": theorem16_bound(N, n), "conjectural": False})
    if f >= 2 and d >= 3 and n == (d + 1) * f and p == 2.0:
        out.append({"name": "theorem20", "bound": theorem20_bound(N, d), "conjectural": False})
    if d >= 3 and 3 * f + 1 <= n <= (d + 1) * f and f >= 1:
        out.append({"name": "conjecture2" if p == 2.0 else "conjecture3",
                    "bound": conjecture_bound(N, n, f, d, p), "conjectural": True})
    c, src = kappa(n, f, d, p)
    if math.isfinite(c):
        out.append({"name": f"kappa:{src}", "bound": c * float(_edges(N, p).max()),
                    "conjectural": src == "conjecture"})
    return out


# --- conjecture stress ----------------------------------------------------------------------

# (n, f, d, p) regimes per conjecture; all inside the stated parameter ranges.
DEFAULT_REGIMES = {
    1: [(7, 2, 3, 2.0), (8, 2, 5, 2.0)],
    2: [(4, 1, 3, 2.0), (7, 2, 3, 2.0), (8, 2, 3, 2.0)],
    3: [(4, 1, 3, 3.0), (4, 1, 3, INF), (7, 2, 3, INF)],
    4: [(5, 1, 3, 2.0), (5, 1, 3, INF), (8, 2, 3, 2.0)],
}


def _in_regime(cid, n, f, d, p):
    if d < 3 or f < 1 or n < 3 * f + 1:
        return False
    if cid == 1:
        return f >= 2 and n < (d + 1) * f and p == 2.0
    if cid == 2:
        return n <= (d + 1) * f and p == 2.0
    if cid == 3:
        return n <= (d + 1) * f and p >= 2.0
    if cid == 4:
        return n <= (d + 2) * f and p >= 2.0 and n // f >= 4
    return False


@dataclass
class StressReport:
    conjecture: int
    params: List[dict]
    trials: int
    violations: int = 0
    borderline: int = 0
    worst_ratio: float = 0.0
    worst: Optional[dict] = None
    seeds: dict = field(default_factory=dict)
    artifacts: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {
            "conjecture": self.conjecture,
            "params": self.params,
            "trials": self.trials,
            "violations": self.violations,
            "borderline": self.borderline,
            "worst_ratio": self.worst_ratio,
            "worst": self.worst,
            "seeds": self.seeds,
            "artifacts": self.artifacts,
            "note": "evidence only: zero violations does not prove the conjecture",
        }


def stress_trial(cid: int, n: int, f: int, d: int, p: float, seed: int, trial: int,
                 distribution: str, strategy: str) -> dict:
    """One randomized instance: delta* against the conjectured bound."""
    rng = make_rng(seed, trial, 0)
    m = n - f
    N = generate_points(distribution, m, d, rng)
    F = adversary_inputs_for_bound_test(N, f, strategy, make_rng(seed, trial, 1), p=p)
    S = np.vstack([N, F])
    if cid == 4:
        # asynchronous form: the n - f values a process waits for may contain all f faulty ones
        keep = np.concatenate([np.arange(m - f), np.arange(m, n)])
        X = S[keep]
        ds = delta_star(X, f, p).delta_star
        bound = conjecture_bound(N, n, f, d, p, asynchronous=True)
    else:
        ds = delta_star(S, f, p).delta_star
        bound = conjecture_bound(N, n, f, d, p)
    scale = float(np.abs(N - N.mean(axis=0)).max()) or 1.0
    ratio = ds / bound if bound > 0 else (0.0 if ds <= STRESS_TOL * scale else math.inf)
    excess = ds - bound
    return {"n": n, "f": f, "d": d, "p": p, "seed": seed, "trial": trial, "distribution": distribution,
            "strategy": strategy, "delta_star": ds, "bound": bound, "ratio": ratio,
            "violation": excess > 10 * STRESS_TOL * scale,
            "borderline": -STRESS_TOL * scale <= excess <= 10 * STRESS_TOL * scale,
            "inputs": S.tolist()}


def conjecture_stress(conjecture_id: int, trials: int = 500, regimes=None, seed: int = 0,
                      distributions: Sequence[str] = ("uniform", "clustered", "near_degenerate", "moment"),
                      strategies: Sequence[str] = INPUT_STRATEGIES, jobs: int = 1) -> StressReport:
    """Randomized falsification attempt for one conjectured bound; ``trials`` per regime."""
    if conjecture_id not in DEFAULT_REGIMES:
        raise UsageError(f"conjecture id must be 1-4, got {conjecture_id}")
    regimes = [tuple(r) for r in (regimes or DEFAULT_REGIMES[conjecture_id])]
    regimes = [(int(n), int(f), int(d), parse_norm(p)) for n, f, d, p in regimes]
    for r in regimes:
        if not _in_regime(conjecture_id, *r):
            raise UsageError(f"regime n={r[0]}, f={r[1]}, d={r[2]}, p={r[3]} is outside conjecture "
                             f"{conjecture_id}'s stated range")
    tasks = []
    for ri, (n, f, d, p) in enumerate(regimes):
        for t in range(trials):
            tasks.append((conjecture_id, n, f, d, p, seed + ri, t,
                          distributions[t % len(distributions)], strategies[(t // len(distributions)) % len(strategies)]))
    results = _map(stress_trial, tasks, jobs)
    report = StressReport(conjecture_id, [{"n": n, "f": f, "d": d, "p": _p_json(p)} for n, f, d, p in regimes],
                          trials, seeds={"base": seed, "per_regime": [seed + i for i in range(len(regimes))]})
    for r in results:
        if r["ratio"] > report.worst_ratio or report.worst is None:
            report.worst_ratio = max(report.worst_ratio, r["ratio"])
            report.worst = {k: v for k, v in r.items() if k != "inputs"}
        report.borderline += r["borderline"]
        if r["violation"]:
            report.violations += 1
            report.artifacts.append({"kind": POTENTIAL_COUNTEREXAMPLE, "conjecture": conjecture_id,
                                     **{k: (_p_json(v) if k == "p" else v) for k, v in r.items()}})
    if report.worst is not None:
        report.worst["p"] = _p_json(report.worst["p"])
    return report


def _p_json(p):
    return "inf" if p == INF else p


def _map(fn, tasks, jobs):
    if jobs <= 1:
        return [fn(*t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*tasks), chunksize=max(1, len(tasks) // (4 * jobs))))
