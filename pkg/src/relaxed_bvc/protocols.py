"""Vector consensus protocols built on the simulated network.

* :func:`run_algo_sync` -- broadcast every input, then decide the point p_0
  achieving delta*(S) (each process computes it on the identical multiset S).
* :func:`run_k_relaxed_sync` -- broadcast, then decide a point of the
  k-relaxed safe region.
* :func:`run_scalar_per_coord` -- one scalar consensus per coordinate (median
  of the agreed values); gives 1-relaxed validity with n >= 3f+1.
* :func:`run_relaxed_verified_averaging_async` -- asynchronous approximate
  agreement: a relaxed-hull point in round 0, then repeated averaging of
  verified values carried by reliable broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .broadcast import EIGBroadcast, ReliableBroadcast, require_resilience
from .deltastar import delta_star
from .errors import ConfigurationError, UsageError
from .geometry import INF, as_multiset, hull_distance, norm_name, parse_norm
from .hulls import DeltaRelaxed, KRelaxed, coordinate_subsets, k_hull_membership, psi_find_point
from .simnet import (
    OPTIMIZED_GEOMETRIC,
    Adversary,
    Transcript,
    World,
    adversary_inputs_for_bound_test,
    jsonable,
    make_rng,
    run_async,
    run_sync,
)

VALIDITY_TOL = 1e-7


# --- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class ExactDelta:
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))


@dataclass(frozen=True)
class ExactK:
    k: int


@dataclass(frozen=True)
class ScalarPerCoord:
    pass


@dataclass(frozen=True)
class AsyncDelta:
    p: float = 2.0
    epsilon: float = 1e-3
    delta: Optional[float] = None  # None: input-dependent (delta* of the round-0 multiset)

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.delta is not None and self.delta < 0:
            raise ConfigurationError("a fixed delta must be non-negative")


ProtocolVariant = Union[ExactDelta, ExactK, ScalarPerCoord, AsyncDelta]


@dataclass(frozen=True)
class ConsensusConfig:
    n: int
    f: int
    d: int
    variant: ProtocolVariant = field(default_factory=ExactDelta)
    seed: int = 0
    trial: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.f < 0 or self.d < 1:
            raise ConfigurationError(f"invalid sizes n={self.n}, f={self.f}, d={self.d}")
        require_resilience(self.n, self.f)
        v = self.variant
        if isinstance(v, ExactK):
            if not 1 <= v.k <= self.d:
                raise ConfigurationError(f"need 1 <= k <= d, got k={v.k}, d={self.d}")


@dataclass
class ConsensusOutcome:
    decisions: Dict[int, Optional[np.ndarray]]
    rounds_used: int
    delta_achieved: float
    validity_margin: float
    agreement: bool
    valid: bool
    status: str = "ok"  # ok | empty | liveness_failure | protocol_error
    delta_used: Optional[float] = None
    agreement_residual: float = 0.0
    faulty: List[int] = field(default_factory=list)
    inputs: Optional[np.ndarray] = None
    transcript: Optional[Transcript] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok" and self.agreement and self.valid

    def to_dict(self) -> dict:
        return jsonable({
            "status": self.status,
            "agreement": self.agreement,
            "valid": self.valid,
            "decisions": {str(k): (None if v is None else np.asarray(v).tolist()) for k, v in self.decisions.items()},
            "rounds_used": self.rounds_used,
            "delta_achieved": self.delta_achieved,
            "delta_used": self.delta_used,
            "validity_margin": self.validity_margin,
            "agreement_residual": self.agreement_residual,
            "faulty": list(self.faulty),
            "inputs": None if self.inputs is None else self.inputs,
            **self.extra,
        })


# --- shared plumbing --------------------------------------------------------------

def _choose_faulty(cfg: ConsensusConfig, faulty) -> List[int]:
    if faulty is not None:
        faulty = sorted(int(i) for i in faulty)
        if len(faulty) > cfg.f or len(set(faulty)) != len(faulty):
            raise ConfigurationError(f"at most f={cfg.f} distinct faulty ids allowed, got {faulty}")
        return faulty
    rng = make_rng(cfg.seed, cfg.trial, 0)
    return sorted(int(i) + 1 for i in rng.choice(cfg.n, size=cfg.f, replace=False))


def _prepare(cfg: ConsensusConfig, inputs, adversary, faulty):
    cfg.validate()
    X = as_multiset(inputs, cfg.d)
    if X.shape != (cfg.n, cfg.d):
        raise UsageError(f"expected {cfg.n} inputs of dimension {cfg.d}, got shape {X.shape}")
    faulty = _choose_faulty(cfg, faulty)
    adversary = adversary or Adversary()
    world = World(cfg.n, faulty, adversary, cfg.seed, cfg.trial)
    nonfaulty = world.nonfaulty
    if adversary.kind == OPTIMIZED_GEOMETRIC and faulty:
        p = getattr(cfg.variant, "p", 2.0)
        F = adversary_inputs_for_bound_test(X[[i - 1 for i in nonfaulty]], len(faulty), adversary.strategy,
                                            adversary.rng(cfg.trial, 0), p=p)
        chosen = {pid: F[j] for j, pid in enumerate(faulty)}
        world.input_oracle = chosen.__getitem__
    actual = X.copy()
    for pid in faulty:
        actual[pid - 1] = adversary.faulty_input(pid, X[pid - 1], world)
    return world, actual, faulty


def _agreement(decisions: Dict[int, Optional[np.ndarray]], pids: Sequence[int]):
    vals = [decisions.get(p) for p in pids]
    if any(v is None for v in vals):
        return False, math.inf
    if not vals:
        return True, 0.0
    first = np.ascontiguousarray(vals[0], dtype=np.float64).tobytes()
    same = all(np.ascontiguousarray(v, dtype=np.float64).tobytes() == first for v in vals)
    arr = np.array(vals)
    resid = float((arr.max(axis=0) - arr.min(axis=0)).max())
    return same, resid


class _BroadcastThenDecide:
    """Sync state machine: f+1 rounds of EIG broadcast, one compute round."""

    def __init__(self, pid, n, f, d, x, decide_fn, compute=True):
        self.eig = EIGBroadcast(pid, n, f, d, x)
        self.decide_fn = decide_fn
        self.compute = compute
        self.decision = None
        self.S = None
        self.info = None

    def send(self, rnd):
        return self.eig.send(rnd)

    def receive(self, rnd, msgs):
        self.eig.receive(rnd, msgs)
        if rnd == self.eig.rounds + 1:
            res = self.eig.result()
            self.S = np.vstack([res[i] for i in sorted(res)])
            if self.compute:
                self.decision, self.info = self.decide_fn(self.S)


def _run_broadcast_protocol(cfg, inputs, adversary, faulty, decide_fn):
    world, actual, faulty = _prepare(cfg, inputs, adversary, faulty)
    for pid in world.ids:
        world.register(pid, _BroadcastThenDecide(pid, cfg.n, cfg.f, cfg.d, actual[pid - 1], decide_fn,
                                                 compute=pid not in world.faulty))
    rounds = cfg.f + 2
    tr = run_sync(world, rounds)
    nf = world.nonfaulty
    decisions = {p: world.processes[p].state.decision for p in nf}
    infos = {p: world.processes[p].state.info for p in nf}
    N = actual[[p - 1 for p in nf]]
    return world, tr, actual, faulty, nf, decisions, infos, N, rounds


def _status(tr, decisions):
    if tr.status != "ok":
        return tr.status
    if any(v is None for v in decisions.values()):
        return "empty"
    return "ok"


# --- synchronous protocols ----------------------------------------------------------

def run_algo_sync(config: ConsensusConfig, inputs, adversary: Optional[Adversary] = None,
                  faulty: Optional[Sequence[int]] = None, keep_transcript: bool = True) -> ConsensusOutcome:
    """Broadcast all inputs, then output the minimizer of the relaxed safe region."""
    if not isinstance(config.variant, ExactDelta):
        raise ConfigurationError("run_algo_sync needs an ExactDelta variant")
    p = config.variant.p
    f = config.f

    def decide(S):
        res = delta_star(S, f, p)
        return np.array(res.argmin_point), res

    world, tr, actual, faulty, nf, decisions, infos, N, rounds = _run_broadcast_protocol(
        config, inputs, adversary, faulty, decide)
    status = _status(tr, decisions)
    agree, resid = _agreement(decisions, nf)
    if status != "ok":
        return ConsensusOutcome(decisions, rounds, math.inf, -math.inf, False, False, status,
                                faulty=faulty, inputs=actual, transcript=tr if keep_transcript else None)
    achieved = max(hull_distance(decisions[q], N, p).distance for q in nf)
    used = max(infos[q].delta_star for q in nf)
    margin = used - achieved
    return ConsensusOutcome(
        decisions, rounds, achieved, margin, agree, margin >= -VALIDITY_TOL, status, used, resid, faulty, actual,
        tr if keep_transcript else None,
        {"protocol": "algo", "norm": norm_name(p), "method": infos[nf[0]].method},
    )


def _k_violation(u, N, k):
    """Largest L-infinity distance from a k-coordinate projection of u to the projected hull."""
    d = N.shape[1]
    worst = 0.0
    for D in coordinate_subsets(d, k):
        cols = list(D)
        worst = max(worst, hull_distance(u[cols], N[:, cols], INF).distance)
    return worst


def run_k_relaxed_sync(config: ConsensusConfig, inputs, adversary: Optional[Adversary] = None,
                       faulty: Optional[Sequence[int]] = None, keep_transcript: bool = True) -> ConsensusOutcome:
    """Broadcast all inputs, then output a point of the k-relaxed safe region (or report EMPTY)."""
    if not isinstance(config.variant, ExactK):
        raise ConfigurationError("run_k_relaxed_sync needs an ExactK variant")
    k = config.variant.k
    f = config.f

    def decide(S):
        return psi_find_point(S, f, KRelaxed(k)), None

    world, tr, actual, faulty, nf, decisions, infos, N, rounds = _run_broadcast_protocol(
        config, inputs, adversary, faulty, decide)
    status = _status(tr, decisions)
    agree, resid = _agreement(decisions, nf)
    extra = {"protocol": "k_relaxed", "k": k}
    if status != "ok":
        return ConsensusOutcome(decisions, rounds, math.inf, -math.inf, False, False, status,
                                faulty=faulty, inputs=actual, transcript=tr if keep_transcript else None,
                                extra=extra)
    viol = max(_k_violation(decisions[q], N, k) for q in nf)
    valid = all(k_hull_membership(decisions[q], N, k) for q in nf)
    achieved = max(hull_distance(decisions[q], N, 2).distance for q in nf)
    return ConsensusOutcome(decisions, rounds, achieved, -viol, agree, valid, status, 0.0, resid, faulty, actual,
                            tr if keep_transcript else None, extra)


def run_scalar_per_coord(config: ConsensusConfig, inputs, adversary: Optional[Adversary] = None,
                         faulty: Optional[Sequence[int]] = None, keep_transcript: bool = True) -> ConsensusOutcome:
    """Per-coordinate scalar consensus: median of the agreed values in each coordinate."""
    def decide(S):
        return np.median(S, axis=0), None

    world, tr, actual, faulty, nf, decisions, infos, N, rounds = _run_broadcast_protocol(
        config, inputs, adversary, faulty, decide)
    status = _status(tr, decisions)
    agree, resid = _agreement(decisions, nf)
    extra = {"protocol": "scalar_per_coord"}
    if status != "ok":
        return ConsensusOutcome(decisions, rounds, math.inf, -math.inf, False, False, status,
                                faulty=faulty, inputs=actual, transcript=tr if keep_transcript else None,
                                extra=extra)
    lo, hi = N.min(axis=0), N.max(axis=0)
    excess = max(float(np.max(np.maximum(lo - decisions[q], decisions[q] - hi))) for q in nf)
    excess = max(excess, 0.0)
    achieved = max(hull_distance(decisions[q], N, 2).distance for q in nf)
    return ConsensusOutcome(decisions, rounds, achieved, -excess, agree, excess <= VALIDITY_TOL, status, 0.0, resid,
                            faulty, actual, tr if keep_transcript else None, extra)


# --- asynchronous relaxed verified averaging ----------------------------------------

def contraction_factor(n: int, f: int) -> float:
    m = n - f
    return (m - 1) / m if m > 1 else 0.0


def rounds_needed(spread: float, epsilon: float, n: int, f: int) -> int:
    """R(eps) = ceil(log(range / eps) / log(1 / alpha)), at least 1."""
    alpha = contraction_factor(n, f)
    if spread <= epsilon or alpha == 0.0:
        return 1
    return max(1, math.ceil(math.log(spread / epsilon) / math.log(1.0 / alpha)))


class RelaxedAveragingProcess:
    """Async state machine for relaxed verified averaging.

    Round-r messages carry ``{"value": v, "proof": [senders]}``.  A round-0
    value is any input; a round-r value (r >= 1) is verified only once every
    round-(r-1) value named in its proof is verified here and recomputing the
    update rule on them reproduces ``v`` bit for bit.  The update rule is a
    deterministic point of the (delta, p)-relaxed safe region for r = 0 and the
    plain average afterwards.
    """

    def __init__(self, pid, n, f, d, x, p=2.0, epsilon=1e-3, delta=None):
        self.pid, self.n, self.f, self.d = pid, n, f, d
        self.p, self.epsilon, self.fixed_delta = p, epsilon, delta
        self.x = np.asarray(x, dtype=float)
        self.rb = ReliableBroadcast(pid, n, f)
        self.verified: Dict[int, Dict[int, np.ndarray]] = {}
        self.order: Dict[int, List[int]] = {}
        self.pending: Dict[tuple, dict] = {}
        self.round = 0  # next round whose values we are collecting
        self.h: Dict[int, np.ndarray] = {}
        self.R: Optional[int] = None
        self.delta_used: Optional[float] = None
        self.decision = None
        self.failed = False

    # update rule ------------------------------------------------------------
    def _update(self, X: np.ndarray, r: int):
        """Return (value, delta) or (None, None) when the round-0 region is empty."""
        if r > 0:
            return X.mean(axis=0), None
        if self.fixed_delta is None:
            res = delta_star(X, self.f, self.p)
            return np.array(res.argmin_point), res.delta_star
        pt = psi_find_point(X, self.f, DeltaRelaxed(self.fixed_delta, self.p))
        return (None, None) if pt is None else (pt, self.fixed_delta)

    def _vector(self, value):
        try:
            v = np.asarray(value, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            return None
        return v if v.size == self.d and np.all(np.isfinite(v)) else None

    def _try_verify(self, origin, r, body) -> Optional[bool]:
        """True/False once decidable, None while waiting on referenced values."""
        v = self._vector(body.get("value"))
        if v is None:
            return False
        if r == 0:
            return True
        proof = body.get("proof")
        if not isinstance(proof, list) or len(proof) != self.n - self.f:
            return False
        try:
            proof = [int(q) for q in proof]
        except (TypeError, ValueError):
            return False
        if proof != sorted(set(proof)) or not all(1 <= q <= self.n for q in proof):
            return False
        prev = self.verified.get(r - 1, {})
        if not all(q in prev for q in proof):
            return None
        expect, _ = self._update(np.vstack([prev[q] for q in proof]), r - 1)
        return expect is not None and expect.tobytes() == v.tobytes()

    def _verify_all(self):
        progress = True
        while progress:
            progress = False
            for key in sorted(self.pending):
                origin, r = key
                verdict = self._try_verify(origin, r, self.pending[key])
                if verdict is None:
                    continue
                body = self.pending.pop(key)
                if verdict:
                    self.verified.setdefault(r, {})[origin] = self._vector(body["value"])
                    self.order.setdefault(r, []).append(origin)
                    progress = True

    def _advance(self):
        out = []
        quota = self.n - self.f
        while not self.failed and len(self.order.get(self.round, ())) >= quota:
            r = self.round
            proof = sorted(self.order[r][:quota])
            X = np.vstack([self.verified[r][q] for q in proof])
            value, delta = self._update(X, r)
            if value is None:
                self.failed = True
                break
            self.h[r] = value
            if r == 0:
                self.delta_used = delta
                spread = float((X.max(axis=0) - X.min(axis=0)).max()) + 2.0 * delta
                self.R = rounds_needed(spread, self.epsilon, self.n, self.f)
            if r == self.R and self.decision is None:
                self.decision = value
            self.round = r + 1
            out += self.rb.broadcast(r + 1, {"value": value.tolist(), "proof": proof})
        return out

    def start(self):
        return self.rb.broadcast(0, {"value": self.x.tolist(), "proof": []})

    def on_message(self, msg):
        out, delivered = self.rb.handle(msg)
        for origin, r, body in delivered:
            self.pending[(origin, r)] = body
        if delivered:
            self._verify_all()
            out += self._advance()
        return out


def run_relaxed_verified_averaging_async(config: ConsensusConfig, inputs, adversary: Optional[Adversary] = None,
                                         faulty: Optional[Sequence[int]] = None, max_events: int = 2_000_000,
                                         keep_transcript: bool = True) -> ConsensusOutcome:
    """Asynchronous (delta, p)-relaxed approximate vector consensus."""
    v = config.variant
    if not isinstance(v, AsyncDelta):
        raise ConfigurationError("run_relaxed_verified_averaging_async needs an AsyncDelta variant")
    world, actual, faulty = _prepare(config, inputs, adversary, faulty)
    for pid in world.ids:
        world.register(pid, RelaxedAveragingProcess(pid, config.n, config.f, config.d, actual[pid - 1],
                                                    v.p, v.epsilon, v.delta))
    nf = world.nonfaulty

    def done(w):
        return all(w.processes[q].state.decision is not None or w.processes[q].state.failed for q in nf)

    tr = run_async(world, config.seed, max_events=max_events, until=done)
    states = {q: world.processes[q].state for q in nf}
    decisions = {q: (None if s.decision is None else np.asarray(s.decision)) for q, s in states.items()}
    extra = {"protocol": "relaxed_verified_averaging", "norm": norm_name(v.p), "epsilon": v.epsilon,
             "rounds_per_process": {str(q): s.R for q, s in states.items()}}
    status = tr.status
    if status == "ok" and any(s.failed for s in states.values()):
        status = "empty"
    elif status == "ok" and any(d is None for d in decisions.values()):
        status = "liveness_failure"
    rounds = max((s.R or 0) for s in states.values())
    if status != "ok":
        return ConsensusOutcome(decisions, rounds, math.inf, -math.inf, False, False, status,
                                faulty=faulty, inputs=actual, transcript=tr if keep_transcript else None,
                                extra=extra)
    N = actual[[q - 1 for q in nf]]
    arr = np.array([decisions[q] for q in nf])
    resid = float((arr.max(axis=0) - arr.min(axis=0)).max())
    achieved = max(hull_distance(decisions[q], N, v.p).distance for q in nf)
    used = max(s.delta_used for s in states.values())
    margin = used - achieved
    return ConsensusOutcome(decisions, rounds, achieved, margin, resid <= v.epsilon, margin >= -VALIDITY_TOL,
                            status, used, resid, faulty, actual, tr if keep_transcript else None, extra)


def run_protocol(config: ConsensusConfig, inputs, adversary=None, faulty=None, **kw) -> ConsensusOutcome:
    """Dispatch on the configuration's variant."""
    v = config.variant
    if isinstance(v, ExactDelta):
        return run_algo_sync(config, inputs, adversary, faulty, **kw)
    if isinstance(v, ExactK):
        return run_k_relaxed_sync(config, inputs, adversary, faulty, **kw)
    if isinstance(v, ScalarPerCoord):
        return run_scalar_per_coord(config, inputs, adversary, faulty, **kw)
    if isinstance(v, AsyncDelta):
        return run_relaxed_verified_averaging_async(config, inputs, adversary, faulty, **kw)
    raise UsageError(f"unknown protocol variant {v!r}")
