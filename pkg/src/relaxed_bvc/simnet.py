"""Deterministic simulated network.

Two schedulers drive per-process state machines:

* :func:`run_sync` -- lock-step rounds; every message sent in round r is
  delivered at the end of round r.
* :func:`run_async` -- one delivery per step, chosen by a seeded PRNG, with a
  bounded-overtaking fairness rule: no message is overtaken by more than
  ``window`` (default n^2) messages enqueued after it.

State machines expose:

    sync:   send(rnd) -> [(dst, tag, payload)],  receive(rnd, [Message])
    async:  start() -> [(dst, tag, payload)],    on_message(Message) -> [...]

plus a ``decision`` attribute (``None`` until decided).  Byzantine behaviour is
injected only by rewriting the outgoing traffic of faulty processes
(:class:`Adversary`).

Transcripts are JSON-lines, one event per line::

    {"tick": int, "kind": "SEND"|"DELIVER"|"DECIDE", "src": int, "dst": int,
     "tag": str, "payload": ..., "seq": int}

``tick`` is the round number (sync) or the number of deliveries so far (async);
``seq`` numbers messages in enqueue order (``-1`` for DECIDE events, whose
``src``/``dst`` are both the deciding process and whose payload is the decision).
"""
from __future__ import annotations

import heapq
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError

SEND, DELIVER, DECIDE = "SEND", "DELIVER", "DECIDE"

HONEST = "HONEST"
CRASH = "CRASH"
ECHO_GARBAGE = "ECHO_GARBAGE"
EQUIVOCATE = "EQUIVOCATE"
SCRIPTED = "SCRIPTED"
OPTIMIZED_GEOMETRIC = "OPTIMIZED_GEOMETRIC"
ADVERSARY_KINDS = (HONEST, CRASH, ECHO_GARBAGE, EQUIVOCATE, SCRIPTED, OPTIMIZED_GEOMETRIC)


def make_rng(seed: int, trial: int = 0, pid: int = 0) -> np.random.Generator:
    """PCG64 stream for (experiment seed, trial index, process id)."""
    if min(seed, trial, pid) < 0:
        raise UsageError("seed, trial and process id must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, pid])))


def jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    return x


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Message:
    src: int
    dst: int
    tag: str
    payload: Any
    enqueue_time: int
    seq: int


@dataclass
class ProcessRecord:
    pid: int
    faulty: bool
    state: Any = None


@dataclass
class Transcript:
    events: List[tuple] = field(default_factory=list)  # (tick, kind, src, dst, tag, payload, seq)
    status: str = "ok"
    error: Optional[str] = None
    ticks: int = 0

    def records(self) -> List[dict]:
        keys = ("tick", "kind", "src", "dst", "tag", "payload", "seq")
        return [dict(zip(keys, (e[0], e[1], e[2], e[3], e[4], jsonable(e[5]), e[6]))) for e in self.events]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records())

    def write(self, path: str) -> None:
        atomic_write_text(path, self.to_jsonl())

    def of_kind(self, kind: str) -> List[tuple]:
        return [e for e in self.events if e[1] == kind]


def max_overtaking(transcript: Transcript) -> int:
    """Largest number of later-enqueued messages delivered while a message was pending."""
    pending = {}  # seq -> overtakes so far
    worst = 0
    for e in transcript.events:
        if e[1] == SEND:
            pending[e[6]] = 0
        elif e[1] == DELIVER:
            s = e[6]
            worst = max(worst, pending.pop(s))
            for q in pending:
                if q < s:
                    pending[q] += 1
    return max([worst] + list(pending.values()))


# --- adversary --------------------------------------------------------------

def _map_values(payload, fn):
    """Apply fn to every ``"value"`` entry inside a (nested) record."""
    if isinstance(payload, dict):
        return {k: (fn(v) if k == "value" else _map_values(v, fn)) for k, v in payload.items()}
    if isinstance(payload, list):
        return [_map_values(v, fn) for v in payload]
    return payload


@dataclass
class Adversary:
    """Controls the outgoing traffic (and, for bound tests, the inputs) of faulty processes.

    kind: one of ADVERSARY_KINDS.
    crash_tick: CRASH -- faulty processes send nothing at ticks >= crash_tick.
    rules: SCRIPTED -- ``{"input": vector, "messages": {(tick, dst): value},
        "drop": {(tick, dst), ...}}``; a faulty process otherwise follows the
        protocol faithfully.
    strategy: OPTIMIZED_GEOMETRIC -- input strategy for
        :func:`adversary_inputs_for_bound_test`.
    """

    kind: str = HONEST
    seed: int = 0
    crash_tick: int = 0
    rules: Dict[str, Any] = field(default_factory=dict)
    strategy: str = "optimized"
    garbage_scale: float = 1e3

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise UsageError(f"unknown adversary kind {self.kind!r}; choose from {ADVERSARY_KINDS}")

    def rng(self, trial: int, pid: int) -> np.random.Generator:
        return make_rng(self.seed, trial, 10_000 + pid)

    def faulty_input(self, pid: int, nominal, world: "World"):
        """Input a faulty process runs the protocol with."""
        if self.kind == SCRIPTED and "input" in self.rules:
            value = self.rules["input"]
            if isinstance(value, dict):
                value = value.get(pid, nominal)
            return np.asarray(value, dtype=float)
        if self.kind == OPTIMIZED_GEOMETRIC and world.input_oracle is not None:
            return world.input_oracle(pid)
        return nominal

    def filter(self, world: "World", src: int, tick: int, sends):
        if self.kind in (HONEST, OPTIMIZED_GEOMETRIC):
            return sends
        if self.kind == CRASH:
            return [] if tick >= self.crash_tick else sends
        rng = world.adversary_rng
        out = []
        for dst, tag, payload in sends:
            if self.kind == ECHO_GARBAGE:
                def fn(v):
                    shape = np.shape(v)
                    g = rng.uniform(-self.garbage_scale, self.garbage_scale, size=shape)
                    return g.tolist() if shape else float(g)
                payload = _map_values(payload, fn)
            elif self.kind == EQUIVOCATE:
                if dst % 2 == 0:
                    payload = _map_values(payload, lambda v: (np.asarray(v, dtype=float) + 1.0 + 2.0 * np.abs(v)).tolist())
            elif self.kind == SCRIPTED:
                if (tick, dst) in self.rules.get("drop", ()):
                    continue
                msgs = self.rules.get("messages", {})
                if (tick, dst) in msgs:
                    value = msgs[(tick, dst)]
                    payload = _map_values(payload, lambda v: value)
            out.append((dst, tag, payload))
        return out


# --- world ------------------------------------------------------------------

class World:
    """Processes 1..n, the faulty subset, and the adversary controlling it."""

    def __init__(self, n: int, faulty: Iterable[int] = (), adversary: Optional[Adversary] = None,
                 seed: int = 0, trial: int = 0):
        if n < 1:
            raise ConfigurationError("need at least one process")
        self.n = n
        self.faulty = frozenset(int(i) for i in faulty)
        if not self.faulty <= set(range(1, n + 1)):
            raise ConfigurationError(f"faulty ids {sorted(self.faulty)} outside 1..{n}")
        self.adversary = adversary or Adversary()
        self.seed = seed
        self.trial = trial
        self.processes: Dict[int, ProcessRecord] = {
            pid: ProcessRecord(pid, pid in self.faulty) for pid in range(1, n + 1)
        }
        self.adversary_rng = self.adversary.rng(trial, 0)
        self.input_oracle: Optional[Callable[[int], np.ndarray]] = None
        self.observed: List[Message] = []  # full network visibility for the adversary

    @property
    def ids(self) -> range:
        return range(1, self.n + 1)

    @property
    def nonfaulty(self) -> List[int]:
        return [i for i in self.ids if i not in self.faulty]

    def rng(self, pid: int) -> np.random.Generator:
        return make_rng(self.seed, self.trial, pid)

    def register(self, pid: int, state) -> None:
        self.processes[pid].state = state

    def decisions(self) -> Dict[int, Any]:
        return {pid: rec.state.decision for pid, rec in self.processes.items()
                if rec.state is not None and rec.state.decision is not None}

    def _outgoing(self, pid, tick, sends):
        if pid in self.faulty:
            return self.adversary.filter(self, pid, tick, sends)
        return sends


def _check_dst(world, dst):
    if dst not in world.processes:
        raise UsageError(f"message to unknown process {dst}")


def run_sync(world: World, rounds: int) -> Transcript:
    """Run ``rounds`` lock-step rounds over the registered state machines."""
    tr = Transcript()
    decided = set()
    seq = 0
    try:
        for rnd in range(1, rounds + 1):
            inbox: Dict[int, List[Message]] = {pid: [] for pid in world.ids}
            for pid in world.ids:
                sends = world._outgoing(pid, rnd, world.processes[pid].state.send(rnd))
                for dst, tag, payload in sends:
                    _check_dst(world, dst)
                    m = Message(pid, dst, tag, payload, rnd, seq)
                    seq += 1
                    tr.events.append((rnd, SEND, pid, dst, tag, payload, m.seq))
                    inbox[dst].append(m)
                    world.observed.append(m)
            for pid in world.ids:
                for m in inbox[pid]:
                    tr.events.append((rnd, DELIVER, m.src, pid, m.tag, m.payload, m.seq))
                world.processes[pid].state.receive(rnd, inbox[pid])
            for pid in world.ids:
                dec = world.processes[pid].state.decision
                if dec is not None and pid not in decided:
                    decided.add(pid)
                    tr.events.append((rnd, DECIDE, pid, pid, "decide", dec, -1))
            tr.ticks = rnd
    except Exception as exc:  # a state machine failure is a trial failure, transcript attached
        tr.status = "protocol_error"
        tr.error = f"{type(exc).__name__}: {exc}"
    return tr


def all_nonfaulty_decided(world: World) -> bool:
    return all(world.processes[p].state.decision is not None for p in world.nonfaulty)


def run_async(world: World, seed: int, max_events: int = 1_000_000,
              until: Optional[Callable[[World], bool]] = all_nonfaulty_decided,
              window: Optional[int] = None) -> Transcript:
    """Deliver messages one at a time in a seeded random order.

    Fairness: a message is never overtaken by more than ``window`` (default
    n^2) later-enqueued messages; when the oldest pending message reaches that
    budget it is delivered next.  Stops when ``until(world)`` holds, when no
    message is pending, or (status ``liveness_failure``) after ``max_events``
    deliveries.
    """
    rng = make_rng(seed, world.trial, 0)
    W = world.n ** 2 if window is None else int(window)
    tr = Transcript()
    msgs: Dict[int, Message] = {}
    pending: List[int] = []  # seqs, random access
    where: Dict[int, int] = {}
    heap: List[int] = []
    over = np.zeros(1024, dtype=np.int64)
    decided = set()
    state = {"seq": 0}
    tick = 0

    def enqueue(pid, sends):
        nonlocal over
        for dst, tag, payload in world._outgoing(pid, tick, sends):
            _check_dst(world, dst)
            s = state["seq"]
            state["seq"] += 1
            m = Message(pid, dst, tag, payload, tick, s)
            msgs[s] = m
            where[s] = len(pending)
            pending.append(s)
            heapq.heappush(heap, s)
            if s >= over.size:
                over = np.concatenate([over, np.zeros(over.size, dtype=np.int64)])
            tr.events.append((tick, SEND, pid, dst, tag, payload, s))
            world.observed.append(m)

    def note_decisions(pid):
        dec = world.processes[pid].state.decision
        if dec is not None and pid not in decided:
            decided.add(pid)
            tr.events.append((tick, DECIDE, pid, pid, "decide", dec, -1))

    try:
        for pid in world.ids:
            enqueue(pid, world.processes[pid].state.start())
            note_decisions(pid)
        while True:
            if until is not None and until(world):
                break
            if not pending:
                break
            if tick >= max_events:
                tr.status = "liveness_failure"
                tr.error = f"no termination within {max_events} deliveries"
                break
            oldest = heap[0]
            if over[oldest] >= W:
                s = oldest
            else:
                s = pending[int(rng.integers(len(pending)))]
            # remove s from the pending structures
            i = where.pop(s)
            last = pending.pop()
            if last != s:
                pending[i] = last
                where[last] = i
            while heap and heap[0] not in where:
                heapq.heappop(heap)
            if heap and heap[0] < s:
                over[heap[0]:s] += 1
            m = msgs.pop(s)
            tick += 1
            tr.events.append((tick, DELIVER, m.src, m.dst, m.tag, m.payload, s))
            enqueue(m.dst, world.processes[m.dst].state.on_message(m))
            note_decisions(m.dst)
    except Exception as exc:
        tr.status = "protocol_error"
        tr.error = f"{type(exc).__name__}: {exc}"
    tr.ticks = tick
    return tr


def check_containment(transcript: Transcript, pids: Sequence[int], make_state: Callable[[int], Any],
                      synchronous: bool) -> List[int]:
    """Re-execute each listed process from the transcript; return pids whose
    recorded sends differ from what their state machine emits."""
    bad = []
    norm = lambda x: json.dumps(jsonable(x), sort_keys=True)
    for pid in pids:
        st = make_state(pid)
        sent = [(e[3], e[4], norm(e[5])) for e in transcript.events if e[1] == SEND and e[2] == pid]
        expected = []
        if synchronous:
            for rnd in range(1, transcript.ticks + 1):
                expected += [(d, t, norm(p)) for d, t, p in st.send(rnd)]
                inbox = [Message(e[2], pid, e[4], e[5], rnd, e[6]) for e in transcript.events
                         if e[1] == DELIVER and e[3] == pid and e[0] == rnd]
                st.receive(rnd, inbox)
        else:
            expected += [(d, t, norm(p)) for d, t, p in st.start()]
            for e in transcript.events:
                if e[1] == DELIVER and e[3] == pid:
                    m = Message(e[2], pid, e[4], e[5], e[0], e[6])
                    expected += [(d, t, norm(p)) for d, t, p in st.on_message(m)]
        if expected != sent:
            bad.append(pid)
    return bad


# --- adversarial inputs for bound experiments -----------------------------------

INPUT_STRATEGIES = ("far", "duplicate", "zero", "counterexample", "optimized")


def _candidate_inputs(N, count, strategy, rng):
    N = np.asarray(N, dtype=float)
    m, d = N.shape
    center = N.mean(axis=0)
    diffs = N[:, None, :] - N[None, :, :]
    e_max = float(np.sqrt((diffs ** 2).sum(axis=2)).max()) or 1.0
    if strategy == "far":
        v = rng.standard_normal((count, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return center + 100.0 * e_max * v
    if strategy == "duplicate":
        return N[rng.integers(m, size=count)].copy()
    if strategy == "zero":
        return np.repeat(N[:1], count, axis=0)
    if strategy == "counterexample":
        gamma = float(np.abs(N).max()) or 1.0
        return np.full((count, d), -gamma)
    raise UsageError(f"unknown input strategy {strategy!r}; choose from {INPUT_STRATEGIES}")


def adversary_inputs_for_bound_test(S_nonfaulty, f: int, strategy: str = "optimized", rng=None,
                                    p=2, candidates: int = 6) -> np.ndarray:
    """Faulty input vectors meant to push delta* up (an f x d array).

    ``optimized`` evaluates candidate sets built from the other strategies plus
    reflections of non-faulty points through their centroid, and keeps the one
    with the largest delta* of the combined multiset.
    """
    from .deltastar import delta_star  # local import: simnet stays geometry-free otherwise

    rng = rng if rng is not None else make_rng(0)
    N = np.asarray(S_nonfaulty, dtype=float)
    if f == 0:
        return np.zeros((0, N.shape[1]))
    if strategy != "optimized":
        return _candidate_inputs(N, f, strategy, rng)
    center = N.mean(axis=0)
    pool = [
        _candidate_inputs(N, f, "far", rng),
        _candidate_inputs(N, f, "duplicate", rng),
        _candidate_inputs(N, f, "counterexample", rng),
        2 * center - N[rng.integers(len(N), size=f)],
    ]
    while len(pool) < candidates:
        pool.append(center + (N[rng.integers(len(N), size=f)] - center) * rng.uniform(1.0, 3.0, size=(f, 1)))
    best, best_val = pool[0], -1.0
    for F in pool:
        val = delta_star(np.vstack([N, F]), f, p).delta_star
        if val > best_val:
            best, best_val = F, val
    return best
