"""Byzantine broadcast primitives.

* :class:`EIGBroadcast` -- synchronous oral-messages broadcast OM(f) in its
  exponential-information-gathering form: f+1 relay rounds, then bottom-up
  strict-majority resolution with default 0.0.  Every process is the commander
  of its own instance.  A vector is carried as d independent scalar instances
  that share message envelopes; resolution is done coordinate by coordinate,
  so the layer is dimension-agnostic.
* :class:`ReliableBroadcast` -- Bracha's asynchronous reliable broadcast
  (INIT / ECHO / READY) for any number of instances keyed by (origin, id).

Both are components meant to be embedded in a protocol state machine; they
return outgoing ``(dst, tag, payload)`` triples and never touch the network.

Wire records (JSON-able dicts):

    EIG  tag "EIG/<round>"   {"records": [{"inst": c, "label": [c, j1, ...], "value": [...]}, ...]}
    RB   tag "RB/<phase>"    {"origin": s, "id": k, "body": {...}}   phase in INIT, ECHO, READY
"""
from __future__ import annotations

import json
import math
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError


def require_resilience(n: int, f: int) -> None:
    if f < 0 or n < 1:
        raise ConfigurationError(f"invalid process counts n={n}, f={f}")
    if n <= 3 * f:
        raise ConfigurationError(
            f"n={n} <= 3f={3 * f}: Byzantine agreement with these guarantees is impossible unless n >= 3f+1"
        )


def echo_quorum(n: int, f: int) -> int:
    return math.ceil((n + f + 1) / 2)


def _finite_vector(value, d: int) -> Optional[np.ndarray]:
    try:
        v = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        return None
    if v.size != d or not np.all(np.isfinite(v)):
        return None
    return v


def majority_vector(values: np.ndarray) -> np.ndarray:
    """Per-coordinate strict majority on exact 64-bit patterns; 0.0 when none exists."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    k, d = values.shape
    bits = values.view(np.int64)
    out = np.zeros(d)
    same = (bits == bits[0]).all(axis=0)
    out[same] = values[0, same]
    for c in np.flatnonzero(~same):
        uniq, idx, cnt = np.unique(bits[:, c], return_index=True, return_counts=True)
        j = int(np.argmax(cnt))
        if 2 * cnt[j] > k:
            out[c] = values[idx[j], c]
    return out


class EIGBroadcast:
    """All-to-all OM(f): process ``pid`` commands the instance carrying ``value``."""

    def __init__(self, pid: int, n: int, f: int, d: int, value, ids: Optional[Iterable[int]] = None):
        require_resilience(n, f)
        self.pid, self.n, self.f, self.d = pid, n, f, d
        self.ids = list(ids) if ids is not None else list(range(1, n + 1))
        self.value = np.asarray(value, dtype=float).reshape(d)
        # vals[inst][label] -> vector; labels are tuples starting with inst
        self.vals: Dict[int, Dict[Tuple[int, ...], np.ndarray]] = {c: {} for c in self.ids}
        self.vals[pid][(pid,)] = self.value

    @property
    def rounds(self) -> int:
        return self.f + 1

    def send(self, rnd: int) -> List[tuple]:
        if not 1 <= rnd <= self.rounds:
            return []
        out = []
        me = self.pid
        if rnd == 1:
            rec = {"records": [{"inst": me, "label": [me], "value": self.value.tolist()}]}
            return [(dst, "EIG/1", rec) for dst in self.ids if dst != me]
        per_dst: Dict[int, list] = {dst: [] for dst in self.ids if dst != me}
        for inst in self.ids:
            for label, v in self.vals[inst].items():
                if len(label) != rnd - 1 or me in label:
                    continue
                rec = {"inst": inst, "label": list(label) + [me], "value": v.tolist()}
                for dst in per_dst:
                    if dst not in label:
                        per_dst[dst].append(rec)
        for dst, recs in per_dst.items():
            if recs:
                out.append((dst, f"EIG/{rnd}", {"records": recs}))
        return out

    def receive(self, rnd: int, msgs) -> None:
        if not 1 <= rnd <= self.rounds:
            return
        for m in msgs:
            if m.tag != f"EIG/{rnd}" or not isinstance(m.payload, dict):
                continue
            for rec in m.payload.get("records", ()):
                try:
                    inst = int(rec["inst"])
                    label = tuple(int(x) for x in rec["label"])
                except (KeyError, TypeError, ValueError):
                    continue
                if (inst not in self.vals or len(label) != rnd or label[0] != inst or label[-1] != m.src
                        or len(set(label)) != rnd or self.pid in label or label in self.vals[inst]):
                    continue
                v = _finite_vector(rec.get("value"), self.d)
                if v is not None:
                    self.vals[inst][label] = v

    def _resolve(self, inst: int, label: Tuple[int, ...]) -> np.ndarray:
        own = self.vals[inst].get(label)
        if own is None:
            own = np.zeros(self.d)
        if len(label) == self.f + 1:
            return own
        children = [self._resolve(inst, label + (k,)) for k in self.ids if k not in label and k != self.pid]
        return majority_vector(np.vstack(children + [own]))

    def result(self) -> Dict[int, np.ndarray]:
        """Decided vector for every instance (own instance: own value)."""
        out = {}
        for inst in self.ids:
            out[inst] = self.value.copy() if inst == self.pid else self._resolve(inst, (inst,))
        return out


def _key(body) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


class _RBInstance:
    __slots__ = ("echo", "ready", "bodies", "sent_echo", "sent_ready", "delivered")

    def __init__(self):
        self.echo: Dict[str, set] = {}
        self.ready: Dict[str, set] = {}
        self.bodies: Dict[str, dict] = {}
        self.sent_echo = False
        self.sent_ready = False
        self.delivered = False


class ReliableBroadcast:
    """Bracha reliable broadcast endpoint for process ``pid``."""

    def __init__(self, pid: int, n: int, f: int):
        require_resilience(n, f)
        self.pid, self.n, self.f = pid, n, f
        self.quorum = echo_quorum(n, f)
        self.inst: Dict[Tuple[int, int], _RBInstance] = {}

    def _all(self, phase, origin, ident, body):
        payload = {"origin": origin, "id": ident, "body": body}
        return [(dst, f"RB/{phase}", payload) for dst in range(1, self.n + 1)]

    def broadcast(self, ident: int, body: dict) -> List[tuple]:
        return self._all("INIT", self.pid, ident, body)

    def handle(self, msg) -> Tuple[List[tuple], List[Tuple[int, int, dict]]]:
        """Process one message; returns (outgoing sends, newly delivered (origin, id, body))."""
        p = msg.payload
        if not (isinstance(msg.tag, str) and msg.tag.startswith("RB/") and isinstance(p, dict)):
            return [], []
        try:
            origin, ident, body = int(p["origin"]), int(p["id"]), p["body"]
        except (KeyError, TypeError, ValueError):
            return [], []
        if not 1 <= origin <= self.n or not isinstance(body, dict):
            return [], []
        phase = msg.tag[3:]
        st = self.inst.setdefault((origin, ident), _RBInstance())
        key = _key(body)
        st.bodies.setdefault(key, body)
        out, delivered = [], []
        if phase == "INIT":
            if msg.src == origin and not st.sent_echo:
                st.sent_echo = True
                out += self._all("ECHO", origin, ident, body)
        elif phase == "ECHO":
            st.echo.setdefault(key, set()).add(msg.src)
            if len(st.echo[key]) >= self.quorum:
                if not st.sent_echo:
                    st.sent_echo = True
                    out += self._all("ECHO", origin, ident, body)
                if not st.sent_ready:
                    st.sent_ready = True
                    out += self._all("READY", origin, ident, body)
        elif phase == "READY":
            st.ready.setdefault(key, set()).add(msg.src)
            count = len(st.ready[key])
            if count >= self.f + 1 and not st.sent_ready:
                st.sent_ready = True
                out += self._all("READY", origin, ident, body)
            if count >= 2 * self.f + 1 and not st.delivered:
                st.delivered = True
                delivered.append((origin, ident, st.bodies[key]))
        return out, delivered


class RBProcess:
    """Stand-alone async state machine: reliable-broadcast one value, record deliveries."""

    def __init__(self, pid: int, n: int, f: int, value=None, ident: int = 0):
        self.rb = ReliableBroadcast(pid, n, f)
        self.value = value
        self.ident = ident
        self.delivered: Dict[Tuple[int, int], dict] = {}
        self.decision = None

    def start(self):
        if self.value is None:
            return []
        return self.rb.broadcast(self.ident, {"value": self.value})

    def on_message(self, msg):
        out, got = self.rb.handle(msg)
        for origin, ident, body in got:
            self.delivered[(origin, ident)] = body
        return out


class EIGProcess:
    """Stand-alone sync state machine: all-to-all EIG broadcast, decide the agreed vectors."""

    def __init__(self, pid: int, n: int, f: int, d: int, value):
        self.eig = EIGBroadcast(pid, n, f, d, value)
        self.decision = None

    def send(self, rnd):
        return self.eig.send(rnd)

    def receive(self, rnd, msgs):
        self.eig.receive(rnd, msgs)
        if rnd == self.eig.rounds:
            res = self.eig.result()
            self.decision = [res[i].tolist() for i in sorted(res)]
