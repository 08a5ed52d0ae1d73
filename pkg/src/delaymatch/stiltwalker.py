"""Event-driven continuous-time matching engine on a weighted binary tree.

State model.  Each leaf hosts at most one active (arrived, unserved) request:
a request arriving at a leaf that already hosts one is matched with it on the
spot at zero connection cost.  A vertex is *odd* at time t when the number of
active requests in its subtree is odd.  Odd vertices form vertex-disjoint
downward paths ("stilts"): an odd internal vertex has exactly one odd child,
so each maximal odd path runs from a head down to a single odd leaf, its
foot.  A vertex is *effective* when both its children are odd, i.e. both
children are stilt heads; its two supporting leaves are those stilts' feet.

Timers.  Every internal vertex v owns a budget B_v, drawn at engine start and
redrawn after every match across v: exponential with mean w(v) in randomized
mode, exactly w(v) in deterministic mode.  The budget is consumed at unit
rate only while v is effective and is frozen, not redrawn, when v stops being
effective.  When it hits zero the two supporting requests of v are matched
across v, paying the tree distance w(v); parities of v and all its ancestors
are unchanged by such a match (one active leaves each child side), so other
effective vertices and their feet are undisturbed.

End of input.  With `flush=True` the engine stops at the last arrival time
t_end and matches across every effective vertex at once (by increasing
depth); stilt heads pair up as siblings, so this clears every remaining
active request.  The flush space cost is hard-asserted against the
(#points / 2) * w(root) ceiling.  With `flush=False` the engine keeps running
past t_end with the same timers until no active request remains.

Determinism.  Each internal vertex draws from its own named RNG stream keyed
by (master seed, vertex id), so runs are bit-for-bit reproducible and the
timers of one subtree can be varied while all other streams stay fixed.
Simultaneous events are ordered: arrivals first (by request id), then vertex
timers by (depth, vertex id); vertex ids are depth-sorted, so plain id order
implements that rule.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Request, Schedule
from .embedding import Hsbt
from .errors import (
    InvariantViolation,
    NotEffective,
    OddRequestSet,
    UnknownLocation,
)

__all__ = [
    "TimerMode",
    "StiltState",
    "EngineEvent",
    "EngineTrace",
    "EngineRun",
    "Engine",
    "recompute_state",
    "run",
    "vertex_streams",
]


class TimerMode(enum.Enum):
    EXPONENTIAL = "exponential"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class StiltState:
    """Snapshot of the stilt decomposition at one instant."""

    odd: frozenset[int]
    heads: frozenset[int]
    stilts: tuple[tuple[int, int], ...]          # (head, foot), sorted by head
    effective: tuple[tuple[int, int, int], ...]  # (vertex, foot1, foot2), sorted


def recompute_state(tree: Hsbt, active_leaves: Sequence[int]) -> StiltState:
    """Derive odd set, stilts, heads and effective vertices from scratch."""
    parity = [0] * len(tree)
    for leaf in active_leaves:
        v = leaf
        while v >= 0:
            parity[v] ^= 1
            v = tree.parent[v]
    odd = frozenset(v for v in range(len(tree)) if parity[v])

    def foot(v: int) -> int:
        while not tree.is_leaf(v):
            kids = [c for c in tree.children[v] if parity[c]]
            if len(kids) != 1:
                raise InvariantViolation("odd vertex without a unique odd child")
            v = kids[0]
        return v

    heads = frozenset(
        v for v in odd if tree.parent[v] < 0 or tree.parent[v] not in odd
    )
    stilts = tuple(sorted((h, foot(h)) for h in heads))
    effective = []
    for v in range(len(tree)):
        kids = tree.children[v]
        if len(kids) == 2 and parity[kids[0]] and parity[kids[1]]:
            effective.append((v, foot(kids[0]), foot(kids[1])))
    return StiltState(
        odd=odd, heads=heads, stilts=stilts, effective=tuple(sorted(effective))
    )


@dataclass(frozen=True)
class EngineEvent:
    t: float
    kind: str                      # arrival | same_leaf | match | flush
    vertex: int | None             # matched-across vertex, or the leaf itself
    requests: tuple[int, ...]      # request ids involved
    odd_after: frozenset[int]
    effective_after: tuple[int, ...]


@dataclass
class EngineTrace:
    events: list[EngineEvent] = field(default_factory=list)
    t_end: float = 0.0
    c_end_space: float = 0.0       # connection cost paid by the final flush
    flushed: bool = False

    def to_jsonl(self, path: str) -> None:
        with open(path, "w") as fh:
            for e in self.events:
                row: dict = {"t": e.t, "kind": e.kind}
                if e.vertex is not None:
                    row["vertex"] = e.vertex
                if e.requests:
                    row["requests"] = list(e.requests)
                fh.write(json.dumps(row) + "\n")


@dataclass
class EngineRun:
    schedule: Schedule
    trace: EngineTrace
    # per-vertex ledgers over the whole run (equals [0, t_end) when flushed):
    # effective time and connection cost deposited by non-flush matches
    tau: np.ndarray
    sigma: np.ndarray


def vertex_streams(tree: Hsbt, seed: int) -> list[np.random.Generator]:
    """One independent named stream per vertex, keyed by (seed, vertex id)."""
    return [
        np.random.default_rng(np.random.SeedSequence((seed, v)))
        for v in range(len(tree))
    ]


class Engine:
    """Stepwise form of the matching process; `run()` drives it to the end."""

    def __init__(
        self,
        tree: Hsbt,
        requests: Sequence[Request],
        mode: TimerMode = TimerMode.EXPONENTIAL,
        seed: int = 0,
        vertex_seed_fn: Callable[[int], object] | None = None,
    ):
        self.tree = tree
        self.mode = mode
        self.requests = sorted(requests, key=lambda r: (r.t, r.id))
        if len(self.requests) % 2 != 0:
            raise OddRequestSet("engine needs an even number of requests")
        for r in self.requests:
            if r.point not in tree.point_leaf:
                raise UnknownLocation(f"request {r.id} at {r.point!r} not a tree leaf")
        self.leaf_of = {r.id: tree.point_leaf[r.point] for r in self.requests}

        if vertex_seed_fn is None:
            streams = vertex_streams(tree, seed)
        else:
            # vertex_seed_fn maps a vertex id to the full entropy key of its
            # stream, letting callers alias streams across vertices (the
            # two-copies penalty construction keys mirrored vertices alike)
            streams = [
                np.random.default_rng(np.random.SeedSequence(vertex_seed_fn(v)))
                for v in range(len(tree))
            ]
        self.streams = streams
        n_v = len(tree)
        self.budget = np.zeros(n_v)
        for v in range(n_v):
            if not tree.is_leaf(v):
                self.budget[v] = self._draw(v)

        self.parity = [0] * n_v
        self.active_at: dict[int, int] = {}  # leaf -> request id
        self.effective: list[int] = []       # sorted vertex ids
        self.now = 0.0
        self.arrival_index = 0
        self.tau = np.zeros(n_v)
        self.sigma = np.zeros(n_v)
        self.trace = EngineTrace()
        self.pairings: list[tuple[int, int, float]] = []
        self.t_end = self.requests[-1].t if self.requests else 0.0
        self.trace.t_end = self.t_end

    def _draw(self, v: int) -> float:
        w = self.tree.weight[v]
        if self.mode is TimerMode.DETERMINISTIC:
            return w
        return float(self.streams[v].exponential(scale=w))

    # -- state maintenance ----------------------------------------------------

    def state(self) -> StiltState:
        return recompute_state(self.tree, sorted(self.active_at))

    def _flip_path(self, leaf: int) -> None:
        v = leaf
        while v >= 0:
            self.parity[v] ^= 1
            v = self.tree.parent[v]

    def _refresh_effective(self) -> None:
        t = self.tree
        self.effective = [
            v
            for v in range(len(t))
            if len(t.children[v]) == 2
            and self.parity[t.children[v][0]]
            and self.parity[t.children[v][1]]
        ]

    def _foot(self, v: int) -> int:
        t = self.tree
        while not t.is_leaf(v):
            kids = [c for c in t.children[v] if self.parity[c]]
            if len(kids) != 1:
                raise InvariantViolation("odd vertex without a unique odd child")
            v = kids[0]
        return v

    def _supporting(self, v: int) -> tuple[int, int]:
        c1, c2 = self.tree.children[v]
        return self._foot(c1), self._foot(c2)

    def _advance(self, t: float) -> None:
        t = float(t)
        dt = t - self.now
        if dt < 0:
            raise InvariantViolation("time went backwards")
        if dt:
            for v in self.effective:
                self.budget[v] -= dt
                self.tau[v] += dt
        self.now = t

    def _record(self, kind: str, vertex, requests) -> EngineEvent:
        ev = EngineEvent(
            t=self.now,
            kind=kind,
            vertex=vertex,
            requests=tuple(requests),
            odd_after=frozenset(v for v in range(len(self.tree)) if self.parity[v]),
            effective_after=tuple(self.effective),
        )
        self.trace.events.append(ev)
        return ev

    # -- event handlers ---------------------------------------------------------

    def _handle_arrival(self, req: Request) -> EngineEvent:
        leaf = self.leaf_of[req.id]
        partner = self.active_at.pop(leaf, None)
        if partner is not None:
            # zero-distance match; the standing active vanishes, so the
            # leaf's path parity flips exactly once
            self.pairings.append((partner, req.id, self.now))
            self._flip_path(leaf)
            self._refresh_effective()
            return self._record("same_leaf", leaf, (partner, req.id))
        self.active_at[leaf] = req.id
        self._flip_path(leaf)
        self._refresh_effective()
        return self._record("arrival", leaf, (req.id,))

    def match_across(self, v: int, kind: str = "match") -> EngineEvent:
        """Match the two supporting requests of effective vertex v at `now`."""
        if v not in self.effective:
            raise NotEffective(f"vertex {v} is not effective at t={self.now}")
        f1, f2 = self._supporting(v)
        r1 = self.active_at.pop(f1)
        r2 = self.active_at.pop(f2)
        self.pairings.append((r1, r2, self.now))
        self._flip_path(f1)
        self._flip_path(f2)
        if kind != "flush":
            self.sigma[v] += self.tree.weight[v]
        self.budget[v] = self._draw(v)
        self._refresh_effective()
        return self._record(kind, v, (r1, r2))

    # -- stepping -----------------------------------------------------------------

    def advance_to_next_event(self) -> EngineEvent | None:
        """Advance to and process the next event; None when nothing remains.

        The next event is the earlier of the next arrival and the earliest
        effective-vertex expiry; at equal times the arrival wins, and tied
        timers fire shallowest-lowest-id first.
        """
        next_arrival = (
            self.requests[self.arrival_index].t
            if self.arrival_index < len(self.requests)
            else None
        )
        fire_v, fire_t = None, None
        for v in self.effective:  # ascending ids == (depth, index) order
            cand = self.now + self.budget[v]
            if fire_t is None or cand < fire_t:
                fire_v, fire_t = v, cand
        if next_arrival is not None and (fire_t is None or next_arrival <= fire_t):
            self._advance(next_arrival)
            req = self.requests[self.arrival_index]
            self.arrival_index += 1
            return self._handle_arrival(req)
        if fire_t is None:
            if self.active_at:
                raise InvariantViolation(
                    "stuck: active requests but no effective vertex"
                )
            return None
        self._advance(fire_t)
        return self.match_across(fire_v)

    def flush_now(self) -> None:
        """Match across every effective vertex at the current instant.

        Supporting pairs of distinct effective vertices are disjoint and
        matching across one leaves the others effective, so a single pass by
        increasing depth clears every remaining active request.
        """
        self.trace.flushed = True
        c_end = 0.0
        for v in sorted(self.effective):
            if v in self.effective:
                self.match_across(v, kind="flush")
                c_end += self.tree.weight[v]
        if self.active_at:
            raise InvariantViolation("flush left active requests behind")
        n_pts = len(self.tree.leaf_point)
        ceiling = (n_pts / 2.0) * self.tree.weight[self.tree.root]
        if c_end > ceiling * (1 + 1e-12):
            raise InvariantViolation(f"flush space {c_end} exceeds ceiling {ceiling}")
        self.trace.c_end_space = c_end

    def run(self, flush: bool = True) -> EngineRun:
        while True:
            if (
                flush
                and self.arrival_index == len(self.requests)
                and not self.trace.flushed
            ):
                self.flush_now()
                break
            ev = self.advance_to_next_event()
            if ev is None:
                break
        schedule = Schedule(pairings=tuple(self.pairings))
        return EngineRun(
            schedule=schedule, trace=self.trace, tau=self.tau, sigma=self.sigma
        )


def run(
    tree: Hsbt,
    requests: Sequence[Request],
    mode: TimerMode = TimerMode.EXPONENTIAL,
    seed: int = 0,
    flush: bool = True,
    vertex_seed_fn: Callable[[int], object] | None = None,
) -> EngineRun:
    """Run the matching engine; returns schedule, trace and potential ledgers.

    `vertex_seed_fn`, when given, maps each vertex id to the entropy key of
    its timer stream (used to vary one subtree's timers while freezing all
    other streams, or to alias streams across mirrored vertices).
    """
    return Engine(tree, requests, mode, seed, vertex_seed_fn).run(flush=flush)
