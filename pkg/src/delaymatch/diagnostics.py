"""Potential ledgers, exact cost identities, and phase partitions.

Everything here is pure analysis over an engine trace, an offline schedule
and the tree; nothing re-runs the engine.  The central quantities, per
internal vertex v with children u1, u2 (D(t) is the set of odd-count
vertices under the online evolution, D*(t) under the offline schedule):

    tau_v        time v spends effective (both children odd) online
    sigma_v      w(v) x number of non-flush online matches across v
    tau_star_v   integral of 1(u1 in D*) + 1(u2 in D*)
    sigma_star_v w(v) x number of offline matches across or on top of v
    zeta         integral of 1(root in D) -- equal for both evolutions,
                 since both serve requests in pairs after arrival

Two exact accounting identities tie them to the tree-metric cost of the
online run (space = sum of lca weights, time = total waiting):

    (a)  space cost  = c_end + sum_v sigma_v
    (b)  time  cost  = zeta + 2 sum_v tau_v

(a) holds because every match across v connects its feet at tree distance
w(v) and c_end collects exactly the flush matches.  (b) holds because the
number of waiting requests always equals 1(root odd) + 2 |effective set|:
odd vertices form disjoint root-free downward paths (stilts), one per
waiting request, and each stilt head is either the root or one of the two
odd children of an effective vertex.

The offline run obeys one-sided counterparts:

    (c)  time  cost >= (zeta + sum_v tau_star_v) / (height + 1)
    (d)  space cost >= (alpha - 1) / alpha x sum_v sigma_star_v

(c): every odd vertex lies on a stilt with at most height+1 vertices, one
stilt per waiting request.  (d): a match with lca u deposits w(u) plus two
downward weight chains, each geometrically dominated by w(u) / (alpha - 1);
the gate uses the single-chain constant (alpha-1)/alpha, and the report also
carries the margin for the two-chain constant (alpha-1)/(alpha+1), which is
the one the deposit structure actually guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CostBreakdown, Request, Schedule
from .embedding import Hsbt
from .errors import IdentityViolation, InvariantViolation, OutOfDomain, TraceMismatch
from .stiltwalker import Engine, EngineTrace, TimerMode

__all__ = [
    "PotentialLedger",
    "IdentityReport",
    "PhasePartition",
    "SigmaTauReport",
    "track_potentials",
    "verify_cost_identities",
    "partition_phases",
    "monte_carlo_sigma_tau",
]


# ---------------------------------------------------------------------------
# trace utilities
# ---------------------------------------------------------------------------

def _trace_arrivals(trace: EngineTrace) -> dict[int, tuple[float, int]]:
    """request id -> (arrival time, leaf), pulled from arrival-kind events."""
    arrivals: dict[int, tuple[float, int]] = {}
    for e in trace.events:
        if e.kind == "arrival":
            arrivals[e.requests[0]] = (e.t, e.vertex)
        elif e.kind == "same_leaf":
            # the newcomer was matched on the spot and never held the leaf
            first, second = e.requests
            arrivals.setdefault(first, (e.t, e.vertex))
            arrivals[second] = (e.t, e.vertex)
    return arrivals


def _replay_offline(
    tree: Hsbt,
    arrivals: dict[int, tuple[float, int]],
    offline: Schedule,
) -> tuple[list[tuple[float, float, frozenset[int]]], list[tuple[float, int, int, int]]]:
    """Evolve the odd-vertex set D* under the offline schedule.

    Returns piecewise-constant segments (start, end, odd set) covering
    [first event, last event], and the match records (t, leaf1, leaf2, lca).
    """
    if offline.clears:
        raise TraceMismatch("offline replay handles pure matching schedules only")
    events: list[tuple[float, int, tuple]] = []
    for rid, (t, leaf) in arrivals.items():
        events.append((t, 0, (leaf,)))
    served: set[int] = set()
    for a, b, t in offline.pairings:
        if a not in arrivals or b not in arrivals:
            raise TraceMismatch(f"offline pairing ({a},{b}) names unknown requests")
        if a in served or b in served or a == b:
            raise TraceMismatch(f"offline pairing ({a},{b}) serves a request twice")
        served.update((a, b))
        ta, la = arrivals[a]
        tb, lb = arrivals[b]
        if t < ta or t < tb:
            raise TraceMismatch(f"offline match ({a},{b}) at t={t} precedes arrival")
        events.append((t, 1, (la, lb)))
    if served != set(arrivals):
        raise TraceMismatch("offline schedule leaves some requests unserved")
    events.sort(key=lambda e: (e[0], e[1]))

    parity = [0] * len(tree)

    def flip(leaf: int) -> None:
        v = leaf
        while v >= 0:
            parity[v] ^= 1
            v = tree.parent[v]

    segments: list[tuple[float, float, frozenset[int]]] = []
    matches: list[tuple[float, int, int, int]] = []
    now = events[0][0] if events else 0.0
    for t, _, payload in events:
        if t > now:
            segments.append(
                (now, t, frozenset(v for v in range(len(tree)) if parity[v]))
            )
            now = t
        if len(payload) == 1:
            flip(payload[0])
        else:
            la, lb = payload
            if la != lb:
                flip(la)
                flip(lb)
            matches.append((t, la, lb, tree.lca(la, lb)))
    if any(parity):
        raise TraceMismatch("offline replay ended with odd vertices left over")
    return segments, matches


def _deposit_star(tree: Hsbt, sigma_star: np.ndarray, la: int, lb: int, u: int) -> None:
    """w(v) into every internal vertex the match (la, lb) crosses or tops."""
    sigma_star[u] += tree.weight[u]
    for leaf in (la, lb):
        v = tree.parent[leaf]
        while v >= 0 and v != u:
            sigma_star[v] += tree.weight[v]
            v = tree.parent[v]


def _star_ledgers(
    tree: Hsbt,
    arrivals: dict[int, tuple[float, int]],
    offline: Schedule,
) -> tuple[np.ndarray, np.ndarray]:
    """Offline ledgers tau*, sigma* from a replay of the offline schedule."""
    n_v = len(tree)
    tau_star = np.zeros(n_v)
    sigma_star = np.zeros(n_v)
    segments, matches = _replay_offline(tree, arrivals, offline)
    internal = [v for v in range(n_v) if not tree.is_leaf(v)]
    for a, b, odd in segments:
        dt = b - a
        for v in internal:
            u1, u2 = tree.children[v]
            tau_star[v] += dt * ((u1 in odd) + (u2 in odd))
    for t, la, lb, u in matches:
        if la != lb:
            _deposit_star(tree, sigma_star, la, lb, u)
    return tau_star, sigma_star


# ---------------------------------------------------------------------------
# potential ledgers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialLedger:
    tau: np.ndarray
    sigma: np.ndarray
    tau_star: np.ndarray
    sigma_star: np.ndarray
    zeta: float
    c_end: float
    t_end: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau.tolist(),
            "sigma": self.sigma.tolist(),
            "tau_star": self.tau_star.tolist(),
            "sigma_star": self.sigma_star.tolist(),
            "zeta": self.zeta,
            "c_end": self.c_end,
            "t_end": self.t_end,
        }


def track_potentials(
    tree: Hsbt, trace: EngineTrace, offline: Schedule
) -> PotentialLedger:
    """Exact ledgers by piecewise-constant integration between trace events."""
    n_v = len(tree)
    tau = np.zeros(n_v)
    sigma = np.zeros(n_v)
    zeta = 0.0
    c_end = 0.0

    prev_t = 0.0
    prev_eff: tuple[int, ...] = ()
    root_odd = False
    for e in trace.events:
        dt = e.t - prev_t
        if dt < 0:
            raise TraceMismatch("trace events out of order")
        for v in prev_eff:
            tau[v] += dt
        if root_odd:
            zeta += dt
        if e.kind in ("match", "same_leaf"):
            sigma[e.vertex] += tree.weight[e.vertex]
        elif e.kind == "flush":
            c_end += tree.weight[e.vertex]
        prev_t = e.t
        prev_eff = e.effective_after
        root_odd = tree.root in e.odd_after
    if abs(c_end - trace.c_end_space) > 1e-9 * max(1.0, trace.c_end_space):
        raise TraceMismatch(
            f"flush cost {c_end} disagrees with trace summary {trace.c_end_space}"
        )

    arrivals = _trace_arrivals(trace)
    tau_star, sigma_star = _star_ledgers(tree, arrivals, offline)

    return PotentialLedger(
        tau=tau,
        sigma=sigma,
        tau_star=tau_star,
        sigma_star=sigma_star,
        zeta=zeta,
        c_end=c_end,
        t_end=trace.t_end,
    )


# ---------------------------------------------------------------------------
# cost identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityReport:
    residual_space: float       # identity (a), relative
    residual_time: float        # identity (b), relative
    time_bound_margin: float    # identity (c), absolute slack (>= 0 iff holds)
    space_bound_margin: float   # identity (d) at the gate constant
    space_bound_margin_provable: float  # (d) at the two-chain constant
    gate_constant: float
    provable_constant: float

    def to_dict(self) -> dict:
        return {
            "residual_space": self.residual_space,
            "residual_time": self.residual_time,
            "time_bound_margin": self.time_bound_margin,
            "space_bound_margin": self.space_bound_margin,
            "space_bound_margin_provable": self.space_bound_margin_provable,
            "gate_constant": self.gate_constant,
            "provable_constant": self.provable_constant,
        }


def _rel(x: float, y: float) -> float:
    return abs(x - y) / max(abs(x), abs(y), 1e-9)


def verify_cost_identities(
    tree: Hsbt,
    ledger: PotentialLedger,
    online_cost: CostBreakdown,
    offline_cost: CostBreakdown,
    rtol: float = 1e-9,
) -> IdentityReport:
    """Check the two exact identities and the two offline lower bounds.

    Costs must be measured in the tree metric.  Raises IdentityViolation
    naming the first failing check; returns the residual report otherwise.
    """
    res_a = _rel(online_cost.space, ledger.c_end + float(ledger.sigma.sum()))
    res_b = _rel(online_cost.time, ledger.zeta + 2.0 * float(ledger.tau.sum()))

    h = tree.height
    rhs_c = (ledger.zeta + float(ledger.tau_star.sum())) / (h + 1)
    margin_c = offline_cost.time - rhs_c

    gate = (tree.alpha - 1.0) / tree.alpha
    provable = (tree.alpha - 1.0) / (tree.alpha + 1.0)
    star_sum = float(ledger.sigma_star.sum())
    margin_d = offline_cost.space - gate * star_sum
    margin_d_provable = offline_cost.space - provable * star_sum

    scale = max(online_cost.total, offline_cost.total, 1.0)
    if res_a > rtol:
        raise IdentityViolation(f"space accounting off by {res_a} (relative)")
    if res_b > rtol:
        raise IdentityViolation(f"time accounting off by {res_b} (relative)")
    if margin_c < -rtol * scale:
        raise IdentityViolation(f"offline time bound violated by {-margin_c}")
    if margin_d < -rtol * scale:
        raise IdentityViolation(f"offline space bound violated by {-margin_d}")
    return IdentityReport(
        residual_space=res_a,
        residual_time=res_b,
        time_bound_margin=margin_c,
        space_bound_margin=margin_d,
        space_bound_margin_provable=margin_d_provable,
        gate_constant=gate,
        provable_constant=provable,
    )


# ---------------------------------------------------------------------------
# phases and subphases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePartition:
    vertex: int
    phases: tuple[tuple[float, float], ...]
    subphases: tuple[tuple[tuple[float, float], ...], ...]
    subphase_bits: tuple[tuple[int, ...], ...]
    phase_classes: tuple[int, ...]   # b of the phase's final subphase
    t_late: float
    discontinuities: int             # of the mismatch signal Y on [0, t_late)
    early: tuple[int, ...]           # phases contained in [0, t_late)
    late: tuple[int, ...]

    @property
    def class_0(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.phase_classes) if c == 0)

    @property
    def class_1(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.phase_classes) if c == 1)


def _merge_signal(
    pieces_a: list[tuple[float, float, int]],
    pieces_b: list[tuple[float, float, int]],
    lo: float,
    hi: float,
) -> list[tuple[float, float, int]]:
    """XOR of two piecewise-constant 0/1 signals, restricted to [lo, hi)."""
    cuts = sorted(
        {lo, hi}
        | {x for a, b, _ in pieces_a for x in (a, b) if lo < x < hi}
        | {x for a, b, _ in pieces_b for x in (a, b) if lo < x < hi}
    )

    def value(pieces: list[tuple[float, float, int]], t: float) -> int:
        for a, b, y in pieces:
            if a <= t < b:
                return y
        return 0

    out: list[tuple[float, float, int]] = []
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        y = value(pieces_a, a) ^ value(pieces_b, a)
        if out and out[-1][2] == y and out[-1][1] == a:
            out[-1] = (out[-1][0], b, y)
        else:
            out.append((a, b, y))
    return out


def partition_phases(
    tree: Hsbt, vertex: int, trace: EngineTrace, offline: Schedule
) -> PhasePartition:
    """Phase/subphase structure of one internal vertex against both runs.

    Phase boundaries are online matches on top of `vertex` (across a proper
    ancestor, removing a request from the vertex's subtree); subphase
    boundaries add offline matches across or on top of it.  The per-subphase
    bit b is the XOR of the four child parities (online and offline); its
    constancy inside every subphase is asserted.
    """
    if tree.is_leaf(vertex):
        raise OutOfDomain(f"vertex {vertex} is a leaf")
    t_end = trace.t_end
    arrivals = _trace_arrivals(trace)
    in_subtree = set(tree.subtree(vertex))
    ancestors = set(tree.ancestors(vertex))
    u1, u2 = tree.children[vertex]

    # --- phase boundaries: online matches on top of the vertex
    boundaries: list[float] = []
    for e in trace.events:
        if e.kind not in ("match", "flush") or e.vertex not in ancestors:
            continue
        if any(arrivals[r][1] in in_subtree for r in e.requests):
            if 0.0 < e.t < t_end:
                boundaries.append(e.t)
    phase_cuts = [0.0] + sorted(set(boundaries)) + [t_end]
    phases = [
        (a, b) for a, b in zip(phase_cuts, phase_cuts[1:]) if b > a
    ] or [(0.0, t_end)]

    # --- subphase boundaries: offline matches across or on top of the vertex
    segments, matches = _replay_offline(tree, arrivals, offline)
    sub_cut_times: list[float] = []
    for t, la, lb, u in matches:
        tops = (u == vertex) or (
            u in ancestors and ((la in in_subtree) != (lb in in_subtree))
        )
        if tops and 0.0 < t < t_end:
            sub_cut_times.append(t)

    # --- the four child-parity signals and their XOR
    online_pieces: list[tuple[float, float, int]] = []
    prev_t, odd = 0.0, frozenset()
    for e in trace.events:
        if e.t > prev_t:
            online_pieces.append(
                (prev_t, e.t, int(u1 in odd) ^ int(u2 in odd))
            )
            prev_t = e.t
        odd = e.odd_after
    if t_end > prev_t:
        online_pieces.append((prev_t, t_end, int(u1 in odd) ^ int(u2 in odd)))
    offline_pieces = [
        (a, b, int(u1 in odd) ^ int(u2 in odd)) for a, b, odd in segments
    ]
    y_pieces = _merge_signal(online_pieces, offline_pieces, 0.0, t_end)

    def bit_on(a: float, b: float) -> int:
        vals = {y for pa, pb, y in y_pieces if min(pb, b) > max(pa, a)}
        if len(vals) > 1:
            raise InvariantViolation(
                f"alternation bit changed inside subphase [{a},{b}) of {vertex}"
            )
        return vals.pop() if vals else 0

    subphases: list[tuple[tuple[float, float], ...]] = []
    bits: list[tuple[int, ...]] = []
    classes: list[int] = []
    for a, b in phases:
        cuts = [a] + sorted(t for t in set(sub_cut_times) if a < t < b) + [b]
        spans = tuple((x, y) for x, y in zip(cuts, cuts[1:]) if y > x)
        subphases.append(spans)
        span_bits = tuple(bit_on(x, y) for x, y in spans)
        bits.append(span_bits)
        classes.append(span_bits[-1] if span_bits else 0)

    # --- t_late: earliest t with min(remaining Y-time, remaining not-Y) <= w
    w = tree.weight[vertex]
    suffix_y = 0.0
    suffix_n = 0.0
    suffixes: list[tuple[float, float, int, float, float]] = []
    for a, b, y in reversed(y_pieces):
        suffixes.append((a, b, y, suffix_y, suffix_n))  # integrals from b on
        if y:
            suffix_y += b - a
        else:
            suffix_n += b - a
    t_late = t_end
    for a, b, y, from_b_y, from_b_n in reversed(suffixes):
        at_a_y = from_b_y + (b - a) * y
        at_a_n = from_b_n + (b - a) * (1 - y)
        if min(at_a_y, at_a_n) <= w:
            t_late = a
            break
        # only the active-color suffix integral shrinks inside this piece
        shrinking = at_a_y if y else at_a_n
        if shrinking - (b - a) <= w:
            t_late = a + (shrinking - w)
            break

    k = 0
    for (a1, b1, y1), (a2, b2, y2) in zip(y_pieces, y_pieces[1:]):
        if y1 != y2 and b1 < t_late:
            k += 1

    early = tuple(i for i, (a, b) in enumerate(phases) if b <= t_late)
    late = tuple(i for i in range(len(phases)) if i not in early)
    return PhasePartition(
        vertex=vertex,
        phases=tuple(phases),
        subphases=tuple(subphases),
        subphase_bits=tuple(bits),
        phase_classes=tuple(classes),
        t_late=t_late,
        discontinuities=k,
        early=early,
        late=late,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo stake-versus-time comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SigmaTauReport:
    trials: int
    mean_tau: np.ndarray
    mean_sigma: np.ndarray
    violations: tuple[int, ...]   # vertices with mean sigma > mean tau + 3 SE
    tau_ratio_max: float          # max_v mean tau / (tau* + sigma* + w)
    tau_ratio_ok: bool

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "mean_tau": self.mean_tau.tolist(),
            "mean_sigma": self.mean_sigma.tolist(),
            "violations": list(self.violations),
            "tau_ratio_max": self.tau_ratio_max,
            "tau_ratio_ok": self.tau_ratio_ok,
        }


def monte_carlo_sigma_tau(
    tree: Hsbt,
    requests: tuple[Request, ...],
    trials: int,
    rng: np.random.Generator,
    flush: bool = True,
    offline: Schedule | None = None,
    ratio_cap: float = 10.0,
) -> SigmaTauReport:
    """Check mean sigma_v <= mean tau_v + 3 SE per vertex over seeded runs.

    The stake deposited at a vertex is budget actually consumed there, and
    budgets burn only while the vertex is effective, so each vertex's mean
    stake cannot exceed its mean effective time.  With an offline schedule
    the report also carries the largest ratio of mean effective time to the
    offline ledger total tau*_v + sigma*_v + w(v), gated at `ratio_cap`.
    """
    n_v = len(tree)
    taus = np.zeros((trials, n_v))
    sigmas = np.zeros((trials, n_v))
    for i in range(trials):
        seed = int(rng.integers(2**62))
        run = Engine(tree, requests, mode=TimerMode.EXPONENTIAL, seed=seed).run(
            flush=flush
        )
        taus[i] = run.tau
        sigmas[i] = run.sigma
    mean_tau = taus.mean(axis=0)
    mean_sigma = sigmas.mean(axis=0)
    diff = sigmas - taus
    se = diff.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(n_v)
    violations = tuple(
        int(v)
        for v in range(n_v)
        if mean_sigma[v] > mean_tau[v] + 3.0 * se[v] + 1e-12
    )

    ratio_max = 0.0
    if offline is not None:
        arrivals = {r.id: (r.t, tree.point_leaf[r.point]) for r in requests}
        tau_star, sigma_star = _star_ledgers(tree, arrivals, offline)
        for v in range(n_v):
            if tree.is_leaf(v):
                continue
            denom = tau_star[v] + sigma_star[v] + tree.weight[v]
            ratio_max = max(ratio_max, mean_tau[v] / denom)
    return SigmaTauReport(
        trials=trials,
        mean_tau=mean_tau,
        mean_sigma=mean_sigma,
        violations=violations,
        tau_ratio_max=ratio_max,
        tau_ratio_ok=ratio_max <= ratio_cap,
    )
