"""Requests, schedules, and the cost model.

A request is a (point, arrival-time) pair.  Serving two requests together at
time t >= both arrivals costs their connection distance (space) plus the two
waiting times (t - t1) + (t - t2).  With a penalty parameter p a request may
instead be cleared at time t >= its arrival for p plus its waiting time.

Arrival times within one request set must be pairwise distinct; generators
jitter coincident arrivals by ~1e-9 before handing sets to the loader.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    DoubleService,
    InstanceLoadError,
    MatchBeforeArrival,
    OddRequestSet,
    OutOfDomain,
    UncoveredRequest,
    UnknownLocation,
)
from .metric import MetricSpace

__all__ = [
    "Request",
    "Schedule",
    "CostBreakdown",
    "make_requests",
    "pair_cost",
    "total_cost",
    "load_requests",
    "dump_requests",
    "dump_schedule",
]


@dataclass(frozen=True)
class Request:
    id: int
    point: str
    t: float


@dataclass(frozen=True)
class Schedule:
    """A complete service plan: matched pairs and (optionally) clears."""

    pairings: tuple[tuple[int, int, float], ...]  # (id1, id2, match_time)
    clears: tuple[tuple[int, float], ...] = ()    # (id, clear_time)


@dataclass(frozen=True)
class CostBreakdown:
    space: float
    time: float
    penalty: float

    @property
    def total(self) -> float:
        return self.space + self.time + self.penalty


def make_requests(
    space: MetricSpace,
    arrivals: Sequence[tuple[str, float]],
    require_even: bool = True,
) -> tuple[Request, ...]:
    """Validate and freeze a request sequence (sorted by arrival)."""
    reqs = []
    for i, (point, t) in enumerate(arrivals):
        if point not in space.index:
            raise UnknownLocation(f"request {i} at unknown point {point!r}")
        reqs.append(Request(id=i, point=point, t=float(t)))
    times = sorted(r.t for r in reqs)
    for a, b in zip(times, times[1:]):
        if a == b:
            raise InstanceLoadError(f"coincident arrival times t={a}; jitter the input")
    if require_even and len(reqs) % 2 != 0:
        raise OddRequestSet(f"{len(reqs)} requests; matching needs an even count")
    return tuple(sorted(reqs, key=lambda r: (r.t, r.id)))


def pair_cost(
    space: MetricSpace, r1: Request, r2: Request, t: float
) -> tuple[float, float]:
    """(space, time) cost of serving r1, r2 together at time t."""
    if t < r1.t or t < r2.t:
        raise MatchBeforeArrival(
            f"match of ({r1.id},{r2.id}) at t={t} precedes an arrival"
        )
    d = space.distance(r1.point, r2.point)
    return d, float(t - r1.t) + float(t - r2.t)


def total_cost(
    space: MetricSpace,
    requests: Sequence[Request],
    schedule: Schedule,
    penalty_p: float | None = None,
) -> CostBreakdown:
    """Cost of a schedule; every request must be served exactly once."""
    by_id = {r.id: r for r in requests}
    seen: set[int] = set()

    def claim(rid: int) -> Request:
        if rid not in by_id:
            raise UncoveredRequest(f"schedule references unknown request {rid}")
        if rid in seen:
            raise DoubleService(f"request {rid} served twice")
        seen.add(rid)
        return by_id[rid]

    space_cost = 0.0
    time_cost = 0.0
    penalty_cost = 0.0
    for id1, id2, t in schedule.pairings:
        r1, r2 = claim(id1), claim(id2)
        d, w = pair_cost(space, r1, r2, t)
        space_cost += d
        time_cost += w
    for rid, t in schedule.clears:
        if penalty_p is None:
            raise OutOfDomain("schedule contains clears but no penalty was given")
        r = claim(rid)
        if t < r.t:
            raise MatchBeforeArrival(f"clear of {rid} at t={t} precedes its arrival")
        penalty_cost += penalty_p
        time_cost += float(t - r.t)
    missing = set(by_id) - seen
    if missing:
        raise UncoveredRequest(f"requests never served: {sorted(missing)}")
    return CostBreakdown(space=space_cost, time=time_cost, penalty=penalty_cost)


def load_requests(space: MetricSpace, path: str, require_even: bool = True):
    """Read requests from JSON: [{"point": name, "t": time}, ...]."""
    try:
        with open(path) as fh:
            rows = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceLoadError(f"cannot read requests {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise InstanceLoadError("requests file must hold a JSON array")
    try:
        arrivals = [(row["point"], float(row["t"])) for row in rows]
    except (TypeError, KeyError) as exc:
        raise InstanceLoadError(f"bad request row: {exc}") from exc
    return make_requests(space, arrivals, require_even=require_even)


def dump_requests(requests: Iterable[Request], path: str) -> None:
    rows = [{"point": r.point, "t": r.t} for r in sorted(requests, key=lambda r: r.id)]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")


def dump_schedule(schedule: Schedule, path: str) -> None:
    """CSV rows: `id1,id2,match_time` for pairings, `id,clear_time` for clears."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for id1, id2, t in schedule.pairings:
            w.writerow([id1, id2, repr(t)])
        for rid, t in schedule.clears:
            w.writerow([rid, repr(t)])
