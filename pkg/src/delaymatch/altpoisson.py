"""Alternating exponential digestion of a two-color timeline.

A *coloring* assigns each instant of a window [t0, t0+gamma) one of color 1,
color 2, or no color, piecewise-constantly.  The alternation process starts
at T_0 = t0 and runs iterations j = 1, 2, ...: iteration j draws an
independent Exp(lambda) threshold Z_j and consumes ("digests") the volume of
color i time (i = 1 for odd j, 2 for even j) from T_{j-1} onward; it ends at

    T_j = max { t <= t0+gamma : volume_i(T_{j-1}, t) <= Z_j },

i.e. at the instant the accumulated color-i volume first exceeds Z_j, pushed
right across any zero-volume stretch.  An iteration with T_j < t0+gamma is
*meaningful*; N counts meaningful iterations (once T_j hits the window end,
all later iterations are stuck there).  G_j is the volume digested by
iteration j, including the final unfinished iteration's partial digest.

Exact laws verified by the test-suite (and checkable via `verify_digestion`):

* conditional digest:  E[G_j | T_{j-1} = t]  =  (1/lambda) (1 - e^{-lambda V})
  with V the remaining color volume, so in particular for iteration 1;
* digest identity:     E[sum_j G_j]  =  E[N] / lambda;
* alternation count:   N <= K+1 surely (K = color discontinuity count), and
  N is stochastically dominated by 1 + 2 Pois(lambda * min(V1, V2)).

The rate-varying form replaces the unit-rate exponential clock by an
inhomogeneous one with piecewise-constant rate profile bounded by a cap;
lower rates only lengthen iterations, so the conditional-digest law becomes
an inequality (>=) against the cap's closed form.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

from .errors import ConfigInvalid, InstanceLoadError, InvariantViolation, RateAboveCap

__all__ = [
    "Coloring",
    "AppRealization",
    "AppReport",
    "volume",
    "closed_form_digest",
    "simulate_app",
    "simulate_rate_varying",
    "verify_digestion",
    "load_coloring",
    "dump_coloring",
]

Color = int | None


class Coloring:
    """Piecewise-constant color assignment on a finite window.

    Segments must tile [t0, t0+gamma) contiguously; adjacent segments of
    equal color are merged, so the discontinuity count K is well defined.
    """

    def __init__(self, segments: list[tuple[float, float, Color]]):
        if not segments:
            raise ConfigInvalid("coloring needs at least one segment")
        merged: list[list] = []
        prev_end = None
        for start, end, color in segments:
            if color not in (1, 2, None):
                raise ConfigInvalid(f"color must be 1, 2 or null, got {color!r}")
            if end <= start:
                raise ConfigInvalid(f"empty segment [{start},{end})")
            if prev_end is not None and start != prev_end:
                raise ConfigInvalid(f"segments not contiguous at t={start}")
            prev_end = end
            if merged and merged[-1][2] == color:
                merged[-1][1] = end
            else:
                merged.append([start, end, color])
        self.segments = tuple((s, e, c) for s, e, c in merged)
        self.t0 = self.segments[0][0]
        self.t1 = self.segments[-1][1]
        self.gamma = self.t1 - self.t0
        self.discontinuities = len(self.segments) - 1
        self._starts = [s for s, _, _ in self.segments]

    def color_at(self, t: float) -> Color:
        if not (self.t0 <= t < self.t1):
            raise ConfigInvalid(f"t={t} outside the colored window")
        i = bisect_right(self._starts, t) - 1
        return self.segments[i][2]

    def volume(self, color: int, a: float, b: float) -> float:
        """Measure of {t in [a,b) : c(t) == color}."""
        if color not in (1, 2):
            raise ConfigInvalid("volume is defined for colors 1 and 2")
        total = 0.0
        for s, e, c in self.segments:
            if c == color:
                total += max(0.0, min(e, b) - max(s, a))
        return total


def volume(coloring: Coloring, color: int, a: float, b: float) -> float:
    return coloring.volume(color, a, b)


def closed_form_digest(remaining_volume: float, lam: float) -> float:
    """E[min(Exp(lambda), V)] = (1/lambda)(1 - e^(-lambda V))."""
    return (1.0 - math.exp(-lam * remaining_volume)) / lam


@dataclass(frozen=True)
class AppRealization:
    boundaries: tuple[float, ...]   # T_1 .. T_J (last one may sit at the window end)
    digests: tuple[float, ...]      # G_1 .. G_J
    n_meaningful: int               # N
    n_odd: int                      # meaningful odd iterations  (color 1)
    n_even: int                     # meaningful even iterations (color 2)

    @property
    def total_digest(self) -> float:
        return sum(self.digests)


def _alternate(coloring: Coloring, draw_threshold, advance) -> AppRealization:
    """Common alternation loop; `advance(t_prev, color, z)` -> (T_j, G_j)."""
    boundaries: list[float] = []
    digests: list[float] = []
    t = coloring.t0
    j = 0
    while t < coloring.t1:
        j += 1
        color = 1 if j % 2 == 1 else 2
        z = draw_threshold()
        t, digested = advance(t, color, z)
        boundaries.append(t)
        digests.append(digested)
    n = sum(1 for b in boundaries if b < coloring.t1)
    n_odd = sum(1 for k, b in enumerate(boundaries) if b < coloring.t1 and k % 2 == 0)
    n_even = n - n_odd
    if not (n_even <= n_odd <= n_even + 1):
        raise InvariantViolation("odd/even alternation counts out of balance")
    return AppRealization(
        boundaries=tuple(boundaries),
        digests=tuple(digests),
        n_meaningful=n,
        n_odd=n_odd,
        n_even=n_even,
    )


def simulate_app(
    coloring: Coloring, lam: float, rng: np.random.Generator
) -> AppRealization:
    """One realization of the alternation process at constant rate lambda."""
    if lam <= 0:
        raise ConfigInvalid("rate must be positive")

    def advance(t_prev: float, color: int, z: float) -> tuple[float, float]:
        digested = 0.0
        t = t_prev
        for s, e, c in coloring.segments:
            if e <= t_prev:
                continue
            s = max(s, t_prev)
            if c == color:
                room = z - digested
                if e - s > room:
                    return s + room, z
                digested += e - s
            t = e
        return t, digested  # window exhausted mid-iteration

    return _alternate(coloring, lambda: float(rng.exponential(1.0 / lam)), advance)


def simulate_rate_varying(
    coloring: Coloring,
    rate_segments: list[tuple[float, float, float]],
    cap: float,
    rng: np.random.Generator,
) -> AppRealization:
    """Alternation with a piecewise-constant clock rate bounded by `cap`.

    Iteration j ends when the rate-weighted color volume since T_{j-1}
    reaches an Exp(1) threshold; the digest G_j is still the unweighted
    color volume consumed.
    """
    if cap <= 0:
        raise ConfigInvalid("rate cap must be positive")
    for s, e, r in rate_segments:
        if r < 0:
            raise ConfigInvalid(f"negative rate on [{s},{e})")
        if r > cap * (1 + 1e-12):
            raise RateAboveCap(f"rate {r} on [{s},{e}) exceeds cap {cap}")

    # refine both partitions to common pieces: (start, end, color, rate)
    cuts = sorted(
        {coloring.t0, coloring.t1}
        | {s for s, _, _ in coloring.segments}
        | {e for _, e, _ in coloring.segments}
        | {x for s, e, _ in rate_segments for x in (s, e)}
    )
    cuts = [c for c in cuts if coloring.t0 <= c <= coloring.t1]

    def rate_at(t: float) -> float:
        for s, e, r in rate_segments:
            if s <= t < e:
                return r
        raise ConfigInvalid(f"rate profile does not cover t={t}")

    pieces = []
    for a, b in zip(cuts, cuts[1:]):
        pieces.append((a, b, coloring.color_at(a), rate_at(a)))

    def advance(t_prev: float, color: int, z: float) -> tuple[float, float]:
        weighted = 0.0
        digested = 0.0
        t = t_prev
        for s, e, c, r in pieces:
            if e <= t_prev:
                continue
            s = max(s, t_prev)
            if c == color:
                if r > 0 and (e - s) * r > z - weighted:
                    dt = (z - weighted) / r
                    return s + dt, digested + dt
                weighted += (e - s) * r
                digested += e - s
            t = e
        return t, digested

    return _alternate(coloring, lambda: float(rng.exponential(1.0)), advance)


@dataclass(frozen=True)
class AppReport:
    trials: int
    lam: float
    identity_rel_error: float        # | lam*mean(G) - mean(N) | / mean(N)
    first_digest_rel_error: float    # iteration-1 mean digest vs closed form
    count_bound_violations: int      # realizations with N > K+1
    dominance_ok: bool               # empirical CDF of N below 1+2*Pois CDF
    dominance_margin: float          # min over k of allowed - observed tail

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "lam": self.lam,
            "identity_rel_error": self.identity_rel_error,
            "first_digest_rel_error": self.first_digest_rel_error,
            "count_bound_violations": self.count_bound_violations,
            "dominance_ok": self.dominance_ok,
            "dominance_margin": self.dominance_margin,
        }


def verify_digestion(
    coloring: Coloring, lam: float, trials: int, rng: np.random.Generator
) -> AppReport:
    """Monte-Carlo check of the digestion laws on one coloring."""
    totals = np.empty(trials)
    firsts = np.empty(trials)
    counts = np.empty(trials, dtype=int)
    for i in range(trials):
        r = simulate_app(coloring, lam, rng)
        totals[i] = r.total_digest
        firsts[i] = r.digests[0] if r.digests else 0.0
        counts[i] = r.n_meaningful

    mean_n = float(counts.mean())
    mean_g = float(totals.mean())
    if mean_n == 0.0:
        identity_err = abs(lam * mean_g)
    else:
        identity_err = abs(lam * mean_g - mean_n) / mean_n

    v1 = coloring.volume(1, coloring.t0, coloring.t1)
    expected_first = closed_form_digest(v1, lam)
    if expected_first == 0.0:
        first_err = abs(float(firsts.mean()))
    else:
        first_err = abs(float(firsts.mean()) - expected_first) / expected_first

    k = coloring.discontinuities
    violations = int((counts > k + 1).sum())

    v2 = coloring.volume(2, coloring.t0, coloring.t1)
    mu = lam * min(v1, v2)
    margin = math.inf
    ok = True
    for level in range(0, int(counts.max(initial=0)) + 2):
        observed = float((counts >= level).mean())
        # P(1 + 2*Pois(mu) >= level) = P(Pois(mu) >= ceil((level-1)/2))
        need = math.ceil((level - 1) / 2)
        allowed = float(_sps.poisson.sf(need - 1, mu)) if need > 0 else 1.0
        slack = 3.0 * math.sqrt(max(allowed * (1 - allowed), 0.0) / trials)
        margin = min(margin, allowed + slack - observed)
        if observed > allowed + slack:
            ok = False
    return AppReport(
        trials=trials,
        lam=lam,
        identity_rel_error=identity_err,
        first_digest_rel_error=first_err,
        count_bound_violations=violations,
        dominance_ok=ok,
        dominance_margin=margin,
    )


def load_coloring(path: str) -> Coloring:
    """Read a coloring from JSON: [{"start","end","color"}], color 1|2|null."""
    try:
        with open(path) as fh:
            rows = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceLoadError(f"cannot read coloring {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise InstanceLoadError("coloring file must hold a JSON array")
    try:
        segs = [(float(r["start"]), float(r["end"]), r["color"]) for r in rows]
    except (TypeError, KeyError) as exc:
        raise InstanceLoadError(f"bad coloring row: {exc}") from exc
    return Coloring(segs)


def dump_coloring(coloring: Coloring, path: str) -> None:
    rows = [{"start": s, "end": e, "color": c} for s, e, c in coloring.segments]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")
