"""Finite metric spaces: validation, statistics, file I/O.

Every downstream component assumes a genuine metric (symmetry, zero diagonal,
positive off-diagonal entries, triangle inequality), so the constructor here
is strict and names the offending triple on failure.  The triangle check uses
an absolute tolerance of 1e-9 * d_max to absorb float noise in computed
coordinate inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AsymmetricDistance,
    DegenerateSpace,
    InstanceLoadError,
    NegativeDistance,
    TriangleViolation,
)

TRIANGLE_RTOL = 1e-9

__all__ = [
    "MetricSpace",
    "MetricStats",
    "validate",
    "from_coords",
    "stats",
    "load_instance",
    "dump_instance",
]


@dataclass(frozen=True)
class MetricStats:
    d_min: float
    d_max: float
    aspect_ratio: float


class MetricSpace:
    """A finite metric: point names plus a validated distance matrix."""

    def __init__(self, points: Sequence[str], dist: np.ndarray):
        self.points = tuple(str(p) for p in points)
        self.dist = np.asarray(dist, dtype=float)
        self.n = len(self.points)
        self.index = {p: i for i, p in enumerate(self.points)}
        if len(self.index) != self.n:
            raise InstanceLoadError("duplicate point names")
        self._check()

    def _check(self) -> None:
        d = self.dist
        n = self.n
        if d.shape != (n, n):
            raise InstanceLoadError(
                f"distance matrix shape {d.shape} does not match {n} points"
            )
        if n == 0:
            raise DegenerateSpace("empty point set")
        if np.any(np.diag(d) != 0.0):
            i = int(np.flatnonzero(np.diag(d))[0])
            raise NegativeDistance(f"nonzero self-distance at point {self.points[i]}")
        asym = np.argwhere(d != d.T)
        if asym.size:
            i, j = (int(k) for k in asym[0])
            raise AsymmetricDistance(
                f"d({self.points[i]},{self.points[j]})={d[i, j]} != "
                f"d({self.points[j]},{self.points[i]})={d[j, i]}"
            )
        off = ~np.eye(n, dtype=bool)
        bad = (d <= 0) & off
        if np.any(bad):
            i, j = (int(k) for k in np.argwhere(bad)[0])
            raise NegativeDistance(
                f"non-positive distance d({self.points[i]},{self.points[j]})={d[i, j]}"
            )
        tol = TRIANGLE_RTOL * float(d.max(initial=0.0))
        # all (i,k,j): d[i,j] <= d[i,k] + d[k,j] + tol
        through = d[:, :, None] + d[None, :, :]  # through[i,k,j]
        slack = d[:, None, :] - through
        if np.any(slack > tol):
            i, k, j = (int(x) for x in np.argwhere(slack > tol)[0])
            raise TriangleViolation(
                f"d({self.points[i]},{self.points[j]})={d[i, j]} > "
                f"d({self.points[i]},{self.points[k]})+d({self.points[k]},{self.points[j]})"
                f"={d[i, k] + d[k, j]}"
            )

    def distance(self, a: str, b: str) -> float:
        return float(self.dist[self.index[a], self.index[b]])

    def __repr__(self) -> str:
        return f"MetricSpace(n={self.n})"


def validate(points: Sequence[str], dist) -> MetricSpace:
    """Build a MetricSpace, raising a named error on the first violation."""
    return MetricSpace(points, np.asarray(dist, dtype=float))


def from_coords(coords, points: Sequence[str] | None = None) -> MetricSpace:
    """Euclidean metric materialized from a coordinate array (n x dim)."""
    c = np.asarray(coords, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    diff = c[:, None, :] - c[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    d = 0.5 * (d + d.T)  # kill float asymmetry from the sum order
    np.fill_diagonal(d, 0.0)
    if points is None:
        points = [f"p{i}" for i in range(len(c))]
    return MetricSpace(points, d)


def stats(space: MetricSpace) -> MetricStats:
    if space.n < 2:
        raise DegenerateSpace("stats need at least two points")
    off = space.dist[~np.eye(space.n, dtype=bool)]
    d_min = float(off.min())
    d_max = float(off.max())
    return MetricStats(d_min=d_min, d_max=d_max, aspect_ratio=d_max / d_min)


def _parse_metric(obj: dict) -> MetricSpace:
    if "dist" in obj:
        pts = obj.get("points")
        if pts is None:
            pts = [f"p{i}" for i in range(len(obj["dist"]))]
        return validate(pts, obj["dist"])
    if "coords" in obj:
        return from_coords(obj["coords"], obj.get("points"))
    raise InstanceLoadError("instance needs either 'dist' or 'coords'")


def load_instance(path: str) -> MetricSpace:
    """Load a metric from JSON: {"points", "dist"} or {"coords"}."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceLoadError(f"cannot read instance {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise InstanceLoadError("instance file must hold a JSON object")
    return _parse_metric(obj)


def dump_instance(space: MetricSpace, path: str) -> None:
    obj = {"points": list(space.points), "dist": space.dist.tolist()}
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
