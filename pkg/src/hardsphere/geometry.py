"""Spheres, metrics, overlap tests, and a bucket-grid spatial index.

Everything lives on the unit cube [0,1]^d, either with the plain Euclidean
metric or with coordinate-wise wrap-around (torus).  Overlap is strict:
two spheres overlap iff the center distance is less than the sum of their
radii, so a tangent pair does not overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Optional, Sequence

from .errors import UsageError
from .radius import RadiusLaw

EUCLIDEAN = "euclidean"
TORUS = "torus"
METRICS = (EUCLIDEAN, TORUS)

#: smallest bucket resolution used by the spatial index
_MIN_CELL_WIDTH = 1.0 / 64.0


def gamma_d(d: int) -> float:
    """Volume of the d-dimensional unit ball."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def sphere_volume(d: int, a: float) -> float:
    """Volume of a d-ball of radius a."""
    if d < 1 or a <= 0:
        raise UsageError("sphere_volume needs d >= 1 and a > 0")
    return gamma_d(d) * a**d


def gamma_prime(d: int, metric: str) -> float:
    """Guaranteed blocked-volume coefficient per sphere.

    On the torus a sphere always contributes its full volume; a Euclidean
    sphere anchored in a cube corner contributes only the 1/2**d fraction
    that stays inside the cube.
    """
    if metric == TORUS:
        return gamma_d(d)
    if metric == EUCLIDEAN:
        return gamma_d(d) / 2.0**d
    raise UsageError(f"unknown metric {metric!r}")


def _wrap1(delta: float) -> float:
    delta = abs(delta)
    delta %= 1.0
    return min(delta, 1.0 - delta)


def dist_sq(metric: str, x: Sequence[float], y: Sequence[float]) -> float:
    """Squared distance between two points (no dimension validation)."""
    s = 0.0
    if metric == TORUS:
        for a, b in zip(x, y):
            w = _wrap1(a - b)
            s += w * w
    else:
        for a, b in zip(x, y):
            w = a - b
            s += w * w
    return s


def distance(metric: str, x: Sequence[float], y: Sequence[float]) -> float:
    """L2 distance, wrap-around per coordinate under the torus metric."""
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}")
    if len(x) != len(y):
        raise UsageError(f"dimension mismatch: {len(x)} vs {len(y)}")
    return math.sqrt(dist_sq(metric, x, y))


@dataclass(frozen=True)
class Sphere:
    """A marked point: center in [0,1)^d and an already-scaled radius."""

    center: tuple
    radius: float
    id: int = 0


def overlaps(s1: Sphere, s2: Sphere, metric: str) -> bool:
    """True iff the two (open) spheres intersect."""
    rr = s1.radius + s2.radius
    return dist_sq(metric, s1.center, s2.center) < rr * rr


@dataclass(frozen=True)
class SpaceSpec:
    """A model instance: dimension, metric, intensity, radius scaling law.

    Spheres carry radius R / lam**eta with R drawn from ``radius_law``.
    On the torus the scaled radius may not exceed half the cube (an open
    sphere of radius exactly 1/2 still cannot wrap onto itself); the
    Euclidean model only needs spheres no larger than the cube.
    """

    d: int
    metric: str
    lam: float
    eta: float
    radius_law: RadiusLaw

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise UsageError("dimension must be a positive integer")
        if self.metric not in METRICS:
            raise UsageError(f"unknown metric {self.metric!r}")
        if not self.lam > 0:
            raise UsageError("intensity lam must be positive")
        if not self.eta > 0:
            raise UsageError("radius exponent eta must be positive")
        r_max_scaled = self.radius_law.r_max / self.lam**self.eta
        if self.metric == TORUS:
            # a torus sphere must not wrap onto itself
            if not r_max_scaled <= 0.5:
                raise UsageError("torus model needs lam**eta >= 2*r_max")
        elif not r_max_scaled <= 1.0:
            raise UsageError("Euclidean model needs lam**eta >= r_max")

    @property
    def scale(self) -> float:
        """Radius divisor lam**eta."""
        return self.lam**self.eta

    @property
    def max_scaled_radius(self) -> float:
        return self.radius_law.r_max / self.scale

    def uniform_center(self, rng) -> tuple:
        return tuple(rng.random(self.d))

    def sample_sphere(self, rng, sid: int = 0) -> Sphere:
        """One fresh marked point: uniform center, radius R/lam**eta."""
        center = tuple(rng.random(self.d))
        return Sphere(center, float(self.radius_law.sample(rng)) / self.scale, sid)


class Configuration:
    """A finite multiset of spheres with a bucket-grid index.

    The bucket width is at least twice the largest scaled radius, so any
    pair of overlapping spheres sits in the same or adjacent buckets and a
    query over the 3^d neighborhood can never miss an overlap.
    """

    __slots__ = ("metric", "k", "spheres", "_cells")

    def __init__(self, metric: str, resolution: int = 1):
        self.metric = metric
        self.k = max(1, int(resolution))
        self.spheres: list[Sphere] = []
        self._cells: dict = {}

    @classmethod
    def for_space(cls, space: SpaceSpec) -> "Configuration":
        width = max(2.0 * space.max_scaled_radius, _MIN_CELL_WIDTH)
        return cls(space.metric, max(1, int(1.0 / width)))

    def __len__(self) -> int:
        return len(self.spheres)

    def __iter__(self) -> Iterator[Sphere]:
        return iter(self.spheres)

    def _cell(self, center) -> tuple:
        k = self.k
        return tuple(min(k - 1, int(c * k)) for c in center)

    def _neighbor_cells(self, cell) -> Iterable[tuple]:
        k = self.k
        if self.metric == TORUS:
            axes = [sorted({(i - 1) % k, i, (i + 1) % k}) for i in cell]
        else:
            axes = [range(max(0, i - 1), min(k - 1, i + 1) + 1) for i in cell]
        return product(*axes)

    def candidate_indices(self, center) -> Iterator[int]:
        """Indices of stored spheres whose bucket neighborhood covers center."""
        cells = self._cells
        for cell in self._neighbor_cells(self._cell(center)):
            got = cells.get(cell)
            if got:
                yield from got

    def overlaps_existing(self, center, radius: float) -> bool:
        metric = self.metric
        spheres = self.spheres
        for idx in self.candidate_indices(center):
            s = spheres[idx]
            rr = s.radius + radius
            if dist_sq(metric, s.center, center) < rr * rr:
                return True
        return False

    def add(self, sphere: Sphere) -> None:
        idx = len(self.spheres)
        self.spheres.append(sphere)
        self._cells.setdefault(self._cell(sphere.center), []).append(idx)

    def is_acceptable(self) -> bool:
        """True iff no pair of distinct stored spheres overlaps."""
        metric = self.metric
        spheres = self.spheres
        for i, s in enumerate(spheres):
            for j in self.candidate_indices(s.center):
                if j == i:
                    continue
                other = spheres[j]
                rr = s.radius + other.radius
                if dist_sq(metric, s.center, other.center) < rr * rr:
                    return False
        return True


def is_acceptable(config: Configuration) -> bool:
    """Module-level alias for Configuration.is_acceptable."""
    return config.is_acceptable()


def mean_nn_distance(config: Configuration) -> Optional[float]:
    """Mean nearest-neighbor center distance; None for fewer than 2 spheres."""
    n = len(config.spheres)
    if n < 2:
        return None
    metric = config.metric
    total = 0.0
    for i, s in enumerate(config.spheres):
        best = math.inf
        for j, t in enumerate(config.spheres):
            if i == j:
                continue
            dsq = dist_sq(metric, s.center, t.center)
            if dsq < best:
                best = dsq
        total += math.sqrt(best)
    return total / n
