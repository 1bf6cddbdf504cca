"""Acceptance-rejection perfect samplers.

All four samplers share the same skeleton: draw a proposal count M from a
weight table, generate M spheres under the variant's proposal measure,
then accept with probability  indicator * likelihood-ratio / sigma(M).
Iterations are i.i.d.; a restart discards the partial configuration but
the work counters keep accumulating, which is exactly the spheres-per-
sample metric the experiment harness reports.

Every acceptance probability is checked to lie in [0, 1] before use; a
violation means a weight table failed to dominate its proposal and is
raised as StabilityViolationError rather than clamped away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SamplerTimeoutError, StabilityViolationError, UsageError
from .geometry import TORUS, Configuration, SpaceSpec, Sphere
from .radius import ConstantRadius, TiltSpec, sample_tilted, solve_tilt
from .weights import (FIXED_RADIUS_IS, GRID_IS, RANDOM_RADIUS_IS, WeightTable,
                      build_weights, optimal_eps, sample_M, sample_component)

__all__ = [
    "RunStats", "BlockedRegion1D", "GridState",
    "naive_ar", "is_ar_exact_1d", "grid_is_ar", "random_radius_is",
    "optimal_eps",
]

# Tolerance for float roundoff in acceptance probabilities; anything above
# 1 + _PARAM_TOL is a genuine stability violation, not rounding.
_PARAM_TOL = 1e-9


@dataclass
class RunStats:
    """Work counters for one perfect-sample generation."""

    spheres_generated: int = 0
    iterations: int = 0
    accepted: bool = False
    cells_touched: int = 0


def _acceptance_probability(log_ratio: float) -> float:
    p = math.exp(log_ratio)
    if p > 1.0 + _PARAM_TOL:
        raise StabilityViolationError(f"acceptance probability {p} exceeds 1")
    return min(p, 1.0)


def _verify_output(cfg: Configuration) -> Configuration:
    if not cfg.is_acceptable():
        raise StabilityViolationError("sampler returned an overlapping configuration")
    return cfg


def _check_cap(stats: RunStats, cap: Optional[int]) -> None:
    if cap is not None and stats.iterations > cap:
        raise SamplerTimeoutError(f"no acceptance within {cap} iterations")


class BlockedRegion1D:
    """Disjoint sorted blocked intervals on [0,1] (arcs on the circle).

    Supports exact complement sampling: a uniform point of the free set is
    found by walking the gaps between blocked intervals.
    """

    __slots__ = ("metric", "intervals", "total")

    def __init__(self, metric: str):
        self.metric = metric
        self.intervals: list = []
        self.total = 0.0

    def insert(self, center: float, halfwidth: float) -> None:
        if halfwidth <= 0.0:
            return
        if self.metric == TORUS:
            if 2.0 * halfwidth >= 1.0:
                pieces = [(0.0, 1.0)]
            else:
                lo = (center - halfwidth) % 1.0
                hi = lo + 2.0 * halfwidth
                pieces = [(lo, hi)] if hi <= 1.0 else [(lo, 1.0), (0.0, hi - 1.0)]
        else:
            lo = max(0.0, center - halfwidth)
            hi = min(1.0, center + halfwidth)
            pieces = [(lo, hi)] if lo < hi else []
        if not pieces:
            return
        merged = []
        for a, b in sorted(self.intervals + pieces):
            if merged and a <= merged[-1][1]:
                if b > merged[-1][1]:
                    merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        self.intervals = merged
        self.total = sum(b - a for a, b in merged)

    def sample_free(self, rng) -> Optional[float]:
        """Uniform point of the complement, or None if everything is blocked."""
        free = 1.0 - self.total
        if free <= 1e-15:
            return None
        u = rng.random() * free
        prev = 0.0
        for a, b in self.intervals:
            gap = a - prev
            if u < gap:
                break
            u -= gap
            prev = b
        x = prev + u
        return x if x < 1.0 else math.nextafter(1.0, 0.0)


class GridState:
    """Cubic grid of edge eps (1/eps integer) with blocking-cell flags.

    A cell is blocked by a sphere only when the whole cell lies strictly
    inside the blocking ball, so no acceptable center is ever excluded.
    ``blocked_count * eps**d`` is computed as an exact integer ratio.
    """

    __slots__ = ("d", "metric", "eps", "k", "size", "blocked", "blocked_count",
                 "cells_touched")

    def __init__(self, d: int, metric: str, eps: float):
        k = round(1.0 / eps)
        if abs(k * eps - 1.0) > 1e-9 or k < 1:
            raise UsageError("grid edge length must be the reciprocal of an integer")
        self.d = d
        self.metric = metric
        self.eps = 1.0 / k
        self.k = k
        self.size = k**d
        self.blocked = np.zeros(self.size, dtype=bool)
        self.blocked_count = 0
        self.cells_touched = 0

    def reset(self) -> None:
        self.blocked[:] = False
        self.blocked_count = 0

    @property
    def free_count(self) -> int:
        return self.size - self.blocked_count

    @property
    def blocked_fraction(self) -> float:
        return self.blocked_count / self.size

    def pick_free_cell(self, rng) -> Optional[int]:
        """Index of a uniformly chosen free cell, or None if all blocked."""
        fc = self.free_count
        if fc == 0:
            return None
        if 8 * fc >= self.size:
            while True:  # rejection against the blocked flags, <= 8 expected tries
                j = int(rng.integers(self.size))
                if not self.blocked[j]:
                    return j
        free = np.flatnonzero(~self.blocked)
        return int(free[rng.integers(fc)])

    def uniform_point(self, cell: int, rng) -> tuple:
        k = self.k
        idx = []
        for _ in range(self.d):
            idx.append(cell % k)
            cell //= k
        idx.reverse()
        u = rng.random(self.d)
        return tuple((i + v) * self.eps for i, v in zip(idx, u))

    def mark_ball(self, center, radius: float) -> None:
        """Block every cell lying entirely within ``radius`` of ``center``."""
        s = radius
        if s <= 0.0:
            return
        k, eps = self.k, self.eps
        axis_idx = []
        axis_farsq = []
        for a in range(self.d):
            c = center[a]
            if self.metric == TORUS:
                i0 = math.floor((c - s) * k)
                i1 = math.floor((c + s) * k)
                if i1 - i0 + 1 >= k:
                    idxs = np.arange(k)
                else:
                    idxs = np.arange(i0, i1 + 1) % k
                lo = idxs * eps
                hi = lo + eps
                wl = np.abs(c - lo) % 1.0
                dl = np.minimum(wl, 1.0 - wl)
                wh = np.abs(c - hi) % 1.0
                dh = np.minimum(wh, 1.0 - wh)
                far = np.maximum(dl, dh)
                ap = (c + 0.5) % 1.0
                far[(lo <= ap) & (ap < hi)] = 0.5
            else:
                i0 = max(0, math.floor((c - s) * k))
                i1 = min(k - 1, math.floor((c + s) * k))
                if i1 < i0:
                    return
                idxs = np.arange(i0, i1 + 1)
                lo = idxs * eps
                hi = lo + eps
                far = np.maximum(np.abs(c - lo), np.abs(c - hi))
            axis_idx.append(idxs)
            axis_farsq.append(far * far)
        ssq = axis_farsq[0]
        flat = axis_idx[0]
        for a in range(1, self.d):
            ssq = ssq[..., None] + axis_farsq[a]
            flat = flat[..., None] * k + axis_idx[a]
        mask = ssq < s * s
        self.cells_touched += mask.size
        if not mask.any():
            return
        hit = flat[mask].ravel()
        fresh = ~self.blocked[hit]
        new_cells = hit[fresh]
        self.blocked[new_cells] = True
        self.blocked_count += int(new_cells.size)


def naive_ar(space: SpaceSpec, rng,
             max_iterations: Optional[int] = None) -> tuple[Configuration, RunStats]:
    """Naive acceptance-rejection: Poisson(lam) i.i.d. spheres, restart on the
    first overlap, until a full non-overlapping configuration completes."""
    law = space.radius_law
    scale = space.scale
    d = space.d
    stats = RunStats()
    while True:
        stats.iterations += 1
        _check_cap(stats, max_iterations)
        m = int(rng.poisson(space.lam))
        cfg = Configuration.for_space(space)
        ok = True
        if m:
            centers = rng.random((m, d))
            radii = np.atleast_1d(law.sample(rng, m)) / scale
            for i in range(m):
                c = tuple(centers[i])
                stats.spheres_generated += 1
                r = float(radii[i])
                if cfg.overlaps_existing(c, r):
                    ok = False
                    break
                cfg.add(Sphere(c, r, i))
        if ok:
            stats.accepted = True
            return _verify_output(cfg), stats


def is_ar_exact_1d(space: SpaceSpec, rng,
                   table: Optional[WeightTable] = None,
                   max_iterations: Optional[int] = None) -> tuple[Configuration, RunStats]:
    """Exact non-blocking importance sampling for fixed radii in dimension 1.

    Each center is drawn uniformly over the complement of the blocked
    intervals; the accumulated free lengths give the likelihood ratio
    prod(1 - B_i) exactly.
    """
    if space.d != 1:
        raise UsageError("the exact non-blocking sampler only works in dimension 1")
    if not isinstance(space.radius_law, ConstantRadius):
        raise UsageError("the exact non-blocking sampler needs a constant radius law")
    if table is None:
        table = build_weights(space, FIXED_RADIUS_IS)
    if table.variant != FIXED_RADIUS_IS:
        raise UsageError("is_ar_exact_1d needs a fixed-radius weight table")
    r_s = space.radius_law.value / space.scale
    stats = RunStats()
    while True:
        stats.iterations += 1
        _check_cap(stats, max_iterations)
        m = sample_M(table, rng)
        if m == 0:
            stats.accepted = True
            return Configuration.for_space(space), stats
        region = BlockedRegion1D(space.metric)
        cfg = Configuration.for_space(space)
        log_like = 0.0
        ok = True
        for i in range(m):
            blocked = region.total
            c = region.sample_free(rng)
            if c is None:
                ok = False  # whole space blocked: likelihood zero
                break
            stats.spheres_generated += 1
            log_like += math.log1p(-blocked)
            cfg.add(Sphere((c,), r_s, i))
            region.insert(c, 2.0 * r_s)
        if not ok:
            continue
        p = _acceptance_probability(log_like - table.log_weights[m])
        if rng.random() < p:
            stats.accepted = True
            return _verify_output(cfg), stats


def _grid_attempt(space: SpaceSpec, table: WeightTable, rng,
                  stats: RunStats) -> tuple[bool, Optional[Configuration]]:
    """One grid-proposal iteration; returns (accepted, configuration)."""
    r_s = space.radius_law.value / space.scale
    m = sample_M(table, rng)
    stats.iterations += 1
    if m <= 1:
        cfg = Configuration.for_space(space)
        if m == 1:
            stats.spheres_generated += 1
            cfg.add(Sphere(space.uniform_center(rng), r_s, 0))
        stats.accepted = True
        return True, cfg
    grid = GridState(space.d, space.metric, table.eps[m])
    cfg = Configuration.for_space(space)
    log_like = 0.0
    try:
        for i in range(m):
            if grid.free_count == 0:
                return False, None  # likelihood zero
            cell = grid.pick_free_cell(rng)
            x = grid.uniform_point(cell, rng)
            stats.spheres_generated += 1
            if cfg.overlaps_existing(x, r_s):
                return False, None  # indicator zero, restart
            log_like += math.log1p(-grid.blocked_fraction)
            cfg.add(Sphere(x, r_s, i))
            grid.mark_ball(x, 2.0 * r_s)
    finally:
        stats.cells_touched += grid.cells_touched
    p = _acceptance_probability(log_like - table.log_weights[m])
    if rng.random() < p:
        stats.accepted = True
        return True, cfg
    return False, None


def grid_is_ar(space: SpaceSpec, rng,
               table: Optional[WeightTable] = None,
               max_iterations: Optional[int] = None) -> tuple[Configuration, RunStats]:
    """Grid-based non-blocking importance sampling for fixed radii, any d.

    Centers are proposed uniformly over non-blocking cells; exact overlap
    is re-checked after each placement since a partially covered cell can
    still admit an overlapping center.
    """
    if not isinstance(space.radius_law, ConstantRadius):
        raise UsageError("the grid sampler needs a constant radius law")
    if table is None:
        table = build_weights(space, GRID_IS)
    if table.variant != GRID_IS:
        raise UsageError("grid_is_ar needs a grid weight table")
    stats = RunStats()
    while True:
        _check_cap(stats, max_iterations)
        accepted, cfg = _grid_attempt(space, table, rng, stats)
        if accepted:
            return _verify_output(cfg), stats


def random_radius_is(space: SpaceSpec, rng,
                     tilt: Optional[TiltSpec] = None,
                     rho: Optional[float] = None,
                     delta: float = 0.5,
                     table: Optional[WeightTable] = None,
                     max_iterations: Optional[int] = None) -> tuple[Configuration, RunStats]:
    """Two-component importance sampler for i.i.d. random radii.

    Counts below 1/delta use a plain i.i.d. proposal.  Above it, component
    1 draws all radii from the base law and requires the leading volume
    prefix to average at least rho; component 2 draws the prefix from the
    exponentially twisted law (typical for small volumes) and carries the
    per-draw likelihood factors.  Centers always go uniformly into the
    non-blocking region, exactly in dimension 1 and through a grid above.
    """
    law = space.radius_law
    d = space.d
    if tilt is None:
        if rho is None:
            rho = 0.5 * law.mean_pow(d)
        tilt = solve_tilt(law, d, rho)
    if table is None:
        table = build_weights(space, RANDOM_RADIUS_IS, tilt=tilt, delta=delta)
    if table.variant != RANDOM_RADIUS_IS:
        raise UsageError("random_radius_is needs a random-radius weight table")
    delta = table.delta
    scale = space.scale
    inv_d = 1.0 / d
    stats = RunStats()

    while True:
        stats.iterations += 1
        _check_cap(stats, max_iterations)
        m = sample_M(table, rng)

        if m * delta <= 1.0:
            # plain i.i.d. proposal, acceptance = overlap indicator
            cfg = Configuration.for_space(space)
            ok = True
            for i in range(m):
                s = space.sample_sphere(rng, i)
                stats.spheres_generated += 1
                if cfg.overlaps_existing(s.center, s.radius):
                    ok = False
                    break
                cfg.add(s)
            if ok:
                stats.accepted = True
                return _verify_output(cfg), stats
            continue

        j = sample_component(table, m, rng)
        k = int(m * delta)
        if j == 1:
            r_draws = np.atleast_1d(law.sample(rng, m)).astype(float)
            x_prefix = r_draws[:k] ** d
        else:
            x_prefix = np.atleast_1d(sample_tilted(tilt, law, d, rng, k)).astype(float)
            tail = np.atleast_1d(law.sample(rng, m - k)).astype(float)
            r_draws = np.concatenate([x_prefix**inv_d, tail])
        in_h = float(np.mean(x_prefix)) >= tilt.rho
        if in_h != (j == 1):
            continue  # proposal fell outside its partition cell

        scaled = r_draws / scale
        cfg = Configuration.for_space(space)
        log_like = 0.0
        ok = True
        if d == 1:
            for i in range(m):
                region = BlockedRegion1D(space.metric)
                for sph in cfg.spheres:
                    region.insert(sph.center[0], sph.radius + scaled[i])
                c = region.sample_free(rng)
                if c is None:
                    ok = False
                    break
                stats.spheres_generated += 1
                log_like += math.log1p(-region.total)
                cfg.add(Sphere((c,), float(scaled[i]), i))
        else:
            grid = GridState(d, space.metric, table.eps[m])
            for i in range(m):
                grid.reset()
                for sph in cfg.spheres:
                    grid.mark_ball(sph.center, sph.radius + scaled[i])
                if grid.free_count == 0:
                    ok = False
                    break
                cell = grid.pick_free_cell(rng)
                x = grid.uniform_point(cell, rng)
                stats.spheres_generated += 1
                if cfg.overlaps_existing(x, float(scaled[i])):
                    ok = False
                    break
                log_like += math.log1p(-grid.blocked_fraction)
                cfg.add(Sphere(x, float(scaled[i]), i))
            stats.cells_touched += grid.cells_touched
        if not ok:
            continue

        log_num = log_like
        if j == 2:
            # product of dF/dF~ factors over the twisted prefix
            log_num += float(-tilt.theta_hat * x_prefix.sum()
                             + k * tilt.log_mgf_at_theta_hat)
        log_den = table.log_w1[m] if j == 1 else table.log_w2[m]
        p = _acceptance_probability(log_num - log_den)
        if rng.random() < p:
            stats.accepted = True
            return _verify_output(cfg), stats
