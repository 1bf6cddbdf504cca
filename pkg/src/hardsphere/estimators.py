"""Monte Carlo estimators, goodness-of-fit testing, and experiment presets.

The cross-method comparison quantity is the average number of spheres
generated per delivered perfect sample; wall time is reported alongside
but never asserted on.  All estimators draw their randomness from
counter-derived substreams of one master seed, and replicate results are
merged in replicate order, so output is reproducible regardless of the
thread count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .dcftp import LOSS_SYSTEM, WITH_SWAPS, WITHOUT_SWAPS, dcftp_sample
from .errors import InsufficientDataError, UsageError
from .geometry import (EUCLIDEAN, TORUS, Configuration, SpaceSpec, Sphere,
                       _MIN_CELL_WIDTH)
from .radius import ConstantRadius, TwoPointRadius, solve_tilt
from .samplers import (RunStats, _grid_attempt, grid_is_ar, is_ar_exact_1d,
                       naive_ar, random_radius_is)
from .seeding import spawn_rng
from .weights import (FIXED_RADIUS_IS, GRID_IS, RANDOM_RADIUS_IS, build_weights)

SAMPLER_IDS = ("naive-ar", "is-1d", "grid-is", "rr-is",
               "dcftp-loss", "dcftp-noswap", "dcftp-swap")
AR_SAMPLER_IDS = ("naive-ar", "is-1d", "grid-is", "rr-is")
EXPERIMENT_SAMPLERS = ("naive-ar", "grid-is", "dcftp-loss", "dcftp-noswap", "dcftp-swap")


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int
    seed: int


# -- fast sequential-placement trial -----------------------------------------

def _bucket_resolution(space: SpaceSpec) -> int:
    return max(1, int(1.0 / max(2.0 * space.max_scaled_radius, _MIN_CELL_WIDTH)))


def _trial_acceptable(metric: str, k: int, centers, radii) -> bool:
    """Place spheres sequentially with early abort; True if none overlap.

    Same bucket-grid scheme as Configuration, but on raw lists so the
    large-trial estimators stay cheap.
    """
    torus = metric == TORUS
    d = len(centers[0]) if centers else 0
    cells: dict = {}
    kept_centers: list = []
    kept_radii: list = []
    for i, c in enumerate(centers):
        r = radii[i]
        cell = tuple(min(k - 1, int(v * k)) for v in c)
        if torus:
            neigh_axes = [sorted({(x - 1) % k, x, (x + 1) % k}) for x in cell]
        else:
            neigh_axes = [range(max(0, x - 1), min(k - 1, x + 1) + 1) for x in cell]
        stack = [()]
        for axis in neigh_axes:
            stack = [t + (x,) for t in stack for x in axis]
        for nc in stack:
            got = cells.get(nc)
            if not got:
                continue
            for j in got:
                oc = kept_centers[j]
                rr = r + kept_radii[j]
                s = 0.0
                for a in range(d):
                    w = c[a] - oc[a]
                    if torus:
                        w = abs(w) % 1.0
                        if w > 0.5:
                            w = 1.0 - w
                    s += w * w
                if s < rr * rr:
                    return False
        idx = len(kept_centers)
        kept_centers.append(c)
        kept_radii.append(r)
        cells.setdefault(cell, []).append(idx)
    return True


def estimate_pno(space: SpaceSpec, trials: int, n: Optional[int] = None,
                 seed: int = 0) -> Estimate:
    """Non-overlap probability by i.i.d. trials.

    ``n`` fixes the sphere count (binomial point process); otherwise each
    trial draws a Poisson(lam) count.  Standard error is exact binomial.
    """
    if trials < 1:
        raise UsageError("trials must be at least 1")
    rng = spawn_rng(seed, 1)
    law = space.radius_law
    scale = space.scale
    k = _bucket_resolution(space)
    const_r = law.value / scale if isinstance(law, ConstantRadius) else None
    acc = 0
    for _ in range(trials):
        m = n if n is not None else int(rng.poisson(space.lam))
        if m <= 1:
            acc += 1
            continue
        centers = rng.random((m, space.d)).tolist()
        if const_r is not None:
            radii = [const_r] * m
        else:
            radii = (np.atleast_1d(law.sample(rng, m)) / scale).tolist()
        acc += _trial_acceptable(space.metric, k, centers, radii)
    p = acc / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    return Estimate(p, se, trials, seed)


# -- sampler registry ---------------------------------------------------------

def make_sampler(space: SpaceSpec, sampler_id: str, *,
                 rho: Optional[float] = None, delta: float = 0.5,
                 max_iterations: Optional[int] = None,
                 max_events: Optional[int] = None) -> Callable:
    """Bind a sampler id to a space, prebuilding weight tables once.

    Returns a callable rng -> (Configuration, RunStats).
    """
    if sampler_id == "naive-ar":
        return lambda rng: naive_ar(space, rng, max_iterations=max_iterations)
    if sampler_id == "is-1d":
        table = build_weights(space, FIXED_RADIUS_IS)
        return lambda rng: is_ar_exact_1d(space, rng, table=table,
                                          max_iterations=max_iterations)
    if sampler_id == "grid-is":
        table = build_weights(space, GRID_IS)
        return lambda rng: grid_is_ar(space, rng, table=table,
                                      max_iterations=max_iterations)
    if sampler_id == "rr-is":
        law = space.radius_law
        target = rho if rho is not None else 0.5 * law.mean_pow(space.d)
        tilt = solve_tilt(law, space.d, target)
        table = build_weights(space, RANDOM_RADIUS_IS, tilt=tilt, delta=delta)
        return lambda rng: random_radius_is(space, rng, tilt=tilt, table=table,
                                            max_iterations=max_iterations)
    rules = {"dcftp-loss": LOSS_SYSTEM, "dcftp-noswap": WITHOUT_SWAPS,
             "dcftp-swap": WITH_SWAPS}
    if sampler_id in rules:
        rule = rules[sampler_id]
        return lambda rng: dcftp_sample(space, rule, rng, max_events=max_events)
    raise UsageError(f"unknown sampler {sampler_id!r}")


def _run_replicates(sampler: Callable, T: int, seed: int, key: tuple,
                    threads: int = 1) -> list[tuple[Configuration, RunStats]]:
    def one(rep: int):
        return sampler(spawn_rng(seed, *key, rep))

    if threads <= 1:
        return [one(rep) for rep in range(T)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(T)))


# -- work and insertion metrics -----------------------------------------------

@dataclass
class ExperimentRow:
    lam: float
    sampler: str
    s_hat: float
    se: float
    acc_prob: float
    wall_ms: float


@dataclass
class ExperimentResult:
    preset: str
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["lambda,sampler,S_hat,se,acc_prob,wall_ms"]
        for r in self.rows:
            lines.append(",".join([
                format(r.lam, ".9g"), r.sampler, format(r.s_hat, ".9g"),
                format(r.se, ".9g"), format(r.acc_prob, ".9g"),
                format(r.wall_ms, ".9g"),
            ]))
        return "\n".join(lines) + "\n"


def work_per_sample(space: SpaceSpec, sampler_id: str, T: int, seed: int = 0,
                    key: tuple = (), threads: int = 1,
                    **sampler_opts) -> ExperimentRow:
    """Average spheres generated per perfect sample over T replicates."""
    if T < 1:
        raise UsageError("T must be at least 1")
    sampler = make_sampler(space, sampler_id, **sampler_opts)
    t0 = time.perf_counter()
    results = _run_replicates(sampler, T, seed, (2, *key), threads)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    counts = np.array([st.spheres_generated for _, st in results], dtype=float)
    iters = sum(st.iterations for _, st in results)
    s_hat = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    acc = T / iters if sampler_id in AR_SAMPLER_IDS else math.nan
    return ExperimentRow(space.lam, sampler_id, s_hat, se, acc, wall_ms)


def insertion_probability(space: SpaceSpec, sampler_id: str, T: int,
                          seed: int = 0, threads: int = 1,
                          **sampler_opts) -> Estimate:
    """Chance that a fresh arrival is compatible with a stationary state.

    Births see time averages, so drawing a perfect sample and testing one
    independent marked point estimates the steady-state insertion
    probability directly.
    """
    sampler = make_sampler(space, sampler_id, **sampler_opts)

    def one(rep: int) -> bool:
        rng = spawn_rng(seed, 3, rep)
        cfg, _ = sampler(rng)
        fresh = space.sample_sphere(rng, len(cfg))
        return not cfg.overlaps_existing(fresh.center, fresh.radius)

    if threads <= 1:
        oks = [one(rep) for rep in range(T)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            oks = list(pool.map(one, range(T)))
    p = sum(oks) / T
    return Estimate(p, math.sqrt(p * (1.0 - p) / T), T, seed)


def sample_counts(space: SpaceSpec, sampler_id: str, T: int, seed: int = 0,
                  key: tuple = (), threads: int = 1, **sampler_opts) -> np.ndarray:
    """Point counts of T perfect samples (for distributional tests)."""
    sampler = make_sampler(space, sampler_id, **sampler_opts)
    results = _run_replicates(sampler, T, seed, (4, *key), threads)
    return np.array([len(cfg) for cfg, _ in results], dtype=np.int64)


# -- chi-square homogeneity ----------------------------------------------------

def count_histogram(values: Sequence[int]) -> np.ndarray:
    return np.bincount(np.asarray(values, dtype=np.int64))


def chi_square_homogeneity(hist_a, hist_b) -> tuple[float, int, float]:
    """Two-sample chi-square test on count histograms.

    Tail bins are merged leftward until every remaining bin has expected
    count at least 5 in both samples under the pooled distribution.
    Returns (statistic, dof, p_value).
    """
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    size = max(len(a), len(b))
    a = np.pad(a, (0, size - len(a)))
    b = np.pad(b, (0, size - len(b)))
    na, nb = a.sum(), b.sum()
    if na <= 0 or nb <= 0:
        raise InsufficientDataError("empty histogram")
    total = na + nb
    groups = [[a[i], b[i]] for i in range(size)]

    def min_expected(g):
        pooled = g[0] + g[1]
        return min(na, nb) * pooled / total

    while len(groups) > 1 and min_expected(groups[-1]) < 5.0:
        ga, gb = groups.pop()
        groups[-1][0] += ga
        groups[-1][1] += gb
    if len(groups) < 2:
        raise InsufficientDataError("fewer than 2 usable bins after merging")

    stat = 0.0
    for ga, gb in groups:
        pooled = ga + gb
        ea = na * pooled / total
        eb = nb * pooled / total
        stat += (ga - ea) ** 2 / ea + (gb - eb) ** 2 / eb
    dof = len(groups) - 1
    p = float(special.chdtrc(dof, stat))
    return stat, dof, p


# -- acceptance identity -------------------------------------------------------

@dataclass
class IdentityReport:
    p_acc_naive: float
    se_naive: float
    p_acc_is: float
    se_is: float
    expected_sigma: float
    lhs: float
    combined_se: float
    ok: bool


def acceptance_identity_check(space: SpaceSpec, iters: int = 100_000,
                              seed: int = 0, table=None) -> IdentityReport:
    """Check p_acc(grid IS) * E[sigma(N)] against p_acc(naive).

    Both sides are estimated from per-iteration acceptance indicators with
    independent streams; agreement within 3 combined standard errors.
    """
    if table is None:
        table = build_weights(space, GRID_IS)
    law = space.radius_law
    if not isinstance(law, ConstantRadius):
        raise UsageError("the acceptance identity check is a fixed-radius diagnostic")
    scale = space.scale
    k = _bucket_resolution(space)
    r_s = law.value / scale

    rng = spawn_rng(seed, 5)
    acc_n = 0
    for _ in range(iters):
        m = int(rng.poisson(space.lam))
        if m <= 1:
            acc_n += 1
            continue
        centers = rng.random((m, space.d)).tolist()
        acc_n += _trial_acceptable(space.metric, k, centers, [r_s] * m)
    p_n = acc_n / iters
    se_n = math.sqrt(p_n * (1.0 - p_n) / iters)

    rng = spawn_rng(seed, 6)
    acc_g = 0
    stats = RunStats()
    for _ in range(iters):
        accepted, _ = _grid_attempt(space, table, rng, stats)
        acc_g += accepted
    p_g = acc_g / iters
    se_g = math.sqrt(p_g * (1.0 - p_g) / iters)

    lhs = p_g * table.expected_sigma
    combined = math.sqrt((se_g * table.expected_sigma) ** 2 + se_n**2)
    ok = abs(lhs - p_n) <= 3.0 * combined
    return IdentityReport(p_n, se_n, p_g, se_g, table.expected_sigma,
                          lhs, combined, ok)


# -- experiment presets ---------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    d: int
    metric: str
    eta: float
    r: float
    lambdas: tuple


PRESETS = {
    "exp1": Preset(2, EUCLIDEAN, 0.40, 1.0, (4.0, 6.0, 8.0, 10.0, 12.0)),
    "exp2a": Preset(2, EUCLIDEAN, 0.50, 1.0, (4.0, 8.0, 12.0, 16.0)),
    "exp2b": Preset(2, EUCLIDEAN, 0.50, 0.05, (25.0, 50.0, 100.0, 200.0)),
    "exp3": Preset(2, EUCLIDEAN, 0.75, 1.0, (4.0, 8.0, 16.0, 32.0)),
}


def preset_space(preset_id: str, lam: float) -> SpaceSpec:
    p = PRESETS[preset_id]
    return SpaceSpec(p.d, p.metric, lam, p.eta, ConstantRadius(p.r))


def run_experiment(preset_id: str, T: int = 200, seed: int = 0,
                   threads: int = 1,
                   samplers: Sequence[str] = EXPERIMENT_SAMPLERS) -> ExperimentResult:
    """Sweep the preset's intensity grid over the chosen samplers."""
    if preset_id not in PRESETS:
        raise UsageError(f"unknown preset {preset_id!r}; choose from {sorted(PRESETS)}")
    result = ExperimentResult(preset=preset_id)
    for li, lam in enumerate(PRESETS[preset_id].lambdas):
        space = preset_space(preset_id, lam)
        for si, sid in enumerate(samplers):
            row = work_per_sample(space, sid, T, seed=seed, key=(li, si),
                                  threads=threads)
            result.rows.append(row)
    return result


# -- validation battery ----------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def validation_battery(seed: int = 0, T: int = 5000,
                       identity_iters: int = 100_000,
                       threads: int = 1) -> list[CheckResult]:
    """Cross-sampler chi-square battery plus the acceptance identity.

    Every exact sampler targets the same law, so all pairwise count
    distributions must be chi-square compatible at p > 0.001.
    """
    checks: list[CheckResult] = []

    space2 = SpaceSpec(2, EUCLIDEAN, 5.0, 0.5, ConstantRadius(0.5))
    ids2 = ("naive-ar", "grid-is", "dcftp-loss", "dcftp-noswap", "dcftp-swap")
    hists = {}
    for si, sid in enumerate(ids2):
        counts = sample_counts(space2, sid, T, seed=seed, key=(10, si),
                               threads=threads)
        hists[sid] = count_histogram(counts)
    for i, a in enumerate(ids2):
        for b in ids2[i + 1:]:
            _, _, p = chi_square_homogeneity(hists[a], hists[b])
            checks.append(CheckResult(f"counts {a} vs {b}", p > 0.001,
                                      f"p={p:.5f}"))

    space1c = SpaceSpec(1, TORUS, 4.0, 0.8, ConstantRadius(0.5))
    h_naive = count_histogram(sample_counts(space1c, "naive-ar", T, seed=seed, key=(11,),
                                            threads=threads))
    h_is1d = count_histogram(sample_counts(space1c, "is-1d", T, seed=seed, key=(12,),
                                           threads=threads))
    _, _, p = chi_square_homogeneity(h_naive, h_is1d)
    checks.append(CheckResult("counts naive-ar vs is-1d (d=1)", p > 0.001, f"p={p:.5f}"))

    space1r = SpaceSpec(1, TORUS, 4.0, 0.8, TwoPointRadius(0.2, 1.0, 0.5))
    h_naive_r = count_histogram(sample_counts(space1r, "naive-ar", T, seed=seed, key=(13,),
                                              threads=threads))
    h_rr = count_histogram(sample_counts(space1r, "rr-is", T, seed=seed, key=(14,),
                                         threads=threads))
    _, _, p = chi_square_homogeneity(h_naive_r, h_rr)
    checks.append(CheckResult("counts naive-ar vs rr-is (d=1)", p > 0.001, f"p={p:.5f}"))

    rep = acceptance_identity_check(space2, iters=identity_iters, seed=seed)
    checks.append(CheckResult(
        "acceptance identity (grid)",
        rep.ok,
        f"|{rep.lhs:.5f} - {rep.p_acc_naive:.5f}| vs 3*{rep.combined_se:.5f}"))
    return checks
