"""Weight sequences, the proposal-count pmf, and its sampler.

Each acceptance-rejection variant needs a sequence sigma(n) that dominates
the (indicator times likelihood-ratio) of any n-sphere proposal.  The
proposal count M then has pmf  P(M = n) = lam**n * sigma(n) / (n! * C)
with normalizer C = sum_n lam**n sigma(n) / n!.  Everything is computed in
log space; log sigma = -inf encodes an exact zero, so pmf atoms beyond the
support are exactly zero rather than merely tiny.

Variants
  naive-unit     sigma(n) = 1, so M is Poisson(lam).
  fixed-is       exact non-blocking proposal for constant radii:
                 sigma(n) = prod_{i<=n} (1 - (i-1) * g' * r_s**d)+.
  grid-is        grid approximation with per-count cell edge eps(n); the
                 product uses the diagonal-shrunk radius (r_s - sqrt(d)*eps)+.
  random-is      two-component scheme for random radii: an untwisted
                 component bounded through the blocked-volume floor, plus an
                 exponentially twisted component bounded by the
                 large-deviations rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import UsageError
from .geometry import SpaceSpec, gamma_prime
from .radius import ConstantRadius, TiltSpec, solve_tilt

NAIVE_UNIT = "naive-unit"
FIXED_RADIUS_IS = "fixed-is"
GRID_IS = "grid-is"
RANDOM_RADIUS_IS = "random-is"
VARIANTS = (NAIVE_UNIT, FIXED_RADIUS_IS, GRID_IS, RANDOM_RADIUS_IS)

#: relative pmf mass allowed to be dropped when a support is truncated
_TAIL_REL_MASS = 1e-14

_NEG_INF = float("-inf")


@dataclass
class WeightTable:
    """Precomputed weights sigma(n), the pmf of M, and its inverse CDF."""

    variant: str
    log_weights: np.ndarray      # log sigma(n), -inf means exactly zero
    log_normalizer: float        # log C(lam) = log sum_n lam**n sigma(n)/n!
    pmf: np.ndarray
    cdf: np.ndarray
    n_max: int
    expected_sigma: float        # E[sigma(N)] for N ~ Poisson(lam)
    eps: Optional[np.ndarray] = None        # grid cell edge per count (grid paths)
    log_w1: Optional[np.ndarray] = None     # untwisted component (random-is)
    log_w2: Optional[np.ndarray] = None     # twisted component (random-is)
    delta: Optional[float] = None
    tilt: Optional[TiltSpec] = None
    rho_eff: Optional[np.ndarray] = None    # grid-shrunk volume floor per count


def optimal_eps(space: SpaceSpec, n: int, r: Optional[float] = None) -> float:
    """Cell edge length for generating n spheres on a 1/eps integer grid.

    Uses 1/floor(max(4*lam**eta/r, 4*n**2*r/lam**eta)) and then halves the
    edge until it is strictly below r/(2*sqrt(d)*lam**eta), so every sphere
    fully covers at least one cell.
    """
    if n < 2:
        raise UsageError("a grid is only built for n >= 2 spheres")
    if r is None:
        r = space.radius_law.r_max
    scale = space.scale
    k = max(1, int(max(4.0 * scale / r, 4.0 * n * n * r / scale)))
    r_s = r / scale
    lim = r_s / (2.0 * math.sqrt(space.d))
    while 1.0 / k >= lim:
        k *= 2
    return 1.0 / k


def _log_product_linear(n: int, c: float) -> float:
    """log prod_{i=1..n} (1 - (i-1)*c)+, or -inf once a factor hits zero."""
    if c <= 0.0:
        return 0.0
    if (n - 1) * c >= 1.0:
        return _NEG_INF
    ks = np.arange(n, dtype=float)
    return float(np.log1p(-c * ks).sum())


def _tail_is_negligible(lam: float, n_hi: int, log_sigma_cap: float, log_c: float) -> bool:
    # Geometric envelope on the Poisson-like tail beyond n_hi, capped by the
    # largest sigma value the variant can take.
    n1 = n_hi + 1
    if n1 + 1 <= lam:
        return False
    log_env = (log_sigma_cap + n1 * math.log(lam) - math.lgamma(n1 + 1)
               - math.log1p(-lam / (n1 + 1)))
    return log_env < math.log(_TAIL_REL_MASS) + log_c


def build_weights(space: SpaceSpec, variant: str,
                  tilt: Optional[TiltSpec] = None,
                  delta: float = 0.5,
                  grid_eps: Optional[Callable[[int], float]] = None) -> WeightTable:
    """Build the weight table for a sampler variant on the given space."""
    if variant not in VARIANTS:
        raise UsageError(f"unknown weight variant {variant!r}")
    law = space.radius_law
    lam = float(space.lam)
    d = space.d
    gp = gamma_prime(d, space.metric)
    scale = space.scale
    log_sigma_cap = 0.0

    if variant in (FIXED_RADIUS_IS, GRID_IS) and not isinstance(law, ConstantRadius):
        raise UsageError(f"{variant} requires a constant radius law")
    if variant == RANDOM_RADIUS_IS:
        if isinstance(law, ConstantRadius):
            raise UsageError("random-radius weights need a non-constant radius law")
        if tilt is None:
            raise UsageError("random-radius weights need a solved TiltSpec")
        if not (0.0 < delta < 1.0):
            raise UsageError("delta must lie in (0, 1)")
        log_sigma_cap = math.log(2.0)  # sigma_{n,1} + sigma_{n,2} <= 2

    def fill(n_hi: int):
        """Return (log_w, extras, support_end) for counts 0..n_hi."""
        logw = np.zeros(n_hi + 1)
        extras: dict = {}
        if variant == NAIVE_UNIT:
            return logw, extras, None

        if variant == FIXED_RADIUS_IS:
            c = gp * (law.value / scale) ** d
            cum = 0.0
            for n in range(1, n_hi + 1):
                f = 1.0 - (n - 1) * c
                if f <= 0.0:
                    logw[n:] = _NEG_INF
                    return logw, extras, n - 1
                cum += math.log(f)
                logw[n] = cum
            return logw, extras, None

        if variant == GRID_IS:
            r_s = law.value / scale
            support_cap = 1.0 / (gp * r_s**d) + 1.0  # no count may exceed this
            eps_arr = np.zeros(n_hi + 1)
            support_end = None
            for n in range(2, n_hi + 1):
                eps = grid_eps(n) if grid_eps is not None else optimal_eps(space, n)
                c_n = gp * max(0.0, r_s - math.sqrt(d) * eps) ** d
                if n > support_cap:
                    # The optimal edge for an unreachable count is one that
                    # kills the weight outright; halve until it does.
                    while (n - 1) * c_n < 1.0:
                        eps *= 0.5
                        c_n = gp * max(0.0, r_s - math.sqrt(d) * eps) ** d
                eps_arr[n] = eps
                logw[n] = _log_product_linear(n, c_n)
                if logw[n] == _NEG_INF and support_end is None:
                    support_end = n - 1
            extras["eps"] = eps_arr
            return logw, extras, support_end

        # RANDOM_RADIUS_IS
        rate = tilt.rate_at_rho
        rho = tilt.rho
        r_max = law.r_max
        logw1 = np.zeros(n_hi + 1)
        logw2 = np.full(n_hi + 1, _NEG_INF)
        eps_arr = np.zeros(n_hi + 1)
        rho_eff = np.full(n_hi + 1, rho)
        for n in range(n_hi + 1):
            if n * delta <= 1.0:
                continue  # single plain component, weight one
            k = int(n * delta)
            re = rho
            if d >= 2:
                # Grid placement under-counts blocked volume by at most the
                # cell diagonal per sphere; shrink the volume floor to keep
                # the bound valid, and keep at least half of it.
                eps = optimal_eps(space, n, r=r_max)
                while d**1.5 * eps * scale * r_max ** (d - 1) > rho / 2.0:
                    eps *= 0.5
                eps_arr[n] = eps
                re = max(0.0, rho - d**1.5 * eps * scale * r_max ** (d - 1))
                rho_eff[n] = re
            arg = 1.0 - gp * k * re / scale**d
            logw1[n] = n * (1.0 - delta) * math.log(arg) if arg > 0.0 else _NEG_INF
            logw2[n] = -k * rate
        logw = np.logaddexp(logw1, logw2)
        extras |= {"log_w1": logw1, "log_w2": logw2, "eps": eps_arr, "rho_eff": rho_eff}
        return logw, extras, None

    n_hi = max(32, int(lam + 12.0 * math.sqrt(lam + 1.0) + 40.0))
    while True:
        logw, extras, support_end = fill(n_hi)
        if support_end is not None:
            n_max = support_end
            logw = logw[: n_max + 1]
            extras = {k: v[: n_max + 1] for k, v in extras.items()}
            break
        log_terms = _log_pmf_terms(lam, logw)
        log_c = _logsumexp(log_terms)
        if _tail_is_negligible(lam, n_hi, log_sigma_cap, log_c):
            n_max = n_hi
            break
        n_hi = int(n_hi * 1.3) + 16

    log_terms = _log_pmf_terms(lam, logw)
    log_c = _logsumexp(log_terms)
    pmf = np.exp(log_terms - log_c)
    pmf /= pmf.sum()
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    expected = 1.0 if variant == NAIVE_UNIT else math.exp(log_c - lam)

    return WeightTable(
        variant=variant,
        log_weights=logw,
        log_normalizer=log_c,
        pmf=pmf,
        cdf=cdf,
        n_max=n_max,
        expected_sigma=expected,
        eps=extras.get("eps"),
        log_w1=extras.get("log_w1"),
        log_w2=extras.get("log_w2"),
        delta=delta if variant == RANDOM_RADIUS_IS else None,
        tilt=tilt if variant == RANDOM_RADIUS_IS else None,
        rho_eff=extras.get("rho_eff"),
    )


def _log_pmf_terms(lam: float, logw: np.ndarray) -> np.ndarray:
    """log of lam**n sigma(n)/n! via the stable term recurrence."""
    log_lam = math.log(lam)
    out = np.empty_like(logw)
    out[0] = logw[0]
    for n in range(1, len(logw)):
        if logw[n] == _NEG_INF:
            out[n] = _NEG_INF
        else:
            prev = logw[n - 1] if logw[n - 1] != _NEG_INF else 0.0
            base = out[n - 1] if out[n - 1] != _NEG_INF else _NEG_INF
            if base == _NEG_INF:
                out[n] = n * log_lam - math.lgamma(n + 1) + logw[n]
            else:
                out[n] = base + log_lam - math.log(n) + (logw[n] - prev)
    return out


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if m == _NEG_INF:
        raise UsageError("weight table has empty support")
    return m + math.log(float(np.exp(v - m).sum()))


def sample_M(table: WeightTable, rng, size=None):
    """Draw the proposal count M by inverse CDF over the table's pmf."""
    u = rng.random() if size is None else rng.random(size)
    idx = np.searchsorted(table.cdf, u, side="right")
    idx = np.minimum(idx, table.n_max)
    return int(idx) if size is None else idx.astype(np.int64)


def sample_component(table: WeightTable, m: int, rng) -> int:
    """Draw the mixture component J for a count m (random-radius variant).

    Single-component variants (and counts below the partition threshold)
    always return 1.
    """
    if table.variant != RANDOM_RADIUS_IS:
        return 1
    if table.log_w2[m] == _NEG_INF:
        return 1
    if table.log_w1[m] == _NEG_INF:
        return 2
    p1 = math.exp(table.log_w1[m] - table.log_weights[m])
    return 1 if rng.random() < p1 else 2


def optimal_rho(space: SpaceSpec, delta: float = 0.5, candidates: int = 64) -> TiltSpec:
    """Pick the twist target by a grid search minimizing the two component
    weights at the representative count ceil(lam)."""
    law = space.radius_law
    d = space.d
    alpha = law.mean_pow(d)
    lo = law.essinf_pow(d)
    n0 = max(int(math.ceil(space.lam)), int(1.0 / delta) + 1)
    k = int(n0 * delta)
    gp = gamma_prime(d, space.metric)
    best = None
    best_score = math.inf
    for i in range(candidates):
        rho = lo + (alpha - lo) * (i + 1) / (candidates + 1)
        try:
            tilt = solve_tilt(law, d, rho)
        except Exception:
            continue
        arg = max(0.0, 1.0 - gp * k * rho / space.scale**d)
        score = arg ** (n0 * (1.0 - delta)) + math.exp(-k * tilt.rate_at_rho)
        if score < best_score:
            best_score = score
            best = tilt
    if best is None:
        raise UsageError("no usable twist target found")
    return best
