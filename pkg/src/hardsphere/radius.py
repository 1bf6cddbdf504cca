"""Radius laws and exponential tilting.

A radius law describes the unscaled mark R (a bounded, strictly positive
random variable); spheres in a model with intensity ``lam`` and exponent
``eta`` get radius R / lam**eta.  The tilting machinery works on the
volume-like variable X = R**d: its log moment generating function, the
derivative, the Legendre transform at a target mean, and sampling from
the exponentially twisted law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import DegenerateTiltError, UsageError

_QUAD_RTOL = 1e-12


@dataclass(frozen=True)
class ConstantRadius:
    """Fixed radius: R == value always."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise UsageError("constant radius must be positive")

    @property
    def r_min(self) -> float:
        return self.value

    @property
    def r_max(self) -> float:
        return self.value

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def mean_pow(self, d: int) -> float:
        return self.value**d

    def essinf_pow(self, d: int) -> float:
        return self.value**d

    def log_mgf(self, d: int, theta: float) -> float:
        return theta * self.value**d

    def log_mgf_derivative(self, d: int, theta: float) -> float:
        return self.value**d


@dataclass(frozen=True)
class TwoPointRadius:
    """R takes the value ``a_low`` with probability ``p_low``, else ``a_high``."""

    a_low: float
    a_high: float
    p_low: float

    def __post_init__(self):
        if not (0.0 < self.p_low < 1.0):
            raise UsageError("two-point probability must lie strictly in (0, 1)")
        if not (0.0 < self.a_low < self.a_high):
            raise UsageError("two-point values must satisfy 0 < a_low < a_high")

    @property
    def r_min(self) -> float:
        return self.a_low

    @property
    def r_max(self) -> float:
        return self.a_high

    def sample(self, rng, size=None):
        if size is None:
            return self.a_low if rng.random() < self.p_low else self.a_high
        return np.where(rng.random(size) < self.p_low, self.a_low, self.a_high)

    def mean_pow(self, d: int) -> float:
        return self.p_low * self.a_low**d + (1.0 - self.p_low) * self.a_high**d

    def essinf_pow(self, d: int) -> float:
        return self.a_low**d

    def log_mgf(self, d: int, theta: float) -> float:
        v1, v2 = self.a_low**d, self.a_high**d
        return np.logaddexp(math.log(self.p_low) + theta * v1,
                            math.log1p(-self.p_low) + theta * v2)

    def log_mgf_derivative(self, d: int, theta: float) -> float:
        v1, v2 = self.a_low**d, self.a_high**d
        # weights shifted by the max exponent for stability
        m = max(theta * v1, theta * v2)
        w1 = self.p_low * math.exp(theta * v1 - m)
        w2 = (1.0 - self.p_low) * math.exp(theta * v2 - m)
        return (w1 * v1 + w2 * v2) / (w1 + w2)


@dataclass(frozen=True)
class UniformRadius:
    """R uniform on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi):
            raise UsageError("uniform radius range must satisfy 0 < lo < hi")

    @property
    def r_min(self) -> float:
        return self.lo

    @property
    def r_max(self) -> float:
        return self.hi

    def sample(self, rng, size=None):
        if size is None:
            return self.lo + (self.hi - self.lo) * rng.random()
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def mean_pow(self, d: int) -> float:
        return (self.hi ** (d + 1) - self.lo ** (d + 1)) / ((d + 1) * (self.hi - self.lo))

    def essinf_pow(self, d: int) -> float:
        return self.lo**d

    def _shifted_integrals(self, d: int, theta: float):
        # Factor out exp(theta * m) with m at the dominating endpoint so the
        # integrand stays in (0, 1]; adaptive quadrature does the rest.
        m = self.hi**d if theta > 0 else self.lo**d
        f0 = lambda x: math.exp(theta * (x**d - m))
        f1 = lambda x: x**d * math.exp(theta * (x**d - m))
        i0, _ = integrate.quad(f0, self.lo, self.hi, epsrel=_QUAD_RTOL, epsabs=0.0, limit=200)
        i1, _ = integrate.quad(f1, self.lo, self.hi, epsrel=_QUAD_RTOL, epsabs=0.0, limit=200)
        return m, i0, i1

    def log_mgf(self, d: int, theta: float) -> float:
        if theta == 0.0:
            return 0.0
        m, i0, _ = self._shifted_integrals(d, theta)
        return theta * m + math.log(i0 / (self.hi - self.lo))

    def log_mgf_derivative(self, d: int, theta: float) -> float:
        if theta == 0.0:
            return self.mean_pow(d)
        _, i0, i1 = self._shifted_integrals(d, theta)
        return i1 / i0


RadiusLaw = Union[ConstantRadius, TwoPointRadius, UniformRadius]


def sample_radius(law: RadiusLaw, rng, size=None):
    """Draw R (unscaled) from the law."""
    return law.sample(rng, size)


def log_mgf(law: RadiusLaw, d: int, theta: float) -> float:
    """log E[exp(theta * R**d)]."""
    return float(law.log_mgf(d, theta))


def log_mgf_derivative(law: RadiusLaw, d: int, theta: float) -> float:
    """d/dtheta of log E[exp(theta * R**d)], i.e. the tilted mean of R**d."""
    return float(law.log_mgf_derivative(d, theta))


@dataclass(frozen=True)
class TiltSpec:
    """Solved exponential tilt: the twist amount, its log-MGF value, and the
    large-deviations rate at the target mean volume ``rho``."""

    rho: float
    theta_hat: float
    log_mgf_at_theta_hat: float
    rate_at_rho: float


def solve_tilt(law: RadiusLaw, d: int, rho: float, tol: float = 1e-10) -> TiltSpec:
    """Solve log_mgf_derivative(theta) == rho for theta < 0.

    ``rho`` must lie strictly between the essential infimum of R**d and its
    mean; a constant law never qualifies.
    """
    if isinstance(law, ConstantRadius):
        raise DegenerateTiltError("constant radius law admits no tilt")
    alpha = law.mean_pow(d)
    lo_attainable = law.essinf_pow(d)
    if not (lo_attainable < rho < alpha):
        raise DegenerateTiltError(
            f"target mean {rho} outside attainable interval ({lo_attainable}, {alpha})")

    lo, hi = -64.0, 0.0
    while law.log_mgf_derivative(d, lo) > rho:
        lo *= 2.0
        if lo < -2.0**40:
            raise DegenerateTiltError("tilt target numerically unattainable")
    theta = lo
    resid_tol = tol * max(1.0, abs(rho))
    for _ in range(600):
        theta = 0.5 * (lo + hi)
        deriv = law.log_mgf_derivative(d, theta)
        if abs(deriv - rho) <= resid_tol:
            break
        if deriv < rho:
            lo = theta
        else:
            hi = theta
    else:
        raise RuntimeError("tilt solve did not converge")

    lam_hat = log_mgf(law, d, theta)
    return TiltSpec(rho=rho, theta_hat=theta, log_mgf_at_theta_hat=lam_hat,
                    rate_at_rho=theta * rho - lam_hat)


def sample_tilted(tilt: TiltSpec, law: RadiusLaw, d: int, rng, size=None):
    """Draw R**d from the exponentially twisted law dF~ = exp(th*x - L(th)) dF."""
    th = tilt.theta_hat
    if isinstance(law, ConstantRadius):
        x = law.value**d
        return x if size is None else np.full(size, x)
    if isinstance(law, TwoPointRadius):
        v1, v2 = law.a_low**d, law.a_high**d
        p1 = math.exp(math.log(law.p_low) + th * v1 - tilt.log_mgf_at_theta_hat)
        if size is None:
            return v1 if rng.random() < p1 else v2
        return np.where(rng.random(size) < p1, v1, v2)
    # Uniform R on [lo, hi]: the tilted density of R is prop. to
    # exp(-a * rho**d) with a = -theta_hat > 0, whose CDF is a regularized
    # lower incomplete gamma in a * rho**d.  Inverting it generalizes the
    # truncated-exponential inverse CDF (the d = 1 case) to any d.
    u = rng.random() if size is None else rng.random(size)
    if th == 0.0:
        rho = law.lo + (law.hi - law.lo) * u
        return rho**d
    a = -th
    s = 1.0 / d
    p_lo = special.gammainc(s, a * law.lo**d)
    p_hi = special.gammainc(s, a * law.hi**d)
    g = special.gammaincinv(s, p_lo + u * (p_hi - p_lo))
    rho = (g / a) ** (1.0 / d)
    rho = np.clip(rho, law.lo, law.hi)
    x = rho**d
    return float(x) if size is None else x


def lr_factor(tilt: TiltSpec, x):
    """Per-draw likelihood ratio dF/dF~ evaluated at x (a value of R**d)."""
    return np.exp(-tilt.theta_hat * x + tilt.log_mgf_at_theta_hat)
