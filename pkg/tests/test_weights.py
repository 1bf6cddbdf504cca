import math

import mpmath as mp
import numpy as np
import pytest

from hardsphere import (EUCLIDEAN, TORUS, ConstantRadius, SpaceSpec,
                        TwoPointRadius, build_weights, gamma_prime,
                        optimal_eps, optimal_rho, sample_M, sample_component,
                        solve_tilt)
from hardsphere.errors import UsageError
from hardsphere.weights import (FIXED_RADIUS_IS, GRID_IS, NAIVE_UNIT,
                                RANDOM_RADIUS_IS)

SP_FIXED4 = SpaceSpec(2, TORUS, 4.0, 0.5, ConstantRadius(1.0))
SP_CRIT4 = SpaceSpec(2, EUCLIDEAN, 5.0, 0.5, ConstantRadius(0.5))
SP_RR = SpaceSpec(1, TORUS, 4.0, 0.8, TwoPointRadius(0.2, 1.0, 0.5))


def test_naive_unit_is_poisson():
    t = build_weights(SP_FIXED4, NAIVE_UNIT)
    assert np.all(t.log_weights == 0.0)
    n = np.arange(t.n_max + 1)
    pois = np.exp(n * math.log(4.0) - [math.lgamma(k + 1) for k in n] - 4.0)
    assert np.allclose(t.pmf, pois, rtol=1e-12, atol=1e-300)
    assert t.expected_sigma == 1.0
    assert abs(t.pmf.sum() - 1.0) <= 1e-12


def test_fixed_radius_hand_example():
    # d=2 torus, eta=0.5, r=1, lam=4: factor pi/4, support {0,1,2}
    t = build_weights(SP_FIXED4, FIXED_RADIUS_IS)
    assert t.n_max == 2
    sig = np.exp(t.log_weights)
    assert sig[0] == 1.0 and sig[1] == 1.0
    assert sig[2] == pytest.approx(1.0 - math.pi / 4.0, rel=1e-12)
    raw = np.array([1.0, 4.0, 8.0 * (1.0 - math.pi / 4.0)])
    assert np.allclose(t.pmf, raw / raw.sum(), rtol=1e-12)
    assert t.expected_sigma == pytest.approx(raw.sum() * math.exp(-4.0), rel=1e-12)


def test_fixed_radius_monotone_and_range():
    t = build_weights(SP_CRIT4, FIXED_RADIUS_IS)
    sig = np.exp(t.log_weights)
    assert sig[0] == 1.0
    assert np.all(np.diff(sig) <= 1e-15)
    assert np.all((sig > 0.0) & (sig <= 1.0))


def test_random_radius_case_one():
    tilt = solve_tilt(SP_RR.radius_law, 1, 0.4)
    t = build_weights(SP_RR, RANDOM_RADIUS_IS, tilt=tilt, delta=0.5)
    # counts with n*delta <= 1 carry unit weight and a single component
    assert np.all(np.exp(t.log_weights[:3]) == 1.0)
    assert np.all(np.isneginf(t.log_w2[:3]))
    assert np.isfinite(t.log_w2[3])
    # n=4 (k=2 twisted draws): both component weights in closed form
    expect_w2 = math.exp(-2 * tilt.rate_at_rho)
    assert math.exp(t.log_w2[4]) == pytest.approx(expect_w2, rel=1e-12)
    gp = gamma_prime(1, TORUS)
    expect_w1 = (1.0 - gp * 2 * 0.4 / SP_RR.scale) ** (4 * 0.5)
    assert math.exp(t.log_w1[4]) == pytest.approx(expect_w1, rel=1e-12)
    # once the volume floor reaches 1, the untwisted component dies exactly
    assert math.exp(t.log_w1[10]) == 0.0


def test_variant_law_pairing_errors():
    with pytest.raises(UsageError):
        build_weights(SP_RR, FIXED_RADIUS_IS)
    with pytest.raises(UsageError):
        build_weights(SP_CRIT4, RANDOM_RADIUS_IS)
    with pytest.raises(UsageError):
        build_weights(SP_CRIT4, "bogus")


def test_grid_dominates_fixed():
    tg = build_weights(SP_CRIT4, GRID_IS)
    tf = build_weights(SP_CRIT4, FIXED_RADIUS_IS)
    n = min(tg.n_max, tf.n_max)
    assert np.all(tg.log_weights[: n + 1] >= tf.log_weights[: n + 1] - 1e-12)
    assert tg.n_max >= tf.n_max


def test_grid_support_bound():
    # no count may exceed lam**(eta d)/(gamma' r**d) + 1
    for sp in (SP_CRIT4,
               SpaceSpec(2, EUCLIDEAN, 12.0, 0.40, ConstantRadius(1.0)),
               SpaceSpec(2, TORUS, 8.0, 0.5, ConstantRadius(0.3))):
        t = build_weights(sp, GRID_IS)
        gp = gamma_prime(sp.d, sp.metric)
        bound = sp.scale**sp.d / (gp * sp.radius_law.value**sp.d) + 1.0
        assert t.n_max <= bound
        assert np.exp(t.log_weights[t.n_max]) > 0.0


def test_pmf_against_high_precision_oracle():
    # recompute the pmf with 200-bit arithmetic straight from the formula
    mp.mp.prec = 200
    for sp, variant in ((SP_FIXED4, FIXED_RADIUS_IS), (SP_CRIT4, FIXED_RADIUS_IS),
                        (SP_CRIT4, GRID_IS)):
        t = build_weights(sp, variant)
        assert t.n_max <= 50
        lam = mp.mpf(sp.lam)
        sigma = [mp.mpf(1)]
        gp = mp.mpf(gamma_prime(sp.d, sp.metric))
        r_s = mp.mpf(sp.radius_law.value) / mp.mpf(sp.scale)
        for n in range(1, t.n_max + 1):
            if variant == GRID_IS and n >= 2:
                eff = r_s - mp.sqrt(sp.d) * mp.mpf(t.eps[n])
                eff = eff if eff > 0 else mp.mpf(0)
            else:
                eff = r_s
            c = gp * eff**sp.d
            prod = mp.mpf(1)
            for i in range(1, n + 1):
                f = 1 - (i - 1) * c
                prod *= f if f > 0 else mp.mpf(0)
            sigma.append(prod)
        terms = [lam**n * sigma[n] / mp.factorial(n) for n in range(t.n_max + 1)]
        total = mp.fsum(terms)
        oracle = np.array([float(x / total) for x in terms])
        assert np.allclose(t.pmf, oracle, rtol=1e-12, atol=1e-250)
        assert t.expected_sigma == pytest.approx(float(total * mp.e**(-lam)), rel=1e-12)


def test_sample_m_degenerate(rng):
    sp = SpaceSpec(2, TORUS, 1e-9, 0.1, ConstantRadius(0.05))
    t = build_weights(sp, NAIVE_UNIT)
    assert np.all(sample_M(t, rng, 10_000) == 0)


def test_sample_m_frequencies(rng):
    t = build_weights(SP_FIXED4, FIXED_RADIUS_IS)
    draws = sample_M(t, rng, 1_000_000)
    for n in range(t.n_max + 1):
        freq = np.mean(draws == n)
        se = math.sqrt(t.pmf[n] * (1 - t.pmf[n]) / len(draws))
        assert abs(freq - t.pmf[n]) <= 4 * se


def test_grid_draws_respect_support_bound(rng):
    t = build_weights(SP_CRIT4, GRID_IS)
    gp = gamma_prime(2, EUCLIDEAN)
    bound = SP_CRIT4.scale**2 / (gp * 0.5**2) + 1.0
    draws = sample_M(t, rng, 100_000)
    assert draws.max() <= bound


def test_sample_component(rng):
    tilt = solve_tilt(SP_RR.radius_law, 1, 0.4)
    t = build_weights(SP_RR, RANDOM_RADIUS_IS, tilt=tilt, delta=0.5)
    assert sample_component(t, 1, rng) == 1
    # m = 20: empirical split within 4 standard errors of the weight ratio
    p1 = math.exp(t.log_w1[20] - t.log_weights[20])
    draws = np.array([sample_component(t, 20, rng) for _ in range(100_000)])
    freq = np.mean(draws == 1)
    se = math.sqrt(p1 * (1 - p1) / len(draws))
    assert abs(freq - p1) <= 4 * se
    # single-component variants always return 1
    tf = build_weights(SP_FIXED4, FIXED_RADIUS_IS)
    assert sample_component(tf, 2, rng) == 1


def test_sample_component_forced_branch(rng):
    # a table whose untwisted component weight vanishes must always pick 2
    tilt = solve_tilt(SP_RR.radius_law, 1, 0.4)
    t = build_weights(SP_RR, RANDOM_RADIUS_IS, tilt=tilt, delta=0.5)
    m = np.flatnonzero(np.isneginf(t.log_w1))
    if m.size:
        assert sample_component(t, int(m[0]), rng) == 2


def test_optimal_eps_examples():
    sp = SpaceSpec(2, TORUS, 10.0, 0.5, ConstantRadius(1.0))
    assert optimal_eps(sp, 5) == pytest.approx(1.0 / 31.0)
    assert optimal_eps(sp, 2) == pytest.approx(1.0 / 12.0)
    # every returned edge obeys the fully-covered-cell constraint
    for n in range(2, 40):
        eps = optimal_eps(sp, n)
        assert eps < (1.0 / sp.scale) / (2.0 * math.sqrt(2))
        assert abs(round(1.0 / eps) - 1.0 / eps) < 1e-9
    # huge intensity at small n: the lam**eta / r branch dominates
    big = SpaceSpec(2, TORUS, 1e6, 0.5, ConstantRadius(1.0))
    assert optimal_eps(big, 2) == pytest.approx(1.0 / int(4 * big.scale))
    with pytest.raises(UsageError):
        optimal_eps(sp, 1)


def test_optimal_rho_beats_default():
    tilt_best = optimal_rho(SP_RR, delta=0.5)
    assert 0.2 < tilt_best.rho < 0.6
    assert tilt_best.rate_at_rho > 0.0
