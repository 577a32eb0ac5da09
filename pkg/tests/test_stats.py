"""Distance and rate statistics: exact hand values plus properties."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwire import stats, theory
from brwire.errors import InvalidParameter, ResolutionTooCoarse


def rng(seed=0):
    return np.random.default_rng(seed)


def emp(sample, n=4):
    return stats.EmpiricalLaw(np.sort(np.asarray(sample, dtype=float)), n)


# ---------------------------------------------------------------------------
# EmpiricalLaw / standardize


def test_empirical_law_requires_sorted_nonempty():
    with pytest.raises(InvalidParameter):
        stats.EmpiricalLaw(np.array([]), 4)
    with pytest.raises(InvalidParameter):
        stats.EmpiricalLaw(np.array([1.0, 0.0]), 4)


def test_standardize_recovers_zeros_and_units():
    out = stats.standardize([4 * 0.5] * 3, n=4, mu=0.5, sigma=0.2)
    assert np.array_equal(out.sorted_sample, np.zeros(3))
    out = stats.standardize([4 * 0.5 + 2 * 0.2], n=4, mu=0.5, sigma=0.2)
    assert out.sorted_sample[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidParameter):
        stats.standardize([1.0], n=4, mu=0.0, sigma=0.0)


@settings(max_examples=40, deadline=None)
@given(
    sample=st.lists(st.floats(-50.0, 50.0), min_size=1, max_size=20),
    shift=st.floats(-10.0, 10.0),
)
def test_standardize_affine_equivariance(sample, shift):
    n, mu, sigma = 9, 0.3, 0.7
    base = stats.standardize(sample, n, mu, sigma)
    moved = stats.standardize([x + shift for x in sample], n, mu, sigma)
    expected = np.sort(base.sorted_sample + shift / (math.sqrt(n) * sigma))
    assert np.allclose(moved.sorted_sample, expected, atol=1e-10)


# ---------------------------------------------------------------------------
# ks_distance


def test_ks_single_point_at_origin():
    assert stats.ks_distance(emp([0.0])) == pytest.approx(0.5, abs=1e-15)


def test_ks_three_point_hand_value():
    # sup attained approaching +/-1 from inside: 1/3 - Phi(-1)
    expected = 1.0 / 3.0 - float(theory.normal_cdf(-1.0))
    assert stats.ks_distance(emp([-1.0, 0.0, 1.0])) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.1746786, abs=1e-6)


def test_ks_equioscillating_quantiles():
    m = 40
    from scipy.special import ndtri

    q = ndtri((np.arange(1, m + 1) - 0.5) / m)
    assert stats.ks_distance(emp(q)) == pytest.approx(1.0 / (2 * m), abs=1e-12)


def test_ks_matches_dense_grid_bruteforce():
    for seed in range(5):
        x = np.sort(rng(seed).normal(0.2, 1.3, 60))
        e = emp(x)
        grid = np.linspace(x[0] - 1, x[-1] + 1, 10**5)
        brute = np.max(np.abs(e.cdf(grid) - theory.normal_cdf(grid)))
        assert stats.ks_distance(e) >= brute - 1e-12
        assert stats.ks_distance(e) <= brute + 1.0 / 10**4  # grid resolution slack


def test_ks_within_dkw_budget_for_normal_samples():
    # The DKW bound guarantees coverage >= 99% at beta = 0.01 and is nearly
    # tight, so test the guarantee with a 3-sigma binomial allowance.
    m, trials = 1000, 600
    g = rng(123)
    budget = stats.dkw_budget(m, 0.01)
    hits = sum(
        stats.ks_distance(emp(np.sort(g.standard_normal(m)))) <= budget
        for _ in range(trials)
    )
    assert hits / trials >= 0.99 - 3 * math.sqrt(0.01 * 0.99 / trials)


# ---------------------------------------------------------------------------
# weighted_distance


def test_weighted_single_point_hand_value():
    assert stats.weighted_distance(emp([0.0]), lam=1.0, x_cap=3.0) == pytest.approx(0.5, abs=1e-12)


def test_weighted_lambda_zero_equals_capped_ks():
    x = np.sort(rng(7).normal(0, 1, 50))
    e = emp(x)
    w0 = stats.weighted_distance(e, lam=0.0, x_cap=10.0)
    assert w0 == pytest.approx(stats.ks_distance(e), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    sample=st.lists(st.floats(-4.0, 4.0), min_size=1, max_size=30),
    cap1=st.floats(0.5, 3.0),
    cap2=st.floats(0.5, 3.0),
)
def test_weighted_nondecreasing_in_cap(sample, cap1, cap2):
    lo, hi = sorted((cap1, cap2))
    e = emp(sample)
    assert stats.weighted_distance(e, 1.0, lo) <= stats.weighted_distance(e, 1.0, hi) + 1e-12


def test_weighted_validation():
    with pytest.raises(InvalidParameter):
        stats.weighted_distance(emp([0.0]), lam=-1.0, x_cap=3.0)
    with pytest.raises(InvalidParameter):
        stats.weighted_distance(emp([0.0]), lam=1.0, x_cap=0.0)


# ---------------------------------------------------------------------------
# rate_fit


def test_rate_fit_exact_power_laws():
    fit = stats.rate_fit([(4, 4**-0.5), (16, 16**-0.5), (64, 64**-0.5)])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    fit = stats.rate_fit([(2, 0.7), (4, 0.7), (8, 0.7)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)

    fit = stats.rate_fit([(2, 3.0 / 2), (8, 3.0 / 8), (32, 3.0 / 32)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)


def test_rate_fit_with_multiplicative_noise():
    ns = [4, 8, 16, 64, 400]
    g = rng(11)
    pairs = [(n, n**-0.5 * g.uniform(0.8, 1.25)) for n in ns]
    fit = stats.rate_fit(pairs)
    assert abs(fit.slope + 0.5) <= 0.15


def test_rate_fit_validation():
    with pytest.raises(InvalidParameter):
        stats.rate_fit([(2, 1.0), (4, 0.5)])
    with pytest.raises(InvalidParameter):
        stats.rate_fit([(2, 1.0), (4, 0.5), (3, 0.2)])
    with pytest.raises(InvalidParameter):
        stats.rate_fit([(2, 1.0), (4, 0.0), (8, 0.5)])


# ---------------------------------------------------------------------------
# dkw_budget


def test_dkw_values():
    assert stats.dkw_budget(200_000, 0.05) == pytest.approx(0.003036, abs=1e-6)
    assert stats.dkw_budget(100, 0.05) == pytest.approx(0.1358, abs=1e-4)
    assert stats.dkw_budget(4 * 900, 0.2) == pytest.approx(stats.dkw_budget(900, 0.2) / 2, abs=1e-15)
    with pytest.raises(InvalidParameter):
        stats.dkw_budget(0, 0.05)
    with pytest.raises(InvalidParameter):
        stats.dkw_budget(100, 1.0)


# ---------------------------------------------------------------------------
# exact_rate_profile


def _constants(e_log_w=0.0, se=0.0, mu3=0.0, sigma=1.0):
    return theory.TheoryConstants(
        mu=0.0, sigma=sigma, mu3=mu3,
        e_log_w=theory.LogWEstimate(e_log_w, se, 16),
    )


def test_profile_rhs_vanishes_for_trivial_limit():
    e = emp(rng(3).standard_normal(20_000), n=4)
    prof = stats.exact_rate_profile(e, _constants(), [-1.0, 0.0, 1.0])
    for x, lhs, rhs, unc in prof:
        assert rhs == 0.0
        assert abs(lhs) <= unc  # pure normal sample: error within DKW band


def test_profile_rhs_composition():
    e = emp(rng(4).standard_normal(20_000), n=4)
    c = _constants(e_log_w=0.7, se=0.01, mu3=0.3, sigma=0.5)
    prof = stats.exact_rate_profile(e, c, [0.0])
    x, lhs, rhs, unc = prof[0]
    expected = -theory.normal_pdf(0.0) * 0.7 / 0.5 + theory.edgeworth_Q(0.0, 0.3, 0.5)
    assert rhs == pytest.approx(expected, abs=1e-12)
    assert unc >= 2 * stats.dkw_budget(20_000, 0.05)  # sqrt(n) * half-width


def test_profile_resolution_gate():
    e = emp(rng(5).standard_normal(100), n=64)
    with pytest.raises(ResolutionTooCoarse):
        stats.exact_rate_profile(e, _constants(), [0.0])


def test_env_walk_profile_limit_is_q_only():
    e = emp(rng(6).standard_normal(20_000), n=4)
    prof = stats.env_walk_profile(e, mu3=0.4, sigma=0.3, x_grid=[-1.0, 0.0, 1.0])
    for x, lhs, rhs, unc in prof:
        assert rhs == pytest.approx(float(theory.edgeworth_Q(x, 0.4, 0.3)), abs=1e-12)


# ---------------------------------------------------------------------------
# W-increment diagnostics


def test_increments_deterministic_lineage():
    d = stats.w_increment_diagnostics([1.0, 1.0], [1.0, 1.0], alpha=1.0)
    assert d.moment == 0.0
    assert all(freq == 0.0 for _, freq in d.tails)


def test_increments_closed_form_ratio():
    # W_n = 2 - 2^{-n}: |W_2n - W_n| = 2^{-n} - 2^{-2n}
    ns = np.arange(2, 11)
    pairs = []
    for n in ns:
        w_n = [2.0 - 2.0**-n]
        w_2n = [2.0 - 2.0 ** (-2.0 * n)]
        d = stats.w_increment_diagnostics(w_n, w_2n, alpha=1.0)
        assert d.moment == pytest.approx(2.0**-n - 2.0 ** (-2.0 * n), abs=1e-15)
        pairs.append((int(n), d.moment))
    log_rho, _, r2 = stats.increment_rate_fit(pairs)
    assert abs(log_rho + math.log(2.0)) <= 0.05
    assert r2 > 0.999


@settings(max_examples=30, deadline=None)
@given(
    w=st.lists(st.floats(0.1, 5.0), min_size=2, max_size=30),
    v=st.lists(st.floats(0.1, 5.0), min_size=2, max_size=30),
)
def test_increment_exceedances_nonincreasing(w, v):
    m = min(len(w), len(v))
    d = stats.w_increment_diagnostics(w[:m], v[:m], alpha=0.5, thresholds=(0.1, 0.5, 1.0, 2.0))
    freqs = [f for _, f in d.tails]
    assert all(a >= b for a, b in zip(freqs, freqs[1:]))


def test_increment_validation():
    with pytest.raises(InvalidParameter):
        stats.w_increment_diagnostics([1.0], [1.0], alpha=1.5)
    with pytest.raises(InvalidParameter):
        stats.w_increment_diagnostics([1.0, 2.0], [1.0], alpha=0.5)


# ---------------------------------------------------------------------------
# summaries


def test_distance_summary_shape():
    e = emp(rng(8).standard_normal(500), n=8)
    out = stats.distance_summary(e, lam=1.0, x_cap=3.0)
    assert json.dumps(out)  # JSON-ready
    assert out["n"] == 8 and out["M"] == 500
    assert out["ks"] == stats.ks_distance(e)
    assert out["weighted"]["value"] == stats.weighted_distance(e, 1.0, 3.0)
