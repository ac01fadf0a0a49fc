import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bayeskan.variational import (
    RHO_FLOOR,
    GaussianVariational,
    PriorSpec,
    inverse_softplus,
    kl_gaussian,
    kl_gradients,
    kl_terms,
    reparam_sample,
    sigma_of,
    softplus,
)


def kl_numeric(mu, sigma, mu0, sigma0):
    """KL(q || p) by quadrature over +-12 sigma of q."""
    q, p = stats.norm(mu, sigma), stats.norm(mu0, sigma0)
    f = lambda x: q.pdf(x) * (q.logpdf(x) - p.logpdf(x))
    return integrate.quad(f, mu - 12 * sigma, mu + 12 * sigma, limit=200)[0]


def q_with_sigma(mu, sigma):
    return GaussianVariational(mu, float(inverse_softplus(sigma)))


def test_softplus_values():
    assert sigma_of(GaussianVariational(0.0, 0.0)) == pytest.approx(math.log(2.0), abs=1e-6)
    tiny = sigma_of(GaussianVariational(0.0, -40.0))
    assert 0.0 < tiny < 1e-17
    rho = math.log(math.exp(0.05) - 1.0)
    assert rho == pytest.approx(-2.970628, abs=1e-6)
    assert sigma_of(GaussianVariational(0.0, rho)) == pytest.approx(0.05, abs=1e-12)


def test_softplus_is_stable_for_large_rho():
    assert softplus(800.0) == pytest.approx(800.0)
    assert np.isfinite(softplus(-800.0))


def test_floor_gives_point_mass():
    assert sigma_of(GaussianVariational(1.5, RHO_FLOOR)) == 0.0
    assert reparam_sample(GaussianVariational(1.5, RHO_FLOOR), 3.0) == 1.5


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 50.0))
def test_inverse_softplus_round_trip(sigma):
    assert softplus(inverse_softplus(sigma)) == pytest.approx(sigma, rel=1e-9)


def test_reparam_examples():
    assert reparam_sample(GaussianVariational(3.2, 0.7), 0.0) == 3.2
    assert reparam_sample(q_with_sigma(2.0, 0.5), -1.0) == pytest.approx(1.5)


def test_reparam_monte_carlo_mean():
    eps = np.random.default_rng(0).standard_normal(100_000)
    p = q_with_sigma(0.0, 1.0)
    draws = np.array([reparam_sample(p, e) for e in eps[:2000]])
    assert abs(draws.mean()) < 3 / math.sqrt(2000)
    assert abs(float(np.mean(0.0 + 1.0 * eps))) <= 0.01


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        GaussianVariational(np.nan, 0.0)
    with pytest.raises(ValueError):
        GaussianVariational(0.0, np.inf)
    with pytest.raises(ValueError):
        PriorSpec(0.0, 0.0)


def test_kl_examples():
    prior = PriorSpec(0.0, 1.0)
    assert kl_gaussian(q_with_sigma(0.0, 1.0), prior) == pytest.approx(0.0, abs=1e-15)
    assert kl_gaussian(q_with_sigma(1.0, 1.0), prior) == pytest.approx(0.5, abs=1e-12)
    assert kl_gaussian(q_with_sigma(0.0, 0.5), prior) == pytest.approx(0.318147, abs=1e-6)
    assert kl_numeric(1.0, 1.0, 0.0, 1.0) == pytest.approx(0.5, abs=1e-8)
    assert kl_numeric(0.0, 0.5, 0.0, 1.0) == pytest.approx(math.log(2) + 0.125 - 0.5, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 3), st.floats(-2, 2), st.floats(0.2, 3))
def test_kl_matches_quadrature(mu, sigma, mu0, sigma0):
    closed = kl_gaussian(q_with_sigma(mu, sigma), PriorSpec(mu0, sigma0))
    assert closed == pytest.approx(kl_numeric(mu, sigma, mu0, sigma0), rel=1e-6, abs=1e-8)


@settings(max_examples=1000, deadline=None)
@given(st.floats(-10, 10), st.floats(-8, 5), st.floats(-5, 5), st.floats(0.05, 10))
def test_kl_nonnegative_and_zero_only_at_prior(mu, rho, mu0, sigma0):
    p = GaussianVariational(mu, rho)
    prior = PriorSpec(mu0, sigma0)
    kl = kl_gaussian(p, prior)
    assert kl >= 0.0
    if abs(mu - mu0) > 1e-3 or abs(p.sigma - sigma0) > 1e-3 * sigma0:
        assert kl > 0.0
    same = kl_gaussian(q_with_sigma(mu0, sigma0), prior)
    assert same == pytest.approx(0.0, abs=1e-9)


def test_kl_floor_is_infinite_and_vector_terms_add():
    prior = PriorSpec()
    assert kl_gaussian(GaussianVariational(0.0, RHO_FLOOR), prior) == math.inf
    mu = np.array([1.0, 1.0])
    rho = np.full(2, float(inverse_softplus(1.0)))
    np.testing.assert_allclose(kl_terms(mu, rho, prior), [0.5, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(-4, 3), st.floats(-1, 1), st.floats(0.3, 2))
def test_kl_gradients_match_finite_differences(mu, rho, mu0, sigma0):
    prior = PriorSpec(mu0, sigma0)
    d_mu, d_rho = kl_gradients(np.array([mu]), np.array([rho]), prior)
    h = 1e-6
    f = lambda a, b: float(kl_terms(np.array([a]), np.array([b]), prior)[0])
    assert d_mu[0] == pytest.approx((f(mu + h, rho) - f(mu - h, rho)) / (2 * h), rel=1e-5, abs=1e-6)
    assert d_rho[0] == pytest.approx((f(mu, rho + h) - f(mu, rho - h)) / (2 * h), rel=1e-5, abs=1e-6)
