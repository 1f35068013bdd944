import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bqreserve import dists
from bqreserve.errors import DomainError, ParameterError, SupportError

U = np.linspace(0.001, 0.999, 999)


def scipy_al(mu, sigma, p):
    """Same law in scipy's parameterization: rates p/sigma right, (1-p)/sigma left."""
    kappa = math.sqrt(p / (1 - p))
    return stats.laplace_asymmetric(kappa, loc=mu, scale=sigma / math.sqrt(p * (1 - p)))


# --- asymmetric Laplace -----------------------------------------------------


def test_al_logpdf_examples():
    assert dists.al_logpdf(0.3, 0.3, 1.0, 0.5) == pytest.approx(math.log(0.25), abs=1e-15)
    assert dists.al_logpdf(1.3, 0.3, 1.0, 0.5) == pytest.approx(math.log(0.25) - 0.5, abs=1e-15)


@given(st.floats(-50, 50), st.floats(0.01, 20))
def test_al_symmetric_case(mu, d):
    assert dists.al_logpdf(mu + d, mu, 1.0, 0.5) == pytest.approx(dists.al_logpdf(mu - d, mu, 1.0, 0.5))


@pytest.mark.parametrize("mu, sigma, p", [(0, 1, 0.5), (2, 0.3, 0.2), (-1, 2, 0.9)])
def test_al_matches_scipy(mu, sigma, p):
    ref = scipy_al(mu, sigma, p)
    y = np.linspace(mu - 5 * sigma, mu + 5 * sigma, 41)
    assert np.allclose(dists.al_logpdf(y, mu, sigma, p), ref.logpdf(y), atol=1e-12)
    assert np.allclose(dists.al_cdf(y, mu, sigma, p), ref.cdf(y), atol=1e-12)
    m, v, s, k = dists.al_moments(mu, sigma, p)
    rm, rv, rs, rk = ref.stats("mvsk")
    assert m == pytest.approx(rm) and v == pytest.approx(rv) and s == pytest.approx(rs)
    assert k == pytest.approx(rk + 3)  # scipy reports excess kurtosis


def test_al_quantile_examples():
    assert dists.al_inv_cdf(0.3, 1.5, 2.0, 0.3) == pytest.approx(1.5, abs=1e-15)
    assert dists.al_inv_cdf(0.25, 0, 1, 0.5) == pytest.approx(2 * math.log(0.5), abs=1e-12)
    assert dists.al_inv_cdf(0.75, 0, 1, 0.5) == pytest.approx(1.38629, abs=1e-5)


def test_al_cdf_limits_and_location():
    assert dists.al_cdf(0.4, 0.4, 1, 0.3) == pytest.approx(0.3)
    assert dists.al_cdf(-1e6, 0, 1, 0.3) == 0.0
    assert dists.al_cdf(1e6, 0, 1, 0.3) == 1.0


@pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.9])
def test_al_round_trip(p):
    q = dists.al_inv_cdf(U, 0.2, 0.7, p)
    assert np.max(np.abs(dists.al_cdf(q, 0.2, 0.7, p) - U)) <= 1e-12
    assert np.all(np.diff(q) > 0)


def test_al_moments_examples():
    m, v, s, k = dists.al_moments(0, 1, 0.5)
    assert (m, v, s, k) == pytest.approx((0, 8, 0, 6))
    s75 = dists.al_moments(0, 1, 0.75)[2]
    s25 = dists.al_moments(0, 1, 0.25)[2]
    assert s75 < 0 and s25 == pytest.approx(-s75)


def test_al_sampler_moments():
    rng = np.random.default_rng(11)
    n = 10**6
    x = dists.al_sample(1.0, 0.5, 0.3, rng, n)
    m, v, _, _ = dists.al_moments(1.0, 0.5, 0.3)
    assert abs(x.mean() - m) < 4 * math.sqrt(v / n)
    frac = np.mean(x <= 1.0)
    assert abs(frac - 0.3) < 4 * math.sqrt(0.3 * 0.7 / n)
    again = dists.al_sample(1.0, 0.5, 0.3, np.random.default_rng(11), 10)
    assert np.array_equal(again, x[:10])


def test_al_domain():
    with pytest.raises(DomainError):
        dists.al_inv_cdf(1.0, 0, 1, 0.5)
    with pytest.raises(DomainError):
        dists.al_logpdf(np.nan, 0, 1, 0.5)
    with pytest.raises(ParameterError):
        dists.ALParams(0, 1, 1.2)


# --- pinball loss -------------------------------------------------------------


def test_pinball_examples():
    assert dists.pinball_loss([1.0], 0.5) == 0.5
    assert dists.pinball_loss([-1.0], 0.5) == 0.5
    assert dists.pinball_loss([2.0], 0.9) == pytest.approx(1.8)
    assert dists.pinball_loss([], 0.3) == 0.0


@pytest.mark.parametrize("u", [0.1, 0.3, 0.5, 0.75, 0.95])
def test_pinball_minimizer_is_sample_quantile(u):
    # brute-force grid search oracle on a 10-point sample
    x = np.array([3.1, -0.4, 2.2, 0.7, 5.5, 1.9, -2.3, 0.1, 4.4, 1.2])
    grid = np.linspace(-3, 6, 90001)
    loss = [dists.pinball_loss(x - c, u) for c in grid[::10]]
    best = grid[::10][int(np.argmin(loss))]
    xs, n = np.sort(x), len(x)
    k = u * n
    if k == int(k):  # flat stretch between two order statistics
        lo, hi = xs[int(k) - 1], xs[int(k)]
    else:
        lo = hi = xs[math.ceil(k) - 1]
    assert lo - 1e-3 <= best <= hi + 1e-3


# --- power-Pareto ---------------------------------------------------------------


def test_pp_quantile_examples():
    assert dists.pp_quantile(0.5, 1, 0) == pytest.approx(0.5)
    assert dists.pp_quantile(0.9, 0, 1) == pytest.approx(10.0)
    assert dists.pp_quantile(0.25, 2, 1) == pytest.approx(0.0625 / 0.75)


def test_pp_solve_examples():
    assert dists.pp_solve_u(1.0, 0.0, 2.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert dists.pp_solve_u(1e-12, 0.0, 1.0, 1.0, 1.0) < 1e-11
    with pytest.raises(SupportError):
        dists.pp_solve_u(0.0, 0.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("g1, g2", [(1, 1), (2, 0.5), (0.5, 2), (0.08, 0.3), (9.5, 0.05)])
def test_pp_round_trip(g1, g2):
    # mu = 0 keeps tiny kernel values representable (u**9.5 underflows next to 0.3)
    y = 1.7 * dists.pp_quantile(U, g1, g2)
    u = dists.pp_solve_u(y, 0.0, 1.7, g1, g2)
    assert np.max(np.abs(u - U)) < 1e-10


def test_pp_uniform_case():
    y = np.linspace(0.05, 0.95, 10)
    assert np.allclose(dists.pp_logpdf(y, 0, 1, 1, 0), 0.0, atol=1e-12)


@pytest.mark.parametrize("g1, g2", [(1, 1), (2, 0.5), (0.5, 2)])
def test_pp_density_normalized(g1, g2):
    # substitution y = Q(u): integral of f(Q(u)) Q'(u) du over (0, 1)
    def integrand(u):
        y = dists.pp_quantile(u, g1, g2)
        dq = y * (g1 / u + g2 / (1 - u))
        return math.exp(dists.pp_logpdf(y, 0.0, 1.0, g1, g2)) * dq

    val, err = integrate.quad(integrand, 0, 1, limit=200, epsabs=1e-12, epsrel=1e-12)
    assert abs(val - 1) < 1e-6


def test_pp_density_off_support():
    assert dists.pp_logpdf(0.5, 0.5, 1.0, 1.0, 1.0) == -np.inf
    assert dists.pp_logpdf(0.4, 0.5, 1.0, 1.0, 1.0) == -np.inf


def test_pp_raw_moments_match_sampler():
    rng = np.random.default_rng(4)
    x = dists.pp_sample(0.0, 1.0, 0.5, 0.2, rng, 10**6)
    m1 = dists.pp_raw_moment(1, 0.5, 0.2)
    m2 = dists.pp_raw_moment(2, 0.5, 0.2)
    assert abs(x.mean() - m1) < 4 * math.sqrt((m2 - m1**2) / x.size)
    assert dists.pp_raw_moment(2, 0.5, 0.5) == np.inf


# --- GB2, GG, Gamma ---------------------------------------------------------------


def test_gb2_logpdf_example():
    assert dists.gb2_logpdf(1.0, 1, 1, 1, 1) == pytest.approx(math.log(0.25), abs=1e-15)


@pytest.mark.parametrize("a, b, p, q", [(1, 1, 1, 1), (2, 3, 2, 2), (-2, 1, 2, 3)])
def test_gb2_against_beta_prime(a, b, p, q):
    # (y/b)^a is beta-prime(p, q); for a < 0 the map is decreasing, hence sf
    y = np.linspace(0.05, 8, 60)
    z = (y / b) ** a
    ref = stats.betaprime(p, q)
    logpdf = ref.logpdf(z) + np.log(abs(a) * z / y)
    assert np.allclose(dists.gb2_logpdf(y, a, b, p, q), logpdf, atol=1e-10)
    cdf = ref.cdf(z) if a > 0 else ref.sf(z)
    assert np.allclose(dists.gb2_cdf(y, a, b, p, q), cdf, atol=1e-12)


def test_gb2_quantile_examples_and_monotone():
    assert dists.gb2_quantile(0.5, 1, 1, 1, 1) == pytest.approx(1.0, abs=1e-12)
    for a in (-2, 2):
        q = dists.gb2_quantile(U, a, 1.5, 2.0, 3.0)
        assert np.all(np.diff(q) > 0)
        assert np.max(np.abs(dists.gb2_cdf(q, a, 1.5, 2.0, 3.0) - U)) < 1e-9


def test_gb2_scale_from_mean():
    b = dists.gb2_scale_from_mean(2.0, 2.0, 2.0, 3.0)
    assert dists.gb2_mean(2.0, b, 2.0, 3.0) == pytest.approx(2.0)
    assert dists.gb2_scale_from_mean(4.0, 2.0, 2.0, 3.0) == pytest.approx(2 * b)
    assert dists.gg_scale_from_mean(3.0, 1.0, 2.5) == pytest.approx(3.0 / 2.5)
    with pytest.raises(ParameterError):
        dists.gb2_scale_from_mean(1.0, 1.0, 1.0, 0.5)


def test_gb2_monte_carlo_mean_and_variance():
    rng = np.random.default_rng(8)
    a, p, q, mu = 2.0, 2.0, 3.0, 1.0
    b = dists.gb2_scale_from_mean(mu, a, p, q)
    x = dists.gb2_sample(a, b, p, q, rng, 10**6)
    var = dists.gb2_variance(mu, a, p, q)
    n = x.size
    assert abs(x.mean() - mu) < 4 * math.sqrt(var / n)
    # SE of the sample variance from the fourth central moment (q - 4/a = 1 > 0)
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var(ddof=1) - var) < 4 * math.sqrt((m4 - var**2) / n)
    assert dists.gb2_variance(2.0, a, p, q) == pytest.approx(4 * var)


def test_gb2_variance_blows_up_at_moment_boundary():
    a = 2.0
    qs = 2 / a + np.logspace(-1, -8, 8)
    v = dists.gb2_variance(1.0, a, 2.0, qs)
    assert np.all(np.diff(v) > 0) and v[-1] > 1e6
    assert dists.gb2_variance(1.0, a, 2.0, 2 / a) == np.inf


@pytest.mark.parametrize("mu, a, p", [(2.0, 1.0, 1.0), (5.0, 2.5, 0.7), (1.0, -1.5, 3.0), (10.0, 33.22, 0.08)])
def test_gg_against_scipy(mu, a, p):
    b = dists.gg_scale_from_mean(mu, a, p)
    ref = stats.gengamma(p, a, scale=b)
    y = ref.ppf(np.linspace(0.01, 0.99, 25))
    assert np.allclose(dists.gg_logpdf(y, mu, a, p), ref.logpdf(y), atol=1e-9)
    assert np.allclose(dists.gg_cdf(y, mu, a, p), ref.cdf(y), atol=1e-12)
    assert ref.mean() == pytest.approx(mu, rel=1e-10)


def test_gg_exponential_examples():
    mu = 3.0
    assert dists.gg_quantile(1 - math.exp(-1), mu, 1.0, 1.0) == pytest.approx(mu)
    y = np.linspace(0.1, 10, 11)
    assert np.allclose(dists.gg_logpdf(y, mu, 1.0, 1.0), -math.log(mu) - y / mu, atol=1e-13)


def test_gamma_matches_textbook_density():
    mu, p = 4.0, 1.87
    y = np.linspace(0.05, 30, 50)
    ref = stats.gamma(p, scale=mu / p).logpdf(y)
    assert np.max(np.abs(dists.gamma_logpdf(y, mu, p) - ref)) < 1e-12
    assert dists.gamma_quantile(0.5, mu, p) == pytest.approx(stats.gamma(p, scale=mu / p).median())


def test_gg_sampler_moments():
    rng = np.random.default_rng(5)
    x = dists.gg_sample(2.0, 1.5, 2.0, rng, 10**6)
    v = dists.gg_variance(2.0, 1.5, 2.0)
    assert abs(x.mean() - 2.0) < 4 * math.sqrt(v / x.size)


def test_gb2_domain():
    with pytest.raises(DomainError):
        dists.gb2_logpdf(0.0, 1, 1, 1, 1)
    with pytest.raises(ParameterError):
        dists.GB2Params(0.0, 1, 1, 1)
