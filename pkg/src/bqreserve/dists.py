"""Distribution kernels used by the quantile regression models.

Three families are covered:

* asymmetric Laplace (AL) on the log scale, whose skew parameter ``p`` is the
  quantile level of its location;
* the power-Pareto (PP) model, defined through its quantile function
  ``u**g1 * (1 - u)**(-g2)``; its density needs a per-observation root solve;
* the generalized beta of the second kind (GB2) on the original scale, with
  the generalized gamma (GG, ``q -> inf``) and Gamma (GG with ``a = 1``)
  sub-families, all parameterized through their mean.

All functions broadcast over numpy arrays.  Densities are evaluated on the
log scale throughout.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy import special as sc

from .errors import DomainError, NumericConvergenceError, ParameterError, SupportError
from .special import (
    reg_inc_beta,
    reg_inc_beta_inv_pair,
    reg_inc_gamma,
    reg_inc_gamma_inv,
    reg_inc_gamma_upper,
)

__all__ = [
    "ALParams", "PPParams", "GB2Params",
    "al_logpdf", "al_cdf", "al_inv_cdf", "al_moments", "al_sample",
    "pinball_loss",
    "pp_quantile", "pp_solve_u", "pp_logpdf", "pp_cdf", "pp_sample", "pp_raw_moment",
    "gb2_logpdf", "gb2_cdf", "gb2_quantile", "gb2_scale_from_mean", "gb2_mean",
    "gb2_variance", "gb2_sample",
    "gg_scale_from_mean", "gg_logpdf", "gg_cdf", "gg_quantile", "gg_variance", "gg_sample",
    "gamma_logpdf", "gamma_cdf", "gamma_quantile",
]


def _prob(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    return u


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


def _scalar(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


# ---------------------------------------------------------------------------
# Asymmetric Laplace


@dataclass(frozen=True)
class ALParams:
    mu: float = 0.0
    sigma: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("AL scale must be positive")
        if not 0 < self.p < 1:
            raise ParameterError("AL skew p must lie in (0, 1)")

    def logpdf(self, y):
        return al_logpdf(y, self.mu, self.sigma, self.p)

    def cdf(self, y):
        return al_cdf(y, self.mu, self.sigma, self.p)

    def quantile(self, u):
        return al_inv_cdf(u, self.mu, self.sigma, self.p)


def al_logpdf(y, mu=0.0, sigma=1.0, p=0.5):
    """Log-density of AL(mu, sigma**2, p).

    ``log(p (1-p) / sigma) - (y - mu)/sigma * (p - 1{y <= mu})``
    """
    y, mu, sigma, p = (np.asarray(v, dtype=float) for v in (y, mu, sigma, p))
    _finite(y, mu)
    r = (y - mu) / sigma
    return _scalar(np.log(p * (1.0 - p) / sigma) - r * (p - (r <= 0)))


def al_cdf(y, mu=0.0, sigma=1.0, p=0.5):
    y, mu, sigma, p = (np.asarray(v, dtype=float) for v in (y, mu, sigma, p))
    r = (y - mu) / sigma
    with np.errstate(over="ignore"):
        left = p * np.exp(np.minimum((1.0 - p) * r, 0.0))
        right = 1.0 - (1.0 - p) * np.exp(np.minimum(-p * r, 0.0))
    return _scalar(np.where(r <= 0, left, right))


def al_inv_cdf(u, mu=0.0, sigma=1.0, p=0.5):
    """Closed-form AL quantile function."""
    u = _prob(u)
    mu, sigma, p = (np.asarray(v, dtype=float) for v in (mu, sigma, p))
    lower = mu + sigma / (1.0 - p) * np.log(u / p)
    upper = mu - sigma / p * np.log((1.0 - u) / (1.0 - p))
    return _scalar(np.where(u <= p, lower, upper))


def al_moments(mu=0.0, sigma=1.0, p=0.5):
    """Mean, variance, skewness and kurtosis of AL(mu, sigma**2, p)."""
    mu, sigma, p = (np.asarray(v, dtype=float) for v in (mu, sigma, p))
    pc = 1.0 - p
    mean = mu + sigma * (1.0 - 2.0 * p) / (p * pc)
    var = sigma**2 * (1.0 - 2.0 * p + 2.0 * p**2) / (pc**2 * p**2)
    skew = 2.0 * (pc**3 - p**3) / (pc**2 + p**2) ** 1.5
    kurt = (9.0 * p**4 + 6.0 * p**2 * pc**2 + 9.0 * pc**4) / (1.0 - 2.0 * p + 2.0 * p**2) ** 2
    return tuple(_scalar(np.asarray(v)) for v in (mean, var, skew, kurt))


def al_sample(mu, sigma, p, rng, size=None):
    """Inverse-transform draws from AL(mu, sigma**2, p)."""
    u = rng.random(size)
    # rng.random can return exactly 0
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return al_inv_cdf(u, mu, sigma, p)


def pinball_loss(residuals, u):
    """Check loss ``sum(e * (u - 1{e < 0}))``; zero for an empty input."""
    if not 0 < u < 1:
        raise DomainError("quantile level must lie in (0, 1)")
    e = np.asarray(residuals, dtype=float)
    if e.size == 0:
        return 0.0
    return float(np.sum(e * (u - (e < 0))))


# ---------------------------------------------------------------------------
# Power-Pareto


@dataclass(frozen=True)
class PPParams:
    mu: float = 0.0
    sigma: float = 1.0
    gamma1: float = 0.5
    gamma2: float = 0.5
    gamma1_max: float = 10.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("PP scale must be positive")
        if not 0 < self.gamma1 <= self.gamma1_max:
            raise ParameterError("PP power exponent must lie in (0, M]")
        if not self.gamma2 > 0:
            raise ParameterError("PP Pareto exponent must be positive")

    def logpdf(self, y):
        return pp_logpdf(y, self.mu, self.sigma, self.gamma1, self.gamma2)

    def cdf(self, y):
        return pp_cdf(y, self.mu, self.sigma, self.gamma1, self.gamma2)

    def quantile(self, u):
        return self.mu + self.sigma * pp_quantile(u, self.gamma1, self.gamma2)


def pp_quantile(u, gamma1, gamma2):
    """Standardized PP quantile ``u**gamma1 * (1 - u)**(-gamma2)``."""
    u = _prob(u)
    g1, g2 = np.asarray(gamma1, float), np.asarray(gamma2, float)
    if np.any(g1 < 0) or np.any(g2 < 0):
        raise ParameterError("PP exponents must be nonnegative")
    return _scalar(np.exp(g1 * np.log(u) - g2 * np.log1p(-u)))


@numba.njit(cache=True)
def _softplus(x):
    if x > 0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@numba.njit(cache=True)
def _pp_g(v, g1, g2):
    # g(v) = g1 log u - g2 log(1 - u) with u = sigmoid(v)
    return -g1 * _softplus(-v) + g2 * _softplus(v)


@numba.njit(cache=True)
def _pp_root(c, g1, g2):
    """Solve g1 log u - g2 log(1-u) = c for v = logit(u).

    Returns -inf / +inf when c lies below / above the attainable range and
    nan when the iteration cap is hit.
    """
    if g2 == 0.0 and c >= 0.0:
        return np.inf
    if g1 == 0.0 and c <= 0.0:
        return -np.inf
    lo = -1.0
    hi = 1.0
    k = 0
    while _pp_g(lo, g1, g2) > c:
        lo *= 2.0
        k += 1
        if k > 1100:
            return -np.inf
    k = 0
    while _pp_g(hi, g1, g2) < c:
        hi *= 2.0
        k += 1
        if k > 1100:
            return np.inf
    v = 0.5 * (lo + hi)
    for _ in range(200):
        f = _pp_g(v, g1, g2) - c
        if f == 0.0:
            return v
        if f < 0.0:
            lo = v
        else:
            hi = v
        u = 1.0 / (1.0 + np.exp(-v))
        d = g1 * (1.0 - u) + g2 * u
        vn = v - f / d
        if not (lo < vn < hi):
            vn = 0.5 * (lo + hi)
        tol = 1e-13 + 4e-16 * abs(v)
        if abs(vn - v) <= tol or hi - lo <= tol:
            return vn
        v = vn
    return np.nan


@numba.njit(cache=True)
def _pp_solve_many(y, mu, sigma, g1, g2, out_logu, out_log1mu):
    """Fill log u and log(1-u) for each observation; -inf marks support misses."""
    n = y.shape[0]
    status = 0
    for k in range(n):
        d = y[k] - mu[k]
        if not d > 0.0:
            out_logu[k] = -np.inf
            out_log1mu[k] = 0.0
            continue
        c = np.log(d) - np.log(sigma[k])
        v = _pp_root(c, g1[k], g2[k])
        if np.isnan(v):
            status = 1
            out_logu[k] = np.nan
            out_log1mu[k] = np.nan
        elif v == np.inf:
            out_logu[k] = 0.0
            out_log1mu[k] = -np.inf
        else:
            out_logu[k] = -_softplus(-v)
            out_log1mu[k] = -_softplus(v)
    return status


@numba.njit(cache=True)
def pp_cell_loglik(y, mu, sigma, g1, g2):
    """PP log-density of one observation; -inf off support, nan if unsolved."""
    d = y - mu
    if not d > 0.0:
        return -np.inf
    v = _pp_root(np.log(d) - np.log(sigma), g1, g2)
    if np.isnan(v):
        return np.nan
    if v == np.inf or v == -np.inf:
        return -np.inf
    logu = -_softplus(-v)
    log1mu = -_softplus(v)
    u = np.exp(logu)
    return ((1.0 - g1) * logu + (g2 + 1.0) * log1mu - np.log(sigma)
            - np.log(g2 * u + g1 * (1.0 - u)))


@numba.njit(cache=True)
def pp_loglik_sum(y, mu, sigma, g1, g2):
    """Summed PP log-density with scalar exponents; -inf on any support miss."""
    total = 0.0
    for k in range(y.shape[0]):
        v = pp_cell_loglik(y[k], mu[k], sigma[k], g1, g2)
        if np.isnan(v):
            return np.nan
        if v == -np.inf:
            return -np.inf
        total += v
    return total


def _pp_arrays(y, mu, sigma, gamma1, gamma2):
    arrs = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma, gamma1, gamma2)))
    shape = arrs[0].shape
    flat = [np.ascontiguousarray(a).ravel() for a in arrs]
    if np.any(flat[2] <= 0):
        raise ParameterError("PP scale must be positive")
    if np.any(flat[3] < 0) or np.any(flat[4] < 0) or np.any((flat[3] == 0) & (flat[4] == 0)):
        raise ParameterError("PP exponents must be nonnegative and not both zero")
    return shape, flat


def _pp_logu(y, mu, sigma, gamma1, gamma2):
    shape, (yf, mf, sf, g1, g2) = _pp_arrays(y, mu, sigma, gamma1, gamma2)
    logu = np.empty_like(yf)
    log1mu = np.empty_like(yf)
    if _pp_solve_many(yf, mf, sf, g1, g2, logu, log1mu):
        raise NumericConvergenceError("power-Pareto root solve did not converge")
    return shape, logu, log1mu, sf, g1, g2


def pp_solve_u(y, mu, sigma, gamma1, gamma2):
    """Level ``u`` at which ``mu + sigma * pp_quantile(u) == y``.

    Raises :class:`SupportError` when ``y <= mu`` or ``y`` is outside the
    range the kernel can reach.
    """
    shape, logu, log1mu, *_ = _pp_logu(y, mu, sigma, gamma1, gamma2)
    if np.any(np.isinf(logu)) or np.any(np.isinf(log1mu)):
        raise SupportError("observation outside the power-Pareto support")
    return _scalar(np.exp(logu).reshape(shape))


def pp_cdf(y, mu, sigma, gamma1, gamma2):
    shape, logu, *_ = _pp_logu(y, mu, sigma, gamma1, gamma2)
    return _scalar(np.exp(logu).reshape(shape))


def pp_logpdf(y, mu, sigma, gamma1, gamma2):
    """PP log-density; ``-inf`` outside the support (including ``y == mu``)."""
    shape, logu, log1mu, sf, g1, g2 = _pp_logu(y, mu, sigma, gamma1, gamma2)
    u = np.exp(logu)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = ((1.0 - g1) * logu + (g2 + 1.0) * log1mu - np.log(sf)
               - np.log(g2 * u + g1 * (1.0 - u)))
    out = np.where(np.isinf(logu) | np.isinf(log1mu), -np.inf, out)
    return _scalar(out.reshape(shape))


def pp_sample(mu, sigma, gamma1, gamma2, rng, size=None):
    u = rng.random(size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return mu + sigma * pp_quantile(u, gamma1, gamma2)


def pp_raw_moment(k, gamma1, gamma2):
    """``E[Q(U)**k] = B(k g1 + 1, 1 - k g2)``; ``inf`` when ``k g2 >= 1``."""
    g1, g2 = np.asarray(gamma1, float), np.asarray(gamma2, float)
    with np.errstate(invalid="ignore"):
        out = np.where(k * g2 < 1, np.exp(sc.betaln(k * g1 + 1.0, np.maximum(1.0 - k * g2, 1e-300))), np.inf)
    return _scalar(out)


# ---------------------------------------------------------------------------
# GB2 family


@dataclass(frozen=True)
class GB2Params:
    a: float
    b: float
    p: float
    q: float

    def __post_init__(self):
        if self.a == 0 or not np.isfinite(self.a):
            raise ParameterError("GB2 a must be nonzero")
        if not (self.b > 0 and self.p > 0 and self.q > 0):
            raise ParameterError("GB2 b, p, q must be positive")

    def logpdf(self, y):
        return gb2_logpdf(y, self.a, self.b, self.p, self.q)

    def cdf(self, y):
        return gb2_cdf(y, self.a, self.b, self.p, self.q)

    def quantile(self, u):
        return gb2_quantile(u, self.a, self.b, self.p, self.q)


def _moment_ok(k, a, p, q=np.inf):
    a, p, q = np.asarray(a, float), np.asarray(p, float), np.asarray(q, float)
    return (p + k / a > 0) & (q - k / a > 0)


def _check_gb2(a, b, p, q):
    a = np.asarray(a, float)
    if np.any(a == 0):
        raise ParameterError("GB2 a must be nonzero")
    if np.any(~(np.asarray(b, float) > 0)) or np.any(~(np.asarray(p, float) > 0)) \
            or np.any(~(np.asarray(q, float) > 0)):
        raise ParameterError("GB2 b, p, q must be positive")


def gb2_logpdf(y, a, b, p, q):
    """GB2 log-density; ``|a|`` in the leading factor keeps ``a < 0`` valid."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("GB2 density is defined for y > 0")
    _check_gb2(a, b, p, q)
    a, b, p, q = (np.asarray(v, dtype=float) for v in (a, b, p, q))
    t = a * np.log(y / b)
    out = (np.log(np.abs(a)) - np.log(y) + p * t - sc.betaln(p, q)
           - (p + q) * np.logaddexp(0.0, t))
    return _scalar(out)


def gb2_cdf(y, a, b, p, q):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("GB2 cdf is defined for y >= 0")
    _check_gb2(a, b, p, q)
    a, b, p, q = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, p, q, y)))[:4]
    y = np.broadcast_to(y, a.shape)
    with np.errstate(divide="ignore"):
        t = a * np.log(y / b)
    # z = e^t / (1 + e^t); use the complementary tail when z > 1/2
    z = sc.expit(t)
    zc = sc.expit(-t)
    lower_z = np.where(t <= 0, sc.betainc(p, q, z), 1.0 - sc.betainc(q, p, zc))
    out = np.where(a > 0, lower_z, 1.0 - lower_z)
    return _scalar(out)


def gb2_quantile(u, a, b, p, q):
    """Closed-form GB2 quantile ``b * (w / (1 - w))**(1/a)``.

    ``w`` is the beta quantile at ``u`` for ``a > 0`` and at ``1 - u`` for
    ``a < 0`` so the result is increasing in ``u`` either way.
    """
    u = _prob(u)
    _check_gb2(a, b, p, q)
    a, b, p, q, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, p, q, u)))
    level = np.where(a > 0, u, 1.0 - u)
    w, wc = reg_inc_beta_inv_pair(level, p, q)
    return _scalar(b * np.exp((np.log(w) - np.log(wc)) / a))


def gb2_scale_from_mean(mu, a, p, q):
    """Scale ``b`` giving mean ``mu``: ``mu B(p, q) / B(p + 1/a, q - 1/a)``."""
    _check_gb2(a, 1.0, p, q)
    if np.any(~_moment_ok(1, a, p, q)):
        raise ParameterError("GB2 mean does not exist (need p + 1/a > 0 and q - 1/a > 0)")
    a, p, q = (np.asarray(v, dtype=float) for v in (a, p, q))
    return _scalar(np.asarray(mu, float) * np.exp(sc.betaln(p, q) - sc.betaln(p + 1.0 / a, q - 1.0 / a)))


def gb2_mean(a, b, p, q):
    _check_gb2(a, b, p, q)
    if np.any(~_moment_ok(1, a, p, q)):
        raise ParameterError("GB2 mean does not exist")
    a, b, p, q = (np.asarray(v, dtype=float) for v in (a, b, p, q))
    return _scalar(b * np.exp(sc.betaln(p + 1.0 / a, q - 1.0 / a) - sc.betaln(p, q)))


def gb2_variance(mu, a, p, q):
    """Variance at mean ``mu``; ``inf`` where the second moment does not exist."""
    _check_gb2(a, 1.0, p, q)
    a, p, q = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, p, q)))
    mu = np.asarray(mu, float)
    ok = _moment_ok(2, a, p, q)
    with np.errstate(invalid="ignore"):
        a_ = np.where(ok, a, 1.0)
        p_ = np.where(ok, p, 2.0)
        q_ = np.where(ok, q, 3.0)
        log_ratio = (sc.betaln(p_, q_) + sc.betaln(p_ + 2.0 / a_, q_ - 2.0 / a_)
                     - 2.0 * sc.betaln(p_ + 1.0 / a_, q_ - 1.0 / a_))
        var = mu**2 * np.expm1(log_ratio)
    return _scalar(np.where(ok, var, np.inf))


def gb2_sample(a, b, p, q, rng, size=None):
    """Quantile-transform draws from GB2(a, b, p, q)."""
    u = rng.random(size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return gb2_quantile(u, a, b, p, q)


# GG and Gamma, parameterized by the mean


def _check_gg(a, p):
    if np.any(np.asarray(a, float) == 0) or np.any(~(np.asarray(p, float) > 0)):
        raise ParameterError("GG needs a != 0 and p > 0")


def gg_scale_from_mean(mu, a, p):
    """``b = mu Gamma(p) / Gamma(p + 1/a)``."""
    _check_gg(a, p)
    a, p = np.asarray(a, float), np.asarray(p, float)
    if np.any(~(p + 1.0 / a > 0)):
        raise ParameterError("GG mean does not exist (need p + 1/a > 0)")
    return _scalar(np.asarray(mu, float) * np.exp(sc.gammaln(p) - sc.gammaln(p + 1.0 / a)))


def gg_logpdf(y, mu, a, p):
    """Generalized gamma log-density at mean ``mu``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("GG density is defined for y > 0")
    b = gg_scale_from_mean(mu, a, p)
    a, p = np.asarray(a, float), np.asarray(p, float)
    t = a * np.log(y / b)
    return _scalar(np.log(np.abs(a)) + p * t - np.exp(t) - np.log(y) - sc.gammaln(p))


def gg_cdf(y, mu, a, p):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("GG cdf is defined for y >= 0")
    b = gg_scale_from_mean(mu, a, p)
    a, p = np.asarray(a, float), np.asarray(p, float)
    with np.errstate(divide="ignore", over="ignore"):
        z = np.exp(a * np.log(y / b))
    return _scalar(np.where(a > 0, reg_inc_gamma(z, p), reg_inc_gamma_upper(z, p)))


def gg_quantile(u, mu, a, p):
    u = _prob(u)
    b = gg_scale_from_mean(mu, a, p)
    a, p = np.asarray(a, float), np.asarray(p, float)
    z = reg_inc_gamma_inv(np.where(a > 0, u, 1.0 - u), p)
    return _scalar(b * np.exp(np.log(z) / a))


def gg_variance(mu, a, p):
    _check_gg(a, p)
    a, p = np.broadcast_arrays(np.asarray(a, float), np.asarray(p, float))
    ok = (p + 2.0 / a > 0) & (p + 1.0 / a > 0)
    a_ = np.where(ok, a, 1.0)
    p_ = np.where(ok, p, 1.0)
    log_ratio = sc.gammaln(p_) + sc.gammaln(p_ + 2.0 / a_) - 2.0 * sc.gammaln(p_ + 1.0 / a_)
    return _scalar(np.where(ok, np.asarray(mu, float) ** 2 * np.expm1(log_ratio), np.inf))


def gg_sample(mu, a, p, rng, size=None):
    u = rng.random(size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return gg_quantile(u, mu, a, p)


def gamma_logpdf(y, mu, p):
    return gg_logpdf(y, mu, 1.0, p)


def gamma_cdf(y, mu, p):
    return gg_cdf(y, mu, 1.0, p)


def gamma_quantile(u, mu, p):
    return gg_quantile(u, mu, 1.0, p)
