"""Model assembly: structure choice, parameter layout, priors, log-posterior.

A model is a distribution family plus linear predictors for location,
scale and (AL only) shape:

* location ``mu*_ij = alpha0 + sum_k alpha_k x_ijk``; positive-support
  families (GB2, GG, Gamma) use it as the log of the mean;
* scale ``sigma2_ij = exp(beta0 + sum_k beta_k s_ijk)`` (AL and PP only);
* shape ``p_i = phi0 + phi1_i`` with identity link (AL accident-year model).

Accident/development dummies drop level 1, so the first-year effects are
structurally zero rather than stored.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special as sc

from . import dists
from .dists import pp_loglik_sum
from .errors import (
    ConfigError,
    DataError,
    InvalidDimensionError,
    NumericConvergenceError,
    ParameterError,
)
from .triangle import (
    DEFAULT_FLOOR,
    DEFAULT_LAMBDA,
    build_index_sets,
    location_covariates,
    log_transform,
    scale_covariates,
    shape_covariates,
)

__all__ = [
    "FAMILIES",
    "ModelSpec",
    "Priors",
    "ParamLayout",
    "ParamVector",
    "Design",
    "CellDistributions",
    "Model",
    "location_predictor",
    "scale_predictor",
    "shape_predictor",
    "log_prior",
    "log_posterior",
    "simulate_triangle",
    "make_params",
    "build_layout",
]

FAMILIES = ("al", "al_np", "pp", "gb2", "gg", "gamma")
LOG_FAMILIES = ("al", "al_np", "pp")
POSITIVE_FAMILIES = ("gb2", "gg", "gamma")
LOCATIONS = {"trend": 0, "nelson_siegel": 1, "anova": 2, "anova_u": 3}
SCALES = {"constant": 0, "accident": 1, "development": 2, "both": 3, "none": None}
SHAPES = ("constant", "accident")

_LOC_ALIASES = {"0": "trend", "1": "nelson_siegel", "2": "anova", "3": "anova_u"}
_SCALE_ALIASES = {"0": "constant", "1": "accident", "2": "development", "3": "both"}


@dataclass(frozen=True)
class ModelSpec:
    """Family and structure choice for one quantile regression model.

    ``family`` is one of ``al`` (AL with estimated skew), ``al_np`` (AL proxy
    with the skew fixed at the quantile level ``u``), ``pp``, ``gb2``, ``gg``
    or ``gamma``.  ``location``/``scale``/``shape`` name the regression
    structures; ``lam`` is the Nelson-Siegel decay.
    """

    family: str = "al"
    location: str = "anova"
    scale: str = "both"
    shape: str = "constant"
    u: float | None = None
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise ConfigError(f"unknown family {f!r}; expected one of {FAMILIES}")
        if self.location not in LOCATIONS:
            raise ConfigError(f"unknown location structure {self.location!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale structure {self.scale!r}")
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape structure {self.shape!r}")
        if not self.lam > 0:
            raise ConfigError("Nelson-Siegel decay lambda must be positive")
        if f in POSITIVE_FAMILIES and self.scale != "none":
            raise ConfigError(f"{f} has no scale component; use scale = none")
        if f in LOG_FAMILIES and self.scale == "none":
            raise ConfigError(f"{f} needs a scale structure")
        if self.shape == "accident" and f != "al":
            raise ConfigError("accident-year shape model requires family al")
        if f == "al_np":
            if self.u is None or not 0 < self.u < 1:
                raise ConfigError("al_np needs a quantile level u in (0, 1)")
        elif self.u is not None:
            raise ConfigError("quantile level u applies to al_np only")
        if self.location == "anova_u" and f != "al_np":
            raise ConfigError("location anova_u is the nonparametric structure; use family al_np")
        if f == "pp":
            if self.location != "nelson_siegel":
                raise ConfigError("pp supports the nelson_siegel location structure only")
            if self.scale not in ("constant", "both"):
                raise ConfigError("pp supports scale constant or both only")

    @classmethod
    def from_label(cls, label, family="al", u=None, lam=DEFAULT_LAMBDA):
        """Parse a two-index label such as ``M23``, ``M23'`` or ``M2.``."""
        s = label.strip().upper().lstrip("M")
        prime = s.endswith("'")
        s = s.rstrip("'")
        if len(s) != 2:
            raise ConfigError(f"cannot parse model label {label!r}")
        loc = _LOC_ALIASES.get(s[0])
        if loc is None:
            raise ConfigError(f"cannot parse model label {label!r}")
        if loc == "anova_u" and family == "al":
            family = "al_np"
        if family in POSITIVE_FAMILIES:
            scale = "none"
        else:
            scale = _SCALE_ALIASES.get(s[1])
            if scale is None:
                raise ConfigError(f"cannot parse model label {label!r}")
        return cls(family=family, location=loc, scale=scale,
                   shape="accident" if prime else "constant", u=u, lam=lam)

    @property
    def label(self):
        loc = LOCATIONS[self.location]
        sc_ = SCALES[self.scale]
        tail = "·" if sc_ is None else str(sc_)
        out = f"M{loc}{tail}"
        if self.shape == "accident":
            out += "'"
        return out

    @property
    def name(self):
        s = f"{self.label} {self.family}"
        if self.u is not None:
            s += f" u={self.u:g}"
        return s


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters and posterior-support constants.

    Normal priors use ``coef_variance`` as a variance.  ``gamma1_max`` is the
    bound ``M`` on the PP power exponent; ``omega2_eps`` the lower bound on
    PP scale values.
    """

    coef_variance: float = 100.0
    a_variance: float = 100.0
    gamma_shape: float = 0.001
    gamma_rate: float = 0.001
    gamma1_max: float = 10.0
    omega2_eps: float = 1e-8

    def __post_init__(self):
        for k in ("coef_variance", "a_variance", "gamma_shape", "gamma_rate",
                  "gamma1_max", "omega2_eps"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"prior setting {k} must be positive")


# ---------------------------------------------------------------------------
# parameter layout


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # location | scale | shape | dist
    names: tuple
    start: int

    @property
    def size(self):
        return len(self.names)

    @property
    def slice(self):
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class ParamLayout:
    blocks: tuple

    @property
    def names(self):
        return tuple(n for b in self.blocks for n in b.names)

    @property
    def size(self):
        return sum(b.size for b in self.blocks)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def kind_slice(self, kind):
        bs = [b for b in self.blocks if b.kind == kind]
        if not bs:
            return slice(0, 0)
        return slice(bs[0].start, bs[-1].start + bs[-1].size)


def build_layout(spec, n_years):
    n = int(n_years)
    groups = []

    def dummy(prefix, k):
        return tuple(f"{prefix}[{i}]" for i in range(2, n + 1)) if n > 1 else ()

    groups.append(("alpha0", "location", ("alpha0",)))
    if spec.location == "trend":
        groups += [("alpha1", "location", ("alpha1",)), ("alpha2", "location", ("alpha2",))]
    elif spec.location == "nelson_siegel":
        groups += [("alpha1_S", "location", ("alpha1_S",)),
                   ("alpha2_C", "location", ("alpha2_C",))]
    else:
        groups += [("alpha1", "location", dummy("alpha1", n)),
                   ("alpha2", "location", dummy("alpha2", n))]
    if spec.scale != "none":
        groups.append(("beta0", "scale", ("beta0",)))
        if spec.scale in ("accident", "both"):
            groups.append(("beta1", "scale", dummy("beta1", n)))
        if spec.scale in ("development", "both"):
            groups.append(("beta2", "scale", dummy("beta2", n)))
    if spec.shape == "accident":
        groups += [("phi0", "shape", ("phi0",)), ("phi1", "shape", dummy("phi1", n))]
    dist_names = {
        "al": ("p",) if spec.shape == "constant" else (),
        "al_np": (),
        "pp": ("gamma1", "gamma2"),
        "gb2": ("a", "p", "q"),
        "gg": ("a", "p"),
        "gamma": ("p",),
    }[spec.family]
    groups.append(("dist", "dist", dist_names))
    blocks, start = [], 0
    for name, kind, names in groups:
        if names:
            blocks.append(Block(name, kind, tuple(names), start))
            start += len(names)
    return ParamLayout(tuple(blocks))


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector with named blocks."""

    layout: ParamLayout
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.layout.size:
            raise ParameterError(f"expected {self.layout.size} values, got {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_dict(cls, layout, values, default=0.0):
        unknown = set(values) - set(layout.names)
        if unknown:
            raise ParameterError(f"unknown parameter names: {sorted(unknown)}")
        return cls(layout, [float(values.get(n, default)) for n in layout.names])

    def __getitem__(self, name):
        return float(self.values[self.layout.index(name)])

    def block(self, name):
        return self.values[self.layout.block(name).slice]

    def as_dict(self):
        return dict(zip(self.layout.names, self.values.tolist()))

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))


# ---------------------------------------------------------------------------
# design


@dataclass(frozen=True)
class CellDesign:
    cells: tuple
    X: np.ndarray  # location, with intercept column
    S: np.ndarray  # scale, with intercept column (or empty)
    P: np.ndarray  # shape, with intercept column (or empty)


class Design:
    """Design matrices and predictor evaluation for a ``spec`` on ``I`` years."""

    def __init__(self, spec, n_years):
        if int(n_years) < 1:
            raise InvalidDimensionError("a triangle needs at least one accident year")
        self.spec = spec
        self.n_years = int(n_years)
        self.layout = build_layout(spec, self.n_years)
        self.loc = self.layout.kind_slice("location")
        self.scale = self.layout.kind_slice("scale")
        self.shp = self.layout.kind_slice("shape")
        self.dist = self.layout.kind_slice("dist")
        self.dist_names = self.layout.names[self.dist]

    def matrices(self, cells):
        spec, n = self.spec, self.n_years
        cells = tuple((int(i), int(j)) for i, j in cells)
        X, S, P = [], [], []
        for i, j in cells:
            if not (1 <= i <= n and 1 <= j <= n):
                raise DataError(f"cell ({i},{j}) outside the triangle", code="invalid_index")
            X.append(np.concatenate([[1.0], location_covariates(spec.location, i, j, n, spec.lam)]))
            if spec.scale != "none":
                S.append(np.concatenate([[1.0], scale_covariates(spec.scale, i, j, n)]))
            if spec.shape == "accident":
                P.append(np.concatenate([[1.0], shape_covariates("accident", i, n)]))
        k = len(cells)
        X = np.array(X).reshape(k, self.loc.stop - self.loc.start)
        S = np.array(S).reshape(k, self.scale.stop - self.scale.start)
        P = np.array(P).reshape(k, self.shp.stop - self.shp.start)
        return CellDesign(cells, X, S, P)

    def dist_value(self, theta, name):
        return float(theta[self.dist][self.dist_names.index(name)])

    def natural_params(self, theta, design):
        """Per-cell distribution parameters at ``theta`` (flat array).

        Log-scale families return ``mu`` (log-scale location) and ``sigma``;
        positive families return the mean and the scale ``b``.
        """
        theta = np.asarray(theta, dtype=float)
        spec = self.spec
        mu_star = design.X @ theta[self.loc]
        out = {"family": spec.family, "mu_star": mu_star}
        if spec.family in LOG_FAMILIES:
            sigma2 = np.exp(design.S @ theta[self.scale])
            out["sigma2"] = sigma2
            out["sigma"] = np.sqrt(sigma2)
            out["mu"] = mu_star
            if spec.family == "al_np":
                out["p"] = np.full(mu_star.shape, spec.u)
            elif spec.family == "al":
                if spec.shape == "accident":
                    out["p"] = design.P @ theta[self.shp]
                else:
                    out["p"] = np.full(mu_star.shape, self.dist_value(theta, "p"))
            else:
                out["gamma1"] = self.dist_value(theta, "gamma1")
                out["gamma2"] = self.dist_value(theta, "gamma2")
        else:
            mean = np.exp(mu_star)
            out["mean"] = mean
            if spec.family == "gb2":
                a, p, q = (self.dist_value(theta, k) for k in ("a", "p", "q"))
                out.update(a=a, p=p, q=q, b=dists.gb2_scale_from_mean(mean, a, p, q))
            else:
                a = 1.0 if spec.family == "gamma" else self.dist_value(theta, "a")
                p = self.dist_value(theta, "p")
                out.update(a=a, p=p, b=dists.gg_scale_from_mean(mean, a, p))
        return out


class CellDistributions:
    """Per-cell predictive distributions for given natural parameters.

    Quantiles, draws and moments are reported on the modelling scale
    (log for AL/PP); ``original_scale=True`` back-transforms quantiles and
    draws with ``exp``.
    """

    def __init__(self, params):
        self.params = params
        self.family = params["family"]

    @property
    def log_scale(self):
        return self.family in LOG_FAMILIES

    def quantile(self, u, original_scale=True):
        """Quantile at level ``u``; ``u`` broadcasts against the cells."""
        P, f = self.params, self.family
        u = np.asarray(u, dtype=float)
        if f in ("al", "al_np"):
            q = dists.al_inv_cdf(u, P["mu"], P["sigma"], P["p"])
        elif f == "pp":
            q = P["mu"] + P["sigma"] * dists.pp_quantile(u, P["gamma1"], P["gamma2"])
        elif f == "gb2":
            return dists.gb2_quantile(u, P["a"], P["b"], P["p"], P["q"])
        else:
            return dists.gg_quantile(u, P["mean"], P["a"], P["p"])
        if not original_scale:
            return q
        with np.errstate(over="ignore"):
            return np.exp(q)

    def cdf(self, y):
        """Cdf on the modelling scale."""
        P, f = self.params, self.family
        if f in ("al", "al_np"):
            return dists.al_cdf(y, P["mu"], P["sigma"], P["p"])
        if f == "pp":
            return dists.pp_cdf(y, P["mu"], P["sigma"], P["gamma1"], P["gamma2"])
        if f == "gb2":
            return dists.gb2_cdf(y, P["a"], P["b"], P["p"], P["q"])
        return dists.gg_cdf(y, P["mean"], P["a"], P["p"])

    def sample(self, rng, size=None, original_scale=True):
        """Independent draws; ``size`` is prepended to the cell shape."""
        n = np.shape(self.params["mu_star"])
        shape = n if size is None else tuple(np.atleast_1d(size)) + n
        u = rng.random(shape)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return self.quantile(u, original_scale=original_scale)

    def moments(self):
        """Mean and variance on the modelling scale (``inf`` when undefined)."""
        P, f = self.params, self.family
        if f in ("al", "al_np"):
            m, v, _, _ = dists.al_moments(P["mu"], P["sigma"], P["p"])
            return np.asarray(m), np.asarray(v)
        if f == "pp":
            m1 = dists.pp_raw_moment(1, P["gamma1"], P["gamma2"])
            m2 = dists.pp_raw_moment(2, P["gamma1"], P["gamma2"])
            mean = P["mu"] + P["sigma"] * m1
            var = P["sigma"] ** 2 * (m2 - m1**2) if np.isfinite(m2) else np.full_like(P["mu"], np.inf)
            return mean, np.broadcast_to(var, np.shape(mean))
        if f == "gb2":
            return P["mean"], dists.gb2_variance(P["mean"], P["a"], P["p"], P["q"])
        return P["mean"], dists.gg_variance(P["mean"], P["a"], P["p"])


# ---------------------------------------------------------------------------
# model with data


class Model:
    """A ``ModelSpec`` bound to a triangle: likelihood, prior, posterior.

    ``cells`` restricts the likelihood to a subset of the observed cells
    (all of them by default).
    """

    def __init__(self, spec, triangle, priors=None, floor=DEFAULT_FLOOR, cells=None):
        self.spec = spec
        self.triangle = triangle
        self.priors = priors or Priors()
        self.floor = float(floor)
        self.design = Design(spec, triangle.n_years)
        self.layout = self.design.layout
        self.n_years = triangle.n_years
        upper, lower = build_index_sets(self.n_years)
        self.cells = tuple(upper) if cells is None else tuple((int(i), int(j)) for i, j in cells)
        if any(c not in upper for c in self.cells):
            raise DataError("likelihood cells must be observed cells")
        self.lower_cells = tuple(lower)
        raw = np.array([triangle.values[i - 1, j - 1] for i, j in self.cells], dtype=float)
        if not np.all(np.isfinite(raw)):
            raise DataError("non-finite data in likelihood cells")
        if spec.family in LOG_FAMILIES:
            logtri = log_transform(triangle, self.floor)
            self.y = np.array([logtri.values[i - 1, j - 1] for i, j in self.cells])
            self.n_floored = logtri.n_floored
        else:
            self.y = np.maximum(raw, self.floor)
            self.n_floored = int(np.sum(raw < self.floor))
        self.log_y = np.log(np.maximum(raw, self.floor))
        self.raw = raw
        self.obs = self.design.matrices(self.cells)
        self.low = self.design.matrices(self.lower_cells)
        self._setup_fast_path()

    # -- helpers ---------------------------------------------------------

    def _setup_fast_path(self):
        d = self.design
        self._loc, self._scale, self._shp = d.loc, d.scale, d.shp
        self._dist0 = d.dist.start
        self._X, self._S, self._P = self.obs.X, self.obs.S, self.obs.P
        self._n = len(self.cells)
        self._coef_stop = max(d.loc.stop, d.scale.stop, d.shp.stop)
        pr = self.priors
        self._norm_const = -0.5 * np.log(2 * np.pi * pr.coef_variance)
        self._a_const = -0.5 * np.log(2 * np.pi * pr.a_variance)
        self._gam_const = pr.gamma_shape * np.log(pr.gamma_rate) - sc.gammaln(pr.gamma_shape)
        self._sum_log_y = float(np.sum(self.log_y))

    def vector(self, values):
        return ParamVector(self.layout, values)

    def natural_params(self, theta, which="observed"):
        design = {"observed": self.obs, "lower": self.low}[which]
        return self.design.natural_params(np.asarray(getattr(theta, "values", theta)), design)

    def distributions(self, theta, which="observed"):
        return CellDistributions(self.natural_params(theta, which))

    # -- densities -------------------------------------------------------

    def log_prior(self, theta):
        """Log prior density; ``-inf`` outside the parameter support."""
        th = np.asarray(getattr(theta, "values", theta), dtype=float)
        pr = self.priors
        coefs = th[: self._coef_stop]
        lp = coefs.size * self._norm_const - 0.5 * float(coefs @ coefs) / pr.coef_variance
        f = self.spec.family
        d = th[self._dist0:]
        if f == "al":
            if self.spec.shape == "constant":
                if not 0.0 < d[0] < 1.0:
                    return -np.inf
        elif f == "pp":
            g1, g2 = d[0], d[1]
            if not (0.0 < g1 <= pr.gamma1_max and g2 > 0.0):
                return -np.inf
        elif f in POSITIVE_FAMILIES:
            if f == "gamma":
                shapes = d[0:1]
            else:
                a = d[0]
                if a == 0.0:
                    return -np.inf
                lp += self._a_const - 0.5 * a * a / pr.a_variance
                shapes = d[1:]
            if np.any(shapes <= 0.0):
                return -np.inf
            k, r = pr.gamma_shape, pr.gamma_rate
            lp += float(np.sum(self._gam_const + (k - 1.0) * np.log(shapes) - r * shapes))
        return lp

    def loglik(self, theta):
        """Summed log-likelihood of the likelihood cells; ``-inf`` off support."""
        th = np.asarray(getattr(theta, "values", theta), dtype=float)
        if self._n == 0:
            return 0.0
        f = self.spec.family
        mu = self._X @ th[self._loc]
        if f in LOG_FAMILIES:
            lsig2 = self._S @ th[self._scale]
            if f == "pp":
                pr = self.priors
                g1, g2 = th[self._dist0], th[self._dist0 + 1]
                if not (0.0 < g1 <= pr.gamma1_max and g2 > 0.0):
                    return -np.inf
                if np.any(mu >= self.y):
                    return -np.inf
                sigma2 = np.exp(lsig2)
                if np.any(sigma2 <= pr.omega2_eps):
                    return -np.inf
                ll = pp_loglik_sum(self.y, mu, np.sqrt(sigma2), g1, g2)
                if np.isnan(ll):
                    raise NumericConvergenceError("PP implicit quantile equation did not converge")
                return ll
            if self.spec.shape == "accident":
                p = self._P @ th[self._shp]
                if np.any(p <= 0.0) or np.any(p >= 1.0):
                    return -np.inf
                log_pp = float(np.sum(np.log(p * (1.0 - p))))
            else:
                p = self.spec.u if f == "al_np" else th[self._dist0]
                if not 0.0 < p < 1.0:
                    return -np.inf
                log_pp = self._n * np.log(p * (1.0 - p))
            r = (self.y - mu) * np.exp(-0.5 * lsig2)
            return float(log_pp - 0.5 * np.sum(lsig2) - np.sum(r * (p - (r <= 0.0))))
        # positive-support families, mean log-linked
        d = th[self._dist0:]
        if f == "gb2":
            a, p, q = d
            if a == 0.0 or p <= 0.0 or q <= 0.0 or p + 1.0 / a <= 0.0 or q - 1.0 / a <= 0.0:
                return -np.inf
            lbeta = sc.betaln(p, q)
            log_b = mu + lbeta - sc.betaln(p + 1.0 / a, q - 1.0 / a)
            t = a * (self.log_y - log_b)
            return float(self._n * (np.log(abs(a)) - lbeta) - self._sum_log_y
                         + np.sum(p * t - (p + q) * np.logaddexp(0.0, t)))
        if f == "gg":
            a, p = d
            if a == 0.0 or p <= 0.0 or p + 1.0 / a <= 0.0:
                return -np.inf
        else:
            a, p = 1.0, d[0]
            if p <= 0.0:
                return -np.inf
        lgp = sc.gammaln(p)
        log_b = mu + lgp - sc.gammaln(p + 1.0 / a)
        t = a * (self.log_y - log_b)
        return float(self._n * (np.log(abs(a)) - lgp) - self._sum_log_y
                     + np.sum(p * t - np.exp(t)))

    def terms(self, theta):
        """``(log_posterior, loglik)``; both ``-inf`` when off support."""
        lp = self.log_prior(theta)
        if lp == -np.inf:
            return -np.inf, -np.inf
        ll = self.loglik(theta)
        if not ll > -np.inf:
            return -np.inf, -np.inf
        return lp + ll, ll

    def log_posterior(self, theta):
        return self.terms(theta)[0]

    def deviance(self, theta):
        return -2.0 * self.loglik(theta)


# ---------------------------------------------------------------------------
# predictor helpers on single design rows


def location_predictor(theta, row):
    """``alpha0 + alpha . x`` for one design row."""
    a = theta.values[theta.layout.kind_slice("location")]
    if row.location.size != a.size - 1:
        raise ParameterError("design row does not match the location block")
    return float(a[0] + row.location @ a[1:])


def scale_predictor(theta, row):
    """``exp(beta0 + beta . s)`` for one design row."""
    b = theta.values[theta.layout.kind_slice("scale")]
    if b.size == 0:
        raise ParameterError("model has no scale structure")
    if row.scale.size != b.size - 1:
        raise ParameterError("design row does not match the scale block")
    return float(np.exp(b[0] + row.scale @ b[1:]))


def shape_predictor(theta, i):
    """Identity-link AL skew of accident year ``i``; may fall outside (0, 1)."""
    if "phi0" not in theta.layout.names:
        raise ParameterError("model has no accident-year shape structure")
    val = theta["phi0"]
    if i >= 2:
        val += theta[f"phi1[{i}]"]
    return float(val)


def make_params(spec, n_years, values=None):
    """ParamVector for ``spec`` from a flat array or a name->value mapping.

    Names missing from a mapping default to 0.
    """
    layout = build_layout(spec, n_years)
    if values is None or isinstance(values, dict):
        return ParamVector.from_dict(layout, values or {})
    return ParamVector(layout, values)


def log_prior(theta, model):
    return model.log_prior(theta)


def log_posterior(theta, triangle, spec, priors=None, floor=DEFAULT_FLOOR):
    """Log-posterior of ``theta`` given the observed part of ``triangle``."""
    return Model(spec, triangle, priors, floor).log_posterior(theta)


# ---------------------------------------------------------------------------
# simulation


def simulate_triangle(spec, theta, n_years, rng):
    """Draw a full ``I x I`` array from the model at ``theta``.

    Returns ``(triangle, lower_rows)``: the observed upper triangle and the
    held-out lower cells as ``(i, j, amount)`` rows.
    """
    from .triangle import Triangle

    design = Design(spec, n_years)
    values = np.asarray(getattr(theta, "values", theta), dtype=float)
    upper, lower = build_index_sets(n_years)
    cells = [(i, j) for i in range(1, n_years + 1) for j in range(1, n_years + 1)]
    params = design.natural_params(values, design.matrices(cells))
    _check_simulation_support(spec, params)
    draws = CellDistributions(params).sample(rng)
    full = np.asarray(draws).reshape(n_years, n_years)
    tri = Triangle.from_upper(full)
    lower_rows = [(i, j, float(full[i - 1, j - 1])) for i, j in lower]
    return tri, lower_rows


def _check_simulation_support(spec, params):
    f = spec.family
    if f in ("al", "al_np"):
        p = params["p"]
        if np.any(p <= 0) or np.any(p >= 1):
            raise ParameterError("AL skew outside (0, 1)")
    elif f == "pp":
        if not (params["gamma1"] > 0 and params["gamma2"] > 0):
            raise ParameterError("PP exponents must be positive")
