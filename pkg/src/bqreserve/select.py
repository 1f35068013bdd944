"""Model comparison and fit assessment: DIC, MSE, residuals, percentiles."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, ReserveError
from .mcmc import Chain
from .model import LOG_FAMILIES, ParamVector

__all__ = [
    "DIC",
    "FitReport",
    "dic",
    "dic_from_deviances",
    "posterior_mean_params",
    "mse",
    "fitted_values",
    "standardized_residuals",
    "fitted_percentiles",
    "fit_report",
]

_P_CLIP = 1e-6


@dataclass(frozen=True)
class DIC:
    """Deviance information criterion with its ingredients.

    ``available`` is False when the deviance at the posterior mean is not
    finite (possible for PP, whose support depends on the parameters); the
    DIC and ``p_d`` are then NaN.
    """

    dic: float
    dbar: float
    dhat: float
    p_d: float
    available: bool = True
    clipped: bool = False
    message: str = ""


def dic_from_deviances(deviances, dhat):
    """``DIC = Dbar + pD`` with ``pD = Dbar - Dhat``."""
    d = np.asarray(deviances, dtype=float)
    if d.size == 0:
        raise ReserveError("empty deviance trace", code="empty_chain")
    dbar = float(np.mean(d))
    dhat = float(dhat)
    if not np.isfinite(dhat):
        return DIC(float("nan"), dbar, dhat, float("nan"), available=False,
                   message="deviance at the posterior mean is not finite")
    p_d = dbar - dhat
    return DIC(dbar + p_d, dbar, dhat, p_d)


def _chains(chains):
    return [chains] if isinstance(chains, Chain) else list(chains)


def posterior_mean_params(chains, model):
    """Pooled posterior mean, with AL skew parameters kept inside (0, 1).

    Returns ``(ParamVector, clipped)``.
    """
    chains = _chains(chains)
    draws = np.vstack([c.draws for c in chains])
    if draws.shape[0] == 0:
        raise ReserveError("chain has no retained draws", code="empty_chain")
    mean = draws.mean(axis=0)
    clipped = False
    spec, layout = model.spec, model.layout
    if spec.family == "al" and "p" in layout.names:
        k = layout.index("p")
        v = float(np.clip(mean[k], _P_CLIP, 1.0 - _P_CLIP))
        clipped = v != mean[k]
        mean[k] = v
    if spec.shape == "accident":
        sl = layout.kind_slice("shape")
        phi = mean[sl]
        p = phi[0] + np.concatenate([[0.0], phi[1:]])
        pc = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
        if np.any(pc != p):
            clipped = True
            phi0 = pc[0]
            mean[sl] = np.concatenate([[phi0], pc[1:] - phi0])
    return ParamVector(layout, mean), clipped


def dic(chains, model):
    """DIC from the recorded deviance trace and the posterior-mean deviance."""
    chains = _chains(chains)
    dev = np.concatenate([c.deviance for c in chains])
    theta, clipped = posterior_mean_params(chains, model)
    dhat = model.deviance(theta)
    out = dic_from_deviances(dev, dhat)
    if clipped:
        msg = "AL skew at the posterior mean clipped into (0, 1)"
        out = DIC(out.dic, out.dbar, out.dhat, out.p_d, out.available, True,
                  "; ".join(m for m in (out.message, msg) if m))
    return out


def mse(fitted, observed):
    """Mean squared error over the observed cells on the original scale.

    ``fitted`` and ``observed`` are either aligned arrays or mappings from
    ``(i, j)`` to values; mappings must cover the same cells.
    """
    if isinstance(fitted, dict) or isinstance(observed, dict):
        if not (isinstance(fitted, dict) and isinstance(observed, dict)):
            raise DataError("fitted and observed must both be cell mappings")
        if set(fitted) != set(observed):
            raise DataError("fitted values do not cover the observed cells", code="coverage_mismatch")
        keys = sorted(observed)
        f = np.array([fitted[k] for k in keys], dtype=float)
        y = np.array([observed[k] for k in keys], dtype=float)
    else:
        f = np.asarray(fitted, dtype=float).ravel()
        y = np.asarray(observed, dtype=float).ravel()
        if f.shape != y.shape:
            raise DataError("fitted values do not cover the observed cells", code="coverage_mismatch")
    if y.size == 0:
        raise DataError("no cells to compare", code="coverage_mismatch")
    return float(np.mean((y - f) ** 2))


def fitted_values(model, theta, which="observed"):
    """Per-cell fitted means on the original scale.

    Log-scale families use ``exp`` of the model mean of ``y*`` (for AL the
    location plus its skew correction); positive families their mean.
    Cells whose mean does not exist get ``inf``.
    """
    dist = model.distributions(theta, which)
    mean, _ = dist.moments()
    mean = np.asarray(mean, dtype=float)
    if model.spec.family in LOG_FAMILIES:
        with np.errstate(over="ignore"):
            return np.exp(mean)
    return mean


def standardized_residuals(model, theta):
    """``(y - E[Y]) / sd(Y)`` per observed cell, with a flag for infinite variance.

    AL and PP residuals are on the log scale, the positive families on the
    original scale.  Flagged cells get NaN.
    """
    dist = model.distributions(theta)
    mean, var = (np.asarray(v, dtype=float) for v in dist.moments())
    var = np.broadcast_to(var, mean.shape)
    flagged = ~np.isfinite(var) | ~np.isfinite(mean)
    with np.errstate(invalid="ignore"):
        r = (model.y - mean) / np.sqrt(var)
    r = np.where(flagged, np.nan, r)
    return r, flagged


def fitted_percentiles(values, probs):
    """Empirical percentiles with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DataError("no fitted values", code="empty_set")
    p = np.asarray(probs, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("percentile levels must lie in (0, 1)")
    return np.quantile(v, p, method="linear")


@dataclass(frozen=True)
class FitReport:
    label: str
    family: str
    dic: DIC
    mse: float
    theta_hat: ParamVector
    cells: tuple
    observed: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    residual_flags: np.ndarray
    n_floored: int
    floor: float

    def rows(self):
        """Per-cell ``(i, j, observed, fitted, residual)`` rows."""
        return [(i, j, float(y), float(f), float(r))
                for (i, j), y, f, r in zip(self.cells, self.observed, self.fitted, self.residuals)]


def fit_report(chains, model):
    theta, _ = posterior_mean_params(chains, model)
    d = dic(chains, model)
    try:
        fitted = fitted_values(model, theta)
        resid, flags = standardized_residuals(model, theta)
    except DomainError:
        n = len(model.cells)
        fitted = np.full(n, np.nan)
        resid, flags = np.full(n, np.nan), np.ones(n, dtype=bool)
    return FitReport(
        label=model.spec.label,
        family=model.spec.family,
        dic=d,
        mse=mse(fitted, model.raw),
        theta_hat=theta,
        cells=model.cells,
        observed=model.raw,
        fitted=fitted,
        residuals=resid,
        residual_flags=flags,
        n_floored=model.n_floored,
        floor=model.floor,
    )

