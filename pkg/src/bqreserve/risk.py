"""Predictive quantiles, outstanding-reserve quantiles and risk margins.

Quantiles of log-scale models are back-transformed with ``exp``.  This is
one choice among several (the log of a quantile is the quantile of the
log, but no back-transform preserves means), so reports carry a note.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dists
from .errors import ConfigError, DomainError, ReserveError
from .mcmc import Chain
from .model import CellDistributions, Design, LOG_FAMILIES
from .select import posterior_mean_params
from .triangle import build_index_sets

__all__ = [
    "BACK_TRANSFORM_NOTE",
    "cell_quantile",
    "cell_quantiles",
    "total_reserve_quantile_comonotonic",
    "total_reserve_quantile_mc",
    "MCQuantiles",
    "heavy_tail_quantile_approx",
    "dominant_cell",
    "risk_margin",
    "margin_profile",
    "ReserveReport",
    "reserve_report",
    "write_reserve_csv",
    "write_profile_csv",
]

BACK_TRANSFORM_NOTE = (
    "Log-scale model quantiles are mapped back with exp(); quantiles commute "
    "with monotone maps, but the back-transformed mean is not exp of the log mean."
)
N_BATCHES = 20


def _values(theta):
    return np.asarray(getattr(theta, "values", theta), dtype=float)


def _check_levels(u):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size == 0:
        raise DomainError("no quantile levels given")
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile levels must lie in (0, 1)")
    return u


def _cell_dists(spec, theta, n_years, cells):
    design = Design(spec, n_years)
    return CellDistributions(design.natural_params(_values(theta), design.matrices(cells)))


def cell_quantile(spec, theta, i, j, u, n_years):
    """Conditional predictive quantile of cell ``(i, j)`` on the original scale."""
    _check_levels(u)
    q = _cell_dists(spec, theta, n_years, [(i, j)]).quantile(u)
    return float(np.asarray(q).ravel()[0])


def cell_quantiles(spec, theta, n_years, levels, cells=None):
    """Array ``(len(levels), len(cells))`` of original-scale quantiles."""
    u = _check_levels(levels)
    if cells is None:
        cells = build_index_sets(n_years)[1]
    if not cells:
        return np.zeros((u.size, 0))
    dist = _cell_dists(spec, theta, n_years, cells)
    return np.asarray(dist.quantile(u[:, None]))


def total_reserve_quantile_comonotonic(spec, theta, u, n_years, cells=None):
    """Sum over the lower triangle of the cell quantiles at level ``u``.

    This is the quantile of the total under comonotonic cells, the largest
    total in convex order for the given marginals.
    """
    if cells is None:
        cells = build_index_sets(n_years)[1]
    if not cells:
        raise ReserveError("lower triangle is empty", code="empty_lower")
    q = cell_quantiles(spec, theta, n_years, u, cells).sum(axis=1)
    return float(q[0]) if np.ndim(u) == 0 else q


@dataclass(frozen=True)
class MCQuantiles:
    """Monte Carlo quantiles of the independent-cell total with batch SEs."""

    levels: np.ndarray
    quantiles: np.ndarray
    se: np.ndarray
    mean: float
    n_sims: int
    mode: str


def total_reserve_quantile_mc(model, chains, u, n_sims=20_000, mode="full_posterior",
                              seed=0, cells=None):
    """Quantiles of the simulated lower-triangle total with cells independent.

    ``full_posterior`` draws a parameter vector from the pooled chains for
    each simulated triangle; ``point`` uses the posterior mean throughout.
    The standard error comes from ``N_BATCHES`` equal batches.
    """
    levels = _check_levels(u)
    if n_sims < 1000:
        raise ConfigError("n_sims must be at least 1000")
    if mode not in ("full_posterior", "point"):
        raise ConfigError(f"unknown simulation mode {mode!r}")
    spec, n = model.spec, model.n_years
    if cells is None:
        cells = build_index_sets(n)[1]
    if not cells:
        raise ReserveError("lower triangle is empty", code="empty_lower")
    design = Design(spec, n)
    mats = design.matrices(cells)
    rng = np.random.default_rng(seed)
    if mode == "point":
        theta, _ = posterior_mean_params(chains, model)
        dist = CellDistributions(design.natural_params(theta.values, mats))
        totals = np.asarray(dist.sample(rng, size=n_sims)).sum(axis=1)
    else:
        chains = [chains] if isinstance(chains, Chain) else list(chains)
        draws = np.vstack([c.draws for c in chains])
        idx = rng.integers(0, draws.shape[0], size=n_sims)
        totals = np.empty(n_sims)
        order = np.argsort(idx, kind="stable")
        uniq, start = np.unique(idx[order], return_index=True)
        bounds = np.append(start, n_sims)
        for k, d in enumerate(uniq):
            sel = order[bounds[k]:bounds[k + 1]]
            dist = CellDistributions(design.natural_params(draws[d], mats))
            totals[sel] = np.asarray(dist.sample(rng, size=sel.size)).sum(axis=1)
    q = np.quantile(totals, levels)
    batches = totals[: (n_sims // N_BATCHES) * N_BATCHES].reshape(N_BATCHES, -1)
    bq = np.quantile(batches, levels, axis=1)
    # a batch quantile that overflowed to inf gives an infinite standard error
    finite = np.all(np.isfinite(bq), axis=1)
    se = np.full(levels.shape, np.inf)
    se[finite] = bq[finite].std(axis=1, ddof=1) / np.sqrt(N_BATCHES)
    return MCQuantiles(levels, q, se, float(totals.mean()), int(n_sims), mode)


def heavy_tail_quantile_approx(quantile_fn, T, u):
    """First-order tail approximation ``F^-1(1 - (1 - u) / T)`` for a sum of ``T`` cells.

    ``quantile_fn`` is the quantile function of the dominant (heaviest
    tailed) cell.
    """
    if not 0 < u < 1:
        raise DomainError("quantile level must lie in (0, 1)")
    if T < 1:
        raise DomainError("number of cells must be at least 1")
    return quantile_fn(1.0 - (1.0 - u) / T)


def dominant_cell(spec, theta, n_years, cells=None):
    """Lower-triangle cell with the largest fitted scale."""
    if cells is None:
        cells = build_index_sets(n_years)[1]
    if not cells:
        raise ReserveError("lower triangle is empty", code="empty_lower")
    design = Design(spec, n_years)
    P = design.natural_params(_values(theta), design.matrices(cells))
    scale = P["sigma"] if spec.family in LOG_FAMILIES else np.broadcast_to(P["b"], (len(cells),))
    return cells[int(np.argmax(scale))]


def risk_margin(central, or_u):
    """``OR(u) - central``; negative values become 0 and are flagged."""
    m = float(or_u) - float(central)
    if m < 0:
        return 0.0, True
    return m, False


def margin_profile(chains, model):
    """Per-accident-year AL skew ``p_i = phi0 + phi1_i`` with 95% intervals.

    Rows are ``(i, p_hat, lo95, hi95, var_hat, skew_hat)``.  The variance is
    that of a unit-scale AL at ``p_hat`` (multiply by the cell's
    ``sigma**2``), the skewness is scale free.
    """
    spec = model.spec
    if not (spec.family == "al" and spec.shape == "accident"):
        raise ConfigError("margin profile needs an AL model with accident-year shape",
                          code="wrong_model")
    chains = [chains] if isinstance(chains, Chain) else list(chains)
    draws = np.vstack([c.draws for c in chains])
    phi = draws[:, model.layout.kind_slice("shape")]
    p = phi[:, :1] + np.column_stack([np.zeros(phi.shape[0]), phi[:, 1:]])
    # per-column means, so year 1 reproduces the phi0 mean bit for bit
    p_hat = np.array([col.mean() for col in p.T])
    lo, hi = np.quantile(p, [0.025, 0.975], axis=0)
    _, var, skew, _ = dists.al_moments(0.0, 1.0, p_hat)
    return [(i + 1, float(p_hat[i]), float(lo[i]), float(hi[i]),
             float(np.atleast_1d(var)[i]), float(np.atleast_1d(skew)[i]))
            for i in range(p.shape[1])]


@dataclass(frozen=True)
class ReserveReport:
    levels: np.ndarray
    or_comonotonic: np.ndarray
    or_mc: np.ndarray
    mc_se: np.ndarray
    central: float
    central_kind: str
    margins: np.ndarray
    margin_flags: np.ndarray
    cells: tuple
    cell_quantiles: np.ndarray
    mode: str
    n_sims: int
    dominant: tuple | None = None
    heavy_tail: np.ndarray | None = None
    profile: list = field(default_factory=list)
    note: str = BACK_TRANSFORM_NOTE

    def rows(self):
        return [(float(u), float(a), float(b), float(s), float(m))
                for u, a, b, s, m in zip(self.levels, self.or_comonotonic, self.or_mc,
                                         self.mc_se, self.margins)]


def reserve_report(model, chains, levels, mode="full_posterior", n_sims=20_000, seed=0,
                   central="median", heavy_tail=False):
    """Reserve quantiles, margins and (for accident-year shape) the margin profile.

    The central estimate is the comonotonic total at ``u = 0.5`` (``median``)
    or the Monte Carlo mean of the total (``mean``).
    """
    levels = np.sort(_check_levels(levels))
    spec, n = model.spec, model.n_years
    cells = tuple(build_index_sets(n)[1])
    if not cells:
        raise ReserveError("lower triangle is empty", code="empty_lower")
    theta, _ = posterior_mean_params(chains, model)
    cq = cell_quantiles(spec, theta, n, levels, list(cells))
    or_c = cq.sum(axis=1)
    mc = total_reserve_quantile_mc(model, chains, levels, n_sims, mode, seed, list(cells))
    if central == "median":
        central_value = float(total_reserve_quantile_comonotonic(spec, theta, 0.5, n, list(cells)))
    elif central == "mean":
        central_value = mc.mean
    else:
        raise ConfigError(f"unknown central estimate {central!r}")
    margins, flags = zip(*(risk_margin(central_value, v) for v in or_c))
    dom = ht = None
    if heavy_tail:
        dom = dominant_cell(spec, theta, n, list(cells))
        dist = _cell_dists(spec, theta, n, [dom])
        T = len(cells)
        ht = np.array([heavy_tail_quantile_approx(
            lambda v: float(np.asarray(dist.quantile(v)).ravel()[0]), T, u) for u in levels])
    profile = margin_profile(chains, model) if spec.shape == "accident" else []
    return ReserveReport(levels, or_c, mc.quantiles, mc.se, central_value, central,
                         np.array(margins), np.array(flags), cells, cq, mode, n_sims,
                         dom, ht, profile)


def write_reserve_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "OR_comonotonic", "OR_mc", "mc_se", "margin"])
        for row in report.rows():
            w.writerow([repr(v) for v in row])


def write_profile_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "p_hat", "lo95", "hi95", "var_hat", "skew_hat"])
        for i, *vals in rows:
            w.writerow([int(i), *(repr(float(v)) for v in vals)])
