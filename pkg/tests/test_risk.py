import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqreserve.errors import ConfigError, DomainError, ReserveError
from bqreserve.mcmc import ChainConfig, run_chain
from bqreserve.model import CellDistributions, Model, ModelSpec, make_params
from bqreserve.risk import (
    BACK_TRANSFORM_NOTE,
    cell_quantile,
    cell_quantiles,
    dominant_cell,
    heavy_tail_quantile_approx,
    margin_profile,
    reserve_report,
    risk_margin,
    total_reserve_quantile_comonotonic,
    total_reserve_quantile_mc,
    write_profile_csv,
    write_reserve_csv,
)
from bqreserve.select import posterior_mean_params
from bqreserve.triangle import build_index_sets

from helpers import make_chain, profile_case, recovery_case, simulate

AL0 = ModelSpec("al", "trend", "constant")


def al_theta(n=4, **vals):
    base = {"alpha0": 0.0, "beta0": 0.0, "p": 0.5}
    base.update(vals)
    return make_params(AL0, n, base)


@pytest.fixture(scope="module")
def small_fit():
    spec, truth = recovery_case("al_m00", n=6)
    tri, _, _ = simulate(spec, truth, 6, 21)
    model = Model(spec, tri)
    chain = run_chain(model, ChainConfig(seed=2, n_iter=6000, burn_in=2000, thin=4))
    return model, chain


# -- cell quantiles ------------------------------------------------------


def test_cell_quantile_al_upper_quartile():
    assert cell_quantile(AL0, al_theta(), 3, 3, 0.75, 4) == pytest.approx(4.0, rel=1e-12)


def test_cell_quantile_at_skew_level_is_location():
    theta = al_theta(alpha0=1.2, alpha1=0.1, p=0.3, beta0=-1.0)
    assert cell_quantile(AL0, theta, 3, 4, 0.3, 4) == pytest.approx(math.exp(1.2 + 0.3), rel=1e-14)


def test_gb2_cell_median():
    params = {"family": "gb2", "mu_star": np.zeros(1), "a": 1.0, "b": 1.0, "p": 1.0, "q": 1.0}
    assert float(CellDistributions(params).quantile(0.5)) == pytest.approx(1.0, abs=1e-14)


def test_symmetric_al_median_is_exp_location():
    theta = al_theta(n=6, alpha0=5.0, alpha1=0.07, alpha2=-0.2, beta0=-2.0)
    lower = build_index_sets(6)[1]
    mu = np.array([5.0 + 0.07 * i - 0.2 * j for i, j in lower])
    assert np.allclose(cell_quantiles(AL0, theta, 6, [0.5])[0], np.exp(mu), rtol=1e-14, atol=0)


def test_cell_quantile_rejects_bad_level():
    for u in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            cell_quantile(AL0, al_theta(), 2, 3, u, 4)
    with pytest.raises(DomainError):
        cell_quantiles(AL0, al_theta(), 4, [])


# -- comonotonic totals --------------------------------------------------


def test_comonotonic_single_cell():
    theta = al_theta(alpha0=2.0, beta0=-1.0, p=0.6)
    tot = total_reserve_quantile_comonotonic(AL0, theta, 0.9, 4, cells=[(3, 4)])
    assert tot == cell_quantile(AL0, theta, 3, 4, 0.9, 4)


def test_comonotonic_additivity():
    theta = al_theta(alpha0=2.0, alpha1=0.1, alpha2=0.1, beta0=-1.0, p=0.6)
    one = cell_quantile(AL0, theta, 2, 4, 0.8, 4)
    assert total_reserve_quantile_comonotonic(AL0, theta, 0.8, 4, cells=[(2, 4), (4, 2)]) == \
        pytest.approx(2 * one, rel=1e-15)


def test_comonotonic_empty_lower():
    with pytest.raises(ReserveError) as exc:
        total_reserve_quantile_comonotonic(AL0, al_theta(n=1), 0.5, 1)
    assert exc.value.code == "empty_lower"


@pytest.mark.parametrize("spec, vals", [
    (AL0, {"alpha0": 3.0, "alpha2": -0.3, "beta0": -2.0, "p": 0.7}),
    (ModelSpec("gb2", "trend", "none"), {"alpha0": 3.0, "a": 2.0, "p": 1.5, "q": 2.5}),
    (ModelSpec("gamma", "anova", "none"), {"alpha0": 3.0, "alpha2[3]": 0.4, "p": 2.0}),
    (ModelSpec("pp", "nelson_siegel", "constant"), {"alpha0": 3.0, "beta0": -1.0, "gamma1": 0.5, "gamma2": 0.2}),
], ids=["al", "gb2", "gamma", "pp"])
def test_comonotonic_monotone_and_continuous(spec, vals):
    theta = make_params(spec, 6, vals)
    grid = np.linspace(0.01, 0.99, 99)
    tot = total_reserve_quantile_comonotonic(spec, theta, grid, 6)
    assert np.all(np.diff(tot) > 0)
    fine = total_reserve_quantile_comonotonic(spec, theta, grid[40] + np.array([0.0, 1e-9]), 6)
    assert abs(fine[1] - fine[0]) < 1e-5 * fine[0]


# -- Monte Carlo totals --------------------------------------------------


def test_mc_single_cell_converges_to_cell_quantile(small_fit):
    model, chain = small_fit
    theta, _ = posterior_mean_params(chain, model)
    levels = [0.25, 0.5, 0.9]
    mc = total_reserve_quantile_mc(model, chain, levels, n_sims=200_000, mode="point", seed=3,
                                   cells=[(4, 5)])
    exact = [cell_quantile(model.spec, theta, 4, 5, u, 6) for u in levels]
    assert np.all(np.abs(mc.quantiles - exact) < 4 * mc.se + 1e-12)


def test_mc_reproducible_and_seed_dependent(small_fit):
    model, chain = small_fit
    a = total_reserve_quantile_mc(model, chain, [0.5, 0.9], n_sims=5000, seed=9)
    b = total_reserve_quantile_mc(model, chain, [0.5, 0.9], n_sims=5000, seed=9)
    c = total_reserve_quantile_mc(model, chain, [0.5, 0.9], n_sims=5000, seed=10)
    assert np.array_equal(a.quantiles, b.quantiles) and np.array_equal(a.se, b.se)
    assert not np.array_equal(a.quantiles, c.quantiles)
    assert np.all(a.se > 0)


def test_mc_argument_errors(small_fit):
    model, chain = small_fit
    with pytest.raises(ConfigError):
        total_reserve_quantile_mc(model, chain, [0.5], n_sims=999)
    with pytest.raises(ConfigError):
        total_reserve_quantile_mc(model, chain, [0.5], mode="exact")
    with pytest.raises(DomainError):
        total_reserve_quantile_mc(model, chain, [1.5])
    with pytest.raises(ReserveError):
        total_reserve_quantile_mc(model, chain, [0.5], cells=[])


# -- heavy tail ----------------------------------------------------------


def pareto_quantile(u, alpha=2.0):
    return (1.0 - u) ** (-1.0 / alpha)


def test_heavy_tail_single_cell():
    assert heavy_tail_quantile_approx(pareto_quantile, 1, 0.99) == pareto_quantile(0.99)


@settings(max_examples=50)
@given(st.integers(1, 200), st.floats(0.5, 0.9999))
def test_heavy_tail_monotone_in_cell_count(T, u):
    assert heavy_tail_quantile_approx(pareto_quantile, T + 1, u) > heavy_tail_quantile_approx(pareto_quantile, T, u)


def test_heavy_tail_errors():
    with pytest.raises(DomainError):
        heavy_tail_quantile_approx(pareto_quantile, 0, 0.9)
    with pytest.raises(DomainError):
        heavy_tail_quantile_approx(pareto_quantile, 3, 1.0)


def test_dominant_cell_has_largest_scale():
    spec = ModelSpec("al", "anova", "both")
    theta = make_params(spec, 5, {"alpha0": 3.0, "p": 0.5, "beta1[4]": 1.0, "beta2[5]": 0.5})
    assert dominant_cell(spec, theta, 5) == (4, 5)


# -- margins -------------------------------------------------------------


def test_risk_margin_examples():
    assert risk_margin(80.0, 100.0) == (20.0, False)
    assert risk_margin(120.0, 100.0) == (0.0, True)
    assert risk_margin(100.0, 100.0) == (0.0, False)


def test_margin_profile_flat_when_effects_zero():
    spec, _, _ = profile_case(5)
    model = Model(spec, simulate(*profile_case(5)[:2], 5, 0)[0])
    names = model.layout.names
    draws = np.zeros((40, len(names)))
    draws[:, names.index("phi0")] = np.linspace(0.6, 0.8, 40)
    rows = margin_profile(make_chain(draws, names), model)
    assert [r[0] for r in rows] == [1, 2, 3, 4, 5]
    assert all(r[1] == pytest.approx(0.7, abs=1e-15) for r in rows)
    assert len({(r[2], r[3]) for r in rows}) == 1


def test_margin_profile_first_year_is_phi0(small_profile_fit):
    model, chain = small_profile_fit
    rows = margin_profile(chain, model)
    assert rows[0][1] == np.mean(chain.column("phi0"))
    for _, p, lo, hi, var, skew in rows:
        assert lo <= p <= hi
        assert var > 0
        assert (skew < 0) == (p > 0.5)


def test_margin_profile_wrong_model(small_fit):
    model, chain = small_fit
    with pytest.raises(ConfigError) as exc:
        margin_profile(chain, model)
    assert exc.value.code == "wrong_model"


@pytest.fixture(scope="module")
def small_profile_fit():
    spec, truth, _ = profile_case(5)
    tri, _, _ = simulate(spec, truth, 5, 8)
    model = Model(spec, tri)
    return model, run_chain(model, ChainConfig(seed=1, n_iter=6000, burn_in=2000, thin=4))


# -- report --------------------------------------------------------------


def test_reserve_report_properties(small_fit):
    model, chain = small_fit
    levels = [0.3, 0.5, 0.75, 0.95, 0.995]
    rep = reserve_report(model, chain, levels, n_sims=5000, seed=4, heavy_tail=True)
    assert np.all(np.diff(rep.or_comonotonic) > 0)
    assert rep.central == pytest.approx(rep.or_comonotonic[1], rel=1e-15)
    assert rep.margins[1] == 0.0
    assert np.all(rep.margins[1:] >= 0) and not np.any(rep.margin_flags[1:])
    assert rep.margin_flags[0]
    assert rep.cell_quantiles.shape == (5, 15)
    assert rep.heavy_tail is not None and rep.dominant in rep.cells
    assert rep.profile == []
    assert rep.note == BACK_TRANSFORM_NOTE


def test_reserve_report_mean_central(small_fit):
    model, chain = small_fit
    rep = reserve_report(model, chain, [0.75], n_sims=5000, seed=4, central="mean")
    assert rep.central_kind == "mean" and rep.central > 0
    with pytest.raises(ConfigError):
        reserve_report(model, chain, [0.75], n_sims=5000, central="mode")


def test_reserve_csv_round_trip(tmp_path, small_fit):
    model, chain = small_fit
    rep = reserve_report(model, chain, [0.5, 0.9], n_sims=2000, seed=0)
    path = tmp_path / "reserve.csv"
    write_reserve_csv(path, rep)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "OR_comonotonic", "OR_mc", "mc_se", "margin"]
    assert [tuple(float(v) for v in r) for r in rows[1:]] == rep.rows()


def test_profile_csv_round_trip(tmp_path, small_profile_fit):
    model, chain = small_profile_fit
    rows = margin_profile(chain, model)
    path = tmp_path / "profile.csv"
    write_profile_csv(path, rows)
    with open(path, newline="") as fh:
        back = list(csv.reader(fh))
    assert back[0] == ["i", "p_hat", "lo95", "hi95", "var_hat", "skew_hat"]
    assert [(int(r[0]), *map(float, r[1:])) for r in back[1:]] == rows
