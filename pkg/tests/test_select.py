import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqreserve.errors import DataError, DomainError, ReserveError
from bqreserve.mcmc import ChainConfig, run_chain
from bqreserve.model import Model, ModelSpec, make_params
from bqreserve.select import (
    dic,
    dic_from_deviances,
    fit_report,
    fitted_percentiles,
    fitted_values,
    mse,
    posterior_mean_params,
    standardized_residuals,
)
from bqreserve.triangle import Triangle

from helpers import make_chain, recovery_case, simulate


def test_dic_example_m00():
    d = dic_from_deviances([255.21], 315.02)
    assert d.dic == pytest.approx(195.40, abs=1e-9)
    assert d.p_d == pytest.approx(-59.81, abs=1e-9)


def test_dic_example_m23():
    assert dic_from_deviances([24.91], 70.63).dic == pytest.approx(-20.81, abs=1e-9)


def test_dic_degenerate_chain():
    d = dic_from_deviances(np.full(100, 42.5), 42.5)
    assert d.dbar == d.dhat == d.dic == 42.5
    assert d.p_d == 0.0


def test_dic_unavailable_when_dhat_infinite():
    d = dic_from_deviances([1.0, 2.0], np.inf)
    assert not d.available
    assert math.isnan(d.dic) and math.isnan(d.p_d)
    assert d.dbar == 1.5


def test_dic_empty_trace():
    with pytest.raises(ReserveError):
        dic_from_deviances([], 1.0)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=50), st.floats(-1e4, 1e4))
def test_dic_identity(devs, dhat):
    d = dic_from_deviances(devs, dhat)
    assert d.dic - d.dbar - (d.dbar - d.dhat) == pytest.approx(0.0, abs=4 * np.spacing(max(abs(d.dic), 1.0)))
    assert d.dic == pytest.approx(2 * d.dbar - d.dhat, rel=1e-12, abs=1e-9)


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([1.0], [3.0]) == 4.0
    assert mse([1.0, 3.0], [2.0, 2.0]) == 1.0


def test_mse_mapping_and_coverage():
    obs = {(1, 1): 3.0, (1, 2): 5.0}
    assert mse({(1, 2): 5.0, (1, 1): 1.0}, obs) == 2.0
    with pytest.raises(DataError):
        mse({(1, 1): 3.0}, obs)
    with pytest.raises(DataError):
        mse([1.0, 2.0], [1.0])
    with pytest.raises(DataError):
        mse([], [])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30),
       st.randoms(use_true_random=False))
def test_mse_order_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    f, y = zip(*pairs)
    fs, ys = zip(*shuffled)
    assert mse(fs, ys) == pytest.approx(mse(f, y), rel=1e-12, abs=1e-12)


def one_cell_model(y_star, spec=None):
    spec = spec or ModelSpec("al", "trend", "constant")
    return Model(spec, Triangle.from_upper(np.array([[math.exp(y_star)]])))


def test_residual_at_mean_is_zero():
    model = one_cell_model(2.0)
    theta = make_params(model.spec, 1, {"alpha0": 2.0, "p": 0.5})
    r, flags = standardized_residuals(model, theta)
    assert r[0] == pytest.approx(0.0, abs=1e-15) and not flags[0]


def test_residual_one_sd_above():
    # AL variance at p = 0.5, sigma = 1 is 8
    model = one_cell_model(math.sqrt(8))
    theta = make_params(model.spec, 1, {"alpha0": 0.0, "p": 0.5})
    r, _ = standardized_residuals(model, theta)
    assert r[0] == pytest.approx(1.0, abs=1e-12)


def test_residual_flags_infinite_variance():
    spec = ModelSpec("gb2", "trend", "none")
    model = one_cell_model(1.0, spec)
    theta = make_params(spec, 1, {"alpha0": 1.0, "a": 1.0, "p": 1.0, "q": 1.5})
    r, flags = standardized_residuals(model, theta)
    assert flags[0] and np.isnan(r[0])


def test_fitted_values_al_uses_exp_of_mean():
    model = one_cell_model(1.0)
    theta = make_params(model.spec, 1, {"alpha0": 1.0, "beta0": math.log(0.04), "p": 0.8})
    mean, _ = model.distributions(theta).moments()
    assert fitted_values(model, theta)[0] == pytest.approx(math.exp(mean[0]), rel=1e-15)
    # the skew correction moves the fitted value below exp(mu) when p > 0.5
    assert fitted_values(model, theta)[0] < math.exp(1.0)


def test_fitted_values_gamma_is_mean():
    spec = ModelSpec("gamma", "trend", "none")
    model = one_cell_model(1.0, spec)
    theta = make_params(spec, 1, {"alpha0": 3.0, "p": 2.0})
    assert fitted_values(model, theta)[0] == pytest.approx(math.exp(3.0), rel=1e-14)


def test_percentile_examples():
    assert list(fitted_percentiles(np.full(7, 2.5), [0.1, 0.5, 0.9])) == [2.5, 2.5, 2.5]
    assert fitted_percentiles(np.arange(1, 101), [0.5])[0] == 50.5
    with pytest.raises(DomainError):
        fitted_percentiles([1.0, 2.0], [1.0])
    with pytest.raises(DataError):
        fitted_percentiles([], [0.5])


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_percentiles_nondecreasing(values):
    q = fitted_percentiles(values, np.linspace(0.01, 0.99, 25))
    assert np.all(np.diff(q) >= -1e-9 * max(1.0, np.max(np.abs(q))))


def test_posterior_mean_clips_al_skew():
    spec = ModelSpec("al", "trend", "constant")
    model = one_cell_model(1.0, spec)
    chain = make_chain(np.tile([1.0, 0.0, 0.0, 0.0, 1.0], (4, 1)), model.layout.names)
    theta, clipped = posterior_mean_params(chain, model)
    assert clipped and theta["p"] == 1 - 1e-6


def test_dic_on_fitted_chain_matches_definition():
    spec, truth = recovery_case("al_m00", n=6)
    tri, _, _ = simulate(spec, truth, 6, 0)
    model = Model(spec, tri)
    chain = run_chain(model, ChainConfig(seed=0, n_iter=4000, burn_in=1000, thin=3))
    d = dic(chain, model)
    assert d.dbar == pytest.approx(np.mean(chain.deviance), rel=1e-15)
    assert d.dhat == pytest.approx(model.deviance(chain.draws.mean(axis=0)), rel=1e-15)
    assert d.dic == d.dbar + d.p_d
    rep = fit_report(chain, model)
    assert rep.dic == d
    assert len(rep.rows()) == 21
    assert rep.mse == pytest.approx(np.mean((rep.observed - rep.fitted) ** 2))
