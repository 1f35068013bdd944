"""Shared synthetic-data setups for the test suite."""

from importlib.resources import files
from pathlib import Path

import numpy as np

from bqreserve.mcmc import Chain, ChainConfig, init_params, run_chain
from bqreserve.model import Model, ModelSpec, ParamVector, build_layout, simulate_triangle

N_YEARS = 10
REFERENCE_DIR = Path(str(files("bqreserve") / "data"))


def recovery_case(kind, n=N_YEARS):
    """Model spec and true parameter values for the recovery experiments."""
    if kind == "al_m00":
        spec = ModelSpec(family="al", location="trend", scale="constant")
        truth = {"alpha0": 7.0, "alpha1": 0.05, "alpha2": -0.3, "beta0": -3.0, "p": 0.5}
        return spec, truth
    if kind == "al_m23":
        spec = ModelSpec(family="al", location="anova", scale="both")
    elif kind == "gamma_m2":
        spec = ModelSpec(family="gamma", location="anova", scale="none")
    else:
        raise ValueError(kind)
    names = build_layout(spec, n).names
    truth = {"alpha0": 7.0}
    for i in range(2, n + 1):
        truth[f"alpha1[{i}]"] = 0.1 * np.sin(i)
        truth[f"alpha2[{i}]"] = -0.25 * (i - 1)
    if spec.family == "al":
        truth["beta0"] = -3.0
        for i in range(2, n + 1):
            truth[f"beta1[{i}]"] = 0.2 * np.cos(i)
            truth[f"beta2[{i}]"] = 0.05 * i
        truth["p"] = 0.5
    else:
        truth["p"] = 3.0
    assert set(truth) == set(names)
    return spec, truth


def profile_case(n=8):
    """AL model with accident-year skew declining linearly from 0.9 to 0.4."""
    spec = ModelSpec(family="al", location="anova", scale="both", shape="accident")
    p = np.linspace(0.9, 0.4, n)
    truth = {"alpha0": 7.0, "beta0": -3.0, "phi0": p[0]}
    for i in range(2, n + 1):
        truth[f"alpha1[{i}]"] = 0.1 * np.sin(i)
        truth[f"alpha2[{i}]"] = -0.25 * (i - 1)
        truth[f"beta1[{i}]"] = 0.0
        truth[f"beta2[{i}]"] = 0.0
        truth[f"phi1[{i}]"] = p[i - 1] - p[0]
    return spec, truth, p


def simulate(spec, truth, n, seed):
    theta = ParamVector.from_dict(build_layout(spec, n), truth)
    tri, lower = simulate_triangle(spec, theta, n, np.random.default_rng(seed))
    return tri, lower, theta


def fit(spec, tri, seed, **cfg):
    model = Model(spec, tri)
    chain = run_chain(model, ChainConfig(seed=seed, **cfg), init_params(model))
    return model, chain


def recovery_run(kind, seed, n=N_YEARS):
    """One simulate-and-fit replicate; returns (names, truth, mean, sd, lo, hi)."""
    spec, truth = recovery_case(kind, n)
    tri, _, theta = simulate(spec, truth, n, 1000 + seed)
    model, chain = fit(spec, tri, seed)
    d = chain.draws
    lo, hi = np.quantile(d, [0.025, 0.975], axis=0)
    return chain.names, theta.values, d.mean(axis=0), d.std(axis=0, ddof=1), lo, hi


def isotonic_feasible(lo, hi):
    """True when some nonincreasing sequence passes through every interval."""
    return bool(np.all(np.minimum.accumulate(np.asarray(hi)) >= np.asarray(lo)))


def make_chain(draws, names=None):
    """Chain holding the given draws, for exercising post-processing."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    k = draws.shape[1]
    names = names or tuple(f"x{i}" for i in range(k))
    n = draws.shape[0]
    return Chain(names=tuple(names), iters=np.arange(n), draws=draws, deviance=np.zeros(n),
                 log_post=np.zeros(n), block_names=("b",), acceptance={"b": 0.3},
                 burn_in_acceptance={}, scales={}, history=[], seed=0, chain_index=0, elapsed=0.0)


def write_config(path, body, data=REFERENCE_DIR / "triangle.csv"):
    """Write a config file whose ``[data]`` section points at ``data``."""
    text = f"[data]\npath = {data}\n\n{body.strip()}\n" if data is not None else body.strip() + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)
