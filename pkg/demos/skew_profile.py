"""Recover a declining accident-year skew profile from simulated data.

The data follow an AL model whose skew parameter falls linearly from 0.9 in
the first accident year to 0.4 in the eighth.  The fitted profile gives the
quantile level each accident year's reserve sits at.

Run with ``python3 demos/skew_profile.py``.
"""

import numpy as np

from bqreserve.mcmc import ChainConfig, run_chain
from bqreserve.model import Model, ModelSpec, ParamVector, build_layout, simulate_triangle
from bqreserve.risk import margin_profile

n = 8
spec = ModelSpec.from_label("M23'")
p = np.linspace(0.9, 0.4, n)
truth = {"alpha0": 7.0, "beta0": -3.0, "phi0": p[0]}
for i in range(2, n + 1):
    truth[f"alpha2[{i}]"] = -0.25 * (i - 1)
    truth[f"phi1[{i}]"] = p[i - 1] - p[0]
theta = ParamVector.from_dict(build_layout(spec, n), truth)
tri, _ = simulate_triangle(spec, theta, n, np.random.default_rng(500))

model = Model(spec, tri)
chain = run_chain(model, ChainConfig(seed=0))
print("year  true p   p_hat   95% interval      variance   skewness")
for (i, p_hat, lo, hi, var, skew), p_true in zip(margin_profile(chain, model), p):
    print(f"{i:4d}  {p_true:6.3f}  {p_hat:6.3f}  [{lo:5.3f}, {hi:5.3f}]  {var:9.4f}  {skew:9.3f}")
