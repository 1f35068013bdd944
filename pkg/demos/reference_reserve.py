"""Fit three quantile-regression models to the bundled triangle and compare.

Run with ``python3 demos/reference_reserve.py``.  Each fit uses the default
chain length and takes a second or two.
"""

from importlib.resources import files

import numpy as np

from bqreserve.config import load_config
from bqreserve.mcmc import run_chain
from bqreserve.model import Model, ModelSpec
from bqreserve.risk import reserve_report
from bqreserve.select import fit_report
from bqreserve.triangle import read_triangle_csv

cfg = load_config(files("bqreserve") / "data" / "reference.ini")
tri = read_triangle_csv(cfg.data_path)
print(f"triangle with {tri.n_years} accident years")

candidates = {
    "M00 trend location": ModelSpec.from_label("M00"),
    "M20 anova location": ModelSpec.from_label("M20"),
    "M23 anova location and scale": ModelSpec.from_label("M23"),
}
fits = {}
for name, spec in candidates.items():
    model = Model(spec, tri)
    chain = run_chain(model, cfg.chain)
    rep = fit_report(chain, model)
    fits[name] = (model, chain)
    print(f"{name:32s} DIC {rep.dic.dic:9.2f}  pD {rep.dic.p_d:7.2f}  MSE {rep.mse:12.4g}")

# reserve quantiles for the model that generated the data
model, chain = fits["M20 anova location"]
levels = [0.5, 0.75, 0.9, 0.95, 0.995]
rep = reserve_report(model, chain, levels, n_sims=20_000, seed=1)
print("\nu       comonotonic   independent MC (se)    margin")
for u, como, mc, se, margin in rep.rows():
    print(f"{u:<6} {como:13.0f} {mc:13.0f} ({se:5.0f}) {margin:10.0f}")
print(f"central estimate ({rep.central_kind}) {rep.central:.0f}")
truth = np.loadtxt(files("bqreserve") / "data" / "holdout.csv", delimiter=",", skiprows=1, usecols=2)
print(f"realised lower-triangle total {truth.sum():.0f}")
