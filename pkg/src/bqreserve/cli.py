"""Command-line front end: ``bqreserve fit|compare|predict|reserve|margin|simulate``.

Errors are reported as one line ``ERROR <code>: <message>`` on stderr with
exit status 2 (configuration), 3 (data) or 4 (numerics).  All files are
written with round-trip float formatting and no timestamps, so identical
inputs and seeds give byte-identical outputs.
"""

import argparse
import csv
import hashlib
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, parse_levels
from .errors import ConfigError, DataError, ReserveError
from .mcmc import chain_from_csv, run_chains, summarize, write_chain_csv
from .model import LOG_FAMILIES, Model, ParamVector, build_layout, simulate_triangle
from .risk import (
    BACK_TRANSFORM_NOTE,
    cell_quantiles,
    margin_profile,
    reserve_report,
    write_profile_csv,
    write_reserve_csv,
)
from .select import fit_report, posterior_mean_params
from .triangle import build_index_sets, read_triangle_csv, write_cells_csv

__all__ = ["main", "build_parser", "load_fit", "Fit"]

SOLVENCY_LEVEL = 0.995
_SHAPE_NAMES = ("p", "phi0", "gamma1", "gamma2", "a", "q")


def _fmt(v):
    return repr(float(v))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(args, cfg):
    out = Path(args.out) if args.out else cfg.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set [output] dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log(msg):
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = _out_dir(args, cfg)
    tri = read_triangle_csv(cfg.data_path)
    model = Model(cfg.spec, tri, priors=cfg.priors, floor=cfg.floor)

    # keep a private copy of the data so later commands see exactly what was fitted
    data_copy = out / "data.csv"
    if cfg.data_path.resolve() != data_copy.resolve():
        shutil.copyfile(cfg.data_path, data_copy)
    digest = _sha256(data_copy)
    (out / "data.sha256").write_text(f"{digest}  data.csv\n", encoding="utf-8")
    resolved = replace(cfg, data_path=Path("data.csv"), output_dir=None, source=None)
    (out / "config.ini").write_text(resolved.to_ini(), encoding="utf-8")

    t0 = time.perf_counter()
    chains = run_chains(model, cfg.chain)
    elapsed = time.perf_counter() - t0
    for c in chains:
        write_chain_csv(out / f"chain_{c.chain_index + 1}.csv", c)
    summary = summarize(chains)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["parameter", "mean", "sd", "lo95", "hi95"])
        for name, *vals in summary.rows():
            w.writerow([name, *map(_fmt, vals)])
    report = fit_report(chains, model)
    with open(out / "fit_report.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["i", "j", "observed", "fitted", "residual"])
        for i, j, *vals in report.rows():
            w.writerow([i, j, *map(_fmt, vals)])
    _write_fit_stats(out / "dic.csv", report, summary, digest)
    _write_fit_summary(out / "fit_summary.txt", cfg, model, report, summary, digest)
    _write_fit_log(out / "fit.log", cfg, chains)
    _log(f"fitted {cfg.spec.name}: DIC {report.dic.dic:.4f}, MSE {report.mse:.6g}, "
         f"{len(chains)} chain(s) in {elapsed:.1f} s -> {out}")
    return 0


def _shape_estimates(summary):
    parts = []
    for n in _SHAPE_NAMES:
        if n in summary.names:
            parts.append(f"{n}={summary[n]['mean']:.6g}")
    return ";".join(parts)


def _write_fit_stats(path, report, summary, digest):
    d = report.dic
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["model", "family", "DIC", "Dbar", "Dhat", "pD", "MSE", "shape", "data_sha256"])
        w.writerow([report.label, report.family, _fmt(d.dic), _fmt(d.dbar), _fmt(d.dhat),
                    _fmt(d.p_d), _fmt(report.mse), _shape_estimates(summary), digest])


def _write_fit_summary(path, cfg, model, report, summary, digest):
    d = report.dic
    lines = [
        f"model        {cfg.spec.name}",
        f"structures   location={cfg.spec.location} scale={cfg.spec.scale} shape={cfg.spec.shape}",
        f"data         data.csv sha256={digest}",
        f"cells        {len(model.cells)} observed, {len(model.lower_cells)} to predict",
        f"floored      {report.n_floored} cell(s) below {report.floor!r}",
        f"chains       {cfg.chain.n_chains} x {cfg.chain.n_iter} iterations, burn-in "
        f"{cfg.chain.burn_in}, thin {cfg.chain.thin}, {summary.n_draws} retained draws",
        "",
        f"DIC          {_fmt(d.dic)}" + ("" if d.available else "  (unavailable)"),
        f"Dbar         {_fmt(d.dbar)}",
        f"Dhat         {_fmt(d.dhat)}",
        f"pD           {_fmt(d.p_d)}",
        f"MSE          {_fmt(report.mse)}",
    ]
    if d.message:
        lines.append(f"note         {d.message}")
    if np.any(report.residual_flags):
        lines.append(f"note         {int(np.sum(report.residual_flags))} residual(s) undefined "
                     "(infinite predictive variance)")
    lines += ["", f"{'parameter':<14}{'mean':>14}{'sd':>14}{'lo95':>14}{'hi95':>14}"]
    for name, m, s, lo, hi in summary.rows():
        lines.append(f"{name:<14}{m:>14.6g}{s:>14.6g}{lo:>14.6g}{hi:>14.6g}")
    lines += ["", "acceptance   " + " ".join(f"{k}={v:.3f}" for k, v in summary.acceptance.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_fit_log(path, cfg, chains):
    lines = [f"bqreserve {__version__}", f"model {cfg.spec.name}"]
    for c in chains:
        lines.append(f"chain {c.chain_index + 1} seed {c.seed}")
        for row in c.history:
            lines.append("  adapt " + " ".join(
                f"{k}={v}" if k == "iter" else f"{k}={v!r}" for k, v in row.items()))
        lines.append("  final_scale " + " ".join(f"{k}={v!r}" for k, v in c.scales.items()))
        lines.append("  acceptance " + " ".join(f"{k}={v!r}" for k, v in c.acceptance.items()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# loading a completed fit


class Fit:
    """A completed fit directory: config, data copy, model and chains."""

    def __init__(self, path):
        self.path = Path(path)
        if not (self.path / "config.ini").is_file():
            raise ConfigError(f"{self.path} is not a fit directory (no config.ini)",
                              code="config_missing_fit")
        self.config = load_config(self.path / "config.ini")
        self.triangle = read_triangle_csv(self.config.data_path)
        self.model = Model(self.config.spec, self.triangle, priors=self.config.priors,
                           floor=self.config.floor)
        names = build_layout(self.config.spec, self.triangle.n_years).names
        files = sorted(self.path.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        if not files:
            raise ConfigError(f"{self.path}: no chain files", code="config_missing_fit")
        self.chains = [chain_from_csv(f, names) for f in files]
        self.digest = _sha256(self.config.data_path)

    def theta_hat(self):
        return posterior_mean_params(self.chains, self.model)[0]


def load_fit(path):
    return Fit(path)


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args):
    if len(args.fits) < 2:
        raise ConfigError("compare needs at least two fit directories")
    rows, digests = [], set()
    for d in args.fits:
        path = Path(d) / "dic.csv"
        if not path.is_file():
            raise ConfigError(f"{d} is not a fit directory (no dic.csv)", code="config_missing_fit")
        with open(path, newline="", encoding="utf-8") as fh:
            rec = list(csv.DictReader(fh))
        if len(rec) != 1:
            raise DataError(f"{path}: expected one row", code="bad_fit_file")
        rec = rec[0]
        digests.add(rec["data_sha256"])
        rows.append((d, rec))
    if len(digests) > 1:
        raise DataError("fits were run on different data", code="incompatible_fits")
    rows.sort(key=lambda r: (float(r[1]["DIC"]) if r[1]["DIC"] != "nan" else float("inf"), r[0]))
    out = Path(args.out) if args.out else None
    header = ["fit", "model", "family", "DIC", "Dbar", "Dhat", "pD", "MSE", "shape"]
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = _writer(fh)
        w.writerow(header)
        for d, rec in rows:
            w.writerow([Path(d).name] + [rec[k] for k in header[1:]])
    finally:
        if out:
            fh.close()
    return 0


# ---------------------------------------------------------------------------
# predict


def _levels(args, default):
    if args.levels is None:
        return tuple(default)
    return parse_levels(args.levels)


def cmd_predict(args):
    fit = Fit(args.fit)
    levels = _levels(args, fit.config.reserve.levels)
    out = Path(args.out) if args.out else fit.path / "predict"
    out.mkdir(parents=True, exist_ok=True)
    model, theta = fit.model, fit.theta_hat()
    n = fit.triangle.n_years
    upper, lower = build_index_sets(n)
    with open(out / "cell_quantiles.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["i", "j", "triangle", *[f"q{u!r}" for u in levels]])
        for part, cells in (("upper", upper), ("lower", lower)):
            if not cells:
                continue
            q = cell_quantiles(model.spec, theta, n, levels, cells)
            for k, (i, j) in enumerate(cells):
                w.writerow([i, j, part, *map(_fmt, q[:, k])])
    report = fit_report(fit.chains, model)
    with open(out / "fitted.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["i", "j", "observed", "fitted"])
        for i, j, y, f, _ in report.rows():
            w.writerow([i, j, _fmt(y), _fmt(f)])
    pit, expected = qq_data(model, theta)
    with open(out / "qq.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["rank", "expected", "pit"])
        for k, (e, p) in enumerate(zip(expected, pit), start=1):
            w.writerow([k, _fmt(e), _fmt(p)])
    _log(f"wrote predictions for {len(upper)} observed and {len(lower)} future cells -> {out}")
    return 0


def qq_data(model, theta):
    """Sorted probability integral transforms against uniform plotting positions.

    Returns ``(pit, expected)`` where ``pit`` holds the sorted fitted cdf
    values of the observed cells and ``expected`` the positions
    ``(k - 0.5) / n``.
    """
    dist = model.distributions(theta)
    pit = np.sort(np.asarray(dist.cdf(model.y), dtype=float).ravel())
    n = pit.size
    return pit, (np.arange(1, n + 1) - 0.5) / n


# ---------------------------------------------------------------------------
# reserve and margin


def cmd_reserve(args):
    fit = Fit(args.fit)
    rs = fit.config.reserve
    levels = sorted(set(_levels(args, rs.levels)) | {SOLVENCY_LEVEL})
    mode = args.mode or rs.mode
    out = Path(args.out) if args.out else fit.path / "reserve"
    out.mkdir(parents=True, exist_ok=True)
    rep = reserve_report(fit.model, fit.chains, levels, mode=mode, n_sims=rs.n_sims,
                         seed=rs.seed if args.seed is None else args.seed,
                         central=rs.central, heavy_tail=rs.heavy_tail)
    write_reserve_csv(out / "reserve.csv", rep)
    with open(out / "reserve_cells.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["i", "j", *[f"q{u!r}" for u in rep.levels]])
        for k, (i, j) in enumerate(rep.cells):
            w.writerow([i, j, *map(_fmt, rep.cell_quantiles[:, k])])
    if rep.profile:
        write_profile_csv(out / "profile.csv", rep.profile)
    lines = [
        f"model        {fit.config.spec.name}",
        f"central      {_fmt(rep.central)} ({rep.central_kind}"
        + (", comonotonic total at u=0.5)" if rep.central_kind == "median" else ", Monte Carlo mean)"),
        f"simulation   {rep.mode}, {rep.n_sims} triangles, seed "
        f"{rs.seed if args.seed is None else args.seed}",
        "",
        f"{'u':>8}{'OR_comonotonic':>20}{'OR_mc':>20}{'mc_se':>14}{'margin':>18}",
    ]
    for (u, a, b, s, m), flag in zip(rep.rows(), rep.margin_flags):
        lines.append(f"{u:>8.4g}{a:>20.6f}{b:>20.6f}{s:>14.6g}{m:>18.6f}" + (" *" if flag else ""))
    if np.any(rep.margin_flags):
        lines.append("* quantile below the central estimate; margin set to 0")
    if rep.heavy_tail is not None:
        lines += ["", f"heavy-tail approximation from dominant cell {rep.dominant}:"]
        lines += [f"{u:>8.4g}{v:>20.6f}" for u, v in zip(rep.levels, rep.heavy_tail)]
    if fit.config.spec.family in LOG_FAMILIES:
        lines += ["", BACK_TRANSFORM_NOTE]
    (out / "reserve_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log("\n".join(lines))
    return 0


def cmd_margin(args):
    fit = Fit(args.fit)
    spec = fit.config.spec
    if spec.shape != "accident":
        raise ConfigError(f"margin profile needs an accident-year shape fit (M23'), got {spec.label}",
                          code="wrong_model")
    out = Path(args.out) if args.out else fit.path / "margin"
    out.mkdir(parents=True, exist_ok=True)
    rows = margin_profile(fit.chains, fit.model)
    write_profile_csv(out / "profile.csv", rows)
    for i, p, lo, hi, v, s in rows:
        _log(f"year {i:>3}  p={p:.4f}  95% [{lo:.4f}, {hi:.4f}]  var={v:.4g}  skew={s:.4g}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    cfg = load_config(args.config, require_data=False)
    seed = cfg.sim_seed if args.seed is None else args.seed
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    out = _out_dir(args, cfg)
    n = cfg.n_years
    layout = build_layout(cfg.spec, n)
    theta = ParamVector.from_dict(layout, _expand_truth(cfg.truth, layout, n))
    tri, lower = simulate_triangle(cfg.spec, theta, n, np.random.default_rng(seed))
    write_cells_csv(out / "triangle.csv", tri.cells())
    write_cells_csv(out / "holdout.csv", lower)
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["parameter", "value"])
        for name, v in zip(layout.names, theta.values):
            w.writerow([name, _fmt(v)])
    _log(f"simulated {n}x{n} triangle from {cfg.spec.name} with seed {seed} -> {out}")
    return 0


def _expand_truth(truth, layout, n):
    """Truth values by name; ``alpha1[*] = v`` style wildcards set a whole block."""
    out = {}
    for key, v in truth.items():
        if key.endswith("[*]"):
            stem = key[:-3]
            hits = [m for m in layout.names if m.startswith(stem + "[")]
            if not hits:
                raise ConfigError(f"[truth] {key}: no such parameter block")
            out.update(dict.fromkeys(hits, v))
        elif key not in layout.names:
            raise ConfigError(f"[truth] unknown parameter {key!r}; expected one of "
                              f"{', '.join(layout.names)}")
        else:
            out[key] = v
    return out


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="bqreserve",
                                description="Bayesian quantile regression for loss reserving.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="run the sampler and write chains and fit diagnostics")
    f.add_argument("--config", required=True)
    f.add_argument("--out")
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="tabulate DIC and MSE of several fits")
    c.add_argument("fits", nargs="+", help="fit directories")
    c.add_argument("--out", help="CSV file (default stdout)")
    c.set_defaults(func=cmd_compare)

    for name, func, helptext in (
        ("predict", cmd_predict, "cell quantiles, fitted values and QQ data"),
        ("reserve", cmd_reserve, "outstanding-reserve quantiles and risk margins"),
        ("margin", cmd_margin, "accident-year skew profile of an M23' fit"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--fit", required=True, help="fit directory")
        s.add_argument("--out")
        if name != "margin":
            s.add_argument("--levels", help="comma-separated quantile levels")
        if name == "reserve":
            s.add_argument("--mode", choices=("full_posterior", "point"))
            s.add_argument("--seed", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("simulate", help="draw a synthetic triangle from the configured model")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReserveError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"ERROR io_error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
