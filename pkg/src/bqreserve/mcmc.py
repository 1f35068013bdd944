"""Block Metropolis-within-Gibbs sampler with burn-in-only adaptation.

Each parameter block gets a Gaussian random-walk proposal
``theta_b' = theta_b + s_b L_b z``.  During burn-in the log step size
``s_b`` follows a Robbins-Monro recursion toward a target acceptance rate,
and for multi-parameter blocks ``L_b`` is refreshed from the empirical
covariance of the burn-in draws.  Both are frozen after burn-in, so the
retained draws come from a fixed-kernel Markov chain.

Random numbers are drawn from ``numpy.random.default_rng(seed + chain)``
(PCG64) in fixed-size chunks, so a longer run reproduces every draw of a
shorter one with the same seed and burn-in.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InitializationError, NumericConvergenceError, ReserveError
from . import _kernel
from .model import Block, Model, ParamVector

__all__ = [
    "ChainConfig",
    "Chain",
    "PosteriorSummary",
    "run_chain",
    "run_chains",
    "init_params",
    "summarize",
    "acf",
    "effective_sample_size",
    "write_chain_csv",
    "read_chain_csv",
    "chain_from_csv",
]

_CHUNK = 512
_COV_CHECKPOINTS = (0.3, 0.55, 0.8)


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings.

    ``init_scales`` maps block names (``alpha0``, ``alpha1``, ``beta0``,
    ``dist``, ...) to initial random-walk step sizes; unlisted blocks start
    at ``default_scale``.  Adaptation runs every iteration of burn-in.
    """

    n_iter: int = 60_000
    burn_in: int = 10_000
    thin: int = 10
    n_chains: int = 1
    seed: int = 0
    init_scales: dict = field(default_factory=dict)
    default_scale: float = 0.1
    adapt_covariance: bool = True
    blocking: str = "group"
    ladder: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    ladder_prob: float = 0.0

    def __post_init__(self):
        if self.n_iter < 1:
            raise ConfigError("n_iter must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.default_scale > 0:
            raise ConfigError("proposal scales must be positive")
        if self.blocking not in ("single", "group"):
            raise ConfigError("blocking must be 'single' or 'group'")
        if not 0 <= self.ladder_prob < 1 or any(not 0 < m < 1 for m in self.ladder):
            raise ConfigError("ladder multipliers must lie in (0, 1) and ladder_prob in [0, 1)")
        for k, v in self.init_scales.items():
            if not float(v) > 0:
                raise ConfigError(f"proposal scale for block {k!r} must be positive")

    @property
    def n_keep(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(frozen=True)
class Chain:
    """Retained draws and bookkeeping of one chain."""

    names: tuple
    iters: np.ndarray
    draws: np.ndarray
    deviance: np.ndarray
    log_post: np.ndarray
    block_names: tuple
    acceptance: dict
    burn_in_acceptance: dict
    scales: dict
    history: list
    seed: int
    chain_index: int
    elapsed: float

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, self.names.index(name)]

    def posterior_mean(self):
        return self.draws.mean(axis=0)


def _target_rate(dim):
    if dim == 1:
        return 0.44
    if dim <= 3:
        return 0.35
    return 0.25


class _State:
    """Mutable sampler state shared by the compiled and Python loops."""

    def __init__(self, cfg, blocks, dim):
        nb = len(blocks)
        self.blocks = blocks
        self.starts = np.array([b.start for b in blocks], dtype=np.int64)
        self.sizes = np.array([b.size for b in blocks], dtype=np.int64)
        self.log_s = np.array([np.log(float(cfg.init_scales.get(b.name, cfg.default_scale)))
                               for b in blocks])
        self.chol = [np.eye(k) for k in self.sizes]
        self.targets = np.array([_target_rate(k) for k in self.sizes])
        self.n_base = np.zeros(nb)
        self.acc_burn = np.zeros(nb)
        self.acc_main = np.zeros(nb)
        n_keep = cfg.n_keep
        self.draws = np.empty((n_keep, dim))
        self.dev = np.empty(n_keep)
        self.lps = np.empty(n_keep)
        self.iters = np.empty(n_keep, dtype=np.int64)
        self.kept = np.zeros(1, dtype=np.int64)
        self.burn_store = np.empty((cfg.burn_in, dim))

    def chol_flat(self):
        ptr = np.concatenate([[0], np.cumsum(self.sizes**2)]).astype(np.int64)
        return ptr[:-1], np.concatenate([L.ravel() for L in self.chol])


def _segments(cfg):
    """Cut points: random-number chunks, adaptation checkpoints, history rows."""
    cuts = set(range(0, cfg.n_iter, _CHUNK)) | {cfg.n_iter, cfg.burn_in}
    cuts |= set(range(1000, cfg.burn_in, 1000))
    checkpoints = set()
    if cfg.adapt_covariance and cfg.burn_in:
        checkpoints = {int(c * cfg.burn_in) for c in _COV_CHECKPOINTS} - {0}
    cuts |= checkpoints
    cuts = sorted(c for c in cuts if 0 <= c <= cfg.n_iter)
    return list(zip(cuts[:-1], cuts[1:])), checkpoints


def run_chain(model, cfg=None, init=None, chain_index=0):
    """Run one chain of the sampler on ``model``.

    ``model`` needs a ``layout`` and a ``terms(theta) -> (log_post, loglik)``
    method.  A :class:`bqreserve.model.Model` runs through the compiled
    kernel; anything else through an equivalent Python loop.  ``init``
    defaults to :func:`init_params`.
    """
    cfg = cfg or ChainConfig()
    layout = model.layout
    if init is None:
        init = init_params(model)
    theta = np.array(getattr(init, "values", init), dtype=float)
    if theta.size != layout.size:
        raise InitializationError(f"initial vector has {theta.size} values, expected {layout.size}")
    lp, ll = model.terms(theta)
    if not np.isfinite(lp):
        raise InitializationError("initial parameters have zero posterior density")

    seed = cfg.seed + chain_index
    rng = np.random.default_rng(seed)
    blocks = sampler_blocks(layout, cfg.blocking)
    ladder = np.asarray(cfg.ladder, dtype=float)
    nb, dim = len(blocks), layout.size
    st = _State(cfg, blocks, dim)
    if isinstance(model, Model):
        runner = _KernelRunner(model, st, theta)
    else:
        runner = _PythonRunner(model, st, theta, lp, ll)
    history = []
    segments, checkpoints = _segments(cfg)
    t0 = time.perf_counter()
    for a, b in segments:
        if a % _CHUNK == 0:
            z = rng.standard_normal((_CHUNK, dim))
            logu = np.log(rng.random((_CHUNK, nb)))
            mult = _ladder_draws(rng, (_CHUNK, nb), ladder, cfg.ladder_prob)
        runner.run(a, b, a % _CHUNK, z, logu, mult, cfg)
        if b <= cfg.burn_in and b > 0:
            if b in checkpoints:
                _refresh_cholesky(st, b)
                runner.chol_changed()
            if b in checkpoints or b % 1000 == 0 or b == cfg.burn_in:
                history.append(_history_row(b, blocks, st))

    n_main = cfg.n_iter - cfg.burn_in
    names = tuple(blk.name for blk in blocks)
    return Chain(
        names=layout.names,
        iters=st.iters,
        draws=st.draws,
        deviance=st.dev,
        log_post=st.lps,
        block_names=names,
        acceptance={n: float(st.acc_main[i] / n_main) for i, n in enumerate(names)},
        burn_in_acceptance={n: (float(st.acc_burn[i] / st.n_base[i]) if st.n_base[i] else float("nan"))
                            for i, n in enumerate(names)},
        scales={n: float(np.exp(st.log_s[i])) for i, n in enumerate(names)},
        history=history,
        seed=seed,
        chain_index=chain_index,
        elapsed=time.perf_counter() - t0,
    )


class _PythonRunner:
    def __init__(self, target, st, theta, lp, ll):
        self.target, self.st = target, st
        self.theta, self.lp, self.ll = theta, lp, ll

    def chol_changed(self):
        pass

    def run(self, it0, it1, c0, z, logu, mult, cfg):
        st, target = self.st, self.target
        theta, lp, ll = self.theta, self.lp, self.ll
        for it in range(it0, it1):
            c = c0 + it - it0
            in_burn = it < cfg.burn_in
            for b, blk in enumerate(st.blocks):
                sl = blk.slice
                m = mult[c, b]
                step = st.chol[b] @ z[c, sl]
                prop = theta.copy()
                prop[sl] += np.exp(st.log_s[b]) * m * step
                try:
                    lp_new, ll_new = target.terms(prop)
                except NumericConvergenceError as exc:
                    raise NumericConvergenceError(
                        f"iteration {it + 1}, block {blk.name}: {exc}") from exc
                ok = lp_new > -np.inf
                diff = lp_new - lp if ok else -np.inf
                accept = ok and (diff >= 0 or logu[c, b] < diff)
                if accept:
                    theta, lp, ll = prop, lp_new, ll_new
                if in_burn and m == 1.0:
                    st.n_base[b] += 1.0
                    st.acc_burn[b] += accept
                    alpha = 0.0 if not ok else 1.0 if diff >= 0 else float(np.exp(diff))
                    st.log_s[b] += st.n_base[b] ** -0.6 * (alpha - st.targets[b])
                elif not in_burn and accept:
                    st.acc_main[b] += 1.0
            if in_burn:
                st.burn_store[it] = theta
            elif (it + 1 - cfg.burn_in) % cfg.thin == 0:
                j = st.kept[0]
                st.draws[j] = theta
                st.dev[j] = -2.0 * ll
                st.lps[j] = lp
                st.iters[j] = it + 1
                st.kept[0] = j + 1
        self.theta, self.lp, self.ll = theta, lp, ll


class _KernelRunner:
    def __init__(self, model, st, theta):
        self.st = st
        self.theta = theta.copy()
        d = model.design
        fam = model.spec.family
        self.fam = {"al": _kernel.FAM_AL, "al_np": _kernel.FAM_AL, "pp": _kernel.FAM_PP,
                    "gb2": _kernel.FAM_GB2, "gg": _kernel.FAM_GG, "gamma": _kernel.FAM_GG}[fam]
        self.a_fixed = fam == "gamma"
        self.al_p_free = fam == "al" and model.spec.shape == "constant"
        self.u_fixed = float(model.spec.u) if fam == "al_np" else 0.5
        self.y = np.ascontiguousarray(model.y, dtype=float)
        self.logy = np.ascontiguousarray(model.log_y, dtype=float)
        self.X = np.ascontiguousarray(model.obs.X)
        self.S = np.ascontiguousarray(model.obs.S)
        self.P = np.ascontiguousarray(model.obs.P)
        self.loc0, self.sc0, self.sh0 = d.loc.start, d.scale.start, d.shp.start
        self.dist0 = d.dist.start
        self.nd = d.dist.stop - d.dist.start
        pr = model.priors
        self.cfg = np.array([pr.coef_variance, pr.a_variance, pr.gamma_shape, pr.gamma_rate,
                             pr.gamma1_max, pr.omega2_eps])
        kinds = {"location": _kernel.KIND_LOC, "scale": _kernel.KIND_SCALE,
                 "shape": _kernel.KIND_SHAPE, "dist": _kernel.KIND_DIST}
        self.kind = np.array([kinds[b.kind] for b in st.blocks], dtype=np.int64)
        cells = []
        for b in st.blocks:
            if b.kind == "dist":
                cells.append(np.zeros(0, dtype=np.int64))
                continue
            mat, off = {"location": (self.X, self.loc0), "scale": (self.S, self.sc0),
                        "shape": (self.P, self.sh0)}[b.kind]
            cols = mat[:, b.start - off:b.start - off + b.size]
            cells.append(np.flatnonzero(np.any(cols != 0.0, axis=1)).astype(np.int64))
        self.cell_ptr = np.concatenate([[0], np.cumsum([c.size for c in cells])]).astype(np.int64)
        self.cell_idx = np.concatenate(cells).astype(np.int64) if cells else np.zeros(0, np.int64)
        n = self.y.size
        self.mu, self.lsig2 = np.zeros(n), np.zeros(n)
        self.pc, self.ll = np.zeros(n), np.zeros(n)
        _, status = _kernel.full_state(
            self.theta, self.fam, self.a_fixed, self.al_p_free, self.u_fixed, self.y, self.logy,
            self.X, self.S, self.P, self.loc0, self.sc0, self.sh0, self.dist0, self.nd, self.cfg,
            self.mu, self.lsig2, self.pc, self.ll)
        if status != 0:
            raise InitializationError("initial parameters have zero posterior density")
        self.chol_changed()
        self.err = np.zeros(2, dtype=np.int64)

    def chol_changed(self):
        self.chol_ptr, self.chol = self.st.chol_flat()

    def run(self, it0, it1, c0, z, logu, mult, cfg):
        st = self.st
        _kernel.run_segment(
            it0, it1, c0, self.theta, self.mu, self.lsig2, self.pc, self.ll,
            self.fam, self.a_fixed, self.al_p_free, self.u_fixed, self.y, self.logy,
            self.X, self.S, self.P, self.loc0, self.sc0, self.sh0, self.dist0, self.nd, self.cfg,
            st.starts, st.sizes, self.kind, self.cell_ptr, self.cell_idx, self.chol_ptr, self.chol,
            st.log_s, st.targets, st.n_base, st.acc_burn, st.acc_main,
            z, logu, mult, cfg.burn_in, cfg.thin,
            st.draws, st.dev, st.lps, st.iters, st.kept, st.burn_store, self.err)
        if self.err[0]:
            name = st.blocks[self.err[1]].name
            raise NumericConvergenceError(
                f"iteration {self.err[0]}, block {name}: PP implicit quantile equation did not converge")


def sampler_blocks(layout, blocking="single"):
    """Update blocks: one per coefficient (``single``) or per group (``group``).

    The distribution-shape parameters always move together.
    """
    if blocking == "group":
        return layout.blocks
    out = []
    for b in layout.blocks:
        if b.kind == "dist" or b.size == 1:
            out.append(b)
        else:
            out.extend(Block(n, b.kind, (n,), b.start + k) for k, n in enumerate(b.names))
    return tuple(out)


def _ladder_draws(rng, shape, ladder, prob):
    """Step multipliers: 1 with probability ``1 - prob``, else a ladder rung."""
    pick = rng.random(shape)
    rung = rng.integers(0, len(ladder), size=shape) if len(ladder) else np.zeros(shape, int)
    mult = np.ones(shape)
    if len(ladder):
        use = pick < prob
        mult[use] = ladder[rung[use]]
    return mult


def _history_row(it, blocks, st):
    row = {"iter": it}
    row.update({f"scale[{b.name}]": float(np.exp(st.log_s[i])) for i, b in enumerate(blocks)})
    row.update({f"acc[{b.name}]": float(st.acc_burn[i] / max(st.n_base[i], 1.0))
                for i, b in enumerate(blocks)})
    return row


def _refresh_cholesky(st, upto):
    """Replace ``L_b`` by the Cholesky factor of the recent draws' covariance."""
    lo = upto // 2
    for b, blk in enumerate(st.blocks):
        d = blk.size
        if d == 1 or upto - lo < 10 * d:
            continue
        cov = np.cov(st.burn_store[lo:upto, blk.slice], rowvar=False)
        if not np.all(np.isfinite(cov)):
            continue
        scale = np.sqrt(np.mean(np.diag(cov)))
        if not scale > 0:
            continue
        try:
            L = np.linalg.cholesky(cov + 1e-6 * scale**2 * np.eye(d))
        except np.linalg.LinAlgError:
            continue
        st.chol[b] = L
        st.log_s[b] = np.log(2.38 / np.sqrt(d))


def run_chains(model, cfg=None, init=None):
    """Run ``cfg.n_chains`` independent chains with seeds ``seed + k``."""
    cfg = cfg or ChainConfig()
    return [run_chain(model, cfg, init, chain_index=k) for k in range(cfg.n_chains)]


# ---------------------------------------------------------------------------
# initial values


def init_params(model):
    """Deterministic starting point with finite posterior density.

    Intercept at the median of the modelled data (log of the mean for the
    mean-linked positive families), other regression coefficients 0, the
    scale intercept matched to the data variance.
    """
    spec, layout = model.spec, model.layout
    y = np.asarray(model.y, dtype=float)
    vals = dict.fromkeys(layout.names, 0.0)
    f = spec.family
    sd = float(np.std(y)) if y.size > 1 else 0.0
    if f in ("al", "al_np"):
        p = spec.u if f == "al_np" else 0.5
        vals["alpha0"] = float(np.median(y)) if y.size else 0.0
        var_factor = (1.0 - 2.0 * p + 2.0 * p * p) / (p * p * (1.0 - p) ** 2)
        vals["beta0"] = float(np.log(sd**2 / var_factor)) if sd > 0 else 0.0
        if "p" in vals:
            vals["p"] = 0.5
        if "phi0" in vals:
            vals["phi0"] = 0.5
    elif f == "pp":
        offset = sd if sd > 0 else 1.0
        mu0 = float(np.min(y)) - offset if y.size else 0.0
        vals["alpha0"] = mu0
        # gamma1 = gamma2 = 1/2 puts the kernel median at 1
        spread = float(np.median(y)) - mu0 if y.size else 1.0
        vals["beta0"] = float(2.0 * np.log(spread))
        vals["gamma1"] = vals["gamma2"] = 0.5
    else:
        vals["alpha0"] = float(np.log(np.mean(y))) if y.size else 0.0
        if "a" in vals:
            vals["a"] = 1.0
        vals["p"] = 1.0
        if "q" in vals:
            vals["q"] = 3.0
    theta = ParamVector.from_dict(layout, vals)
    if not np.isfinite(model.log_posterior(theta)):
        raise InitializationError("could not find a starting point with finite posterior")
    return theta


# ---------------------------------------------------------------------------
# summaries and diagnostics


@dataclass(frozen=True)
class PosteriorSummary:
    names: tuple
    mean: np.ndarray
    sd: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    n_draws: int
    acceptance: dict

    def rows(self):
        return [(n, float(m), float(s), float(lo), float(hi))
                for n, m, s, lo, hi in zip(self.names, self.mean, self.sd, self.lo95, self.hi95)]

    def __getitem__(self, name):
        i = self.names.index(name)
        return {"mean": float(self.mean[i]), "sd": float(self.sd[i]),
                "lo95": float(self.lo95[i]), "hi95": float(self.hi95[i])}


def _pool(chains):
    if isinstance(chains, Chain):
        chains = [chains]
    chains = list(chains)
    if not chains or any(c.n_draws == 0 for c in chains):
        raise ReserveError("chain has no retained draws", code="empty_chain")
    return chains, np.vstack([c.draws for c in chains])


def summarize(chains):
    """Posterior mean, sd and equal-tailed 95% interval, pooling chains."""
    chains, draws = _pool(chains)
    lo, hi = np.quantile(draws, [0.025, 0.975], axis=0)
    sd = draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.zeros(draws.shape[1])
    acc = {b: float(np.mean([c.acceptance[b] for c in chains])) for b in chains[0].block_names}
    return PosteriorSummary(chains[0].names, draws.mean(axis=0), sd, lo, hi, draws.shape[0], acc)


def acf(series, parameter=None, max_lag=50):
    """Sample autocorrelations at lags ``0..max_lag`` (lag 0 is 1).

    ``series`` is either a 1-d array or a :class:`Chain`, in which case
    ``parameter`` names the column.
    """
    x = series.column(parameter) if isinstance(series, Chain) else np.asarray(series, float)
    n = x.size
    if not 0 <= max_lag < n:
        raise ReserveError("max_lag must be smaller than the number of draws", code="invalid_lag")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise ReserveError("autocorrelation undefined for a constant series", code="constant_series")
    return np.array([float(x[: n - k] @ x[k:]) / denom for k in range(max_lag + 1)])


def effective_sample_size(x):
    """ESS from Geyer's initial positive sequence of autocorrelation pairs."""
    x = np.asarray(x, float)
    n = x.size
    xc = x - x.mean()
    if not np.any(xc):
        return float(n)
    f = np.fft.rfft(xc, 2 * n)
    r = np.fft.irfft(f * np.conj(f))[:n]
    r /= r[0]
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = r[k] + r[k + 1]
        if pair <= 0:
            break
        total += pair
    tau = max(2.0 * total - 1.0, 1.0)
    return n / tau


# ---------------------------------------------------------------------------
# persistence


def write_chain_csv(path, chain):
    """Write ``iter,<names>,deviance`` rows with round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", *chain.names, "deviance"])
        for it, row, d in zip(chain.iters, chain.draws, chain.deviance):
            w.writerow([int(it), *(repr(float(v)) for v in row), repr(float(d))])


def read_chain_csv(path):
    """Return ``(iters, names, draws, deviance)`` from a chain CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "iter" or rows[0][-1] != "deviance":
        raise ReserveError(f"{path}: not a chain file", code="bad_chain_file")
    names = tuple(rows[0][1:-1])
    body = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(names) + 2)
    return body[:, 0].astype(np.int64), names, body[:, 1:-1], body[:, -1]


def chain_from_csv(path, layout_names=None):
    """Rebuild a :class:`Chain` (without adaptation metadata) from CSV."""
    iters, names, draws, dev = read_chain_csv(path)
    if layout_names is not None and tuple(layout_names) != names:
        raise ReserveError(f"{path}: parameter columns do not match the model", code="bad_chain_file")
    return Chain(names=names, iters=iters, draws=draws, deviance=dev,
                 log_post=np.full(dev.shape, np.nan), block_names=(), acceptance={},
                 burn_in_acceptance={}, scales={}, history=[], seed=-1, chain_index=0,
                 elapsed=0.0)

