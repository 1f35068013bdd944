"""Run configuration files.

INI-style: ``[section]`` headers, ``key = value`` lines, ``#`` comments.
Unknown sections or keys are rejected so typos fail loudly.  Relative
paths resolve against the directory of the config file.

Example::

    [data]
    path = triangle.csv
    [model]
    family = al
    location = anova
    scale = development
    [mcmc]
    iterations = 60000
    seed = 7
"""

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .mcmc import ChainConfig
from .model import ModelSpec, Priors
from .triangle import DEFAULT_FLOOR, DEFAULT_LAMBDA

__all__ = ["RunConfig", "ReserveSettings", "load_config", "parse_config", "parse_levels",
           "DEFAULT_LEVELS"]

DEFAULT_LEVELS = (0.3, 0.5, 0.75, 0.95)

_KEYS = {
    "data": {"path", "floor"},
    "model": {"family", "label", "location", "scale", "shape", "u", "lambda"},
    "priors": {"coef_variance", "a_variance", "gamma_shape", "gamma_rate", "gamma1_max",
               "omega2_eps"},
    "mcmc": {"iterations", "burn_in", "thin", "chains", "seed", "default_scale", "blocking",
             "adapt_covariance", "ladder_prob"},
    "output": {"dir"},
    "reserve": {"levels", "mode", "n_sims", "central", "seed", "heavy_tail"},
    "simulate": {"n_years", "seed"},
    "truth": None,
}


@dataclass(frozen=True)
class ReserveSettings:
    levels: tuple = DEFAULT_LEVELS
    mode: str = "full_posterior"
    n_sims: int = 20_000
    central: str = "median"
    seed: int = 0
    heavy_tail: bool = False

    def __post_init__(self):
        if self.mode not in ("full_posterior", "point"):
            raise ConfigError(f"reserve mode must be full_posterior or point, not {self.mode!r}")
        if self.central not in ("median", "mean"):
            raise ConfigError(f"central must be median or mean, not {self.central!r}")
        if self.n_sims < 1000:
            raise ConfigError("reserve n_sims must be at least 1000")
        if self.seed < 0:
            raise ConfigError("reserve seed must be nonnegative")
        parse_levels(",".join(repr(v) for v in self.levels))


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs: data, model, priors, sampler, outputs."""

    spec: ModelSpec
    data_path: Path | None = None
    floor: float = DEFAULT_FLOOR
    priors: Priors = field(default_factory=Priors)
    chain: ChainConfig = field(default_factory=ChainConfig)
    output_dir: Path | None = None
    reserve: ReserveSettings = field(default_factory=ReserveSettings)
    n_years: int = 10
    sim_seed: int = 0
    truth: dict = field(default_factory=dict)
    source: Path | None = None

    def with_seed(self, seed):
        return replace(self, chain=replace(self.chain, seed=int(seed)), sim_seed=int(seed))

    def to_ini(self):
        """Canonical text of the fully resolved configuration."""
        s, c, p, r = self.spec, self.chain, self.priors, self.reserve
        lines = ["[data]"]
        if self.data_path is not None:
            lines.append(f"path = {self.data_path}")
        lines += [f"floor = {self.floor!r}", "", "[model]", f"family = {s.family}",
                  f"location = {s.location}", f"scale = {s.scale}", f"shape = {s.shape}"]
        if s.u is not None:
            lines.append(f"u = {s.u!r}")
        lines += [f"lambda = {s.lam!r}", "", "[priors]"]
        for k in ("coef_variance", "a_variance", "gamma_shape", "gamma_rate", "gamma1_max",
                  "omega2_eps"):
            lines.append(f"{k} = {getattr(p, k)!r}")
        lines += ["", "[mcmc]", f"iterations = {c.n_iter}", f"burn_in = {c.burn_in}",
                  f"thin = {c.thin}", f"chains = {c.n_chains}", f"seed = {c.seed}",
                  f"default_scale = {c.default_scale!r}", f"blocking = {c.blocking}",
                  f"adapt_covariance = {str(c.adapt_covariance).lower()}",
                  f"ladder_prob = {c.ladder_prob!r}"]
        for k in sorted(c.init_scales):
            lines.append(f"scale.{k} = {c.init_scales[k]!r}")
        lines += ["", "[reserve]", "levels = " + ",".join(repr(v) for v in r.levels),
                  f"mode = {r.mode}", f"n_sims = {r.n_sims}", f"central = {r.central}",
                  f"seed = {r.seed}", f"heavy_tail = {str(r.heavy_tail).lower()}",
                  "", "[simulate]", f"n_years = {self.n_years}", f"seed = {self.sim_seed}"]
        if self.truth:
            lines += ["", "[truth]"] + [f"{k} = {v!r}" for k, v in sorted(self.truth.items())]
        return "\n".join(lines) + "\n"


def parse_levels(text):
    """Parse ``"0.3,0.5"`` into a tuple of levels in (0, 1)."""
    parts = [t.strip() for t in str(text).split(",") if t.strip()]
    if not parts:
        raise ConfigError("empty list of quantile levels", code="empty_levels")
    try:
        levels = tuple(float(t) for t in parts)
    except ValueError:
        raise ConfigError(f"cannot parse quantile levels {text!r}") from None
    if any(not 0 < u < 1 for u in levels):
        raise ConfigError("quantile levels must lie in (0, 1)", code="invalid_levels")
    return levels


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: cannot parse {raw!r}") from None


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def parse_config(text, base_dir=None, source=None, require_data=True):
    """Build a :class:`RunConfig` from config text."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), strict=True,
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigError(f"unknown section [{name}]", code="config_unknown_key")
        allowed = _KEYS[name]
        if allowed is None:
            continue
        for key in cp[name]:
            if key not in allowed and not (name == "mcmc" and key.startswith("scale.")):
                raise ConfigError(f"unknown key {key!r} in [{name}]", code="config_unknown_key")
    sec = {name: cp[name] if cp.has_section(name) else None for name in _KEYS}
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    def path_of(s, key):
        v = _get(s, key, str, None)
        if v is None:
            return None
        p = Path(v).expanduser()
        return p if p.is_absolute() else (base / p)

    data_path = path_of(sec["data"], "path")
    if require_data:
        if data_path is None:
            raise ConfigError("no data path configured", code="config_missing_data")
        if not data_path.is_file():
            raise ConfigError(f"data file not found: {data_path}", code="config_missing_data")

    m = sec["model"]
    family = _get(m, "family", str, "al")
    u = _get(m, "u", float, None)
    lam = _get(m, "lambda", float, DEFAULT_LAMBDA)
    label = _get(m, "label", str, None)
    if label is not None:
        if any(_get(m, k, str, None) is not None for k in ("location", "scale", "shape")):
            raise ConfigError("give either a model label or explicit structures, not both")
        spec = ModelSpec.from_label(label, family=family, u=u, lam=lam)
    else:
        positive = family in ("gb2", "gg", "gamma")
        spec = ModelSpec(family=family, location=_get(m, "location", str, "anova"),
                         scale=_get(m, "scale", str, "none" if positive else "both"),
                         shape=_get(m, "shape", str, "constant"), u=u, lam=lam)

    pr = sec["priors"]
    d = Priors()
    priors = Priors(**{k: _get(pr, k, float, getattr(d, k)) for k in _KEYS["priors"]})

    mc = sec["mcmc"]
    dc = ChainConfig()
    scales = {}
    if mc is not None:
        for key in mc:
            if key.startswith("scale."):
                scales[key[len("scale."):]] = _get(mc, key, float, None)
    chain = ChainConfig(
        n_iter=_get(mc, "iterations", _int, dc.n_iter),
        burn_in=_get(mc, "burn_in", _int, dc.burn_in),
        thin=_get(mc, "thin", _int, dc.thin),
        n_chains=_get(mc, "chains", _int, dc.n_chains),
        seed=_get(mc, "seed", _int, dc.seed),
        init_scales=scales,
        default_scale=_get(mc, "default_scale", float, dc.default_scale),
        adapt_covariance=_get(mc, "adapt_covariance", _bool, dc.adapt_covariance),
        blocking=_get(mc, "blocking", str, dc.blocking),
        ladder_prob=_get(mc, "ladder_prob", float, dc.ladder_prob),
    )

    rs = sec["reserve"]
    dr = ReserveSettings()
    reserve = ReserveSettings(
        levels=parse_levels(_get(rs, "levels", str, ",".join(map(str, dr.levels)))),
        mode=_get(rs, "mode", str, dr.mode),
        n_sims=_get(rs, "n_sims", _int, dr.n_sims),
        central=_get(rs, "central", str, dr.central),
        seed=_get(rs, "seed", _int, dr.seed),
        heavy_tail=_get(rs, "heavy_tail", _bool, dr.heavy_tail),
    )

    floor = _get(sec["data"], "floor", float, DEFAULT_FLOOR)
    if not floor > 0:
        raise ConfigError("data floor must be positive")
    sim = sec["simulate"]
    n_years = _get(sim, "n_years", _int, 10)
    sim_seed = _get(sim, "seed", _int, 0)
    if n_years < 1:
        raise ConfigError("simulate n_years must be at least 1")
    if sim_seed < 0:
        raise ConfigError("simulate seed must be nonnegative")
    truth = {}
    if sec["truth"] is not None:
        for k in sec["truth"]:
            truth[k] = _get(sec["truth"], k, float, None)
    return RunConfig(spec=spec, data_path=data_path, floor=floor, priors=priors, chain=chain,
                     output_dir=path_of(sec["output"], "dir"), reserve=reserve,
                     n_years=n_years, sim_seed=sim_seed, truth=truth,
                     source=Path(source) if source else None)


def load_config(path, require_data=True):
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", code="config_missing") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent, source=path, require_data=require_data)
