"""Run-off triangle container, log transform and regression design rows."""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidDimensionError, InvalidIndexError

__all__ = [
    "Triangle",
    "LogTriangle",
    "DesignRow",
    "build_index_sets",
    "log_transform",
    "nelson_siegel_basis",
    "design_row",
    "read_triangle_csv",
    "read_cells_csv",
    "write_cells_csv",
    "DEFAULT_FLOOR",
    "DEFAULT_LAMBDA",
]

DEFAULT_FLOOR = 0.01
DEFAULT_LAMBDA = 0.5


def build_index_sets(n_years):
    """Upper (observed) and lower (to predict) cells of an ``I x I`` triangle.

    Indices are 1-based ``(i, j)`` pairs, ``i`` the accident year and ``j``
    the development year.  The upper set is ``i + j <= I + 1``.
    """
    n = int(n_years)
    if n < 1:
        raise InvalidDimensionError("a triangle needs at least one accident year")
    upper = [(i, j) for i in range(1, n + 1) for j in range(1, n + 2 - i)]
    lower = [(i, j) for i in range(2, n + 1) for j in range(n + 2 - i, n + 1)]
    return upper, lower


@dataclass(frozen=True)
class Triangle:
    """Dense ``I x I`` claims triangle with an observed-cell mask.

    ``values[i-1, j-1]`` holds the amount of accident year ``i`` and
    development year ``j``; unobserved cells are NaN.
    """

    values: np.ndarray
    observed: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise InvalidDimensionError("triangle must be a non-empty square array")
        n = v.shape[0]
        i, j = np.indices(v.shape) + 1
        expected = i + j <= n + 1
        mask = np.asarray(self.observed, dtype=bool)
        if mask.shape != v.shape or np.any(mask != expected):
            raise DataError("observed cells must be exactly the upper triangle i + j <= I + 1")
        obs = v[mask]
        if not np.all(np.isfinite(obs)):
            raise DataError("observed amounts must be finite")
        if np.any(obs < 0):
            raise DataError("claim amounts must be nonnegative", code="negative_amount")
        v = np.where(mask, v, np.nan)
        v.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "observed", mask)

    @classmethod
    def from_upper(cls, values):
        """Build from an ``I x I`` array; entries below the anti-diagonal are ignored."""
        v = np.array(values, dtype=float)
        n = v.shape[0]
        i, j = np.indices(v.shape) + 1
        return cls(v, i + j <= n + 1)

    @classmethod
    def from_cells(cls, rows):
        """Build from ``(i, j, amount)`` rows covering the upper triangle exactly."""
        rows = list(rows)
        if not rows:
            raise InvalidDimensionError("no cells supplied")
        n = max(max(int(i), int(j)) for i, j, _ in rows)
        v = np.full((n, n), np.nan)
        seen = set()
        for i, j, amount in rows:
            i, j = int(i), int(j)
            if i < 1 or j < 1 or i + j > n + 1:
                raise InvalidIndexError(f"cell ({i},{j}) is outside the upper triangle")
            if (i, j) in seen:
                raise DataError(f"duplicate cell ({i},{j})", code="duplicate_cell")
            seen.add((i, j))
            v[i - 1, j - 1] = float(amount)
        missing = [c for c in build_index_sets(n)[0] if c not in seen]
        if missing:
            raise DataError(f"missing upper-triangle cells, e.g. {missing[0]}", code="missing_cell")
        return cls.from_upper(v)

    @property
    def n_years(self):
        return self.values.shape[0]

    @property
    def upper(self):
        return build_index_sets(self.n_years)[0]

    @property
    def lower(self):
        return build_index_sets(self.n_years)[1]

    def observed_values(self):
        """Observed amounts in row-major upper-triangle order."""
        return np.array([self.values[i - 1, j - 1] for i, j in self.upper])

    def cells(self):
        return [(i, j, float(self.values[i - 1, j - 1])) for i, j in self.upper]


@dataclass(frozen=True)
class LogTriangle:
    """Log-transformed triangle, ``y* = ln(max(y, floor))``."""

    values: np.ndarray
    observed: np.ndarray
    floor: float
    n_floored: int = 0

    @property
    def n_years(self):
        return self.values.shape[0]

    def observed_values(self):
        upper, _ = build_index_sets(self.n_years)
        return np.array([self.values[i - 1, j - 1] for i, j in upper])


def log_transform(tri, floor=DEFAULT_FLOOR):
    """Log of the observed amounts with zeros and tiny values floored first."""
    if not floor > 0:
        raise DataError("log floor must be positive")
    v = np.asarray(tri.values, dtype=float)
    obs = tri.observed
    if np.any(v[obs] < 0):
        raise DataError("claim amounts must be nonnegative", code="negative_amount")
    floored = np.where(obs, np.maximum(v, floor), np.nan)
    n_floored = int(np.sum(obs & (v < floor)))
    with np.errstate(invalid="ignore"):
        logged = np.log(floored)
    logged.setflags(write=False)
    return LogTriangle(logged, obs, float(floor), n_floored)


def nelson_siegel_basis(j, lam=DEFAULT_LAMBDA):
    """Slope and curvature loadings ``(F1(j), F2(j))`` of development year ``j``.

    ``F1 = (1 - exp(-lam j)) / (lam j)`` and ``F2 = F1 - exp(-lam j)``; the
    ``j -> 0`` limits are 1 and 0.
    """
    if not lam > 0:
        raise DataError("Nelson-Siegel decay must be positive")
    x = lam * np.asarray(j, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(x > 1e-8, -np.expm1(-x) / x, 1.0 - x / 2.0)
    f2 = f1 - np.exp(-x)
    return f1[()], f2[()]


@dataclass(frozen=True)
class DesignRow:
    """Covariates of one cell, intercepts excluded."""

    location: np.ndarray
    scale: np.ndarray
    shape: np.ndarray


def _dummies(k, n_years):
    d = np.zeros(n_years - 1)
    if k >= 2:
        d[k - 2] = 1.0
    return d


def location_covariates(structure, i, j, n_years, lam=DEFAULT_LAMBDA):
    if structure == "trend":
        return np.array([float(i), float(j)])
    if structure == "nelson_siegel":
        f1, f2 = nelson_siegel_basis(j, lam)
        return np.array([float(f1), float(f2)])
    if structure in ("anova", "anova_u"):
        return np.concatenate([_dummies(i, n_years), _dummies(j, n_years)])
    raise DataError(f"unknown location structure {structure!r}")


def scale_covariates(structure, i, j, n_years):
    if structure in ("constant", "none"):
        return np.zeros(0)
    if structure == "accident":
        return _dummies(i, n_years)
    if structure == "development":
        return _dummies(j, n_years)
    if structure == "both":
        return np.concatenate([_dummies(i, n_years), _dummies(j, n_years)])
    raise DataError(f"unknown scale structure {structure!r}")


def shape_covariates(structure, i, n_years):
    if structure == "constant":
        return np.zeros(0)
    if structure == "accident":
        return _dummies(i, n_years)
    raise DataError(f"unknown shape structure {structure!r}")


def design_row(spec, i, j, n_years, lam=None):
    """Location, scale and shape covariates of cell ``(i, j)`` under ``spec``.

    Dummy codings drop level 1, so row ``(1, 1)`` is all zeros and every
    predictor there reduces to its intercept.
    """
    n = int(n_years)
    if n < 1:
        raise InvalidDimensionError("a triangle needs at least one accident year")
    if not (1 <= i <= n and 1 <= j <= n):
        raise InvalidIndexError(f"cell ({i},{j}) outside a {n}x{n} triangle")
    lam = spec.lam if lam is None else lam
    return DesignRow(
        location=location_covariates(spec.location, i, j, n, lam),
        scale=scale_covariates(spec.scale, i, j, n),
        shape=shape_covariates(spec.shape, i, n),
    )


# ---------------------------------------------------------------------------
# CSV


def _parse_rows(text, source):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file", code="empty_file") from None
    if [h.strip() for h in header] != ["i", "j", "amount"]:
        raise DataError(f"{source}: header must be 'i,j,amount'", code="bad_header")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 3:
            raise DataError(f"{source}:{lineno}: expected 3 fields", code="bad_row")
        try:
            i, j, amount = int(rec[0]), int(rec[1]), float(rec[2])
        except ValueError:
            raise DataError(f"{source}:{lineno}: unparsable value", code="bad_row") from None
        rows.append((i, j, amount))
    return rows


def read_cells_csv(path):
    """Read ``i,j,amount`` rows without any triangle-shape validation."""
    path = Path(path)
    return _parse_rows(path.read_text(encoding="utf-8"), str(path))


def read_triangle_csv(path):
    return Triangle.from_cells(read_cells_csv(path))


def write_cells_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "amount"])
        for i, j, amount in rows:
            w.writerow([int(i), int(j), repr(float(amount))])
