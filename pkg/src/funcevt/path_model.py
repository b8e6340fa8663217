"""Time grids, sampled process paths, and marginal distribution models.

A path sample holds n independent realisations of a positive process
observed on a common grid of m time points in [0, 1].  The marginal
model knows the per-time distribution of the process and turns raw
paths into standard-Pareto scale via zeta = 1/(1 - F_t(xi)), which is
what every tail statistic downstream consumes.

Two families are supported:

* ``moving-max``: a moving-maximum Poisson process whose one-dimensional
  marginals are standard Frechet, F_t(x) = exp(-1/x), for any smoothing
  kernel that integrates to one.
* ``pareto-gbm``: xi(t) = Y * B(t) with Y standard Pareto and B a
  geometric Brownian motion with unit drift correction, B(t) =
  exp(W(t) - t/2).  The marginal tail is E[min(B(t)/x, 1)]; splitting
  the expectation at B = x gives an exact two-term normal-cdf formula.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

# Positive floor used when a numerically evaluated tail underflows to 0;
# keeps zeta = 1/tail finite (about 1e292 at the floor).
TAIL_FLOOR = 2.0 ** -970

MOVING_MAX = "moving-max"
PARETO_GBM = "pareto-gbm"
FAMILIES = (MOVING_MAX, PARETO_GBM)


class DataError(ValueError):
    """Malformed grid, sample, or CSV input."""


def _as_grid_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size == 0:
        raise DataError("grid needs a non-empty 1-d array of time points")
    if not np.all(np.isfinite(pts)):
        raise DataError("grid points must be finite")
    if pts[0] < 0.0 or pts[-1] > 1.0:
        raise DataError("grid points must lie in [0, 1]")
    if pts.size > 1 and not np.all(np.diff(pts) > 0.0):
        raise DataError("grid points must be strictly increasing")
    return pts


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points in [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _as_grid_points(self.points))

    @property
    def m(self) -> int:
        return self.points.size

    def __len__(self) -> int:
        return self.points.size

    def index_of(self, t, tol=1e-9):
        """Index of the grid point equal to t (within tol)."""
        i = int(np.argmin(np.abs(self.points - t)))
        if abs(self.points[i] - t) > tol:
            raise DataError(f"t={t} is not a grid point")
        return i

    def matches(self, other, tol=1e-12) -> bool:
        return self.m == other.m and np.allclose(
            self.points, other.points, rtol=0.0, atol=tol
        )


def make_grid(m=None, points=None) -> TimeGrid:
    """Build a time grid.

    Parameters
    ----------
    m : int, optional
        Number of uniform points on [0, 1]; m = 1 gives the single
        point {0}.
    points : array_like, optional
        Explicit grid points; overrides m.
    """
    if points is not None:
        return TimeGrid(np.asarray(points, dtype=float))
    if m is None:
        raise DataError("either m or points is required")
    m = int(m)
    if m < 1:
        raise DataError("m must be >= 1")
    if m == 1:
        return TimeGrid(np.array([0.0]))
    return TimeGrid(np.linspace(0.0, 1.0, m))


def _check_values(values, grid, minimum, what):
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2:
        raise DataError(f"{what} values must be a 2-d array (paths x times)")
    if vals.shape[1] != grid.m:
        raise DataError(
            f"{what} has {vals.shape[1]} columns but the grid has {grid.m} points"
        )
    if not np.all(np.isfinite(vals)):
        raise DataError(f"{what} values must be finite")
    if np.any(vals < minimum) or (minimum == 0.0 and np.any(vals == 0.0)):
        bound = "positive" if minimum == 0.0 else f">= {minimum}"
        raise DataError(f"{what} values must be {bound}")
    return vals


def _write_csv(path, grid, values):
    header = ",".join(f"{t:.17g}" for t in grid.points)
    np.savetxt(path, values, delimiter=",", fmt="%.17g", header=header, comments="")


def _read_csv(path):
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot parse paths CSV {path!r}: {exc}") from exc
    if raw.shape[0] < 2:
        raise DataError(f"paths CSV {path!r} has no data rows")
    grid = TimeGrid(raw[0])
    return grid, raw[1:]


@dataclass(frozen=True)
class PathSample:
    """n paths of a positive process on a common time grid."""

    grid: TimeGrid
    values: np.ndarray
    family: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.values, self.grid, 0.0, "path")
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path):
        """Write grid header row plus one row per path, 17 significant digits."""
        _write_csv(path, self.grid, self.values)

    @classmethod
    def from_csv(cls, path, family="synthetic"):
        grid, values = _read_csv(path)
        return cls(grid, values, family)


@dataclass(frozen=True)
class ParetoPaths:
    """Paths standardised to the Pareto scale, zeta = 1/(1 - F_t(xi)) >= 1."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.values, self.grid, 1.0, "pareto")
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path):
        _write_csv(path, self.grid, self.values)

    @classmethod
    def from_csv(cls, path):
        grid, values = _read_csv(path)
        return cls(grid, values)


@dataclass
class MarginalModel:
    """Per-time marginal distribution of a process family.

    Parameters
    ----------
    family : str
        "moving-max" or "pareto-gbm".
    rate : float
        Kernel rate parameter of the moving-max family (unused by the
        marginal itself, which is standard Frechet for any unit-mass
        kernel; kept for bookkeeping).
    bound_exponent : float
        Exponent M > 1 in the documented tail bracket of the
        pareto-gbm family: for large u,
        u <= 1/(1 - F_t(u)) <= u / (1 - u**-(M+2)).
    """

    family: str
    rate: float = 1.0
    bound_exponent: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        if self.family == PARETO_GBM and self.bound_exponent <= 1.0:
            raise DataError("bound_exponent must be > 1")

    def tail(self, t, x):
        """Upper tail 1 - F_t(x), vectorised over x.

        Underflowing values are clamped at a 2**-970 floor so the
        Pareto transform stays finite; a RuntimeWarning counts clamps.
        """
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0):
            raise DataError("tail is defined for x > 0")
        if self.family == MOVING_MAX:
            out = -np.expm1(-1.0 / x)
        else:
            out = self._gbm_tail(float(t), x)
        clamped = int(np.count_nonzero(out < TAIL_FLOOR))
        if clamped:
            warnings.warn(
                f"clamped {clamped} tail values at the 2**-970 floor",
                RuntimeWarning,
                stacklevel=2,
            )
            out = np.maximum(out, TAIL_FLOOR)
        return out if out.ndim else float(out)

    def cdf(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.family == MOVING_MAX:
            with np.errstate(divide="ignore"):
                out = np.where(x > 0.0, np.exp(-1.0 / np.maximum(x, TAIL_FLOOR)), 0.0)
            return out if out.ndim else float(out)
        out = np.where(x > 0.0, 1.0 - self._gbm_tail(float(t), np.maximum(x, TAIL_FLOOR)), 0.0)
        return out if out.ndim else float(out)

    def _gbm_tail(self, t, x):
        # 1 - F_t(x) = E[min(B(t)/x, 1)] with B(t) = exp(sqrt(t) Z - t/2).
        # Split at B = x: P(B >= x) + E[B/x; B < x], each a normal cdf.
        if t < 0.0:
            raise DataError("t must be >= 0")
        if t == 0.0:
            return np.minimum(1.0, 1.0 / x)
        s = np.sqrt(t)
        z = (np.log(x) + 0.5 * t) / s
        return ndtr(-z) + ndtr(z - s) / x


def marginal_model_for(sample, **kwargs) -> MarginalModel:
    """Marginal model matching a simulated sample's family."""
    if sample.family not in FAMILIES:
        raise DataError(
            f"sample family {sample.family!r} has no built-in marginal model"
        )
    return MarginalModel(sample.family, **kwargs)


def pareto_transform(sample, model) -> ParetoPaths:
    """Standardise a path sample to the Pareto scale.

    Applies zeta_i(t) = 1/(1 - F_t(xi_i(t))) column by column using the
    marginal model.  Output values are >= 1.
    """
    out = np.empty_like(sample.values)
    for j, t in enumerate(sample.grid.points):
        out[:, j] = 1.0 / model.tail(t, sample.values[:, j])
    # floating point can land a hair under 1 when F is evaluated near 0
    np.clip(out, 1.0, None, out=out)
    return ParetoPaths(sample.grid, out)
