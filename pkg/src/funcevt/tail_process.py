"""Tail empirical process and related sample diagnostics.

For Pareto-standardised paths zeta_i the tail fraction at level x is

    S_{n,t}(x) = (1/n) #{i : zeta_i(t) >= x}

and the tail empirical process, with k upper order statistics in play,

    w_n(t, x) = sqrt(k) ((n/k) S_{n,t}(x n/k) - 1/x),

which converges to the Gaussian field W(C_{t,x}) of the exponent
measure.  This module also provides the weighted sup distance used to
compare a tail field with a draw of its limit, a quantile-ratio
statistic, and an empirical oscillation diagnostic for the negligible
set condition on path increments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from funcevt.path_model import DataError, TimeGrid


def exceedance_fraction(paths, t_index, x):
    """S_{n,t}(x): fraction of paths with zeta(t) >= x, vectorised over x."""
    col = paths.values[:, int(t_index)]
    x = np.asarray(x, dtype=float)
    out = np.count_nonzero(col[None, :] >= np.atleast_1d(x)[:, None], axis=1) / col.size
    return out.reshape(x.shape) if x.ndim else float(out[0])


def tail_empirical_process(paths, t_index, x, k):
    """w_n(t, x) = sqrt(k)((n/k) S_{n,t}(x n/k) - 1/x), vectorised over x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DataError("x must be positive")
    n = paths.n
    k = int(k)
    if not 1 <= k < n:
        raise DataError(f"k must be in [1, n-1], got k={k}, n={n}")
    frac = exceedance_fraction(paths, t_index, x * (n / k))
    out = math.sqrt(k) * ((n / k) * frac - 1.0 / x)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class TailField:
    """w_n evaluated on a time grid times a level grid."""

    t_grid: TimeGrid
    x_grid: np.ndarray
    values: np.ndarray  # (m_t, m_x)
    n: int
    k: int
    beta: float = 0.25
    c: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        if x.ndim != 1 or np.any(x <= 0.0) or np.any(np.diff(x) <= 0.0):
            raise DataError("x_grid must be positive and strictly increasing")
        object.__setattr__(self, "x_grid", x)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.t_grid.m, x.size):
            raise DataError("values shape must be (m_t, m_x)")
        object.__setattr__(self, "values", v)
        if not 0.0 <= self.beta < 0.5:
            raise DataError("beta must be in [0, 1/2)")


def build_tail_field(paths, k, x_grid=None, n_x=64, beta=0.25, c=1.0) -> TailField:
    """Evaluate w_n on the full time grid and a geometric level grid.

    The default level grid is geometric from c to n/k with n_x points.
    """
    n = paths.n
    k = int(k)
    if x_grid is None:
        hi = n / k
        if not c < hi:
            raise DataError("need c < n/k for the default level grid")
        x_grid = np.exp(np.linspace(math.log(c), math.log(hi), int(n_x)))
    x_grid = np.asarray(x_grid, dtype=float)
    vals = np.empty((paths.m, x_grid.size))
    for j in range(paths.m):
        vals[j] = tail_empirical_process(paths, j, x_grid, k)
    return TailField(paths.grid, x_grid, vals, n, k, float(beta), float(c))


def weighted_sup_distance(field, limit_values) -> float:
    """sup over the grid of x**beta |w_n(t,x) - W(t,x)|.

    limit_values is a draw of the limit field on the same grids, as an
    array of matching shape.
    """
    w = np.asarray(limit_values, dtype=float)
    if w.shape != field.values.shape:
        raise DataError(
            f"limit draw shape {w.shape} does not match field {field.values.shape}"
        )
    weight = field.x_grid ** field.beta
    return float(np.max(weight[None, :] * np.abs(field.values - w)))


def tail_quantile_stat(paths, k, alpha):
    """sqrt(k)((zeta_{n-k,n}(t) k/n)**alpha - 1) for each grid point.

    alpha may be a scalar or a per-grid-point array.
    """
    n = paths.n
    k = int(k)
    if not 1 <= k < n:
        raise DataError(f"k must be in [1, n-1], got k={k}, n={n}")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (paths.m,))
    out = np.empty(paths.m)
    for j in range(paths.m):
        col = paths.values[:, j]
        v = np.partition(col, n - k - 1)[n - k - 1] * (k / n)
        out[j] = math.sqrt(k) * (v ** alpha[j] - 1.0)
    return out


@dataclass(frozen=True)
class OscillationConfig:
    """Window, threshold, and conditioning level for the oscillation check.

    The diagnostic estimates, over paths with sup_{[s, s+delta]} zeta >= v,
    how often the path leaves the small-oscillation set: increments from
    s exceeding K (log 1/delta)**-3, measured on the ratio scale
    |h(t) - h(s)|/h(s) or the log scale |log h(t) - log h(s)|.
    """

    s: float
    delta: float
    v: float
    K: float
    beta: float = 0.25
    variant: str = "log"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DataError("delta must be in (0, 1)")
        if not 0.0 <= self.s <= 1.0 - self.delta:
            raise DataError("need 0 <= s <= 1 - delta")
        if not self.v > 1.0:
            raise DataError("conditioning level v must be > 1")
        if not self.K > 0.0:
            raise DataError("K must be positive")
        if not 0.0 <= self.beta < 0.5:
            raise DataError("beta must be in [0, 1/2)")
        if self.variant not in ("ratio", "log"):
            raise DataError("variant must be 'ratio' or 'log'")

    @property
    def threshold(self) -> float:
        return self.K * math.log(1.0 / self.delta) ** -3

    @property
    def reference_bound(self) -> float:
        """(log 1/delta) ** -(2+2 beta)/(1-2 beta), the comparison rate."""
        expo = (2.0 + 2.0 * self.beta) / (1.0 - 2.0 * self.beta)
        return math.log(1.0 / self.delta) ** -expo


@dataclass(frozen=True)
class OscillationReport:
    config: OscillationConfig
    n_paths: int
    n_conditioning: int
    n_exceed: int
    estimate: float
    threshold: float
    reference_bound: float


def oscillation_diagnostic(paths, cfg) -> OscillationReport:
    """Empirical probability of leaving the small-oscillation set.

    Membership is checked on the grid restriction of [s, s + delta];
    at least two grid points must fall in the window, and s must be a
    grid point (the base of the increments).
    """
    pts = paths.grid.points
    base = paths.grid.index_of(cfg.s)
    in_window = np.flatnonzero(
        (pts >= cfg.s - 1e-12) & (pts <= cfg.s + cfg.delta + 1e-12)
    )
    if in_window.size < 2:
        raise DataError(
            f"only {in_window.size} grid points in [s, s+delta]; need >= 2"
        )
    window = paths.values[:, in_window]
    at_s = paths.values[:, base]
    cond = window.max(axis=1) >= cfg.v
    n_cond = int(np.count_nonzero(cond))
    if n_cond == 0:
        warnings.warn("no paths meet the conditioning level", RuntimeWarning)
        return OscillationReport(
            cfg, paths.n, 0, 0, math.nan, cfg.threshold, cfg.reference_bound
        )
    if cfg.variant == "ratio":
        dev = np.abs(window[cond] - at_s[cond, None]) / at_s[cond, None]
    else:
        dev = np.abs(np.log(window[cond]) - np.log(at_s[cond, None]))
    exceed = int(np.count_nonzero(dev.max(axis=1) > cfg.threshold))
    return OscillationReport(
        cfg,
        paths.n,
        n_cond,
        exceed,
        exceed / n_cond,
        cfg.threshold,
        cfg.reference_bound,
    )
