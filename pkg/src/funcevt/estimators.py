"""Pointwise extreme-value index, location, and scale estimators.

All estimators work on one time-grid column of a path sample and use
the top k + 1 order statistics xi_{n-k,n} <= ... <= xi_{n,n}.  The
building block is the r-th log-excess moment

    M_r = (1/k) sum_{i=0..k-1} (log xi_{n-i,n} - log xi_{n-k,n})**r.

From it:

    positive part      gamma_plus  = M_1                     (Hill)
    negative part      gamma_minus = 1 - (1 - M_1**2/M_2)**-1 / 2
    index              gamma       = gamma_plus + gamma_minus
    location           u_hat       = xi_{n-k,n}
    scale              a_hat       = u_hat * gamma_plus * (1 - gamma_minus)

estimate_curves evaluates all of them on every grid column and flags
degenerate columns instead of aborting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from funcevt.path_model import DataError, TimeGrid


class DegenerateTailError(ValueError):
    """Tail too flat for the moment ratio (M_2 = 0 or M_1**2 = M_2)."""


def _top_log_excesses(values, t_index, k):
    vals = values.values if hasattr(values, "values") else np.asarray(values, float)
    col = vals[:, int(t_index)]
    n = col.size
    k = int(k)
    if not 1 <= k <= n - 1:
        raise DataError(f"k must be in [1, n-1], got k={k}, n={n}")
    if np.any(col <= 0.0):
        raise DataError("column values must be positive")
    top = np.sort(np.partition(col, n - k - 1)[n - k - 1 :])
    # top[0] = xi_{n-k,n}, top[1:] the k largest
    return np.log(top[1:]) - np.log(top[0]), top[0]


def log_excess_moment(sample, t_index, k, r) -> float:
    """r-th moment of log-excesses over the (k+1)-th largest value."""
    excess, _ = _top_log_excesses(sample, t_index, k)
    return float(np.mean(excess ** r))


def hill_estimate(sample, t_index, k) -> float:
    """Hill estimator of the positive part of the index (= M_1)."""
    return log_excess_moment(sample, t_index, k, 1)


def _negative_part(m1, m2):
    if m2 <= 0.0:
        raise DegenerateTailError("second log-excess moment is zero")
    ratio = m1 * m1 / m2
    if ratio >= 1.0:
        raise DegenerateTailError(
            "log-excess moments are degenerate (M_1**2 >= M_2); "
            "k >= 2 distinct top values are required"
        )
    return 1.0 - 0.5 / (1.0 - ratio)


def negative_index_estimate(sample, t_index, k) -> float:
    """Moment-type estimator of the negative part of the index.

    Raises DegenerateTailError when the top of the column is constant
    (M_2 = 0) or k = 1 (the moment ratio is then always 1).
    """
    excess, _ = _top_log_excesses(sample, t_index, k)
    m1 = float(np.mean(excess))
    m2 = float(np.mean(excess ** 2))
    return _negative_part(m1, m2)


def moment_estimate(sample, t_index, k) -> float:
    """Moment estimator of the index, positive plus negative part."""
    excess, _ = _top_log_excesses(sample, t_index, k)
    m1 = float(np.mean(excess))
    m2 = float(np.mean(excess ** 2))
    return m1 + _negative_part(m1, m2)


def location_estimate(sample, t_index, k) -> float:
    """The (k+1)-th largest value, estimating the 1 - k/n quantile."""
    _, u = _top_log_excesses(sample, t_index, k)
    return float(u)


def scale_estimate(sample, t_index, k) -> float:
    """Scale estimator u_hat * gamma_plus * (1 - gamma_minus).

    Returns 0.0 when gamma_plus = 0 (callers should flag that case);
    propagates DegenerateTailError from the negative part.
    """
    excess, u = _top_log_excesses(sample, t_index, k)
    m1 = float(np.mean(excess))
    if m1 == 0.0:
        return 0.0
    m2 = float(np.mean(excess ** 2))
    return float(u) * m1 * (1.0 - _negative_part(m1, m2))


@dataclass(frozen=True)
class EstimatorCurves:
    """Estimates of all five quantities as curves over the time grid.

    flag is 1 where the column was degenerate (gamma_minus, gamma and
    a_hat are nan there, or a_hat = 0 with gamma_plus = 0).
    """

    grid: TimeGrid
    k: int
    n: int
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    gamma: np.ndarray
    u_hat: np.ndarray
    a_hat: np.ndarray
    flag: np.ndarray

    COLUMNS = ("t", "gamma_plus", "gamma_minus", "gamma", "u_hat", "a_hat", "flag")

    def to_csv(self, path):
        rows = np.column_stack(
            [
                self.grid.points,
                self.gamma_plus,
                self.gamma_minus,
                self.gamma,
                self.u_hat,
                self.a_hat,
                self.flag.astype(float),
            ]
        )
        np.savetxt(
            path,
            rows,
            delimiter=",",
            fmt="%.17g",
            header=",".join(self.COLUMNS),
            comments="",
        )

    @classmethod
    def from_csv(cls, path, k=0, n=0):
        try:
            raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot parse curves CSV {path!r}: {exc}") from exc
        if raw.shape[1] != 7:
            raise DataError("curves CSV needs 7 columns")
        return cls(
            TimeGrid(raw[:, 0]),
            int(k),
            int(n),
            raw[:, 1],
            raw[:, 2],
            raw[:, 3],
            raw[:, 4],
            raw[:, 5],
            raw[:, 6].astype(np.uint8),
        )


def estimate_curves(sample, k) -> EstimatorCurves:
    """Evaluate all estimators on every grid column of a sample."""
    m = sample.m
    gp = np.empty(m)
    gm = np.empty(m)
    g = np.empty(m)
    u = np.empty(m)
    a = np.empty(m)
    flag = np.zeros(m, dtype=np.uint8)
    for j in range(m):
        excess, u_j = _top_log_excesses(sample, j, k)
        m1 = float(np.mean(excess))
        m2 = float(np.mean(excess ** 2))
        gp[j] = m1
        u[j] = u_j
        try:
            gm[j] = _negative_part(m1, m2)
            g[j] = m1 + gm[j]
            a[j] = u_j * m1 * (1.0 - gm[j])
        except DegenerateTailError:
            gm[j] = np.nan
            g[j] = np.nan
            a[j] = np.nan
            flag[j] = 1
            continue
        if m1 == 0.0:
            a[j] = 0.0
            flag[j] = 1
    return EstimatorCurves(sample.grid, int(k), sample.n, gp, gm, g, u, a, flag)
