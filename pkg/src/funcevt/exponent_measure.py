"""Exponent-measure oracles for the two process families.

The exponent measure nu of a standardised max-domain process assigns to
the exceedance set C_{t,x} = {h : h(t) >= x} the mass nu(C_{t,x}) = 1/x,
and the covariance of the limiting Gaussian field is
E W(C_{t,x}) W(C_{s,y}) = nu(C_{t,x} n C_{s,y}).  The oracles here
evaluate those intersection masses:

* moving-max family: nu(C_{t,x} n C_{s,y}) = 1/x + 1/y - integral of
  max(f(t+u)/x, f(s+u)/y) du, by segmented adaptive quadrature.
* pareto-gbm family: nu(C_{t,x} n C_{s,y}) = E[min(B(t)/x, B(s)/y)].
  Writing B(t) = B(s) R with R = exp(W(t)-W(s) - (t-s)/2) independent
  of B(s), the factor B(s) slips out of the min with unit expectation,
  leaving a single lognormal expectation with an explicit kink, so the
  default evaluation is exact in terms of the normal CDF.  A seeded
  Monte Carlo fallback is kept as an independent route.

Every oracle is homogeneous, nu(r A) = nu(A)/r, and drives both the
canonical metric of the limit field and its covariance matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import ndtr

from funcevt.path_model import MOVING_MAX, PARETO_GBM, DataError


class InconsistentMeasureError(RuntimeError):
    """Oracle returned masses violating a measure inequality."""


def _tail_radius(kernel, mass):
    """Radius R with kernel tail mass beyond R at most `mass`."""
    if mass >= 0.5:
        return 0.0
    if kernel.shape == "double-exp":
        return math.log(0.5 / mass) / kernel.rate
    from scipy.stats import t as student

    return float(student.isf(mass, kernel.df)) / kernel.rate


def sup_integral(kernel, times, levels, tol=1e-10):
    """integral over u of max_j f(t_j + u) / x_j du.

    Splits the line at kernel peaks and at crossing points of the
    competing curves (located by a dense scan plus root refinement),
    then applies adaptive quadrature per smooth segment.  The discarded
    tails beyond the scan radius carry less than tol/10 mass.
    """
    times = np.asarray(times, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if times.shape != levels.shape or times.ndim != 1:
        raise DataError("times and levels must be matching 1-d arrays")
    if np.any(levels <= 0.0):
        raise DataError("levels must be positive")

    inv = 1.0 / levels

    def envelope(u):
        u = np.asarray(u, dtype=float)
        vals = kernel.density(times[:, None] + np.atleast_1d(u)[None, :])
        return np.max(inv[:, None] * vals, axis=0).reshape(np.shape(u))

    def winner(u):
        vals = kernel.density(times[:, None] + np.atleast_1d(u)[None, :])
        return np.argmax(inv[:, None] * vals, axis=0)

    radius = _tail_radius(kernel, tol * float(levels.min()) / 20.0)
    lo = -radius - float(times.max())
    hi = radius - float(times.min())
    scan = np.linspace(lo, hi, 16385)
    owner = winner(scan)
    switches = np.flatnonzero(owner[1:] != owner[:-1])

    breaks = set(float(-t) for t in times)
    for i in switches:
        a_idx, b_idx = owner[i], owner[i + 1]

        def diff(u, a=a_idx, b=b_idx):
            return inv[a] * float(kernel.density(times[a] + u)) - inv[b] * float(
                kernel.density(times[b] + u)
            )

        ua, ub = scan[i], scan[i + 1]
        if diff(ua) * diff(ub) < 0.0:
            breaks.add(float(brentq(diff, ua, ub, xtol=1e-14)))
        else:
            breaks.add(0.5 * (ua + ub))

    edges = sorted(b for b in breaks if lo < b < hi)
    cuts = [lo] + edges + [hi]
    total = 0.0
    eps = tol / (4.0 * max(len(cuts) - 1, 1))
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(
            lambda u: float(envelope(u)), a, b, epsabs=eps, epsrel=1e-12, limit=200
        )
        total += val
    return total


@dataclass(frozen=True)
class MeasureOracle:
    """Evaluates exceedance-set masses of the exponent measure.

    Build with `MeasureOracle.moving_max(kernel)` or
    `MeasureOracle.pareto_gbm(method=...)`.
    """

    family: str
    kernel: object = None
    quad_tol: float = 1e-11
    method: str = "analytic"
    mc_draws: int = 200_000
    mc_seed: int = 0

    @classmethod
    def moving_max(cls, kernel=None, quad_tol=1e-11):
        if kernel is None:
            from funcevt.process_sim import KernelSpec

            kernel = KernelSpec()
        return cls(MOVING_MAX, kernel=kernel, quad_tol=quad_tol)

    @classmethod
    def pareto_gbm(cls, method="analytic", mc_draws=200_000, mc_seed=0):
        if method not in ("analytic", "mc"):
            raise DataError("pareto-gbm oracle method must be 'analytic' or 'mc'")
        return cls(PARETO_GBM, method=method, mc_draws=int(mc_draws), mc_seed=int(mc_seed))

    def _check_point(self, t, x):
        if not 0.0 <= t <= 1.0:
            raise DataError("time must be in [0, 1]")
        if not x > 0.0:
            raise DataError("level must be positive")

    def rect_mass(self, t, x) -> float:
        """nu(C_{t,x}) = 1/x."""
        self._check_point(t, x)
        return 1.0 / x

    def intersection_mass(self, t, x, s, y) -> float:
        """nu(C_{t,x} n C_{s,y})."""
        self._check_point(t, x)
        self._check_point(s, y)
        if t == s:
            return min(1.0 / x, 1.0 / y)
        if self.family == MOVING_MAX:
            union = sup_integral(
                self.kernel, np.array([t, s]), np.array([x, y]), tol=self.quad_tol
            )
            return 1.0 / x + 1.0 / y - union
        if self.method == "analytic":
            h = abs(t - s)
            r = math.sqrt(h)
            zstar = (math.log(x / y) + 0.5 * h) / r
            return float(ndtr(zstar - r)) / x + float(ndtr(-zstar)) / y
        # seeded Monte Carlo fallback
        lo_t, hi_t = (t, s) if t < s else (s, t)
        lo_x, hi_x = (x, y) if t < s else (y, x)
        rng = np.random.default_rng(self.mc_seed)
        z1 = rng.standard_normal(self.mc_draws)
        z2 = rng.standard_normal(self.mc_draws)
        b_lo = np.exp(math.sqrt(lo_t) * z1 - 0.5 * lo_t)
        b_hi = b_lo * np.exp(math.sqrt(hi_t - lo_t) * z2 - 0.5 * (hi_t - lo_t))
        return float(np.mean(np.minimum(b_hi / hi_x, b_lo / lo_x)))


def canonical_metric(oracle, beta, p, q) -> float:
    """L2 metric of the weighted limit field between cells p = (t, x), q = (s, y):

    d**2 = (x**b - y**b)**2 nu(n) + x**2b (1/x - nu(n)) + y**2b (1/y - nu(n)).

    Raises InconsistentMeasureError if the oracle's intersection mass
    exceeds a marginal mass, or if the radicand is below -1e-12.
    """
    if not 0.0 <= beta < 0.5:
        raise DataError("beta must be in [0, 1/2)")
    (t, x), (s, y) = p, q
    common = oracle.intersection_mass(t, x, s, y)
    mx, my = 1.0 / x, 1.0 / y
    slack = 1e-9 * max(1.0, mx, my)
    if common > min(mx, my) + slack or common < -slack:
        raise InconsistentMeasureError(
            f"nu(intersection) = {common} outside [0, min(1/x, 1/y) = {min(mx, my)}]"
        )
    d2 = (
        (x ** beta - y ** beta) ** 2 * common
        + x ** (2 * beta) * (mx - common)
        + y ** (2 * beta) * (my - common)
    )
    if d2 < -1e-12:
        raise InconsistentMeasureError(f"negative squared distance {d2}")
    return math.sqrt(max(d2, 0.0))


def homogeneity_check(oracle, r, pairs) -> float:
    """Max relative deviation of nu(r A) from nu(A)/r over cell pairs.

    pairs is an iterable of ((t, x), (s, y)).
    """
    if not r > 0.0:
        raise DataError("scale r must be positive")
    worst = 0.0
    for (t, x), (s, y) in pairs:
        base = oracle.intersection_mass(t, x, s, y)
        scaled = oracle.intersection_mass(t, r * x, s, r * y)
        worst = max(worst, abs(scaled - base / r) * r / base)
    return worst


def covariance_matrix(oracle, t_grid, x_grid) -> np.ndarray:
    """Covariance of the limit field over cells (t_i, x_j), row-major in (i, j).

    Exploits homogeneity: for a fixed time pair, nu depends on levels
    only through their ratio, so evaluations are cached per ratio.
    """
    ts = np.asarray(t_grid.points if hasattr(t_grid, "points") else t_grid, float)
    xs = np.asarray(x_grid, dtype=float)
    if np.any(xs <= 0.0):
        raise DataError("levels must be positive")
    mt, mx = ts.size, xs.size
    n = mt * mx
    cov = np.empty((n, n))
    cache = {}
    for a in range(n):
        ia, ja = divmod(a, mx)
        for b in range(a, n):
            ib, jb = divmod(b, mx)
            if ia == ib:
                val = min(1.0 / xs[ja], 1.0 / xs[jb])
            else:
                key = (ia, ib, round(math.log(xs[jb] / xs[ja]), 12))
                if key not in cache:
                    # nu(t, x, s, y) = (1/x) nu(t, 1, s, y/x) by homogeneity
                    cache[key] = oracle.intersection_mass(
                        ts[ia], 1.0, ts[ib], xs[jb] / xs[ja]
                    )
                val = cache[key] / xs[ja]
            cov[a, b] = cov[b, a] = val
    return cov
