"""Estimator plumbing: moment accumulators and log-log rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArityError, DomainError


class Moments(NamedTuple):
    n: int
    mean: float
    variance: float      # unbiased sample variance
    stderr: float


def two_pass_moments(values: Sequence[float]) -> Moments:
    """Reference two-pass mean/variance (numpy sums are pairwise, so the
    result does not depend on chunking or worker count once the values are
    ordered by trajectory index)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        raise ArityError("no samples")
    mean = float(np.mean(v))
    if n == 1:
        return Moments(1, mean, 0.0, 0.0)
    var = float(np.sum((v - mean) ** 2) / (n - 1))
    return Moments(n, mean, var, float(np.sqrt(var / n)))


class RunningMoments:
    """Welford single-pass accumulator (streaming consumers); agrees with
    the two-pass reference to ~1e-12 relative."""

    def __init__(self):
        self.n = 0
        self._mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self._mean
        self._mean += d / self.n
        self._m2 += d * (x - self._mean)

    def result(self) -> Moments:
        if self.n == 0:
            raise ArityError("no samples")
        var = self._m2 / (self.n - 1) if self.n > 1 else 0.0
        return Moments(self.n, self._mean, var, float(np.sqrt(var / max(self.n, 1))))


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float


def fit_loglog(x: Sequence[float], y: Sequence[float],
               y_stderr: Sequence[float] | None = None) -> LogLogFit:
    """Weighted least squares of log y against log x.

    Weights come from the relative standard errors (delta method:
    se(log y) = se(y)/y); with no errors supplied, or any vanishing error,
    the fit is unweighted.  Requires at least 3 strictly positive points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ArityError(f"x and y sizes differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise ArityError(f"need at least 3 points for a rate fit, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs strictly positive x and y")

    lx, ly = np.log(x), np.log(y)
    if y_stderr is not None:
        se = np.asarray(y_stderr, dtype=float)
        if np.any(se < 0):
            raise DomainError("standard errors must be nonnegative")
        rel = np.where(y > 0, se / y, 0.0)
        use_weights = np.all(rel > 0)
    else:
        use_weights = False
    w = 1.0 / rel ** 2 if use_weights else np.ones_like(lx)

    X = np.column_stack([np.ones_like(lx), lx])
    WX = X * w[:, None]
    G = X.T @ WX
    beta = np.linalg.solve(G, WX.T @ ly)
    resid = ly - X @ beta
    dof = max(x.size - 2, 1)
    # scale the covariance by the weighted residual variance
    s2 = float(resid @ (w * resid)) / dof
    cov = np.linalg.inv(G) * s2
    ybar = float(np.sum(w * ly) / np.sum(w))
    ss_tot = float(np.sum(w * (ly - ybar) ** 2))
    ss_res = float(np.sum(w * resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(slope=float(beta[1]), intercept=float(beta[0]),
                     r_squared=r2, slope_stderr=float(np.sqrt(max(cov[1, 1], 0.0))))
