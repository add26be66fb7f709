"""Weighted isotonic regression and the monotone baseline solver.

The baseline cumulative mean profile problem — maximize, over monotone
non-decreasing values at the distinct observation times,

    sum_q  n_obs_q * (mean_count_q * log v_q - exposure_q * v_q)

— reduces to a weighted least-squares isotonic regression of
mean_count/exposure with weights n_obs*exposure.  Pooled block means
solve both problems, so a single pool-adjacent-violators pass gives the
exact maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroupedStats
from .errors import NumericError


@dataclass
class StepFunction:
    """Right-continuous non-decreasing step function, 0 before the first knot.

    Evaluation: value of the largest knot <= t; 0 for t < knots[0]; the
    last value for t >= knots[-1].
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.knots.ndim != 1 or self.knots.size == 0:
            raise ValueError("need at least one knot")
        if self.knots.shape != self.values.shape:
            raise ValueError("knots and values must have the same length")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.values[0] < 0:
            raise ValueError("values must be non-negative")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("values must be non-decreasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return float(out) if out.ndim == 0 else out


def weighted_isotonic(y, w) -> np.ndarray:
    """Weighted least-squares projection onto non-decreasing sequences.

    Returns the unique minimizer of sum_q w_q (y_q - x_q)^2 subject to
    x_1 <= ... <= x_r, via a single O(r) pool-adjacent-violators pass.
    Weights must be strictly positive.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a non-empty 1-d vector")
    if y.shape != w.shape:
        raise ValueError(f"length mismatch: y has {y.size}, w has {w.size}")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")

    r = y.size
    # block stack: weighted sum, total weight, length, current mean
    bsum = np.empty(r)
    bw = np.empty(r)
    blen = np.empty(r, dtype=np.int64)
    bmean = np.empty(r)
    nb = 0
    for i in range(r):
        cs = w[i] * y[i]
        cw = w[i]
        cl = 1
        cm = y[i]
        while nb > 0 and bmean[nb - 1] > cm:
            nb -= 1
            cs += bsum[nb]
            cw += bw[nb]
            cl += blen[nb]
            cm = cs / cw
        bsum[nb] = cs
        bw[nb] = cw
        blen[nb] = cl
        bmean[nb] = cm
        nb += 1

    x = np.repeat(bmean[:nb], blen[:nb])
    assert np.all(np.diff(x) >= 0), "isotonic output must be non-decreasing"
    return x


def solve_baseline(stats: GroupedStats, exposure) -> StepFunction:
    """Monotone baseline values maximizing the grouped profile objective.

    exposure holds the per-time mean multiplicative factor (mean of
    exp(beta'z) over the observations at each distinct time); it must be
    strictly positive and of length stats.r.
    """
    exposure = np.asarray(exposure, dtype=float)
    if exposure.shape != stats.times.shape:
        raise ValueError(
            f"exposure length {exposure.size} does not match {stats.r} distinct times"
        )
    if np.any(exposure <= 0) or not np.all(np.isfinite(exposure)):
        raise NumericError("exposure must be finite and strictly positive")

    y = stats.mean_count / exposure
    w = stats.n_obs * exposure
    values = np.maximum(weighted_isotonic(y, w), 0.0)
    return StepFunction(stats.times.copy(), values)
