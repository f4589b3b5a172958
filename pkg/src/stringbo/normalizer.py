"""Three-step objective normalisation fitted on a history.

1. z-score with the history mean and standard deviation;
2. values at or below the median are replaced by Gaussian quantiles of their
   full-sample rank, scaled by the spread of the good half, which keeps bad
   outliers from dominating the scale;
3. min-max scaling to ``[0, 1]`` over the history, with damping for targets
   that land outside that range.

Every step is rank- or z-score based, so the result is invariant to
positive-affine transforms of the raw values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


class Damping(str, enum.Enum):
    LOG = "LOG"
    SIGMOID = "SIGMOID"


@dataclass(frozen=True)
class NormalizerState:
    mean: float
    std: float
    median: float
    good_scale: float
    sorted_z: np.ndarray
    lo: float
    hi: float
    damping: Damping = Damping.LOG
    degenerate: bool = False

    @property
    def count(self) -> int:
        return int(self.sorted_z.size)


def _warp(state: NormalizerState, z: np.ndarray) -> np.ndarray:
    """Step 2 applied to z-scores using the frozen history ranks."""
    less = np.searchsorted(state.sorted_z, z, side="left")
    less_equal = np.searchsorted(state.sorted_z, z, side="right")
    ties = less_equal - less
    # average 1-based rank for history values; new values sit half a rank above `less`
    rank = less + (ties + 1) / 2.0
    p = rank / (state.count + 1)
    quantile = state.median + state.good_scale * ndtri(p)
    return np.where(z <= state.median, np.minimum(quantile, state.median), z)


def fit(ys, damping: Damping | str = Damping.LOG) -> NormalizerState:
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if ys.size < 2:
        raise ValueError(f"normaliser needs at least 2 values, got {ys.size}")
    if not np.all(np.isfinite(ys)):
        raise ValueError("normaliser values must be finite")
    damping = Damping(damping)
    mean = float(np.mean(ys))
    std = float(np.std(ys))
    if std == 0.0 or np.all(ys == ys[0]):
        return NormalizerState(mean, 1.0, 0.0, 1.0, np.zeros(ys.size), 0.0, 1.0, damping, degenerate=True)
    z = (ys - mean) / std
    sorted_z = np.sort(z)
    median = float(np.median(z))
    good = z[z >= median] - median
    good_scale = float(np.sqrt(np.mean(good * good)))
    if good_scale == 0.0:
        good_scale = 1.0
    partial = NormalizerState(mean, std, median, good_scale, sorted_z, 0.0, 1.0, damping)
    warped = _warp(partial, z)
    lo, hi = float(np.min(warped)), float(np.max(warped))
    return NormalizerState(mean, std, median, good_scale, sorted_z, lo, hi, damping)


def _damp(v: np.ndarray, damping: Damping) -> np.ndarray:
    if damping is Damping.LOG:
        above = 1.0 + np.log(np.maximum(v, 1.0))
        below = -np.log(1.0 - np.minimum(v, 0.0))
    else:
        # slope-1, continuous squashing; bounded in (-1, 2)
        above = 1.0 + 2.0 * (1.0 / (1.0 + np.exp(-2.0 * (np.maximum(v, 1.0) - 1.0))) - 0.5)
        below = 2.0 * (1.0 / (1.0 + np.exp(-2.0 * np.minimum(v, 0.0))) - 0.5)
    return np.where(v > 1.0, above, np.where(v < 0.0, below, v))


def apply(state: NormalizerState, y):
    """Normalise raw value(s) ``y`` with a fitted state."""
    scalar = np.ndim(y) == 0
    y = np.asarray(y, dtype=np.float64)
    if state.degenerate:
        out = np.full(y.shape, 0.5)
    else:
        z = (y - state.mean) / state.std
        v = (_warp(state, z) - state.lo) / (state.hi - state.lo)
        out = _damp(v, state.damping)
    return float(out) if scalar else out


def fit_apply(ys, damping: Damping | str = Damping.LOG):
    state = fit(ys, damping)
    return state, apply(state, np.asarray(ys, dtype=np.float64))
