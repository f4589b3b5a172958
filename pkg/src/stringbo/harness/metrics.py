"""Predictive and optimization metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

MACE_LEVELS = np.arange(1, 20) / 20.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_nll(mu, sigma, y) -> np.ndarray:
    mu, sigma, y = (np.asarray(a, dtype=float) for a in (mu, sigma, y))
    return np.log(sigma) + HALF_LOG_2PI + (y - mu) ** 2 / (2.0 * sigma**2)


def mace(mu, sigma, y, levels=MACE_LEVELS) -> float:
    """Mean |coverage(q) - q| where coverage(q) is the share of PIT values <= q."""
    pit = ndtr((np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)) / np.asarray(sigma, dtype=float))
    coverage = np.mean(pit[None, :] <= np.asarray(levels)[:, None], axis=1)
    return float(np.mean(np.abs(coverage - levels)))


def predictive_metrics(mu, sigma, y) -> dict:
    """NLL, MAE, R-squared and MACE of Gaussian predictions.

    R-squared is ``None`` (with ``r2_defined`` false) when every ``y`` is equal.
    """
    mu, sigma, y = (np.asarray(a, dtype=float).ravel() for a in (mu, sigma, y))
    if not (mu.size == sigma.size == y.size) or y.size == 0:
        raise ValueError("predictive_metrics needs equal, non-empty inputs")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    resid = y - mu
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = None if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return {
        "nll": float(np.mean(gaussian_nll(mu, sigma, y))),
        "mae": float(np.mean(np.abs(resid))),
        "r2": r2,
        "r2_defined": r2 is not None,
        "mace": mace(mu, sigma, y),
    }


def best_so_far(ys) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ValueError("best_so_far needs at least one value")
    return np.maximum.accumulate(ys)


@dataclass(frozen=True)
class LogEfficiency:
    value: float | None
    used: int
    excluded: int

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self):
        return {"value": self.value, "used": self.used, "excluded": self.excluded}


def required_budget(curve: np.ndarray, y: float) -> int | None:
    """1-based index of the first entry reaching ``y``, or None."""
    hits = np.flatnonzero(curve >= y)
    return int(hits[0]) + 1 if hits.size else None


def log_efficiency(curve_a, curve_ref) -> LogEfficiency:
    """Median over the reference curve's values of ``log(budget_A / budget_ref)``.

    Positive means ``A`` needs more trials than the reference.  Values that
    ``A`` never reaches are excluded and counted.
    """
    a = np.asarray(curve_a, dtype=float)
    ref = np.asarray(curve_ref, dtype=float)
    if a.size == 0 or ref.size == 0:
        raise ValueError("curves must be non-empty")
    if np.any(np.diff(a) < 0) or np.any(np.diff(ref) < 0):
        raise ValueError("curves must be non-decreasing")
    ratios = []
    excluded = 0
    for y in np.unique(ref):
        need_a = required_budget(a, y)
        if need_a is None:
            excluded += 1
            continue
        ratios.append(math.log(need_a / required_budget(ref, y)))
    if not ratios:
        return LogEfficiency(None, 0, excluded)
    return LogEfficiency(float(np.median(ratios)), len(ratios), excluded)
