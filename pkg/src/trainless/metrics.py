"""Agreement between predicted and measured accuracies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateInput, EmptyInput, LengthMismatch


@dataclass(frozen=True)
class PairedSeries:
    predictions: np.ndarray
    truths: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.predictions, dtype=np.float64).reshape(-1)
        t = np.asarray(self.truths, dtype=np.float64).reshape(-1)
        if p.shape != t.shape:
            raise LengthMismatch(f"{p.size} predictions vs {t.size} truths")
        if p.size == 0:
            raise EmptyInput("empty series")
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "truths", t)


def _series(s, truths=None) -> PairedSeries:
    if truths is not None:
        return PairedSeries(s, truths)
    return s if isinstance(s, PairedSeries) else PairedSeries(*s)


def mse(s, truths=None) -> float:
    """Mean squared error; accepts a :class:`PairedSeries` or two sequences."""
    s = _series(s, truths)
    d = s.predictions - s.truths
    return float(np.mean(d * d))


def kendall_tau(s, truths=None) -> float:
    """Tie-corrected Kendall rank correlation (tau-b)."""
    s = _series(s, truths)
    if s.predictions.size < 2:
        raise EmptyInput("kendall tau needs at least two pairs")
    if np.all(s.predictions == s.predictions[0]) or np.all(s.truths == s.truths[0]):
        raise DegenerateInput("tau-b is undefined when a series is constant")
    tau = stats.kendalltau(s.predictions, s.truths, variant="b").statistic
    if not math.isfinite(tau):
        raise DegenerateInput("tau-b is undefined for this input")
    return float(tau)


def r_squared(s, truths=None) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    s = _series(s, truths)
    centered = s.truths - s.truths.mean()
    ss_tot = float(np.dot(centered, centered))
    if ss_tot == 0.0:
        raise DegenerateInput("R^2 is undefined when the truths have no variance")
    resid = s.truths - s.predictions
    return 1.0 - float(np.dot(resid, resid)) / ss_tot


def report(s, truths=None) -> dict[str, float]:
    s = _series(s, truths)
    return {"n": int(s.predictions.size), "mse": mse(s), "kendall_tau": kendall_tau(s), "r_squared": r_squared(s)}
