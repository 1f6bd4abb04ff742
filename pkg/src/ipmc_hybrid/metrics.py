"""NMSE and Fitting scores between a measured and a predicted series.

Both series are divided by the largest absolute value of the *measured*
series before comparison, so an amplitude error in the prediction is not
normalised away.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, DegenerateTargetError
from .signals import Signal


@dataclass(frozen=True)
class EvalReport:
    nmse: float
    fitting_percent: float
    n_samples: int
    normalizer: float

    def to_dict(self) -> dict:
        return asdict(self)


def _values(x) -> np.ndarray:
    if isinstance(x, Signal):
        return x.samples
    return np.asarray(x, dtype=float).reshape(-1)


def _normalized(w, w_hat):
    w = _values(w)
    w_hat = _values(w_hat)
    if w.shape != w_hat.shape:
        raise DataError(f"length mismatch: {w.shape[0]} vs {w_hat.shape[0]}")
    if w.size == 0:
        raise DataError("cannot score empty series")
    scale = np.max(np.abs(w))
    if scale == 0:
        raise DegenerateTargetError("target is identically zero")
    return w / scale, w_hat / scale, scale


def nmse(w, w_hat) -> float:
    wn, wh, _ = _normalized(w, w_hat)
    return float(np.mean((wn - wh) ** 2))


def fitting(w, w_hat) -> float:
    """Percent fit; 100 is perfect, 0 matches the mean predictor, may be negative."""
    wn, wh, _ = _normalized(w, w_hat)
    spread = np.linalg.norm(wn - wn.mean())
    if spread == 0:
        raise DegenerateTargetError("target is constant")
    return float(100.0 * (1.0 - np.linalg.norm(wn - wh) / spread))


def evaluate(w, w_hat) -> EvalReport:
    wn, wh, scale = _normalized(w, w_hat)
    return EvalReport(
        nmse=nmse(w, w_hat),
        fitting_percent=fitting(w, w_hat),
        n_samples=int(wn.size),
        normalizer=float(scale),
    )
