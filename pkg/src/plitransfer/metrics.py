"""MAE / MAPE and the MAE training-loss gradient.

Both metrics are the usual mean-based definitions. MAPE is a fraction
(0.18, not 18%); :func:`format_mape_percent` is for display only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

INFERIOR_MAPE = 1.0


@dataclass(frozen=True)
class MetricPair:
    mae: float
    mape: float

    @property
    def inferior(self) -> bool:
        """A model whose MAPE exceeds 100% is classed as inferior."""
        return self.mape > INFERIOR_MAPE

    def to_dict(self):
        return {"mae": self.mae, "mape": self.mape}


def _pair(pred, actual):
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise DataError(f"length mismatch: {p.size} predictions vs {a.size} targets")
    if p.size == 0:
        raise DataError("metrics need at least one value")
    return p, a


def mae(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.abs(p - a).sum() / p.size)


def mape(pred, actual) -> float:
    p, a = _pair(pred, actual)
    if np.any(a == 0):
        raise DataError("MAPE is undefined when a target is zero")
    return float((np.abs(p - a) / np.abs(a)).sum() / p.size)


def mae_loss_grad(pred, actual) -> np.ndarray:
    """Subgradient of MAE w.r.t. the predictions; zero where pred == actual."""
    p, a = _pair(pred, actual)
    return np.sign(p - a) / p.size


def mse(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(((p - a) ** 2).sum() / p.size)


def mse_loss_grad(pred, actual) -> np.ndarray:
    p, a = _pair(pred, actual)
    return 2.0 * (p - a) / p.size


def evaluate(pred, actual) -> MetricPair:
    return MetricPair(mae(pred, actual), mape(pred, actual))


def format_mape_percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"
