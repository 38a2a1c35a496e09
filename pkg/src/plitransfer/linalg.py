"""Dense matrix helpers.

A matrix here is a C-contiguous 2-D ``numpy.ndarray`` of float64. No implicit
broadcasting: binary operations require identical shapes and raise
:class:`ShapeError` otherwise. ``matmul`` goes through the selected kernel
backend, so it runs in a fixed loop order when the compiled core is present.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def as_matrix(data, *, name: str = "matrix") -> np.ndarray:
    """Copy ``data`` into an owned float64 matrix, promoting 1-D input to a row."""
    m = np.array(data, dtype=np.float64, order="C", copy=True)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {m.ndim}-D")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be at least 1x1, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite values")
    return m


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)


def ones(rows: int, cols: int) -> np.ndarray:
    return np.ones((rows, cols), dtype=np.float64)


def _contig(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return kernels.matmul(_contig(a), _contig(b))


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_OPS)}") from None
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shapes {a.shape} and {b.shape} differ")
    return fn(a, b)


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return a * float(c)
