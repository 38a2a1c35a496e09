"""Backend selection for the numeric kernels.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
module ``_fallback`` is. Set ``PLITRANSFER_PURE_PYTHON=1`` to force the
fallback. Both expose the same functions; see ``KERNEL_NAMES``.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

KERNEL_NAMES = (
    "matmul",
    "dense_forward",
    "dense_backward",
    "sigmoid_forward",
    "sigmoid_backward",
    "batchnorm_forward_train",
    "batchnorm_forward_eval",
    "batchnorm_backward",
    "sgd_update",
    "momentum_update",
    "adam_update",
    "adadelta_update",
    "rmsprop_update",
    "mae_and_grad",
)


def available_backends() -> list[str]:
    names = []
    try:
        importlib.import_module("plitransfer._core")
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def load_backend(name: str) -> ModuleType:
    if name == "compiled":
        return importlib.import_module("plitransfer._core")
    if name == "python":
        return importlib.import_module("plitransfer._fallback")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    if os.environ.get("PLITRANSFER_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "compiled", load_backend("compiled")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

matmul = _impl.matmul
dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
sigmoid_forward = _impl.sigmoid_forward
sigmoid_backward = _impl.sigmoid_backward
batchnorm_forward_train = _impl.batchnorm_forward_train
batchnorm_forward_eval = _impl.batchnorm_forward_eval
batchnorm_backward = _impl.batchnorm_backward
sgd_update = _impl.sgd_update
momentum_update = _impl.momentum_update
adam_update = _impl.adam_update
adadelta_update = _impl.adadelta_update
rmsprop_update = _impl.rmsprop_update
mae_and_grad = _impl.mae_and_grad
