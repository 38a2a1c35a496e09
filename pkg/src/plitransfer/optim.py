"""Weight initializers and first-order optimizers.

Optimizers update parameter matrices in place through the kernel backend.
State is kept per named parameter so that one :class:`OptimizerState` can
drive a whole network; frozen parameters are skipped and their slots are never
created or touched.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, ShapeError

OPTIMIZER_KINDS = ("sgd", "momentum_sgd", "adam", "adadelta", "rmsprop")
INIT_KINDS = ("xavier", "he", "random")


@dataclass(frozen=True)
class InitMethod:
    kind: str = "xavier"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigError(f"unknown init method {self.kind!r}; expected one of {INIT_KINDS}")
        if self.seed < 0:
            raise ConfigError("init seed must be non-negative")


def xavier_bound(rows: int, cols: int) -> float:
    return math.sqrt(6.0 / (rows + cols))


def init_weights(rows: int, cols: int, method: InitMethod) -> np.ndarray:
    """Draw a ``rows x cols`` weight matrix (``rows`` is fan-in).

    xavier: U(-a, a), a = sqrt(6 / (rows + cols))
    he:     N(0, 2 / rows)
    random: U(-0.5, 0.5)
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"weight shape must be positive, got ({rows}, {cols})")
    rng = np.random.default_rng(method.seed)
    if method.kind == "xavier":
        a = xavier_bound(rows, cols)
        w = rng.uniform(-a, a, size=(rows, cols))
    elif method.kind == "he":
        w = rng.normal(0.0, math.sqrt(2.0 / rows), size=(rows, cols))
    else:
        w = rng.uniform(-0.5, 0.5, size=(rows, cols))
    return np.ascontiguousarray(w, dtype=np.float64)


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "momentum_sgd"
    learning_rate: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    rho: float = 0.95
    eps_adadelta: float = 1e-6
    decay: float = 0.9
    eps_rms: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZER_KINDS}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        for name in ("momentum", "beta1", "beta2", "rho", "decay"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {v}")
        for name in ("eps_adam", "eps_adadelta", "eps_rms"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown optimizer fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class OptimizerState:
    """Per-parameter slots, keyed by parameter name.

    Slot names: ``velocity`` (momentum_sgd); ``m``, ``v`` (adam);
    ``eg2``, ``edx2`` (adadelta); ``eg2`` (rmsprop). ``steps`` counts updates
    per parameter and drives Adam's bias correction.
    """

    slots: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    def slot(self, name: str, slot: str, shape) -> np.ndarray:
        per = self.slots.setdefault(name, {})
        arr = per.get(slot)
        if arr is None:
            arr = per[slot] = np.zeros(shape, dtype=np.float64)
        elif arr.shape != shape:
            raise ShapeError(f"optimizer slot {name}.{slot} has shape {arr.shape}, parameter has {shape}")
        return arr


def optimizer_step(
    cfg: OptimizerConfig,
    state: OptimizerState,
    params: np.ndarray,
    grads: np.ndarray,
    name: str = "param",
    frozen: bool = False,
) -> np.ndarray:
    """Apply one update of ``cfg.kind`` to ``params`` in place and return it."""
    if frozen:
        return params
    if params.shape != grads.shape:
        raise ShapeError(f"{name}: parameter shape {params.shape} != gradient shape {grads.shape}")
    if not (params.flags.c_contiguous and params.dtype == np.float64):
        raise ShapeError(f"{name}: parameters must be C-contiguous float64")
    g = np.ascontiguousarray(grads, dtype=np.float64)
    t = state.steps.get(name, 0) + 1
    lr = cfg.learning_rate
    kind = cfg.kind
    if kind == "sgd":
        ok = kernels.sgd_update(params, g, lr)
    elif kind == "momentum_sgd":
        ok = kernels.momentum_update(params, g, state.slot(name, "velocity", params.shape), lr, cfg.momentum)
    elif kind == "adam":
        ok = kernels.adam_update(
            params,
            g,
            state.slot(name, "m", params.shape),
            state.slot(name, "v", params.shape),
            lr,
            cfg.beta1,
            cfg.beta2,
            cfg.eps_adam,
            t,
        )
    elif kind == "adadelta":
        ok = kernels.adadelta_update(
            params,
            g,
            state.slot(name, "eg2", params.shape),
            state.slot(name, "edx2", params.shape),
            cfg.rho,
            cfg.eps_adadelta,
        )
    else:
        ok = kernels.rmsprop_update(params, g, state.slot(name, "eg2", params.shape), lr, cfg.decay, cfg.eps_rms)
    if not ok:
        raise NumericError(f"non-finite gradient for {name}")
    state.steps[name] = t
    return params
