"""Layers and networks with hand-written forward/backward passes.

A hidden block is ``BatchNorm -> Dense -> Sigmoid``; the source network stacks
one block per hidden width and ends in a plain ``Dense(h_last -> 1)``.

Modes: ``"train"`` uses batch statistics in batch-norm and caches what the
backward pass needs; ``"eval"`` reads only running statistics and mutates
nothing. A frozen batch-norm layer always normalizes with its running
statistics, even during training, so its state stays fixed.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateBatchError, ShapeError, StateError
from .optim import InitMethod, init_weights

MODES = ("train", "eval")


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed for ``seed`` at position ``path``."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, dtype=np.uint32)[0])


class Dense:
    kind = "dense"

    def __init__(self, in_dim, out_dim, weights=None, bias=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = _c(weights) if weights is not None else np.zeros((in_dim, out_dim))
        self.bias = _c(bias) if bias is not None else np.zeros((1, out_dim))
        if self.weights.shape != (in_dim, out_dim) or self.bias.shape != (1, out_dim):
            raise ShapeError(
                f"dense({in_dim}->{out_dim}): got weights {self.weights.shape}, bias {self.bias.shape}"
            )
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self.frozen = False
        self._x = None

    def forward(self, x, mode="train"):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"dense expects (batch, {self.in_dim}) input, got {x.shape}")
        x = _c(x)
        if mode == "train":
            self._x = x
        return kernels.dense_forward(x, self.weights, self.bias)

    def backward(self, grad_out):
        if self._x is None:
            raise StateError("dense backward called without a cached train-mode forward")
        if grad_out.shape != (self._x.shape[0], self.out_dim):
            raise ShapeError(f"dense backward expects grad of shape {(self._x.shape[0], self.out_dim)}, got {grad_out.shape}")
        gw, gb, gin = kernels.dense_backward(self._x, self.weights, _c(grad_out))
        if not self.frozen:
            self.grad_weights = gw
            self.grad_bias = gb
        return gin

    def parameters(self):
        return [("weights", self.weights, self.grad_weights), ("bias", self.bias, self.grad_bias)]

    def to_dict(self):
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "frozen": self.frozen,
            "weights": self.weights.ravel().tolist(),
            "bias": self.bias.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        layer = cls(
            d["in_dim"],
            d["out_dim"],
            np.array(d["weights"], dtype=np.float64).reshape(d["in_dim"], d["out_dim"]),
            np.array(d["bias"], dtype=np.float64).reshape(1, d["out_dim"]),
        )
        layer.frozen = bool(d.get("frozen", False))
        return layer


class BatchNorm:
    kind = "batchnorm"

    def __init__(self, dim, epsilon=1e-5, momentum=0.1):
        if not 0.0 < momentum < 1.0:
            raise ConfigError(f"batch-norm momentum must lie in (0, 1), got {momentum}")
        self.in_dim = self.out_dim = dim
        self.epsilon = epsilon
        self.momentum = momentum
        self.gamma = np.ones((1, dim))
        self.beta = np.zeros((1, dim))
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.grad_gamma = np.zeros((1, dim))
        self.grad_beta = np.zeros((1, dim))
        self.frozen = False
        self._cache = None

    def forward(self, x, mode="train"):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"batch-norm expects (batch, {self.in_dim}) input, got {x.shape}")
        x = _c(x)
        if mode == "eval" or self.frozen:
            y = kernels.batchnorm_forward_eval(
                x, self.gamma, self.beta, self.running_mean, self.running_var, self.epsilon
            )
            if mode == "train":
                xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
                self._cache = ("eval", xhat)
            return y
        if x.shape[0] < 2:
            raise DegenerateBatchError("batch-norm in train mode needs a batch of at least 2 rows")
        y, xhat, var = kernels.batchnorm_forward_train(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.epsilon, self.momentum
        )
        self._cache = ("train", xhat, var)
        return y

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("batch-norm backward called without a cached train-mode forward")
        grad_out = _c(grad_out)
        if self._cache[0] == "train":
            _, xhat, var = self._cache
            gg, gb, gin = kernels.batchnorm_backward(grad_out, xhat, var, self.gamma, self.epsilon)
        else:
            xhat = self._cache[1]
            gg = (grad_out * xhat).sum(axis=0, keepdims=True)
            gb = grad_out.sum(axis=0, keepdims=True)
            gin = grad_out * (self.gamma / np.sqrt(self.running_var + self.epsilon))
        if not self.frozen:
            self.grad_gamma = gg
            self.grad_beta = gb
        return gin

    def parameters(self):
        return [("gamma", self.gamma, self.grad_gamma), ("beta", self.beta, self.grad_beta)]

    def to_dict(self):
        return {
            "kind": self.kind,
            "dim": self.in_dim,
            "epsilon": self.epsilon,
            "momentum": self.momentum,
            "frozen": self.frozen,
            "gamma": self.gamma.ravel().tolist(),
            "beta": self.beta.ravel().tolist(),
            "running_mean": self.running_mean.ravel().tolist(),
            "running_var": self.running_var.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        layer = cls(d["dim"], d["epsilon"], d["momentum"])
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(layer, name, np.array(d[name], dtype=np.float64).reshape(1, d["dim"]))
        layer.frozen = bool(d.get("frozen", False))
        return layer


class Sigmoid:
    kind = "sigmoid"

    def __init__(self, dim):
        self.in_dim = self.out_dim = dim
        self.frozen = False
        self._y = None

    def forward(self, x, mode="train"):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"sigmoid expects (batch, {self.in_dim}) input, got {x.shape}")
        y = kernels.sigmoid_forward(_c(x))
        if mode == "train":
            self._y = y
        return y

    def backward(self, grad_out):
        if self._y is None:
            raise StateError("sigmoid backward called without a cached train-mode forward")
        return kernels.sigmoid_backward(_c(grad_out), self._y)

    def parameters(self):
        return []

    def to_dict(self):
        return {"kind": self.kind, "dim": self.in_dim, "frozen": self.frozen}

    @classmethod
    def from_dict(cls, d):
        layer = cls(d["dim"])
        layer.frozen = bool(d.get("frozen", False))
        return layer


_LAYER_TYPES = {cls.kind: cls for cls in (Dense, BatchNorm, Sigmoid)}


class Network:
    """An ordered stack of layers mapping ``(batch, input_dim)`` to ``(batch, output_dim)``."""

    def __init__(self, layers, trained=False):
        if not layers:
            raise ConfigError("a network needs at least one layer")
        for k, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer {k} outputs {a.out_dim} features but layer {k + 1} expects {b.in_dim}")
        self.layers = list(layers)
        self.trained = trained

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def forward(self, x, mode="eval"):
        _check_mode(mode)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"network expects (batch, {self.input_dim}) input, got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, mode)
        return x

    def predict(self, x):
        return self.forward(x, "eval")[:, 0]

    def backward(self, grad_loss):
        g = grad_loss
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grads(self):
        for layer in self.layers:
            for name, p, _ in layer.parameters():
                attr = "grad_" + name
                setattr(layer, attr, np.zeros_like(p))

    def named_parameters(self):
        """Yield ``(name, param, grad, frozen)`` for every parameter matrix."""
        for i, layer in enumerate(self.layers):
            for pname, p, g in layer.parameters():
                yield f"{i}.{layer.kind}.{pname}", p, g, layer.frozen

    def trainable_count(self):
        return sum(p.size for _, p, _, frozen in self.named_parameters() if not frozen)

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {
            "format": "plitransfer.network/1",
            "trained": self.trained,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            layers = [_LAYER_TYPES[ld["kind"]].from_dict(ld) for ld in d["layers"]]
        except KeyError as exc:
            raise ConfigError(f"malformed network document: missing {exc}") from None
        return cls(layers, trained=bool(d.get("trained", False)))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(indent=1))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def describe(self):
        parts = []
        for layer in self.layers:
            tag = "*" if layer.frozen else ""
            if layer.kind == "dense":
                parts.append(f"Dense({layer.in_dim}->{layer.out_dim}){tag}")
            elif layer.kind == "batchnorm":
                parts.append(f"BatchNorm({layer.in_dim}){tag}")
            else:
                parts.append(f"Sigmoid{tag}")
        return " -> ".join(parts)


def hidden_block(in_dim, out_dim, init):
    return [BatchNorm(in_dim), Dense(in_dim, out_dim, init_weights(in_dim, out_dim, init)), Sigmoid(out_dim)]


def build_source_network(input_dim, hidden_sizes, init=None):
    """``[BatchNorm -> Dense -> Sigmoid] * len(hidden_sizes) -> Dense(h_last -> 1)``.

    Each dense layer draws from its own child seed of ``init.seed``; biases start at zero.
    """
    init = init or InitMethod()
    hidden_sizes = list(hidden_sizes)
    if not hidden_sizes:
        raise ConfigError("hidden_sizes must name at least one hidden layer")
    if input_dim < 1 or any(h < 1 for h in hidden_sizes):
        raise ConfigError(f"layer widths must be >= 1, got input {input_dim}, hidden {hidden_sizes}")
    layers = []
    prev = input_dim
    for k, h in enumerate(hidden_sizes):
        layer_init = InitMethod(init.kind, derive_seed(init.seed, k))
        layers += hidden_block(prev, h, layer_init)
        prev = h
    out_init = InitMethod(init.kind, derive_seed(init.seed, len(hidden_sizes)))
    layers.append(Dense(prev, 1, init_weights(prev, 1, out_init)))
    return Network(layers)
