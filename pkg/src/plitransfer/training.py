"""Full- or mini-batch training, layer freezing and freeze-and-retrain transfer."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, ShapeError, StateError
from .metrics import MetricPair, evaluate, mse_loss_grad
from .nn import BatchNorm, Dense, Network, build_source_network, derive_seed
from .optim import InitMethod, OptimizerConfig, OptimizerState, init_weights, optimizer_step

LOSSES = ("mae", "mse")


@dataclass(frozen=True)
class TrainConfig:
    """``batch_size=None`` trains full-batch (one step per epoch)."""

    epochs: int = 1000
    batch_size: int | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: str = "mae"
    seed: int = 0
    eval_every: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1 (or None for full batch)")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_dict(),
            "loss": self.loss,
            "seed": self.seed,
            "eval_every": self.eval_every,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train fields: {sorted(unknown)}")
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig.from_dict(d["optimizer"])
        return cls(**d)


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    train: MetricPair
    test: MetricPair | None


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    duration_s: float = 0.0

    def record(self, epoch, train, test):
        if self.rows and epoch <= self.rows[-1].epoch:
            raise ValueError("history epochs must be strictly increasing")
        self.rows.append(HistoryRow(epoch, train, test))

    @property
    def final(self):
        return self.rows[-1]

    def at(self, epoch):
        for r in self.rows:
            if r.epoch == epoch:
                return r
        raise KeyError(f"epoch {epoch} was not recorded")

    def to_dict(self, include_timing=False):
        d = {
            "epochs": [r.epoch for r in self.rows],
            "train_mae": [r.train.mae for r in self.rows],
            "train_mape": [r.train.mape for r in self.rows],
            "test_mae": [r.test.mae if r.test else None for r in self.rows],
            "test_mape": [r.test.mape if r.test else None for r in self.rows],
        }
        if include_timing:
            d["duration_s"] = self.duration_s
        return d

    def write_curve_csv(self, path, metric="mae"):
        """Two value columns (train, test) per recorded epoch, for plotting convergence."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"epoch,train_{metric},test_{metric}\n")
            for r in self.rows:
                test = repr(getattr(r.test, metric)) if r.test else ""
                fh.write(f"{r.epoch},{getattr(r.train, metric)!r},{test}\n")


def _has_batchnorm(net):
    return any(isinstance(layer, BatchNorm) and not layer.frozen for layer in net.layers)


def _batches(perm, batch_size, min_batch):
    chunks = [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
    # a trailing batch too small for batch-norm joins the previous one
    if len(chunks) > 1 and len(chunks[-1]) < min_batch:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def eval_metrics(net, ds):
    return evaluate(net.predict(ds.features), ds.targets)


def train(net, train_ds, test_ds, cfg, state=None):
    """Train ``net`` in place; returns ``(net, history)``.

    History rows are taken in eval mode at epoch 0, every ``eval_every``
    epochs, and at the final epoch.
    """
    if train_ds.d != net.input_dim:
        raise ShapeError(f"dataset has {train_ds.d} features, network expects {net.input_dim}")
    if test_ds is not None and test_ds.d != net.input_dim:
        raise ShapeError(f"test set has {test_ds.d} features, network expects {net.input_dim}")
    min_batch = 2 if _has_batchnorm(net) else 1
    batch_size = train_ds.n if cfg.batch_size is None else cfg.batch_size
    if min_batch == 2 and (train_ds.n < 2 or batch_size < 2):
        raise ConfigError("networks with trainable batch-norm need batch_size >= 2 and >= 2 training rows")
    state = state if state is not None else OptimizerState()
    rng = np.random.default_rng(cfg.seed)
    x_all = train_ds.features
    y_all = train_ds.y
    params = []
    for i, layer in enumerate(net.layers):
        if not layer.frozen:
            params += [(f"{i}.{layer.kind}.{pname}", layer, "grad_" + pname, p) for pname, p, _ in layer.parameters()]
    history = TrainHistory()
    t0 = time.perf_counter()

    def snapshot(epoch):
        test = eval_metrics(net, test_ds) if test_ds is not None else None
        history.record(epoch, eval_metrics(net, train_ds), test)

    snapshot(0)
    full_batch = batch_size >= train_ds.n
    for epoch in range(1, cfg.epochs + 1):
        if full_batch:
            batches = [None]
        else:
            batches = _batches(rng.permutation(train_ds.n), batch_size, min_batch)
        for b, idx in enumerate(batches):
            if idx is None:
                xb, yb = x_all, y_all
            else:
                xb, yb = x_all[idx], y_all[idx]
            pred = net.forward(xb, "train")
            if cfg.loss == "mae":
                loss, grad = kernels.mae_and_grad(np.ascontiguousarray(pred), np.ascontiguousarray(yb))
            else:
                with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
                    loss = float(((pred - yb) ** 2).mean())
                grad = mse_loss_grad(pred, yb).reshape(-1, 1)
            if not math.isfinite(loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}, batch {b}", epoch, b)
            net.backward(grad)
            for name, layer, grad_attr, p in params:
                optimizer_step(cfg.optimizer, state, p, getattr(layer, grad_attr), name)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            snapshot(epoch)
            if not math.isfinite(history.final.train.mae):
                raise DivergenceError(f"training diverged by epoch {epoch}", epoch, None)
    history.duration_s = time.perf_counter() - t0
    net.trained = True
    return net, history


def freeze_feature_layers(net):
    """Freeze every layer except the final dense output layer (in place)."""
    if len(net.layers) < 2:
        raise ConfigError("freezing needs a network with at least 2 layers")
    for layer in net.layers[:-1]:
        layer.frozen = True
    net.layers[-1].frozen = False
    return net


def build_target_model(source, seed, init_kind="random"):
    """Drop the source output layer, freeze the rest, append ``BatchNorm -> Dense(h -> 1)``.

    Retained layers are deep copies; the new dense layer is drawn with
    ``init_kind`` from ``seed``.
    """
    if not source.trained:
        raise StateError("build_target_model needs a trained source network")
    if not isinstance(source.layers[-1], Dense):
        raise ConfigError("source network must end in a dense output layer")
    if len(source.layers) < 2:
        raise ConfigError("source network has no feature layers to transfer")
    kept = source.copy().layers[:-1]
    for layer in kept:
        layer.frozen = True
    h = kept[-1].out_dim
    head_init = InitMethod(init_kind, derive_seed(seed, 0))
    head = [BatchNorm(h), Dense(h, 1, init_weights(h, 1, head_init))]
    return Network(kept + head)


def build_scratch_target(input_dim, hidden_sizes, init):
    """Target topology (source hidden blocks, then BatchNorm -> Dense) with nothing frozen."""
    src = build_source_network(input_dim, hidden_sizes, init)
    h = src.layers[-2].out_dim
    out_init = InitMethod(init.kind, derive_seed(init.seed, len(hidden_sizes)))
    return Network(src.layers[:-1] + [BatchNorm(h), Dense(h, 1, init_weights(h, 1, out_init))])


def fit_transfer(target_net, target_ds, cfg, eval_ds=None):
    """Fit the unfrozen head on the (small) target set; full batch when it fits in one batch."""
    if target_ds.n < 2:
        raise ConfigError("transfer fitting needs at least 2 target rows")
    return train(target_net, target_ds, eval_ds, cfg)

