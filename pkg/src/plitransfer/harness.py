"""Experiment harness: the source -> transfer pipeline, one-factor sweeps,
replicate comparisons against baselines, and deterministic reports.

Reports are plain JSON (sorted keys, ``repr`` floats) plus an aligned text
table. Anything that varies between identical runs (timings, backend, host
time) goes into a separate ``*.meta.json`` file so the report itself is
byte-for-byte reproducible.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, data, kernels
from .config import RunConfig
from .errors import ConfigError, DataError
from .metrics import MetricPair, evaluate
from .nn import Network, build_source_network
from .optim import InitMethod
from .training import build_scratch_target, build_target_model, fit_transfer, train

REPORT_FORMAT = "plitransfer.report/1"
MODEL_FORMAT = "plitransfer.model/1"
IN_SAMPLE_NOTE = (
    "target metrics are in-sample: the target set is too small for a held-out split "
    "and no target_eval_csv was given, so these numbers overstate generalisation"
)
HELD_OUT_NOTE = "target metrics are computed on held-out target-domain rows never seen in fitting"


# --- data ----------------------------------------------------------------


@dataclass
class Prepared:
    train: data.Dataset
    test: data.Dataset
    target: data.Dataset
    target_eval: data.Dataset | None
    scaler: data.Scaler

    @property
    def eval_set(self):
        return self.target_eval if self.target_eval is not None else self.target

    @property
    def in_sample(self):
        return self.target_eval is None


def load_tables(cfg, replicate=0):
    """Raw (unscaled) ``(source, target, target_eval)`` for one replicate."""
    seeds = cfg.seeds(replicate)
    if cfg.synth is not None:
        scfg = replace(cfg.synth, seed=seeds.data)
        source, target = data.synth_generate(scfg)
        holdout = data.synth_holdout(scfg) if scfg.n_holdout > 0 else None
        return source, target, holdout
    c = cfg.csv
    src_specs, _ = data.load_schema(c.source_schema)
    tgt_specs, _ = data.load_schema(c.target_schema)
    source = data.load_csv(c.source_csv, src_specs)
    target = data.load_csv(c.target_csv, tgt_specs)
    if source.feature_names != target.feature_names:
        raise DataError(
            f"source and target feature columns differ: {source.feature_names} vs {target.feature_names}"
        )
    target_eval = data.load_csv(c.target_eval_csv, tgt_specs) if c.target_eval_csv else None
    return source, target, target_eval


def prepare_data(cfg, replicate=0):
    """Split the source rows, fit the scaler on the source training split, apply it everywhere."""
    source, target, target_eval = load_tables(cfg, replicate)
    train_raw, test_raw = data.split(source, cfg.test_fraction, cfg.seeds(replicate).split)
    scaler = data.fit_scaler(train_raw)
    std = lambda ds: data.standardize(ds, scaler) if ds is not None else None  # noqa: E731
    return Prepared(std(train_raw), std(test_raw), std(target), std(target_eval), scaler)


# --- pipeline steps --------------------------------------------------------


def train_source(cfg, prepared, replicate=0):
    seeds = cfg.seeds(replicate)
    init = InitMethod(cfg.network.init, seeds.init)
    net = build_source_network(prepared.train.d, cfg.network.hidden_sizes, init)
    return train(net, prepared.train, prepared.test, replace(cfg.train, seed=seeds.train))


def _target_train_config(cfg, replicate):
    return replace(cfg.train, epochs=cfg.transfer.epochs, seed=cfg.seeds(replicate).train)


def transfer_model(cfg, source_net, prepared, replicate=0):
    seeds = cfg.seeds(replicate)
    target = build_target_model(source_net, seeds.head, cfg.transfer.head_init)
    return fit_transfer(target, prepared.target, _target_train_config(cfg, replicate), prepared.target_eval)


def scratch_model(cfg, prepared, replicate=0):
    seeds = cfg.seeds(replicate)
    init = InitMethod(cfg.network.init, seeds.scratch)
    net = build_scratch_target(prepared.target.d, cfg.network.hidden_sizes, init)
    return fit_transfer(net, prepared.target, _target_train_config(cfg, replicate), prepared.target_eval)


# --- model bundles -------------------------------------------------------


def model_bundle(net, scaler, specs):
    """A network plus everything needed to score raw feature rows."""
    ds = data.Dataset(np.zeros((1, net.input_dim)), np.zeros(1), list(specs))
    return {
        "format": MODEL_FORMAT,
        "network": net.to_dict(),
        "scaler": scaler.to_dict(),
        "features": ds.feature_names,
        "label": ds.label_name,
    }


def save_bundle(path, bundle):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bundle(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"model file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} document")
    net = Network.from_dict(doc["network"])
    return net, data.Scaler.from_dict(doc["scaler"]), doc["features"], doc["label"]


# --- sweeps ----------------------------------------------------------------

SWEEP_AXES = ("optimizer", "momentum", "learning_rate", "init", "hidden_sizes", "depth")

# name -> (title, axis, values); each mirrors one of the published ablation tables
ABLATION_SWEEPS = {
    "optimizer": ("Comparison of optimisers", "optimizer", ["momentum_sgd", "adam", "sgd", "adadelta", "rmsprop"]),
    "momentum": ("Comparison of momentum", "momentum", [0.9, 0.5, 0.99]),
    "depth": ("Comparison of the number of hidden layers", "depth", [2, 1, 3, 4]),
    "hidden_size": (
        "Comparison of hidden size",
        "hidden_sizes",
        [[24, 24], [24, 12], [24, 48], [24, 72], [12, 24], [48, 24]],
    ),
    "init": ("Comparison of weight initialisation", "init", ["xavier", "he", "random"]),
    "learning_rate": ("Comparison of learning rate", "learning_rate", [0.01, 0.05, 0.005]),
}


def axis_value(cfg, axis):
    if axis == "optimizer":
        return cfg.train.optimizer.kind
    if axis == "momentum":
        return cfg.train.optimizer.momentum
    if axis == "learning_rate":
        return cfg.train.optimizer.learning_rate
    if axis == "init":
        return cfg.network.init
    if axis == "hidden_sizes":
        return list(cfg.network.hidden_sizes)
    if axis == "depth":
        return len(cfg.network.hidden_sizes)
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def apply_axis(cfg, axis, value):
    """Return ``cfg`` with one axis changed.

    ``depth`` repeats the first base width, so depth 3 on a ``24,24`` base is ``24,24,24``.
    """
    opt = cfg.train.optimizer
    if axis == "optimizer":
        return replace(cfg, train=replace(cfg.train, optimizer=replace(opt, kind=value)))
    if axis == "momentum":
        return replace(cfg, train=replace(cfg.train, optimizer=replace(opt, momentum=float(value))))
    if axis == "learning_rate":
        return replace(cfg, train=replace(cfg.train, optimizer=replace(opt, learning_rate=float(value))))
    if axis == "init":
        return replace(cfg, network=replace(cfg.network, init=value))
    if axis == "hidden_sizes":
        return replace(cfg, network=replace(cfg.network, hidden_sizes=tuple(value)))
    if axis == "depth":
        if int(value) < 1:
            raise ConfigError("depth must be >= 1")
        width = cfg.network.hidden_sizes[0]
        return replace(cfg, network=replace(cfg.network, hidden_sizes=(width,) * int(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass(frozen=True)
class SweepRow:
    delta: dict
    train: MetricPair
    test: MetricPair
    is_base: bool
    order: int

    def to_dict(self):
        return {
            "delta": self.delta,
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "is_base": self.is_base,
            "order": self.order,
        }


@dataclass
class SweepTable:
    title: str
    axes: list
    rows: list = field(default_factory=list)

    def to_dict(self):
        return {"title": self.title, "axes": self.axes, "rows": [r.to_dict() for r in self.rows]}


def _same(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return isinstance(a, (int, float)) and isinstance(b, (int, float)) and float(a) == float(b)
    return a == b


def run_sweep(grid, base, cross_product=False, title=None, prepared=None):
    """Train one source model per grid point, changing only the swept axes.

    ``grid`` maps axis name to a list of values. More than one axis is an
    error unless ``cross_product`` is set. The base configuration's point is
    always included (prepended when the grid lacks it). Rows are sorted by
    test MAE, then test MAPE, then grid order.
    """
    if not grid:
        raise ConfigError("sweep grid is empty")
    axes = list(grid)
    for a in axes:
        axis_value(base, a)  # validates the axis name
        if not grid[a]:
            raise ConfigError(f"sweep axis {a!r} has no values")
    if len(axes) > 1 and not cross_product:
        raise ConfigError(f"sweep varies {len(axes)} axes {axes}; enable the cross-product option to allow it")
    points = [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]
    base_point = {a: axis_value(base, a) for a in axes}
    if not any(all(_same(p[a], base_point[a]) for a in axes) for p in points):
        points.insert(0, base_point)
    prepared = prepared or prepare_data(base)
    rows = []
    for order, point in enumerate(points):
        cfg = base
        for a in axes:
            cfg = apply_axis(cfg, a, point[a])
        net, hist = train_source(cfg, prepared)
        is_base = all(_same(point[a], base_point[a]) for a in axes)
        rows.append(SweepRow(dict(point), hist.final.train, hist.final.test, is_base, order))
    rows.sort(key=lambda r: (r.test.mae, r.test.mape, r.order))
    return SweepTable(title or "Sweep over " + ", ".join(axes), axes, rows)


def ablation_sweep(name, base, prepared=None):
    try:
        title, axis, values = ABLATION_SWEEPS[name]
    except KeyError:
        raise ConfigError(f"unknown sweep table {name!r}; expected one of {sorted(ABLATION_SWEEPS)}") from None
    return run_sweep({axis: values}, base, title=title, prepared=prepared)


# --- replicate comparison ----------------------------------------------------

# Reference rows quoted from the published comparison tables (not recomputed here).
REFERENCE_TARGET_ROWS = (
    ("SVM", 4.8686, 2.38, 2.1954),
    ("XGBoost", 4.2350, 4.03, 1.5657),
)
REFERENCE_SOURCE_ROWS = (
    ("SVM", 8.1791, None, 0.5626),
    ("XGBoost", 15.8476, None, 0.8998),
)
REFERENCE_CITATION = "published reference value (SVM and XGBoost are not reimplemented)"

COMPUTED_MODELS = ("Transfer DNN", "Linear Regression", "Random Forest", "Scratch DNN")


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    mae_mean: float
    mae_std: float | None
    mape_mean: float
    provenance: str
    replicates: int | None = None
    citation: str | None = None

    def to_dict(self):
        return {
            "model": self.model,
            "mae_mean": self.mae_mean,
            "mae_std": self.mae_std,
            "mape_mean": self.mape_mean,
            "provenance": self.provenance,
            "replicates": self.replicates,
            "citation": self.citation,
        }


@dataclass
class ComparisonTable:
    title: str
    rows: list
    note: str

    def computed(self, name):
        return next(r for r in self.rows if r.model == name and r.provenance == "computed")

    def to_dict(self):
        return {"title": self.title, "note": self.note, "rows": [r.to_dict() for r in self.rows]}


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    metrics: dict  # model name -> MetricPair on the target evaluation set
    source_train_mae: dict  # recorded epoch -> source train MAE, for the convergence check
    source_test: MetricPair

    def to_dict(self):
        return {
            "replicate": self.replicate,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "source_train_mae": {str(k): v for k, v in self.source_train_mae.items()},
            "source_test": self.source_test.to_dict(),
        }


CONVERGENCE_EPOCHS = (0, 150)


def run_replicate(cfg, replicate):
    """Source training, transfer, and the three competitors on one replicate."""
    p = prepare_data(cfg, replicate)
    seeds = cfg.seeds(replicate)
    src, hist = train_source(cfg, p, replicate)
    recorded = {r.epoch: r.train.mae for r in hist.rows}
    curve = {e: recorded[e] for e in CONVERGENCE_EPOCHS if e in recorded}
    curve[hist.final.epoch] = hist.final.train.mae
    ev = p.eval_set
    tnet, _ = transfer_model(cfg, src, p, replicate)
    snet, _ = scratch_model(cfg, p, replicate)
    lin = baselines.fit_linear_regression(p.target)
    forest = baselines.fit_random_forest(p.target, seed=seeds.forest)
    metrics = {
        "Transfer DNN": evaluate(tnet.predict(ev.features), ev.targets),
        "Linear Regression": evaluate(lin.predict(ev.features), ev.targets),
        "Random Forest": evaluate(forest.predict(ev.features), ev.targets),
        "Scratch DNN": evaluate(snet.predict(ev.features), ev.targets),
    }
    return ReplicateResult(replicate, metrics, curve, hist.final.test)


def _aggregate(name, pairs):
    maes = [m.mae for m in pairs]
    std = statistics.stdev(maes) if len(maes) > 1 else None
    return ComparisonRow(name, math.fsum(maes) / len(maes), std, math.fsum(m.mape for m in pairs) / len(pairs),
                         "computed", len(pairs))


def _reference_rows(rows):
    return [ComparisonRow(n, mae, sd, mape, "reported", None, REFERENCE_CITATION) for n, mae, sd, mape in rows]


@dataclass
class Comparison:
    target: ComparisonTable
    source: ComparisonTable
    replicates: list

    def to_dict(self):
        return {
            "target": self.target.to_dict(),
            "source": self.source.to_dict(),
            "replicates": [r.to_dict() for r in self.replicates],
        }


def source_comparison(cfg, prepared=None, source_net=None):
    """Source-domain DNN against the classical baselines on the source test split."""
    p = prepared or prepare_data(cfg)
    if source_net is None:
        source_net, _ = train_source(cfg, p)
    lin = baselines.fit_linear_regression(p.train)
    forest = baselines.fit_random_forest(p.train, seed=cfg.seeds(0).forest)
    t = p.test
    rows = [
        ComparisonRow("DNN", *_single(evaluate(source_net.predict(t.features), t.targets))),
        ComparisonRow("Linear Regression", *_single(evaluate(lin.predict(t.features), t.targets))),
        ComparisonRow("Random Forest", *_single(evaluate(forest.predict(t.features), t.targets))),
    ]
    rows += _reference_rows(REFERENCE_SOURCE_ROWS)
    return ComparisonTable("Source domain: DNN against classical models", rows, "source metrics are on the source test split")


def _single(m):
    return (m.mae, None, m.mape, "computed", 1)


def compare_models(cfg, replicates=None, progress=None):
    """Replicate the full pipeline and aggregate target-domain MAE as mean +/- std.

    With synthetic data each replicate draws a fresh task from its own seed;
    with CSV data the tables are fixed and only model seeds change.
    """
    n = cfg.replicates if replicates is None else replicates
    if n < 1:
        raise ConfigError("replicates must be >= 1")
    results = []
    for r in range(n):
        results.append(run_replicate(cfg, r))
        if progress:
            progress(r + 1, n)
    rows = [_aggregate(name, [res.metrics[name] for res in results]) for name in COMPUTED_MODELS]
    rows += _reference_rows(REFERENCE_TARGET_ROWS)
    in_sample = cfg.csv.target_eval_csv is None if cfg.csv is not None else cfg.synth.n_holdout == 0
    target = ComparisonTable(
        "Target domain: transfer-learning DNN against traditional models",
        rows,
        IN_SAMPLE_NOTE if in_sample else HELD_OUT_NOTE,
    )
    return Comparison(target, source_comparison(cfg), results)


# --- rendering -----------------------------------------------------------


def fmt(v, digits=4):
    return "-" if v is None else f"{v:.{digits}f}"


def render_table(headers, rows):
    cells = [list(map(str, headers))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(headers))]
    line = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()  # noqa: E731
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(cells[0]), rule] + [line(r) for r in cells[1:]]) + "\n"


def _delta_text(delta):
    parts = []
    for k, v in delta.items():
        v = ",".join(map(str, v)) if isinstance(v, (list, tuple)) else v
        parts.append(str(v) if len(delta) == 1 else f"{k}={v}")
    return " ".join(parts)


def render_sweep(table):
    rows = [
        [_delta_text(r.delta) + (" (base)" if r.is_base else ""), fmt(r.test.mae), fmt(r.test.mape), fmt(r.train.mae), fmt(r.train.mape)]
        for r in table.rows
    ]
    head = " / ".join(table.axes)
    return f"{table.title}\n\n" + render_table([head, "MAE", "MAPE", "train MAE", "train MAPE"], rows)


def render_comparison(table):
    rows = []
    for r in table.rows:
        mae = fmt(r.mae_mean) if r.mae_std is None else f"{fmt(r.mae_mean)} ± {fmt(r.mae_std, 2)}"
        tag = f"computed, n={r.replicates}" if r.provenance == "computed" else "reported"
        rows.append([r.model, mae, fmt(r.mape_mean), tag])
    return f"{table.title}\nNote: {table.note}\n\n" + render_table(["Model", "MAE", "MAPE", "Source"], rows)


# --- report files ----------------------------------------------------------


def report_document(kind, config, body):
    return {"format": REPORT_FORMAT, "kind": kind, "config": config.to_dict() if config else None, "body": body}


def dumps_report(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_metadata(started):
    return {
        "started_unix": started,
        "finished_unix": time.time(),
        "duration_s": time.time() - started,
        "kernel_backend": kernels.BACKEND,
    }


def write_report(out_dir, name, doc, text, metadata=None):
    """Write ``name.json`` (deterministic), ``name.txt`` and, if given, ``name.meta.json``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"json": os.path.join(out_dir, name + ".json"), "text": os.path.join(out_dir, name + ".txt")}
    with open(paths["json"], "w", encoding="utf-8") as fh:
        fh.write(dumps_report(doc))
    with open(paths["text"], "w", encoding="utf-8") as fh:
        fh.write(text)
    if metadata is not None:
        paths["meta"] = os.path.join(out_dir, name + ".meta.json")
        with open(paths["meta"], "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return paths
