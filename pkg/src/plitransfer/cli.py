"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
The default output directory comes from ``--out``, then the config file's
``output_dir``, then the ``PLITRANSFER_OUTPUT_DIR`` environment variable, then
``./plitransfer-out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

from . import __version__, data, harness
from .config import OUTPUT_ENV, CsvSource, RunConfig
from .errors import ConfigError, DataError, NumericError, ShapeError, StateError
from .metrics import evaluate

log = logging.getLogger("plitransfer")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _load_config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg=None):
    out = getattr(args, "out", None) or (cfg.output_dir if cfg else None) or os.environ.get(OUTPUT_ENV)
    out = out or "plitransfer-out"
    os.makedirs(out, exist_ok=True)
    return out


def _emit(text):
    sys.stdout.write(text)
    sys.stdout.flush()


# --- subcommands -----------------------------------------------------------


def cmd_synth(args):
    cfg = _load_config(args)
    if cfg.synth is None:
        raise ConfigError("synth needs a config with a synth data section")
    out = _out_dir(args, cfg)
    source, target, holdout = harness.load_tables(cfg)
    paths = {
        "source_csv": os.path.join(out, "source.csv"),
        "source_schema": os.path.join(out, "source_schema.json"),
        "target_csv": os.path.join(out, "target.csv"),
        "target_schema": os.path.join(out, "target_schema.json"),
    }
    data.write_csv(paths["source_csv"], source)
    data.save_schema(paths["source_schema"], source.specs)
    data.write_csv(paths["target_csv"], target)
    data.save_schema(paths["target_schema"], target.specs)
    if holdout is not None:
        paths["target_eval_csv"] = os.path.join(out, "target_holdout.csv")
        data.write_csv(paths["target_eval_csv"], holdout)
    csv_cfg = replace(cfg, synth=None, csv=CsvSource(**paths))
    with open(os.path.join(out, "csv_config.json"), "w", encoding="utf-8") as fh:
        fh.write(csv_cfg.to_json())
    _emit(f"wrote {source.n} source rows, {target.n} target rows to {out}\n")
    return EXIT_OK


def cmd_prepare(args):
    specs, extras = data.load_schema(args.schema)
    out = _out_dir(args)
    path = args.data
    coarse = [s.name for s in specs if s.role == "feature" and s.cadence != "monthly"]
    if coarse:
        if "year_column" not in extras or "month_column" not in extras:
            raise ConfigError(f"columns {coarse} need expansion; the schema must name year_column and month_column")
        header, rows = data.read_rows(path)
        expanded = data.expand_table(
            header, rows, specs, extras["year_column"], extras["month_column"], tuple(extras.get("group_by", ()))
        )
        path = os.path.join(out, "expanded.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(expanded)
    ds = data.load_csv(path, specs)
    train_raw, test_raw = data.split(ds, args.test_fraction, args.seed or 0)
    scaler = data.fit_scaler(train_raw)
    data.write_csv(os.path.join(out, "train.csv"), data.standardize(train_raw, scaler))
    data.write_csv(os.path.join(out, "test.csv"), data.standardize(test_raw, scaler))
    with open(os.path.join(out, "scaler.json"), "w", encoding="utf-8") as fh:
        json.dump(scaler.to_dict(), fh, indent=1)
    _emit(f"prepared {ds.n} rows ({train_raw.n} train / {test_raw.n} test) in {out}\n")
    return EXIT_OK


def cmd_train_source(args):
    started = time.time()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    p = harness.prepare_data(cfg)
    net, hist = harness.train_source(cfg, p)
    harness.save_bundle(os.path.join(out, "source_model.json"), harness.model_bundle(net, p.scaler, p.train.specs))
    hist.write_curve_csv(os.path.join(out, "source_curve_mae.csv"), "mae")
    hist.write_curve_csv(os.path.join(out, "source_curve_mape.csv"), "mape")
    body = {"network": net.describe(), "history": hist.to_dict(), "final": _final(hist)}
    text = (
        f"Source model {net.describe()}\n"
        f"final train MAE {hist.final.train.mae:.4f}  MAPE {hist.final.train.mape:.4f}\n"
        f"final test  MAE {hist.final.test.mae:.4f}  MAPE {hist.final.test.mape:.4f}\n"
    )
    meta = harness.run_metadata(started) | {"train_seconds": hist.duration_s}
    harness.write_report(out, "train_source", harness.report_document("train-source", cfg, body), text, meta)
    _emit(text)
    return EXIT_OK


def _final(hist):
    r = hist.final
    return {"epoch": r.epoch, "train": r.train.to_dict(), "test": r.test.to_dict() if r.test else None}


def cmd_transfer(args):
    started = time.time()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    src_path = args.source_model or os.path.join(out, "source_model.json")
    source, _, _, _ = harness.load_bundle(src_path)
    p = harness.prepare_data(cfg)
    if source.input_dim != p.target.d:
        raise ShapeError(f"source model expects {source.input_dim} features, target data has {p.target.d}")
    net, hist = harness.transfer_model(cfg, source, p)
    harness.save_bundle(os.path.join(out, "target_model.json"), harness.model_bundle(net, p.scaler, p.target.specs))
    ev = p.eval_set
    metrics = evaluate(net.predict(ev.features), ev.targets)
    note = harness.IN_SAMPLE_NOTE if p.in_sample else harness.HELD_OUT_NOTE
    body = {
        "network": net.describe(),
        "trainable_scalars": net.trainable_count(),
        "history": hist.to_dict(),
        "target_metrics": metrics.to_dict(),
        "note": note,
    }
    text = (
        f"Target model {net.describe()}  (* = frozen)\n"
        f"trainable scalars {net.trainable_count()}\n"
        f"Note: {note}\n"
        f"target MAE {metrics.mae:.4f}  MAPE {metrics.mape:.4f}\n"
    )
    harness.write_report(out, "transfer", harness.report_document("transfer", cfg, body), text, harness.run_metadata(started))
    _emit(text)
    return EXIT_OK


def cmd_evaluate(args):
    net, scaler, features, label = harness.load_bundle(args.model)
    specs = [data.ColumnSpec(n) for n in features] + [data.ColumnSpec(args.label or label, "label")]
    ds = data.load_csv(args.data, specs)
    m = evaluate(net.predict(scaler.transform(ds.features)), ds.targets)
    doc = {"model": args.model, "data": args.data, "n": ds.n, "metrics": m.to_dict(), "inferior": m.inferior}
    text = f"n={ds.n}  MAE {m.mae:.4f}  MAPE {m.mape:.4f}{'  (inferior: MAPE > 100%)' if m.inferior else ''}\n"
    if args.out:
        harness.write_report(_out_dir(args), "evaluate", harness.report_document("evaluate", None, doc), text)
    _emit(text)
    return EXIT_OK


def cmd_predict(args):
    net, scaler, features, label = harness.load_bundle(args.model)
    x = data.load_features(args.data, features)
    pred = net.predict(scaler.transform(x))
    dest = args.output or os.path.join(_out_dir(args), "predictions.csv")
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", label])
        for i, v in enumerate(pred):
            w.writerow([i + 1, repr(float(v))])
    _emit(f"wrote {len(pred)} predictions to {dest}\n")
    return EXIT_OK


def _parse_axis(spec):
    name, _, values = spec.partition("=")
    if not values:
        raise ConfigError(f"--axis expects name=v1,v2,... got {spec!r}")
    if name == "hidden_sizes":
        vals = [[int(w) for w in v.split("x")] for v in values.split(",")]
    elif name in ("optimizer", "init"):
        vals = values.split(",")
    elif name == "depth":
        vals = [int(v) for v in values.split(",")]
    else:
        vals = [float(v) for v in values.split(",")]
    return name, vals


def cmd_sweep(args):
    started = time.time()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    prepared = harness.prepare_data(cfg)
    if args.axis:
        grid = dict(_parse_axis(a) for a in args.axis)
        tables = {"custom": harness.run_sweep(grid, cfg, cross_product=args.cross_product, prepared=prepared)}
    else:
        names = sorted(harness.ABLATION_SWEEPS) if args.table == "all" else [args.table]
        tables = {n: harness.ablation_sweep(n, cfg, prepared) for n in names}
    for name, table in tables.items():
        text = harness.render_sweep(table)
        doc = harness.report_document("sweep", cfg, table.to_dict())
        harness.write_report(out, f"sweep_{name}", doc, text, harness.run_metadata(started))
        _emit(text + "\n")
    return EXIT_OK


def cmd_compare(args):
    started = time.time()
    cfg = _load_config(args)
    if args.replicates is not None:
        cfg = replace(cfg, replicates=args.replicates)
    out = _out_dir(args, cfg)

    def progress(done, total):
        log.info("replicate %d/%d done", done, total)

    result = harness.compare_models(cfg, progress=progress)
    text = harness.render_comparison(result.target) + "\n" + harness.render_comparison(result.source)
    harness.write_report(out, "compare", harness.report_document("compare", cfg, result.to_dict()), text,
                         harness.run_metadata(started))
    _emit(text)
    return EXIT_OK


def cmd_pli(args):
    try:
        with open(args.backgrounds, encoding="utf-8") as fh:
            backgrounds = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{args.backgrounds}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.backgrounds} is not valid JSON: {exc}") from None
    if not isinstance(backgrounds, dict) or not backgrounds:
        raise ConfigError("backgrounds file must map metal column names to background concentrations")
    metals = list(backgrounds)
    conc = data.load_features(args.data, metals)
    bg = [float(backgrounds[m]) for m in metals]
    values = [data.compute_pli(row, bg) for row in conc]
    dest = args.output or os.path.join(_out_dir(args), "pli.csv")
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "pli"])
        for i, v in enumerate(values):
            w.writerow([i + 1, repr(v)])
    _emit(f"computed PLI for {len(values)} rows from {len(metals)} metals; wrote {dest}\n")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="plitransfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True, out=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", help="run configuration JSON (defaults to the base model)")
            p.add_argument("--seed", type=int, help="override the configuration seed")
        if out:
            p.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV})")
        p.set_defaults(func=func)
        return p

    add("synth", cmd_synth, "write a synthetic source/target task as CSV files")

    p = add("prepare", cmd_prepare, "expand coarse columns to monthly, split and standardize a CSV", config=False)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)

    add("train-source", cmd_train_source, "train the source-domain network")

    p = add("transfer", cmd_transfer, "freeze the source network and fit a new head on the target rows")
    p.add_argument("--source-model", help="source model bundle (default: <out>/source_model.json)")

    p = add("evaluate", cmd_evaluate, "score a saved model on a labelled CSV", config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", help="label column name (default: the model's label)")

    p = add("sweep", cmd_sweep, "one-factor ablation sweeps over the base configuration")
    p.add_argument("--table", default="all", choices=["all", *sorted(harness.ABLATION_SWEEPS)])
    p.add_argument("--axis", action="append", help="custom axis name=v1,v2 (hidden_sizes uses 24x48 notation)")
    p.add_argument("--cross-product", action="store_true", help="allow several --axis options at once")

    p = add("compare", cmd_compare, "replicate transfer against linear regression, random forest and a scratch DNN")
    p.add_argument("--replicates", type=int)

    p = add("pli", cmd_pli, "pollution load index per row from metal concentrations", config=False)
    p.add_argument("--data", required=True, help="CSV with one column per metal")
    p.add_argument("--backgrounds", required=True, help="JSON object: metal column -> background concentration")
    p.add_argument("--output")

    p = add("predict", cmd_predict, "predict labels for raw feature rows with a saved model", config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
