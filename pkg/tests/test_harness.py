import json
from dataclasses import replace

import numpy as np
import pytest

from plitransfer import harness
from plitransfer.config import CsvSource, NetworkConfig, RunConfig, TransferConfig
from plitransfer.data import SynthConfig
from plitransfer.errors import ConfigError, DataError
from plitransfer.metrics import evaluate
from plitransfer.training import TrainConfig


def small_config(**kw):
    base = RunConfig(
        synth=SynthConfig(n_source=150, n_holdout=40),
        network=NetworkConfig((4, 4)),
        train=TrainConfig(epochs=20),
        transfer=TransferConfig(epochs=20),
    )
    return replace(base, **kw)


# --- config ---------------------------------------------------------------


def test_defaults_match_base_model():
    cfg = RunConfig()
    assert cfg.network.hidden_sizes == (24, 24) and cfg.network.init == "xavier"
    opt = cfg.train.optimizer
    assert (opt.kind, opt.learning_rate, opt.momentum) == ("momentum_sgd", 0.01, 0.9)
    assert cfg.train.epochs == 1000 and cfg.transfer.head_init == "random"
    assert (cfg.synth.n_source, cfg.synth.n_target, cfg.synth.d) == (1526, 6, 12)


def test_config_round_trip(tmp_path):
    cfg = small_config(seed=5, replicates=3)
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert RunConfig.load(p) == cfg
    csv_cfg = RunConfig(synth=None, csv=CsvSource("a.csv", "a.json", "b.csv", "b.json"))
    assert RunConfig.from_dict(json.loads(csv_cfg.to_json())) == csv_cfg


@pytest.mark.parametrize(
    "doc",
    [
        {"bogus": 1},
        {"csv": {"source_csv": "a"}},
        {"synth": {"seed": 3}},
        {"train": {"seed": 3}},
        {"replicates": 0},
        {"network": {"hidden_sizes": []}},
        {"synth": {}, "csv": {"source_csv": "a", "source_schema": "b", "target_csv": "c", "target_schema": "d"}},
    ],
)
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "list.json")


def test_seeds_derive_from_run_seed():
    a, b = RunConfig(seed=1), RunConfig(seed=2)
    assert a.seeds(0) == RunConfig(seed=1).seeds(0)
    assert a.seeds(0) != b.seeds(0)
    assert a.seeds(0) != a.seeds(1)
    assert len(set(vars(a.seeds(0)).values())) == 7


# --- pipeline -------------------------------------------------------------


def test_prepare_data_scales_on_source_train_split():
    p = harness.prepare_data(small_config())
    assert p.train.n == 120 and p.test.n == 30 and p.target.n == 6
    np.testing.assert_allclose(p.train.features.mean(axis=0), 0.0, atol=1e-9)
    assert p.target.scaler == p.train.scaler == p.scaler
    assert not p.in_sample and p.eval_set is p.target_eval


def test_no_holdout_means_in_sample():
    cfg = small_config(synth=SynthConfig(n_source=150, n_holdout=0))
    p = harness.prepare_data(cfg)
    assert p.in_sample and p.eval_set is p.target


def test_transfer_pipeline_freeze_contract():
    cfg = small_config()
    p = harness.prepare_data(cfg)
    src, _ = harness.train_source(cfg, p)
    tgt, _ = harness.transfer_model(cfg, src, p)
    assert tgt.trainable_count() == 3 * 4 + 1
    for (_, a, _, _), (_, b, _, frozen) in zip(list(src.named_parameters())[:-2], tgt.named_parameters()):
        assert frozen
        np.testing.assert_array_equal(a, b)


def test_bundle_round_trip(tmp_path):
    cfg = small_config()
    p = harness.prepare_data(cfg)
    src, _ = harness.train_source(cfg, p)
    path = tmp_path / "m.json"
    harness.save_bundle(path, harness.model_bundle(src, p.scaler, p.train.specs))
    net, scaler, features, label = harness.load_bundle(path)
    assert features == p.train.feature_names and label == "pm25"
    np.testing.assert_array_equal(net.predict(p.test.features), src.predict(p.test.features))
    (tmp_path / "x.json").write_text("{}")
    with pytest.raises(DataError):
        harness.load_bundle(tmp_path / "x.json")
    with pytest.raises(DataError):
        harness.load_bundle(tmp_path / "none.json")


def test_csv_source_mismatched_features(tmp_path):
    (tmp_path / "s.csv").write_text("a,y\n1,2\n2,3\n3,4\n")
    (tmp_path / "t.csv").write_text("b,y\n1,2\n2,3\n")
    schema = lambda f: json.dumps({"columns": [{"name": f}, {"name": "y", "role": "label"}]})  # noqa: E731
    (tmp_path / "s.json").write_text(schema("a"))
    (tmp_path / "t.json").write_text(schema("b"))
    cfg = RunConfig(synth=None, csv=CsvSource(*(str(tmp_path / n) for n in ("s.csv", "s.json", "t.csv", "t.json"))))
    with pytest.raises(DataError, match="differ"):
        harness.load_tables(cfg)


# --- sweeps ---------------------------------------------------------------


def test_apply_axis():
    cfg = RunConfig()
    assert harness.apply_axis(cfg, "depth", 3).network.hidden_sizes == (24, 24, 24)
    assert harness.apply_axis(cfg, "optimizer", "adam").train.optimizer.kind == "adam"
    assert harness.apply_axis(cfg, "hidden_sizes", [24, 48]).network.hidden_sizes == (24, 48)
    with pytest.raises(ConfigError):
        harness.apply_axis(cfg, "dropout", 0.1)
    with pytest.raises(ConfigError):
        harness.apply_axis(cfg, "depth", 0)


def test_ablation_sweep_row_sets():
    expected = {
        "optimizer": 5,
        "momentum": 3,
        "depth": 4,
        "hidden_size": 6,
        "init": 3,
        "learning_rate": 3,
    }
    assert {k: len(v[2]) for k, v in harness.ABLATION_SWEEPS.items()} == expected
    for _, axis, values in harness.ABLATION_SWEEPS.values():
        base_value = harness.axis_value(RunConfig(), axis)
        assert any(harness._same(v, base_value) for v in values)


def test_run_sweep_sorting_and_base_row():
    cfg = small_config()
    table = harness.run_sweep({"learning_rate": [0.05, 0.02]}, cfg)
    assert len(table.rows) == 3  # the base 0.01 row is prepended
    assert sum(r.is_base for r in table.rows) == 1
    base = next(r for r in table.rows if r.is_base)
    assert base.delta == {"learning_rate": 0.01} and base.order == 0
    keys = [(r.test.mae, r.test.mape, r.order) for r in table.rows]
    assert keys == sorted(keys)
    text = harness.render_sweep(table)
    assert "(base)" in text and "train MAE" in text


def test_sweep_rows_are_recomputable():
    cfg = small_config()
    p = harness.prepare_data(cfg)
    table = harness.run_sweep({"optimizer": ["momentum_sgd"]}, cfg, prepared=p)
    net, hist = harness.train_source(cfg, p)
    row = table.rows[0]
    assert abs(evaluate(net.predict(p.test.features), p.test.targets).mae - row.test.mae) <= 1e-12


def test_multi_axis_needs_cross_product():
    cfg = small_config(train=TrainConfig(epochs=2), synth=SynthConfig(n_source=40, n_holdout=10))
    grid = {"learning_rate": [0.01, 0.02], "init": ["xavier", "he"]}
    with pytest.raises(ConfigError, match="cross-product"):
        harness.run_sweep(grid, cfg)
    table = harness.run_sweep(grid, cfg, cross_product=True)
    assert len(table.rows) == 4
    with pytest.raises(ConfigError):
        harness.run_sweep({}, cfg)
    with pytest.raises(ConfigError):
        harness.run_sweep({"momentum": []}, cfg)


# --- comparison -----------------------------------------------------------


def test_compare_single_replicate():
    result = harness.compare_models(small_config())
    t = result.target
    assert [r.model for r in t.rows] == list(harness.COMPUTED_MODELS) + ["SVM", "XGBoost"]
    for name in harness.COMPUTED_MODELS:
        row = t.computed(name)
        assert row.mae_std is None and row.replicates == 1
    reported = [r for r in t.rows if r.provenance == "reported"]
    assert all(r.citation for r in reported)
    text = harness.render_comparison(t)
    assert "SVM" in text and "4.8686 ± 2.38" in text and "4.2350 ± 4.03" in text
    assert t.note == harness.HELD_OUT_NOTE


def test_compare_aggregates_with_sample_std():
    result = harness.compare_models(small_config(), replicates=3)
    row = result.target.computed("Transfer DNN")
    maes = [r.metrics["Transfer DNN"].mae for r in result.replicates]
    assert row.mae_mean == pytest.approx(np.mean(maes), abs=1e-12)
    assert row.mae_std == pytest.approx(np.std(maes, ddof=1), abs=1e-12)
    # each synthetic replicate draws its own task
    assert len({r.metrics["Linear Regression"].mae for r in result.replicates}) == 3
    assert set(result.replicates[0].source_train_mae) == {0, 20}


def test_report_is_deterministic(tmp_path):
    cfg = small_config()
    outs = []
    for k in range(2):
        r = harness.compare_models(cfg, replicates=2)
        doc = harness.report_document("compare", cfg, r.to_dict())
        paths = harness.write_report(tmp_path / str(k), "compare", doc, "x", harness.run_metadata(0.0))
        outs.append(open(paths["json"], "rb").read())
        assert "duration_s" in json.load(open(paths["meta"]))
    assert outs[0] == outs[1]
    assert b"duration" not in outs[0]
