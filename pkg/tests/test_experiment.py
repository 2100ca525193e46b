from __future__ import annotations

import json
import struct
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

from nodenorm.data import SplitSpec, generate_sbm, load_bundle, make_split, save_bundle
from nodenorm.errors import ConfigError
from nodenorm.experiment import (
    RunConfig, aggregate, emit_reports, load_checkpoint, load_records, save_checkpoint, sweep, train,
    train_model,
)
from nodenorm.experiment import presets
from nodenorm.experiment.checkpoint import MAGIC, parameters_equal
from nodenorm.experiment.cli import main, parse_int_list
from nodenorm.experiment.config import apply_override, parse_variant
from nodenorm.experiment.reports import fmt
from nodenorm.experiment.runner import seed_streams
from nodenorm.models import build_model

SMALL_SBM = {"blocks": 3, "nodes_per_block": 20, "p_in": 0.3, "p_out": 0.02, "feature_noise": 0.5, "seed": 1}


def small_config(**kw) -> RunConfig:
    base = dict(sbm=SMALL_SBM, split=SplitSpec.per_class(4, 10, 20), depth=3, hidden_dim=8, epochs=15,
                dropout_rate=0.3, lr=0.01)
    base.update(kw)
    return RunConfig(**base)


# config -------------------------------------------------------------------------

def test_variant_names():
    assert parse_variant("gcn") == ("gcn", "none")
    assert parse_variant("tgcn") == ("tgcn", "none")
    assert parse_variant("nodenorm2") == ("gcn", "nodenorm2")
    assert parse_variant("nodenorm5") == ("gcn", "nodenorm5")
    assert parse_variant("layernorm-ms") == ("gcn", "layernorm-ms")
    with pytest.raises(ConfigError):
        parse_variant("batchnorm")


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"lr": -1.0}, {"dropout_rate": 1.0}, {"variant": "foo"},
                                {"depth": 1}, {"sbm": None}, {"dataset": "x"}, {"missing_rate": 2.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        small_config(**kw)


def test_config_load_with_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"sbm": SMALL_SBM, "depth": 4, "split": {"kind": "per_class", "k": 3}}))
    cfg = RunConfig.load(path, ["depth=8", "variant=nodenorm1", "sbm.p_in=0.4", "split.val_size=7",
                                "diagnostics.lipschitz=true"])
    assert (cfg.depth, cfg.variant, cfg.sbm["p_in"], cfg.split.val_size) == (8, "nodenorm1", 0.4, 7)
    assert cfg.diagnostics.lipschitz
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.json")
    (tmp_path / "c.json").write_text(json.dumps({"sbm": SMALL_SBM, "depht": 3}))
    with pytest.raises(ConfigError, match="depht"):
        RunConfig.load(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        apply_override({}, "noequals")


def test_presets():
    assert presets.lookup("nodenorm1", "Cora", 64) == (0.5, 0.0005, 0.001, 0.005, 400)
    assert presets.lookup("nodenorm1", "cora", 2) == (0.8, 0.0005, 0.0005, 0.005, 400)
    assert presets.lookup("layernorm-star", "cora", 2) == presets.lookup("layernorm", "cora", 2)
    assert presets.lookup("gcn", "cora", 64) == presets.BASELINE
    assert presets.lookup("nodenorm3", "wiki-cs", 64)[3:] == (0.001, 1500)
    cfg = small_config(variant="nodenorm1", depth=4, preset="cora").resolved()
    assert (cfg.dropout_rate, cfg.l1_weight, cfg.weight_decay) == (0.6, 0.01, 0.0005)


def test_parse_int_list():
    assert parse_int_list("0..3") == [0, 1, 2, 3]
    assert parse_int_list("2,4,8") == [2, 4, 8]
    assert parse_int_list("1,3..4") == [1, 3, 4]
    with pytest.raises(ConfigError):
        parse_int_list("a,b")


# train ----------------------------------------------------------------------------

def test_zero_lr_single_epoch_keeps_initial_weights():
    cfg = small_config(epochs=1, lr=0.0, weight_decay=0.0, variant="layernorm")
    record, model, ds = train_model(cfg)
    initial = build_model(cfg.model_spec(ds.d, ds.num_classes), seed_streams(cfg.seed)["init"])
    assert parameters_equal(model, initial)
    assert len(record.history.train_loss) == 1


def test_two_clique_sbm_is_solved():
    sbm = {"blocks": 2, "nodes_per_block": 30, "p_in": 1.0, "p_out": 0.0, "feature_noise": 0.0, "seed": 0}
    rec = train(small_config(sbm=sbm, depth=2, epochs=200, split=SplitSpec.per_class(5, 10, 30)))
    assert rec.test_acc == 1.0


def test_train_is_deterministic_and_records_are_complete():
    cfg = small_config(diagnostics={"variance": True, "lipschitz": True, "correlation": True})
    a, b = train(cfg), train(cfg)
    assert a.test_acc == b.test_acc
    assert a.history.to_dict() == b.history.to_dict()
    assert a.diagnostics["lipschitz"] == b.diagnostics["lipschitz"]
    assert len(a.history.train_acc) == cfg.epochs
    assert 0.0 <= a.test_acc <= 1.0
    assert len(a.diagnostics["variance"]["max_log10"]) == cfg.depth
    assert len(a.diagnostics["variance"]["deep_test_var"]) == 20
    assert len(a.diagnostics["correlation"]["per_layer"]) == cfg.depth
    assert a.diagnostics["lipschitz"]["mode"] == "all-pairs"


def test_test_labels_never_influence_training(tmp_path):
    ds = generate_sbm(3, 20, 0.3, 0.02, rng=np.random.default_rng(0))
    ds = make_split(ds, SplitSpec.per_class(4, 10, 20), np.random.default_rng(0))
    save_bundle(ds, tmp_path / "orig")
    flipped = ds.labels.copy()
    test = ds.mask("test")
    flipped[test] = (flipped[test] + 1) % ds.num_classes
    save_bundle(replace(ds, labels=flipped), tmp_path / "flip")

    cfg = RunConfig(dataset=str(tmp_path / "orig"), split=SplitSpec.fixed(), depth=3, hidden_dim=8, epochs=10)
    rec_a, model_a, _ = train_model(cfg)
    rec_b, model_b, _ = train_model(replace(cfg, dataset=str(tmp_path / "flip")))
    assert parameters_equal(model_a, model_b)
    assert rec_a.history.to_dict() == rec_b.history.to_dict()
    assert rec_a.test_acc != rec_b.test_acc


def test_missing_features_run():
    rec = train(small_config(missing_rate=1.0))
    assert rec.ok and len(rec.history.val_acc) == 15


# sweep / aggregate -----------------------------------------------------------------

def test_sweep_single_cell_matches_train():
    cfg = small_config()
    [rec] = sweep(cfg, [3], [0], ["gcn"])
    ref = train(cfg)
    assert rec.test_acc == ref.test_acc and rec.history.to_dict() == ref.history.to_dict()


def test_sweep_counts_failures_and_aggregate():
    recs = sweep(small_config(epochs=3), [2, 3], [0, 1, 2], ["gcn", "nodenorm1"])
    assert len(recs) == 12 and all(r.ok for r in recs)
    cells = aggregate(recs)
    assert [(c.variant, c.depth, c.runs) for c in cells] == [
        ("gcn", 2, 3), ("gcn", 3, 3), ("nodenorm1", 2, 3), ("nodenorm1", 3, 3)]


def test_sweep_records_failed_cells_and_carries_on(monkeypatch):
    from nodenorm.experiment import runner

    real = runner.train

    def flaky(config):
        if config.variant == "nodenorm1":
            raise FloatingPointError("diverged")
        return real(config)

    monkeypatch.setattr(runner, "train", flaky)
    bad = sweep(small_config(epochs=3), [3], [0], ["gcn", "nodenorm1"])
    assert [r.status for r in bad] == ["ok", "failed"]
    assert "FloatingPointError" in bad[1].error
    assert aggregate(bad)[1].failed == 1
    cell = aggregate(bad)[1]
    assert cell.runs == 1 and np.isnan(cell.mean)


def test_sweep_rejects_bad_config_up_front():
    with pytest.raises(ConfigError):
        sweep(small_config(epochs=3, hidden_dim=1), [3], [0], ["gcn", "nodenorm1"])


def test_aggregate_duplicates_have_zero_std_and_are_order_free():
    recs = sweep(small_config(epochs=3), [2], [0, 0, 1], ["gcn"])
    same = aggregate(recs[:2])[0]
    assert same.std == 0.0
    assert aggregate(recs) == aggregate(list(reversed(recs)))


def test_parallel_sweep_matches_serial():
    args = (small_config(epochs=3), [2, 3], [0, 1], ["gcn"])
    serial = sweep(*args)
    parallel = sweep(*args, workers=2)
    assert [r.test_acc for r in serial] == [r.test_acc for r in parallel]


# reports ---------------------------------------------------------------------------

def test_fmt_is_shortest_roundtrip():
    for x in (0.1, 1 / 3, 2.0 ** -1074, 1e300, 0.8):
        assert float(fmt(x)) == x
        assert len(fmt(x).replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17
    assert fmt(0.1) == "0.1" and fmt(float("nan")) == "nan" and fmt(True) == "true"


def test_emit_reports(tmp_path):
    recs = sweep(small_config(epochs=5), [2, 3], [0, 1], ["gcn", "nodenorm1"])
    manifest = emit_reports(recs, tmp_path / "a")
    emit_reports(list(reversed(recs)), tmp_path / "b")
    for name in ("results.csv", "aggregate.csv", "bins.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for name in ("accuracy_vs_depth.svg", "variance_profile.svg", "bin_gaps.svg"):
        assert name in manifest["files"]
        text = (tmp_path / "a" / name).read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text
    assert (tmp_path / "a" / "accuracy_vs_depth.svg").read_bytes() == (tmp_path / "b" / "accuracy_vs_depth.svg").read_bytes()
    assert len((tmp_path / "a" / "results.csv").read_text().splitlines()) == 9
    assert len(list((tmp_path / "a" / "records").glob("*.json"))) == 8
    assert len((tmp_path / "a" / "bins.csv").read_text().splitlines()) == 1 + 2 * 5
    loaded = load_records(tmp_path / "a")
    assert sorted(r.test_acc for r in loaded) == sorted(r.test_acc for r in recs)


def test_emit_reports_single_record_and_skipped_figures(tmp_path):
    rec = train(small_config(epochs=2, diagnostics={"variance": False}))
    manifest = emit_reports([rec], tmp_path)
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 2
    assert "variance_profile.svg" in manifest["skipped"] and "bin_gaps.svg" in manifest["skipped"]
    assert not (tmp_path / "variance_profile.svg").exists()
    with pytest.raises(ValueError):
        emit_reports([], tmp_path)


# checkpoint ------------------------------------------------------------------------

def test_checkpoint_roundtrip_and_layout(tmp_path):
    _, model, _ = train_model(small_config(variant="layernorm", epochs=2))
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    loaded = load_checkpoint(path)
    assert parameters_equal(model, loaded) and loaded.spec == model.spec

    blob = path.read_bytes()
    magic, version, hlen = struct.unpack_from("<4sIQ", blob)
    header = json.loads(blob[16:16 + hlen])
    assert magic == MAGIC and version == 1 and header["model"]["norm"] == "layernorm"
    payload = np.frombuffer(blob, dtype="<f8", offset=16 + hlen)
    assert payload.size == sum(p.data.size for p in model.parameters())
    first = header["tensors"][0]
    npt.assert_array_equal(payload[:first["count"]].reshape(first["shape"]), model.weights[0].data)


def test_checkpoint_rejects_garbage(tmp_path):
    from nodenorm.errors import DataError

    (tmp_path / "x.ckpt").write_bytes(b"nope" + bytes(20))
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "x.ckpt")


# CLI ----------------------------------------------------------------------------------

@pytest.fixture
def bundle(tmp_path):
    assert main(["gen-sbm", "--blocks", "3", "--nodes-per-block", "20", "--p-in", "0.3", "--p-out", "0.02",
                 "--out", str(tmp_path / "sbm")]) == 0
    return tmp_path / "sbm"


def write_config(tmp_path, **kw):
    cfg = {"dataset": str(tmp_path / "sbm"), "split": {"kind": "per_class", "k": 4, "val_size": 10, "test_size": 20},
           "depth": 3, "hidden_dim": 8, "epochs": 5}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_cli_gen_sbm(bundle):
    ds = load_bundle(bundle)
    assert (ds.n, ds.num_classes) == (60, 3)


def test_cli_train_and_diagnose(tmp_path, bundle, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--set", "variant=nodenorm1", "--out", str(out)]) == 0
    assert (out / "model.ckpt").exists() and (out / "results.csv").exists()
    assert "nodenorm1" in (out / "results.csv").read_text()

    shallow = tmp_path / "shallow"
    assert main(["train", "--config", str(cfg), "--set", "depth=2", "--out", str(shallow), "--no-figures"]) == 0
    diag = tmp_path / "diag"
    assert main(["diagnose", "--checkpoint", str(out / "model.ckpt"), "--dataset", str(bundle),
                 "--shallow-checkpoint", str(shallow / "model.ckpt"), "--out", str(diag)]) == 0
    report = json.loads((diag / "diagnostics.json").read_text())
    assert report["lipschitz"]["mode"] == "all-pairs"
    assert sum(report["bins"]["sizes"]) == 60
    npt.assert_allclose(10.0 ** np.array(report["variance"]["max_log10"][:2]), 1.0, rtol=1e-9)


def test_cli_sweep(tmp_path, bundle):
    cfg = write_config(tmp_path, epochs=2)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--depths", "2,3", "--seeds", "0..1", "--variants", "gcn,pgcn",
                 "--out", str(out), "--no-figures"]) == 0
    assert len((out / "results.csv").read_text().splitlines()) == 9


def test_cli_exit_codes(tmp_path, bundle):
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    assert main(["train"]) == 1
    assert main(["bogus"]) == 1
    assert main(["train", "--config", str(write_config(tmp_path, epochs=0)), "--out", str(tmp_path / "o")]) == 1
    assert main(["sweep", "--config", str(write_config(tmp_path)), "--depths", "2", "--seeds", "0",
                 "--variants", "nope", "--out", str(tmp_path / "o")]) == 1
    missing = write_config(tmp_path, dataset=str(tmp_path / "nowhere"))
    assert main(["train", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert main(["gen-sbm", "--blocks", "2", "--nodes-per-block", "3", "--p-in", "0.1", "--p-out", "0.5",
                 "--out", str(tmp_path / "x")]) == 1

    # a checkpoint whose input width does not fit the dataset fails at run time
    other = generate_sbm(2, 5, 0.5, 0.1, feature_dim=7, rng=np.random.default_rng(0))
    save_bundle(other, tmp_path / "other")
    assert main(["train", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "run")]) == 0
    assert main(["diagnose", "--checkpoint", str(tmp_path / "run" / "model.ckpt"), "--dataset",
                 str(tmp_path / "other"), "--out", str(tmp_path / "d")]) == 3
