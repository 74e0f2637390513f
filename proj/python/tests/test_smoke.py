"""End-to-end smoke of the python bindings on a tiny synthetic corpus."""

import json
import os

import pytest

import itdgraph as g


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("itdgraph")


@pytest.fixture(scope="module")
def overrides(workdir):
    out = workdir / "out"
    return [
        f"out_dir={out}",
        f"data_dir={out}/dataset",
        "synth.n_users=2",
        "synth.days=5",
        "synth.seed=11",
        "synth.anomaly_rate=0.05",
        "train.epochs=1",
        "train.batch_size=16",
        "train.val_fraction=0",
    ]


def test_version_and_codes():
    assert g.version() == "1.0.0"
    assert g.N_CODES == 192
    assert g.encode_code(0, 0) == 0
    assert g.encode_code(3, 10) == 82
    assert g.encode_code(7, 23) == 191
    with pytest.raises(ValueError):
        g.encode_code(8, 0)
    with pytest.raises(ValueError):
        g.encode_code(0, 24)


def test_default_config_is_json():
    cfg = json.loads(g.default_config())
    assert cfg["model"]["feature_dim"] == 54
    assert cfg["train"]["learning_rate"] == pytest.approx(1e-4)
    assert cfg["prep"]["max_subsession"] == 50


def test_config_hash_tracks_overrides():
    assert g.config_hash() == g.config_hash()
    assert g.config_hash() != g.config_hash(overrides=["train.seed=43"])
    with pytest.raises(ValueError):
        g.config_hash(overrides=["bogus.key=1"])


def test_detection_helpers():
    assert g.auc([0.1, 0.2, 0.9, 0.8], [True, True, False, False]) == 1.0
    assert g.auc([0.5, 0.5], [True, False]) == 0.5
    assert g.auc([0.5, 0.5], [False, False]) is None
    tau = g.select_threshold([0.1, 0.4, 0.6, 0.9], [False] * 4, 0.25)
    assert tau == 0.4


def test_full_pipeline(workdir, overrides):
    out = str(workdir / "out")

    synth = g.synth(overrides=overrides)
    assert synth["exit_code"] == 0
    assert os.path.exists(f"{out}/dataset/logon.csv")

    prepared = g.prepare(overrides=overrides)
    assert prepared["exit_code"] == 0
    stats = json.load(open(f"{out}/prepare_stats.json"))
    assert stats["masked_sequences"] > 0

    trained = g.train(overrides=overrides)
    assert trained["exit_code"] == 0
    assert os.path.exists(f"{out}/checkpoint.bin")

    evaluated = g.evaluate(f"{out}/checkpoint.bin", overrides=overrides)
    assert evaluated["exit_code"] == 0
    report = json.load(open(f"{out}/report.json"))
    assert set(report) >= {"auc", "dr", "fpr", "tau", "tp", "fp", "tn", "fn"}

    tau = report["tau"]
    detected = g.detect(
        f"{out}/checkpoint.bin",
        f"{out}/dataset",
        overrides=overrides + [f"detect.tau={tau}"],
    )
    assert detected["exit_code"] == 0
    flagged = open(f"{out}/flagged.csv").read().strip().splitlines()
    assert flagged[0] == "id,user,y_m,anomaly_score"
    # strict comparison reproduces eval's confusion counts
    assert len(flagged) - 1 == report["tp"] + report["fp"]


def test_detect_requires_threshold(workdir, overrides):
    with pytest.raises(ValueError):
        g.detect(
            str(workdir / "out" / "checkpoint.bin"),
            str(workdir / "out" / "dataset"),
            overrides=overrides,
        )


def test_errors_are_typed(workdir):
    with pytest.raises(RuntimeError):
        g.evaluate(str(workdir / "missing.bin"))
    with pytest.raises(ValueError):
        g.synth(overrides=["no_equals_sign"])
