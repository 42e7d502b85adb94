"""Tests for the command-line surface: outputs, manifests and exit codes."""
from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import pandas as pd
import pytest

from src.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, manifest_path
from src.mls import mls_landscape
from src.settings import apply_overrides, load_raw_config
from src.vmf import SphereConfig

ONE_CELL = [
    "--set", "d=16", "--set", "r=2",
    "--set", "kappa_min=5", "--set", "kappa_max=5", "--set", "kappa_count=1",
    "--set", "cos_min=0.3", "--set", "cos_max=0.3", "--set", "cos_count=1",
]
SMALL_TRAIN = [
    "--set", "d=4", "--set", "hidden_dim=8", "--set", "batch_size=4", "--set", "negatives=3",
    "--set", "dataset.input_dim=6", "--set", "dataset.pool_size=64", "--set", "dataset.eval_size=16",
]


def test_single_cell_sweep_matches_library(tmp_path):
    out = tmp_path / "landscape.csv"
    assert main(["sweep", "--out", str(out), *ONE_CELL]) == EXIT_OK
    frame = pd.read_csv(out, float_precision="round_trip")
    assert list(frame.columns) == ["kappa_i", "kappa_j", "cos_theta", "s"]
    assert len(frame) == 1
    row = frame.iloc[0]
    expected = mls_landscape(row.kappa_i, row.kappa_j, row.cos_theta, SphereConfig(d=16, r=2.0))
    assert row.s == expected


def test_sweep_is_byte_identical_across_runs_and_manifest_replays(tmp_path):
    args = ["--set", "d=8", "--set", "kappa_count=5", "--set", "cos_count=7"]
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    replay = tmp_path / "c.csv"
    assert main(["sweep", "--out", str(first), *args]) == EXIT_OK
    assert main(["sweep", "--out", str(second), *args]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert b"\r" not in first.read_bytes()

    manifest = json.loads(manifest_path(first).read_text(encoding="utf-8"))
    assert manifest["subcommand"] == "sweep"
    assert manifest["config"]["d"] == 8
    assert main(["sweep", "--config", str(manifest_path(first)), "--out", str(replay)]) == EXIT_OK
    assert replay.read_bytes() == first.read_bytes()


def test_sweep_orderings_use_configured_concentrations(tmp_path, monkeypatch):
    import src.mlflow_logging as tracking

    logged = []
    monkeypatch.setattr(tracking, "log_sweep_run", lambda config, shape, orderings, path: logged.append(orderings))
    args = ["--set", "kappa_count=2", "--set", "cos_count=2"]
    assert main(["sweep", "--out", str(tmp_path / "default.csv"), *args]) == EXIT_OK
    small = tmp_path / "small.csv"
    assert main(["sweep", "--out", str(small), *args, "--set", "orderings_kappa_high_disagree=50"]) == EXIT_OK

    assert logged[0]["confident_disagreement"] is True
    assert logged[1]["confident_disagreement"] is False
    assert logged[1]["confident_agreement"] is True
    manifest = json.loads(manifest_path(small).read_text(encoding="utf-8"))
    assert manifest["config"]["orderings_kappa_high_disagree"] == 50.0


def test_zero_step_training_writes_header_only_history(tmp_path):
    out = tmp_path / "history.csv"
    assert main(["train", "--out", str(out), "--set", "steps=0", *SMALL_TRAIN]) == EXIT_OK
    assert out.read_text(encoding="utf-8") == "step,loss,alignment,uniformity,mean_kappa_low,mean_kappa_high\n"
    assert (tmp_path / "history.state.npz").exists()


@pytest.mark.parametrize("similarity", ["inner", "mls"])
def test_short_training_run(tmp_path, similarity):
    out = tmp_path / f"{similarity}.csv"
    code = main([
        "train", "--out", str(out), "--similarity", similarity, "--seed", "3",
        "--set", "steps=20", "--set", "log_every=10", *SMALL_TRAIN,
    ])
    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert frame["step"].tolist() == [0, 10, 20]
    manifest = json.loads(manifest_path(out).read_text(encoding="utf-8"))
    assert manifest["seed"] == 3
    assert manifest["config"]["similarity"] == ("scaled_inner_product" if similarity == "inner" else "mls")


def test_training_replay_from_manifest_is_identical(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["train", "--out", str(out), "--seed", "8", "--set", "steps=6", "--set", "log_every=3", *SMALL_TRAIN]) == EXIT_OK
    replay = tmp_path / "replay.csv"
    assert main(["train", "--config", str(manifest_path(out)), "--out", str(replay)]) == EXIT_OK
    assert replay.read_bytes() == out.read_bytes()


@pytest.mark.parametrize(
    "command, overrides",
    [
        ("sweep", ["d=1"]),
        ("sweep", ["tau=0.1", "r=2"]),
        ("sweep", ["kappa_min=-1"]),
        ("sweep", ["kappa_min=10", "kappa_max=1"]),
        ("sweep", ["no_such_field=3"]),
        ("sweep", ["cos_min=-2"]),
        ("train", ["kappa_init=1e5"]),
        ("train", ["similarity=cosine"]),
        ("check", ["suites=[\"nope\"]"]),
        ("check", ["malformed"]),
    ],
)
def test_invalid_configuration_exits_with_usage_error(tmp_path, command, overrides):
    args = [command, "--out", str(tmp_path / "out.csv")]
    for item in overrides:
        args += ["--set", item]
    assert main(args) == EXIT_USAGE


def test_unknown_subcommand_and_help_exit_codes():
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_missing_config_file_is_a_usage_error(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_check_subset_passes(tmp_path):
    out = tmp_path / "report.csv"
    code = main([
        "check", "--out", str(out),
        "--set", 'suites=["temperature_equivalence", "landscape_orderings"]',
        "--set", "equivalence_batches=10",
    ])
    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["check", "instances", "max_err", "threshold", "pass"]
    assert frame["pass"].all()


def test_failing_check_exits_with_failure_and_prints_the_instance(tmp_path, capsys):
    out = tmp_path / "report.csv"
    code = main([
        "check", "--out", str(out),
        "--set", 'suites=["mls_grad"]', "--set", "mls_grad_instances=2", "--set", "grad_rtol=1e-30",
    ])
    assert code == EXIT_FAILURE
    err = capsys.readouterr().err
    assert "First failing instance of 'mls_grad'" in err
    assert '"kappa_a"' in err


def test_overrides_and_manifest_loading(tmp_path):
    data = apply_overrides({"dataset": {"noise_high": 2.0}}, ["dataset.noise_high=3", "similarity=inner", "lr=0.1"])
    assert data == {"dataset": {"noise_high": 3}, "similarity": "inner", "lr": 0.1}
    with pytest.raises(ValueError):
        apply_overrides({}, ["=3"])

    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps({"d": 4}), encoding="utf-8")
    assert load_raw_config(plain) == ({"d": 4}, None)
    manifest = tmp_path / "run.manifest.json"
    manifest.write_text(json.dumps({"subcommand": "train", "seed": 17, "config": {"d": 4}}), encoding="utf-8")
    assert load_raw_config(manifest) == ({"d": 4}, 17)


def test_shipped_config_files_validate():
    from src.settings import build_config

    data_dir = Path(__file__).resolve().parent.parent / "data"
    for command, name in [("sweep", "sweep_default.json"), ("train", "train_default.json"), ("check", "check_quick.json")]:
        raw, seed = load_raw_config(data_dir / name)
        assert seed is None
        build_config(command, raw)
