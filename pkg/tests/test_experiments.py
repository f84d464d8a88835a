import json
import os

import pytest

from maxlow import ConfigError
from maxlow.cli import main
from maxlow.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    run_experiment,
)


def test_known_experiment_names():
    assert "spectrum" in EXPERIMENTS
    assert len(EXPERIMENTS) == 8


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("definitely-not-an-experiment", 1)


def test_missing_seed_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("spectrum", None)


def test_zero_frequency_entry_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("lowfreq-sweep", 1, params={"omegas": [1.0, 0.0]})


def test_empty_frequency_list_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("limabs-sweep", 1, params={"deltas": []})


def test_nonpositive_tolerance_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("static-solve", 1, params={"tol": -1e-8})


def test_from_json_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "experiment": "spectrum",
        "seed": 5,
        "params": {"geometry": "cavity"},
    }))
    cfg = ExperimentConfig.from_json(str(path))
    assert cfg.experiment == "spectrum"
    assert cfg.seed == 5
    assert cfg.params["geometry"] == "cavity"


def test_from_json_requires_seed(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "spectrum"}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(str(path))


def test_spectrum_run_writes_versioned_csv(tmp_path):
    cfg = ExperimentConfig("spectrum", 3, out_dir=str(tmp_path))
    result = run_experiment(cfg)
    assert result.passed
    csv = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert csv[0] == "# maxlow-csv v1"
    summary = json.loads((tmp_path / "spectrum.summary.json").read_text())
    assert summary["passed"] is True


def test_same_seed_gives_identical_artifacts(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        run_experiment(ExperimentConfig("spectrum", 11, out_dir=str(out)))
    assert (out1 / "spectrum.csv").read_bytes() == (out2 / "spectrum.csv").read_bytes()


def test_cli_success_exit_code(tmp_path, capsys):
    code = main(["spectrum", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert any(": pass" in ln for ln in lines)


def test_cli_missing_seed_is_config_error(capsys):
    assert main(["spectrum"]) == 2


def test_cli_mismatched_config_experiment(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "spectrum", "seed": 1}))
    out = tmp_path / "out"
    code = main(["static", "--config", str(path), "--out", str(out)])
    assert code == 2
    summary = json.loads((out / "static-solve.summary.json").read_text())
    assert summary["passed"] is False
    assert "error" in summary


def test_cli_error_summary_written_without_run(tmp_path):
    code = main(["spectrum", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)])
    assert code == 2
    assert os.path.exists(tmp_path / "spectrum.summary.json")
