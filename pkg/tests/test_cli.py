"""Tests for the command-line entry point."""

import io
import json
import sys

import pytest

from src.core.config import parse_config
from src.core.log import configure_logging
from src.core.simulation import run_experiment
from src.scripts.cli import main, parse_args


@pytest.fixture(autouse=True)
def _restore_logging():
    yield
    configure_logging("WARNING")


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


EXPERIMENT = {
    "task": {"num_classes": 3, "input_dim": 4, "samples_per_class_train": 30, "samples_per_class_test": 10},
    "model": {"kind": "logistic-regression", "input_dim": 4, "num_classes": 3},
    "train": {"local_epochs": 1},
    "rounds": 2,
    "clients_per_round": 4,
    "n_clients_total": 6,
    "adversary": {"n_benign": 6, "n_fake": 2, "attack": {"kind": "fake-mpaf"}},
    "aggregator": {"kind": "median"},
    "dirichlet_beta": 100.0,
    "seeds": [0, 1],
}


class TestCli:
    """Test the run, sweep and cost subcommands."""

    def test_parse_args(self):
        """Subcommand arguments are parsed."""
        args = parse_args(["run", "--config", "x.json", "--seed", "3"])
        assert args.command == "run"
        assert args.seed == 3
        assert args.out is None

    def test_cost(self, tmp_path, capsys):
        """The cost table prints one row per scenario."""
        path = _write(
            tmp_path / "cost.json",
            {"scenarios": [{"name": "compromised", "n_compromised": 100, "n_fake": 0}, {"name": "fake", "n_fake": 100}]},
        )
        assert main(["cost", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "compromised" in out
        assert "10000" in out

    def test_run(self, tmp_path, capsys):
        """run writes the report and prints a summary."""
        out_dir = tmp_path / "out"
        assert main(["run", "--config", _write(tmp_path / "exp.json", EXPERIMENT), "--seed", "0", "--out", str(out_dir)]) == 0
        assert (out_dir / "summary.json").exists()
        assert (out_dir / "rounds.csv").exists()
        assert "EXPERIMENT SUMMARY" in capsys.readouterr().out

    def test_sweep(self, tmp_path):
        """sweep writes per-seed round files."""
        out_dir = tmp_path / "out"
        assert main(["sweep", "--config", _write(tmp_path / "exp.json", EXPERIMENT), "--out", str(out_dir)]) == 0
        assert (out_dir / "rounds_seed1.csv").exists()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        """Invalid documents exit with status 2 and a message."""
        doc = dict(EXPERIMENT)
        del doc["rounds"]
        assert main(["run", "--config", _write(tmp_path / "bad.json", doc), "--seed", "0"]) == 2
        assert "missing field: rounds" in capsys.readouterr().err

    def test_missing_config_exit_code(self, tmp_path, capsys):
        """A missing file exits with status 2."""
        assert main(["cost", "--config", str(tmp_path / "absent.json")]) == 2
        assert "config not found" in capsys.readouterr().err

    def test_logging_survives_stream_swap(self, tmp_path, monkeypatch):
        """Events logged after main() returns go to the current stderr."""
        config = _write(tmp_path / "exp.json", EXPERIMENT)
        assert main(["--log-level", "INFO", "run", "--config", config, "--seed", "0", "--out", str(tmp_path / "a")]) == 0
        stream = io.StringIO()
        monkeypatch.setattr(sys, "stderr", stream)
        run_experiment(parse_config(EXPERIMENT), 1)
        assert "experiment_completed" in stream.getvalue()
