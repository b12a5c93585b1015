import json

import pytest

from qsbo import applications
from qsbo.cli import main


def test_budget_command(capsys):
    assert main(["budget", "portfolio", "--k", "2", "--n", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["total"] == 13 and out["expectation_width"] == 12


def test_budget_newsvendor(capsys):
    assert main(["budget", "newsvendor", "--n", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["total"] == 8


def test_run_prints_summary(capsys):
    assert main(["run", "newsvendor", "--sweep", "--seed", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["seed"] == 4 and out["incumbent"]["params"] == [2]


def test_run_writes_outputs(tmp_path):
    prefix = tmp_path / "res"
    assert main(["run", "newsvendor", "--sweep", "--out", str(prefix)]) == 0
    assert (tmp_path / "res.json").exists()
    assert (tmp_path / "res_candidates.csv").read_text().startswith("param,estimate,exact,queries")


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = applications.ExperimentConfig("newsvendor", mode="sweep", c=0.002)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert main(["run", "newsvendor", "--config", str(path), "--seed", "9"]) == 0
    echo = json.loads(capsys.readouterr().out)["config_echo"]
    assert echo["c"] == 0.002 and echo["seed"] == 9


@pytest.mark.parametrize("argv", [
    ["run", "newsvendor", "--m", "0"],
    ["run", "newsvendor", "--shots", "0"],
    ["run", "newsvendor", "--config", "/nonexistent/cfg.json"],
    ["budget", "portfolio", "--k", "9"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_config_for_other_application(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(applications.ExperimentConfig("portfolio").to_json())
    assert main(["run", "newsvendor", "--config", str(path)]) == 2


def test_bad_choice_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run", "newsvendor", "--estimator", "bayes"])
    assert info.value.code == 2


def test_oracle_mismatch_exit_3(monkeypatch, capsys):
    def broken(cfg):
        raise applications.OracleMismatch("s=0: estimate 1 vs oracle 2")

    monkeypatch.setitem(applications.RUNNERS, "newsvendor", broken)
    assert main(["run", "newsvendor", "--sweep"]) == 3
    assert "oracle mismatch" in capsys.readouterr().err
