import csv
import json

import numpy as np
import pytest

from qsbo.applications import (
    DEFAULTS, ConfigError, ExperimentConfig, OracleMismatch, Row, _check_row,
    newsvendor_distribution, newsvendor_oracle, portfolio_classical_table, portfolio_distribution,
    portfolio_objective_oracle, quadratic_oracle, quadratic_sweep, report_qubit_budget,
    run_experiment, toy_distribution, write_outputs, write_rows,
)
from qsbo.encoders import newsvendor_cost, table_one_total


def test_defaults_fill_unset_fields():
    cfg = ExperimentConfig("newsvendor")
    for key, value in DEFAULTS["newsvendor"].items():
        assert getattr(cfg, key) == value
    assert ExperimentConfig("newsvendor", c=0.01).c == 0.01


@pytest.mark.parametrize("app,changes,field", [
    ("quadratic-continuous", dict(c=-1.0), "c"),
    ("quadratic-continuous", dict(c=1.0), "c"),
    ("quadratic-continuous", dict(estimator="bayes"), "estimator"),
    ("quadratic-continuous", dict(m=0), "m"),
    ("quadratic-continuous", dict(shots=0), "shots"),
    ("quadratic-continuous", dict(mle_powers=[2, 1]), "mle_powers"),
    ("quadratic-continuous", dict(lower=3.0), "upper"),
    ("quadratic-continuous", dict(mode="walk"), "mode"),
    ("quadratic-continuous", dict(seed=-1), "seed"),
    ("quadratic-discrete", dict(k=0), "k"),
    ("newsvendor", dict(p_buy=0.6), "p_sell"),
    ("newsvendor", dict(n=5), "n"),
    ("portfolio", dict(alpha=1.5), "alpha"),
    ("portfolio", dict(mu=[0.1]), "mu"),
    ("portfolio", dict(lower=0.5), "lower"),
    ("portfolio", dict(q=-1.0), "q"),
])
def test_validation_names_field(app, changes, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(app, **changes)
    assert info.value.field == field


def test_unknown_application_and_key():
    with pytest.raises(ConfigError):
        ExperimentConfig("bakery")
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"application": "newsvendor", "colour": 1})
    assert info.value.field == "colour"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


@pytest.mark.parametrize("app", list(DEFAULTS))
def test_json_round_trip(app):
    cfg = ExperimentConfig(app, seed=7)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_same_seed_same_summary():
    cfg = ExperimentConfig("quadratic-continuous", restarts=1, max_evals=12, seed=3)
    a = json.dumps(run_experiment(cfg).summary(), sort_keys=True)
    b = json.dumps(run_experiment(ExperimentConfig.from_json(cfg.to_json())).summary(),
                   sort_keys=True)
    assert a == b


def test_budgets_match_circuits():
    assert report_qubit_budget("quadratic-continuous")["total"] == 3
    assert report_qubit_budget("quadratic-discrete", 2, 2)["total"] == 5
    assert report_qubit_budget("newsvendor", n=3)["total"] == 8
    port = report_qubit_budget("portfolio", 2, 2)
    assert (port["total"], port["expectation_width"]) == (13, 12)
    for k, n in [(1, 2), (2, 2), (2, 3)]:
        assert report_qubit_budget("portfolio", k, n)["total"] == table_one_total(k, n)
    with pytest.raises(ValueError):
        report_qubit_budget("bakery")


def test_check_row_raises_on_mismatch():
    _check_row(Row(0, 1.0, 1.0 + 1e-9, 1), 1e-6, "ok")
    with pytest.raises(OracleMismatch):
        _check_row(Row(0, 1.0, 1.1, 1), 1e-6, "bad")


def test_quadratic_oracle_independent():
    cfg = ExperimentConfig("quadratic-continuous")
    d = toy_distribution(cfg)
    x = np.linspace(0, 2, 4)
    w = np.exp(-0.5 * (x - 1) ** 2)
    w /= w.sum()
    for y in (0.0, 0.5, 1.0, 1.7):
        assert quadratic_oracle(d, y) == pytest.approx(float(np.sum(w * (x - y) ** 2)), abs=1e-12)
    # symmetric distribution: minimum at the mean
    assert quadratic_oracle(d, 1.0) < min(quadratic_oracle(d, 0.95), quadratic_oracle(d, 1.05))


def test_canonical_sweep_on_sine_grid():
    cfg = ExperimentConfig("quadratic-continuous", c=0.2, sweep_points=11)
    grid = np.sin(np.arange(32) * np.pi / 32) ** 2 / cfg.c ** 2
    for r in quadratic_sweep(cfg, "canonical"):
        assert np.min(np.abs(grid - r.estimate)) < 1e-9
        assert r.queries == 32


def test_exact_sweep_within_sine_bound():
    cfg = ExperimentConfig("quadratic-continuous", estimator="exact", c=0.1)
    d = toy_distribution(cfg)
    for r in quadratic_sweep(cfg, "exact"):
        # x^2 - sin^2(x) <= x^4 / 3
        f_max = np.max((d.values - r.param) ** 2)
        assert 0 <= r.exact - r.estimate <= cfg.c ** 2 * f_max ** 2 / 3 + 1e-12


def test_newsvendor_oracle_recomputed():
    cfg = ExperimentConfig("newsvendor")
    d = newsvendor_distribution(cfg)
    g, p = d.values, d.probabilities
    table = newsvendor_oracle(cfg)
    for s in range(8):
        direct = sum(pi * (0.2 * (g[s] - gi) if gi < g[s] else (gi - g[s]) * (0.5 - 0.2))
                     for gi, pi in zip(g, p))
        assert table[s] == pytest.approx(direct, abs=1e-12)
    assert newsvendor_cost(3.0, 1.0, 0.2, 0.5) == pytest.approx(0.4)
    assert newsvendor_cost(1.0, 3.0, 0.2, 0.5) == pytest.approx(0.6)
    assert int(np.argmin(table)) == 2


def test_newsvendor_sweep_rows():
    rec = run_experiment(ExperimentConfig("newsvendor", mode="sweep"))
    rows = rec.rows["candidates"]
    assert [r.param for r in rows] == list(range(8))
    for r in rows:
        assert abs(r.estimate - r.exact) < 1e-3
    assert rec.incumbent_params == [2]
    assert rec.extra["classical_argmin"] == 2


def test_portfolio_oracle_brute_force():
    cfg = ExperimentConfig("portfolio")
    d = portfolio_distribution(cfg)
    vals = d.joint_values()
    p = d.probabilities
    expected = []
    for yv in range(4):
        y = np.array([yv & 1, (yv >> 1) & 1])
        ret = vals @ y
        order = np.argsort(ret, kind="stable")
        cdf = np.cumsum(p[order])
        var_ = ret[order][np.flatnonzero(cdf >= cfg.alpha - 1e-12)[0]]
        expected.append(p @ ret - cfg.q * var_)
    assert portfolio_classical_table(cfg) == pytest.approx(expected, abs=1e-12)
    mix = np.array([0.25, 0.25, 0.25, 0.25])
    assert np.isfinite(portfolio_objective_oracle(cfg, mix))


def test_portfolio_sweep_rows():
    cfg = ExperimentConfig("portfolio", mode="sweep")
    rec = run_experiment(cfg)
    table = portfolio_classical_table(cfg)
    for r in rec.rows["candidates"]:
        assert r.exact == pytest.approx(table[r.param], abs=1e-12)
        assert abs(r.estimate - r.exact) < 0.01
    assert rec.qubit_budget["total"] == 13


def test_write_rows_format(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(path, [Row(0.5, 1 / 3, 2.0, 7), Row(np.array([1.0, 2.0]), 0.0, 1e-20, 0)])
    lines = list(csv.reader(open(path)))
    assert lines[0] == ["param", "estimate", "exact", "queries"]
    assert lines[1] == ["0.5", "0.333333333333", "2", "7"]
    assert lines[2] == ["1 2", "0", "1e-20", "0"]


def test_write_outputs(tmp_path):
    rec = run_experiment(ExperimentConfig("newsvendor", mode="sweep"))
    paths = write_outputs(rec, tmp_path / "out" / "nv")
    names = sorted(p.name for p in paths)
    assert names == ["nv.json", "nv_candidates.csv"]
    summary = json.loads((tmp_path / "out" / "nv.json").read_text())
    for key in ("config_echo", "incumbent", "solution_distribution", "qubit_budget",
                "trace_length", "total_queries", "seed"):
        assert key in summary


@pytest.mark.slow
def test_quadratic_discrete_finds_one():
    rec = run_experiment(ExperimentConfig("quadratic-discrete", restarts=1))
    assert rec.extra["solution"]["y"] == pytest.approx(1.0)
    assert rec.extra["solution"]["probability"] > 0.5
