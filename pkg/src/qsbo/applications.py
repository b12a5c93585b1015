"""End-to-end experiments: toy quadratic, newsvendor and portfolio selection.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a
:class:`ResultRecord` holding per-evaluation rows (estimate next to the
classical oracle) and a summary.  Every estimate is produced by simulating
an A-operator and running the configured amplitude estimator; the oracle
column is plain classical summation over the discretised distribution.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arithmetic import sum_register_width
from .encoders import (
    decode_quadratic, encode_newsvendor, encode_portfolio_cdf, encode_portfolio_return,
    encode_quadratic, encode_quadratic_discrete, newsvendor_bounds, newsvendor_cost,
    portfolio_bounds, var_search,
)
from .estimation import (
    CanonicalEstimator, EstimationResult, ExactEstimator, MLEEstimator, MLESchedule,
)
from .library import (
    AnsatzSpec, DiscretizedDistribution, discretize_lognormal_multivariate, discretize_normal,
    trial_state,
)
from .optimizer import (
    MAXIMIZE, MINIMIZE, ObjectiveEvaluator, OptimizationRun, OptimizerConfig,
    discrete_solution_distribution, extract_solution, optimize,
)
from .statevector import Circuit, ShotSampler, x

logger = logging.getLogger(__name__)

APPLICATIONS = ("quadratic-continuous", "quadratic-discrete", "newsvendor", "portfolio")
ESTIMATORS = ("canonical", "mle", "exact")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class OracleMismatch(RuntimeError):
    pass


_TOY_POWERS = (0, 1, 2, 4, 8, 16, 32, 64, 128)

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "quadratic-continuous": dict(
        mu=1.0, sigma=1.0, lower=0.0, upper=2.0, n=2, c=0.082, estimator="mle", m=5,
        mle_powers=list(_TOY_POWERS), shots=1024, mode="optimize", sweep_points=41,
        restarts=3, rho_begin=0.5, rho_end=1e-4, max_evals=500),
    "quadratic-discrete": dict(
        mu=1.0, sigma=1.0, lower=0.0, upper=2.0, n=2, c=0.082, estimator="mle", m=5,
        mle_powers=list(_TOY_POWERS), shots=1024, mode="optimize", k=2, reps=2,
        y_lower=0.0, y_upper=3.0, restarts=3, rho_begin=1.0, rho_end=1e-4, max_evals=500),
    "newsvendor": dict(
        mu=2.0, sigma=1.0, lower=0.0, upper=7.0, n=3, c=1e-3, estimator="exact", m=5,
        mle_powers=[0, 1, 2, 4, 8], shots=1024, mle_exact=True, mode="optimize",
        p_buy=0.2, p_sell=0.5, reps=2, restarts=5, rho_begin=1.0, rho_end=1e-4, max_evals=500),
    "portfolio": dict(
        mu=[0.8, 1.0], cov=[[1.0, -1.0], [-1.0, 10.0]], lower=0.0, upper=1.0, n=2, k=2,
        c=0.02, estimator="exact", m=5, mle_powers=[0, 1, 2, 4, 8], shots=1024, mle_exact=True,
        mode="optimize", q=0.9, alpha=0.05, reps=2, restarts=5, rho_begin=1.0, rho_end=1e-4,
        max_evals=500),
}


@dataclass
class ExperimentConfig:
    """One experiment; unset fields take the application's defaults."""

    application: str
    seed: int = 0
    estimator: Optional[str] = None
    m: Optional[int] = None
    shots: Optional[int] = None
    mle_powers: Optional[List[int]] = None
    mle_exact: Optional[bool] = None
    c: Optional[float] = None
    mu: Any = None
    sigma: Optional[float] = None
    cov: Any = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    n: Optional[int] = None
    k: Optional[int] = None
    reps: Optional[int] = None
    y_lower: Optional[float] = None
    y_upper: Optional[float] = None
    p_buy: Optional[float] = None
    p_sell: Optional[float] = None
    q: Optional[float] = None
    alpha: Optional[float] = None
    mode: Optional[str] = None
    sweep_points: Optional[int] = None
    restarts: Optional[int] = None
    rho_begin: Optional[float] = None
    rho_end: Optional[float] = None
    max_evals: Optional[int] = None

    def __post_init__(self):
        if self.application not in APPLICATIONS:
            raise ConfigError("application", f"must be one of {', '.join(APPLICATIONS)}")
        for key, value in DEFAULTS[self.application].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.mle_exact is None:
            self.mle_exact = False
        self.validate()

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.estimator in ESTIMATORS, "estimator", f"must be one of {', '.join(ESTIMATORS)}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(1 <= self.m <= 10, "m", "evaluation qubits must lie in [1, 10]")
        need(self.shots >= 1, "shots", "must be positive")
        try:
            MLESchedule(tuple(self.mle_powers), self.shots)
        except (TypeError, ValueError) as exc:
            raise ConfigError("mle_powers", str(exc)) from None
        need(self.c > 0, "c", "must be positive")
        need(self.n is not None and 1 <= self.n <= 4, "n", "qubits per dimension must lie in [1, 4]")
        need(self.lower < self.upper, "upper", "must exceed lower")
        need(self.mode in ("sweep", "optimize"), "mode", "must be 'sweep' or 'optimize'")
        need(self.restarts >= 1, "restarts", "must be positive")
        need(0 < self.rho_end < self.rho_begin, "rho_end", "need 0 < rho_end < rho_begin")
        need(self.max_evals >= 3, "max_evals", "must be at least 3")
        if self.application.startswith("quadratic"):
            need(self.sigma > 0, "sigma", "must be positive")
        if self.application == "quadratic-continuous":
            need(self.sweep_points >= 2, "sweep_points", "need at least two points")
            need(self.c * (self.upper - self.lower) <= np.pi / 2, "c",
                 "c (upper - lower) must not exceed pi/2")
        if self.application == "quadratic-discrete":
            need(1 <= self.k <= 4, "k", "must lie in [1, 4]")
            need(self.y_lower < self.y_upper, "y_upper", "must exceed y_lower")
            span = max(self.upper - self.y_lower, self.y_upper - self.lower)
            need(self.c * span <= np.pi / 2, "c", "rotation would exceed pi/2")
        if self.application == "newsvendor":
            need(self.sigma > 0, "sigma", "must be positive")
            need(0 < self.p_buy < self.p_sell, "p_sell", "need 0 < p_buy < p_sell")
        if self.application == "portfolio":
            need(1 <= self.k <= 3, "k", "must lie in [1, 3]")
            need(np.shape(self.mu) == (self.k,), "mu", f"needs {self.k} entries")
            need(np.shape(self.cov) == (self.k, self.k), "cov", f"must be {self.k} x {self.k}")
            need(self.lower == 0, "lower", "portfolio VaR in value units needs a grid starting at 0")
            need(self.q >= 0, "q", "risk factor must be non-negative")
            need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        if self.application in ("quadratic-discrete", "newsvendor", "portfolio"):
            need(self.reps >= 0, "reps", "must be non-negative")

    # serialisation ----------------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        if "application" not in data:
            raise ConfigError("application", "missing")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    # derived objects ----------------------------------------------------------
    def schedule(self) -> MLESchedule:
        return MLESchedule(tuple(self.mle_powers), self.shots)

    def make_estimator(self, kind: Optional[str] = None):
        kind = kind or self.estimator
        if kind == "canonical":
            return CanonicalEstimator(self.m)
        if kind == "mle":
            return MLEEstimator(self.schedule(), exact=self.mle_exact)
        return ExactEstimator()

    def optimizer_config(self, dim: int, initial=None, lower=None, upper=None) -> OptimizerConfig:
        return OptimizerConfig(dim, initial, lower, upper, self.rho_begin, self.rho_end,
                               max(self.max_evals, dim + 2), self.restarts, self.seed)


@dataclass
class Row:
    param: Any
    estimate: float
    exact: float
    queries: int


@dataclass
class ResultRecord:
    application: str
    config: ExperimentConfig
    rows: Dict[str, List[Row]] = field(default_factory=dict)
    incumbent_params: Any = None
    incumbent_value: Optional[float] = None
    incumbent_exact: Optional[float] = None
    solution_distribution: Dict[int, float] = field(default_factory=dict)
    qubit_budget: Dict[str, int] = field(default_factory=dict)
    trace_length: int = 0
    total_queries: int = 0
    run: Optional[OptimizationRun] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        params = self.incumbent_params
        if isinstance(params, np.ndarray):
            params = params.tolist()
        out = {
            "application": self.application,
            "config_echo": self.config.to_dict(),
            "incumbent": {"params": params, "value": self.incumbent_value},
            "solution_distribution": {str(k): v for k, v in self.solution_distribution.items()},
            "qubit_budget": self.qubit_budget,
            "trace_length": self.trace_length,
            "total_queries": self.total_queries,
            "seed": self.config.seed,
        }
        out.update(self.extra)
        return out


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(u) for u in np.ravel(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_rows(path: Path, rows: Sequence[Row]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "estimate", "exact", "queries"])
        for r in rows:
            w.writerow([_fmt(r.param), _fmt(r.estimate), _fmt(r.exact), str(int(r.queries))])


def write_outputs(record: ResultRecord, prefix: Path) -> List[Path]:
    """``<prefix>.json`` plus one ``<prefix>[_<name>].csv`` per row table."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rows in record.rows.items():
        path = prefix.with_name(prefix.name + ("" if name == "main" else f"_{name}") + ".csv")
        write_rows(path, rows)
        written.append(path)
    jpath = prefix.with_name(prefix.name + ".json")
    jpath.write_text(json.dumps(record.summary(), indent=2, sort_keys=True))
    written.append(jpath)
    return written


# Qubit accounting -------------------------------------------------------------------

def report_qubit_budget(application: str, k: int = 2, n: int = 2) -> Dict[str, int]:
    """Per-role qubit counts read off freshly constructed circuits.

    Totals are the widths of the built A-operators (the VaR circuit for the
    portfolio), so the table cannot drift from the implementation.
    """
    if application == "quadratic-continuous":
        d = discretize_normal(1, 1, 0, 2, n)
        width = encode_quadratic(d, 1.0, 0.01).n_state
        budget = {"X": n, "marker": 1}
    elif application == "quadratic-discrete":
        d = discretize_normal(1, 1, 0, 2, n)
        width = encode_quadratic_discrete(d, Circuit(k), 0.0, 2.0, 0.01).n_state
        budget = {"X": n, "y": k, "marker": 1}
    elif application == "newsvendor":
        d = discretize_normal(n / 2, 1, 0, 2 ** n - 1, n)
        enc = encode_newsvendor(d, 0, 0.2, 0.5, 0.01)
        width = enc.problem.n_state
        budget = dict(enc.layout.sizes())
    elif application == "portfolio":
        d = DiscretizedDistribution(np.full(2 ** (n * k), 2.0 ** (-n * k)), (n,) * k,
                                    (0.0,) * k, (1.0,) * k)
        prob, pl = encode_portfolio_cdf(d, Circuit(k), 0)
        width = prob.n_state
        sizes = pl.layout.sizes()
        budget = {"y": sizes["y"], "X": sizes["x"], "marker": sizes["marker"],
                  "sum": sizes["sum"], "compare": 1, "add-ancillas": sizes["add-ancillas"]}
        budget["expectation_width"] = pl.expectation_width
    else:
        raise ValueError(f"unsupported application {application!r}")
    total = sum(v for key, v in budget.items() if key != "expectation_width")
    if total != width:
        raise OracleMismatch(f"budget total {total} differs from circuit width {width}")
    budget["total"] = total
    return budget


def _budget_for(cfg: ExperimentConfig) -> Dict[str, int]:
    k = cfg.k if cfg.k is not None else 2
    return report_qubit_budget(cfg.application, k, cfg.n)


# Quadratic toy ----------------------------------------------------------------------

def toy_distribution(cfg: ExperimentConfig) -> DiscretizedDistribution:
    return discretize_normal(cfg.mu, cfg.sigma, cfg.lower, cfg.upper, cfg.n)


def quadratic_oracle(dist: DiscretizedDistribution, y) -> float:
    return float(np.dot(dist.probabilities, (dist.values - y) ** 2))


def _check_row(row: Row, tol: float, label: str) -> None:
    if abs(row.estimate - row.exact) > tol:
        raise OracleMismatch(f"{label}: estimate {row.estimate:.6g} vs oracle {row.exact:.6g}")


def quadratic_sweep(cfg: ExperimentConfig, estimator_kind: str,
                    ys: Optional[Sequence[float]] = None) -> List[Row]:
    """Objective estimates on a uniform y grid (one independent sampler stream per point)."""
    dist = toy_distribution(cfg)
    if ys is None:
        ys = np.linspace(cfg.lower, cfg.upper, cfg.sweep_points)
    est = cfg.make_estimator(estimator_kind)
    streams = ShotSampler(cfg.seed).spawn(len(ys))
    rows = []
    for y, s in zip(ys, streams):
        res = est(encode_quadratic(dist, float(y), cfg.c), s)
        rows.append(Row(float(y), decode_quadratic(res.estimate, cfg.c),
                        quadratic_oracle(dist, y), res.queries))
    return rows


def quadratic_evaluator(cfg: ExperimentConfig) -> ObjectiveEvaluator:
    dist = toy_distribution(cfg)
    est = cfg.make_estimator()

    def fn(params, seed):
        res = est(encode_quadratic(dist, float(params[0]), cfg.c), ShotSampler(seed))
        return decode_quadratic(res.estimate, cfg.c), res

    return ObjectiveEvaluator(fn, MINIMIZE)


def run_quadratic(cfg: ExperimentConfig) -> ResultRecord:
    if cfg.application == "quadratic-discrete":
        return _run_quadratic_discrete(cfg)
    dist = toy_distribution(cfg)
    rec = ResultRecord(cfg.application, cfg, qubit_budget=_budget_for(cfg))
    if cfg.mode == "sweep":
        rec.rows["canonical"] = quadratic_sweep(cfg, "canonical")
        rec.rows["mle"] = quadratic_sweep(cfg, "mle")
        best = min(rec.rows[cfg.estimator if cfg.estimator != "exact" else "mle"],
                   key=lambda r: r.estimate)
        rec.incumbent_params, rec.incumbent_value = [best.param], best.estimate
        rec.incumbent_exact = best.exact
        rec.trace_length = sum(len(r) for r in rec.rows.values())
        rec.total_queries = sum(r.queries for rows in rec.rows.values() for r in rows)
        distinct = len({round(r.estimate, 9) for r in rec.rows["canonical"]})
        rec.extra["canonical_distinct_values"] = distinct
        return rec
    run_ = optimize(quadratic_evaluator(cfg),
                    cfg.optimizer_config(1, None, [cfg.lower], [cfg.upper]))
    _fill_from_run(rec, run_, lambda p: quadratic_oracle(dist, p[0]))
    return rec


def _fill_from_run(rec: ResultRecord, run_: OptimizationRun, oracle) -> None:
    rec.run = run_
    rec.rows["trace"] = [Row(t.params.copy(), t.value, oracle(t.params), t.queries)
                         for t in run_.trace]
    rec.incumbent_params = run_.incumbent_params.tolist()
    rec.incumbent_value = run_.incumbent_value
    rec.incumbent_exact = oracle(run_.incumbent_params)
    rec.trace_length = len(run_.trace)
    rec.total_queries = run_.total_queries
    rec.extra["status"] = run_.status


def _basis(value: int, k: int) -> Circuit:
    return Circuit(k, [x(i) for i in range(k) if (value >> i) & 1])


def _y_grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.y_lower, cfg.y_upper, 2 ** cfg.k)


def _run_quadratic_discrete(cfg: ExperimentConfig) -> ResultRecord:
    dist = toy_distribution(cfg)
    spec = AnsatzSpec(cfg.k, cfg.reps)
    est = cfg.make_estimator()
    ygrid = _y_grid(cfg)
    per_y = np.array([quadratic_oracle(dist, y) for y in ygrid])
    rec = ResultRecord(cfg.application, cfg, qubit_budget=_budget_for(cfg))

    def problem(circ):
        return encode_quadratic_discrete(dist, circ, cfg.y_lower, cfg.y_upper, cfg.c)

    streams = ShotSampler(cfg.seed).spawn(2 ** cfg.k)
    rows = []
    for j, s in enumerate(streams):
        res = est(problem(_basis(j, cfg.k)), s)
        rows.append(Row(j, decode_quadratic(res.estimate, cfg.c), per_y[j], res.queries))
    rec.rows["candidates"] = rows

    def oracle(theta):
        p = np.array(list(discrete_solution_distribution(theta, spec).values()))
        return float(p @ per_y)

    if cfg.mode == "sweep":
        best = min(rows, key=lambda r: r.estimate)
        rec.incumbent_params, rec.incumbent_value = [best.param], best.estimate
        rec.trace_length, rec.total_queries = len(rows), sum(r.queries for r in rows)
        return rec

    def fn(theta, seed):
        res = est(problem(trial_state(spec, theta)), ShotSampler(seed))
        return decode_quadratic(res.estimate, cfg.c), res

    run_ = optimize(ObjectiveEvaluator(fn, MINIMIZE), cfg.optimizer_config(spec.num_parameters))
    _fill_from_run(rec, run_, oracle)
    rec.solution_distribution = discrete_solution_distribution(run_.incumbent_params, spec)
    best, prob = extract_solution(run_, spec)
    rec.extra["solution"] = {"basis_value": best, "y": float(ygrid[best]), "probability": prob}
    return rec


# Newsvendor -------------------------------------------------------------------------

def newsvendor_distribution(cfg: ExperimentConfig) -> DiscretizedDistribution:
    return discretize_normal(cfg.mu, cfg.sigma, cfg.lower, cfg.upper, cfg.n)


def newsvendor_oracle(cfg: ExperimentConfig) -> np.ndarray:
    """``E[f(s, D)]`` for every stock index ``s``."""
    d = newsvendor_distribution(cfg)
    g = d.values
    return np.array([d.probabilities @ newsvendor_cost(g[s], g, cfg.p_buy, cfg.p_sell)
                     for s in range(2 ** cfg.n)])


def run_newsvendor(cfg: ExperimentConfig) -> ResultRecord:
    dist = newsvendor_distribution(cfg)
    est = cfg.make_estimator()
    per_s = newsvendor_oracle(cfg)
    spec = AnsatzSpec(cfg.n, cfg.reps)
    rec = ResultRecord(cfg.application, cfg, qubit_budget=_budget_for(cfg))
    rec.extra["classical_argmin"] = int(np.argmin(per_s))

    rows = []
    for s, stream in enumerate(ShotSampler(cfg.seed).spawn(2 ** cfg.n)):
        enc = encode_newsvendor(dist, s, cfg.p_buy, cfg.p_sell, cfg.c)
        res = est(enc.problem, stream)
        rows.append(Row(s, enc.spec.decode(res.estimate), float(per_s[s]), res.queries))
    rec.rows["candidates"] = rows
    if cfg.estimator == "exact" or (cfg.estimator == "mle" and cfg.mle_exact):
        f_min, f_max = newsvendor_bounds(dist, cfg.p_buy, cfg.p_sell)
        for r in rows:
            _check_row(r, 4 * cfg.c ** 2 * (f_max - f_min) + 1e-6, f"s={r.param}")

    def oracle(theta):
        p = np.array(list(discrete_solution_distribution(theta, spec).values()))
        return float(p @ per_s)

    if cfg.mode == "sweep":
        best = min(rows, key=lambda r: r.estimate)
        rec.incumbent_params, rec.incumbent_value = [best.param], best.estimate
        rec.incumbent_exact = best.exact
        rec.trace_length, rec.total_queries = len(rows), sum(r.queries for r in rows)
        return rec

    def fn(theta, seed):
        enc = encode_newsvendor(dist, trial_state(spec, theta), cfg.p_buy, cfg.p_sell, cfg.c)
        res = est(enc.problem, ShotSampler(seed))
        return enc.spec.decode(res.estimate), res

    run_ = optimize(ObjectiveEvaluator(fn, MINIMIZE), cfg.optimizer_config(spec.num_parameters))
    _fill_from_run(rec, run_, oracle)
    rec.solution_distribution = discrete_solution_distribution(run_.incumbent_params, spec)
    best, prob = extract_solution(run_, spec)
    rec.extra["solution"] = {"basis_value": best, "probability": prob}
    rec.extra["restart_solutions"] = [
        dict(zip(("basis_value", "probability"), extract_solution(r, spec)))
        for r in run_.restarts]
    return rec


# Portfolio --------------------------------------------------------------------------

def portfolio_distribution(cfg: ExperimentConfig) -> DiscretizedDistribution:
    return discretize_lognormal_multivariate(cfg.mu, cfg.cov, cfg.lower, cfg.upper, cfg.n)


def _sum_indices(dist: DiscretizedDistribution, yv: int, k: int) -> np.ndarray:
    ind = dist.dim_indices()
    return sum((ind[:, i] for i in range(k) if (yv >> i) & 1), np.zeros(len(ind), dtype=int))


def portfolio_oracle_terms(cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per basis ``y``: expected return and the CDF of the sum index on ``[0, 2**s)``."""
    dist = portfolio_distribution(cfg)
    k = cfg.k
    s = sum_register_width(k, cfg.n)
    step = dist.step()
    exp_ret, cdfs = [], []
    for yv in range(2 ** k):
        idx = _sum_indices(dist, yv, k)
        exp_ret.append(dist.probabilities @ (step * idx))
        pmf = np.bincount(idx, weights=dist.probabilities, minlength=2 ** s)
        cdfs.append(np.cumsum(pmf))
    return np.array(exp_ret), np.array(cdfs)


def _var_index(cdf: np.ndarray, alpha: float) -> int:
    return int(np.flatnonzero(cdf >= alpha - 1e-12)[0])


def portfolio_objective_oracle(cfg: ExperimentConfig, weights: np.ndarray) -> float:
    """``E[y^T X] - q VaR_alpha(y^T X)`` for a distribution ``weights`` over basis ``y``."""
    exp_ret, cdfs = portfolio_oracle_terms(cfg)
    step = portfolio_distribution(cfg).step()
    lam = _var_index(weights @ cdfs, cfg.alpha)
    return float(weights @ exp_ret - cfg.q * step * lam)


def portfolio_classical_table(cfg: ExperimentConfig) -> np.ndarray:
    return np.array([portfolio_objective_oracle(cfg, np.eye(2 ** cfg.k)[yv])
                     for yv in range(2 ** cfg.k)])


def portfolio_estimate(cfg: ExperimentConfig, dist: DiscretizedDistribution, y_circuit: Circuit,
                       estimator, sampler: Optional[ShotSampler]) -> Tuple[float, EstimationResult, Dict]:
    """Estimated objective: decoded expected return minus ``q`` times the bisected VaR."""
    prob, spec, pl = encode_portfolio_return(dist, y_circuit, cfg.c)
    child = None if sampler is None else sampler.spawn(2)
    res = estimator(prob, None if child is None else child[0])
    expected = spec.decode(res.estimate)
    v = var_search(lambda lam: encode_portfolio_cdf(dist, y_circuit, lam)[0],
                   2 ** len(pl.sum), cfg.alpha, estimator, None if child is None else child[1])
    var_value = dist.step() * v.index
    value = expected - cfg.q * var_value
    queries = res.queries + v.queries
    info = {"expected_return": expected, "var_index": v.index, "var": var_value}
    return value, EstimationResult(res.estimate, queries, res.method, info), info


def run_portfolio(cfg: ExperimentConfig) -> ResultRecord:
    dist = portfolio_distribution(cfg)
    est = cfg.make_estimator()
    k = cfg.k
    spec = AnsatzSpec(k, cfg.reps)
    table = portfolio_classical_table(cfg)
    rec = ResultRecord(cfg.application, cfg, qubit_budget=_budget_for(cfg))
    rec.extra["classical_objective"] = {str(yv): float(v) for yv, v in enumerate(table)}
    rec.extra["classical_argmax"] = int(np.argmax(table))

    rows = []
    for yv, stream in enumerate(ShotSampler(cfg.seed).spawn(2 ** k)):
        value, res, _ = portfolio_estimate(cfg, dist, _basis(yv, k), est, stream)
        rows.append(Row(yv, value, float(table[yv]), res.queries))
    rec.rows["candidates"] = rows
    if cfg.estimator == "exact" or (cfg.estimator == "mle" and cfg.mle_exact):
        f_min, f_max = portfolio_bounds(dist, k)
        for r in rows:
            _check_row(r, 4 * cfg.c ** 2 * (f_max - f_min) + 1e-6, f"y={r.param}")

    def oracle(theta):
        p = np.array(list(discrete_solution_distribution(theta, spec).values()))
        return portfolio_objective_oracle(cfg, p)

    if cfg.mode == "sweep":
        best = max(rows, key=lambda r: r.estimate)
        rec.incumbent_params, rec.incumbent_value = [best.param], best.estimate
        rec.incumbent_exact = best.exact
        rec.trace_length, rec.total_queries = len(rows), sum(r.queries for r in rows)
        return rec

    def fn(theta, seed):
        value, res, _ = portfolio_estimate(cfg, dist, trial_state(spec, theta), est,
                                           ShotSampler(seed))
        return value, res

    run_ = optimize(ObjectiveEvaluator(fn, MAXIMIZE), cfg.optimizer_config(spec.num_parameters))
    _fill_from_run(rec, run_, oracle)
    rec.solution_distribution = discrete_solution_distribution(run_.incumbent_params, spec)
    best, prob = extract_solution(run_, spec)
    rec.extra["solution"] = {"basis_value": best, "probability": prob}
    rec.extra["restart_solutions"] = [
        dict(zip(("basis_value", "probability"), extract_solution(r, spec)))
        for r in run_.restarts]
    return rec


RUNNERS = {
    "quadratic-continuous": run_quadratic,
    "quadratic-discrete": run_quadratic,
    "newsvendor": run_newsvendor,
    "portfolio": run_portfolio,
}


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    return RUNNERS[cfg.application](cfg)
