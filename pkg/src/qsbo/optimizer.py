"""Derivative-free outer loop for simulation-based optimisation.

The optimiser follows the COBYLA scheme restricted to box constraints: a
simplex of ``d + 1`` evaluated points defines a linear model, the model is
minimised inside a trust region of radius ``rho`` intersected with the box,
and ``rho`` is halved whenever the model stops producing progress with a
well-shaped simplex.  The run ends when ``rho`` drops below the final radius
or the evaluation budget is spent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .estimation import EstimationResult
from .library import AnsatzSpec, trial_state
from .statevector import run

logger = logging.getLogger(__name__)

MINIMIZE, MAXIMIZE = "minimize", "maximize"


@dataclass
class ObjectiveEvaluator:
    """``fn(params, seed) -> (value, EstimationResult | None)`` plus an optimisation sense."""

    fn: Callable[[np.ndarray, int], Tuple[float, Optional[EstimationResult]]]
    sense: str = MINIMIZE

    def __post_init__(self):
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")

    def __call__(self, params, seed: int):
        value, res = self.fn(np.asarray(params, dtype=float), seed)
        return float(value), res


@dataclass
class OptimizerConfig:
    dim: int
    initial: Optional[Sequence[float]] = None
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    rho_begin: float = 0.5
    rho_end: float = 1e-4
    max_evals: int = 500
    restarts: int = 1
    seed: int = 0
    init_range: Tuple[float, float] = (-np.pi, np.pi)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not 0 < self.rho_end < self.rho_begin:
            raise ValueError("need 0 < rho_end < rho_begin")
        if self.max_evals < self.dim + 2:
            raise ValueError("max_evals must be at least dim + 2")
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        lo, hi = self.bounds()
        if np.any(lo > hi):
            raise ValueError("lower bound above upper bound")
        if self.initial is not None and len(self.initial) != self.dim:
            raise ValueError("initial point has the wrong dimension")

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("bounds have the wrong dimension")
        return lo, hi


@dataclass
class TraceEntry:
    params: np.ndarray
    value: float
    queries: int
    restart: int = 0


@dataclass
class OptimizationRun:
    trace: List[TraceEntry] = field(default_factory=list)
    incumbent_params: Optional[np.ndarray] = None
    incumbent_value: Optional[float] = None
    status: str = ""
    sense: str = MINIMIZE
    restarts: List["OptimizationRun"] = field(default_factory=list)

    @property
    def total_queries(self) -> int:
        return sum(t.queries for t in self.trace)

    def _better(self, a: float, b: float) -> bool:
        return a < b if self.sense == MINIMIZE else a > b

    def record(self, entry: TraceEntry) -> None:
        self.trace.append(entry)
        if self.incumbent_value is None or self._better(entry.value, self.incumbent_value):
            self.incumbent_value = entry.value
            self.incumbent_params = entry.params.copy()


def eval_seed(seed: int, restart: int, index: int) -> int:
    """Per-evaluation seed expanded deterministically from the top-level seed."""
    return int(np.random.SeedSequence([seed, restart, index]).generate_state(1)[0])


def _trust_region_step(g: np.ndarray, rho: float, x: np.ndarray, lo: np.ndarray,
                       hi: np.ndarray) -> np.ndarray:
    """Minimise ``g . s`` over ``|s| <= rho`` and ``lo <= x + s <= hi``.

    Coordinates that would leave the box are pinned to it and the remaining
    radius is redistributed along the free part of ``-g``.
    """
    d = g.size
    s = np.zeros(d)
    free = np.ones(d, bool)
    for _ in range(d + 1):
        gf = np.where(free, g, 0.0)
        norm = np.linalg.norm(gf)
        left = rho ** 2 - np.sum(s[~free] ** 2)
        if norm == 0 or left <= 0:
            break
        trial = np.where(free, -np.sqrt(left) * gf / norm, s)
        over = free & ((x + trial > hi) | (x + trial < lo))
        if not over.any():
            return trial
        s[over] = np.clip(x + trial, lo, hi)[over] - x[over]
        free &= ~over
    return s


class _Simplex:
    def __init__(self, points: np.ndarray, values: np.ndarray):
        self.x, self.f = points, values

    @property
    def best(self) -> int:
        return int(np.argmin(self.f))

    def directions(self) -> Tuple[np.ndarray, np.ndarray]:
        b = self.best
        others = np.array([i for i in range(len(self.f)) if i != b])
        return others, self.x[others] - self.x[b]


def _minimize(evaluate: Callable[[np.ndarray], float], x0: np.ndarray, lo: np.ndarray,
              hi: np.ndarray, cfg: OptimizerConfig) -> str:
    d = x0.size
    rho = cfg.rho_begin
    count = [0]

    def f(z):
        count[0] += 1
        return evaluate(z)

    pts = [x0.copy()]
    for i in range(d):
        step = np.zeros(d)
        step[i] = rho if x0[i] + rho <= hi[i] else -rho
        pts.append(np.clip(x0 + step, lo, hi))
    pts = np.array(pts)
    vals = []
    for p in pts:
        if count[0] >= cfg.max_evals:
            return "max_evals"
        vals.append(f(p))
    sx = _Simplex(pts, np.array(vals))

    while True:
        if count[0] >= cfg.max_evals:
            return "max_evals"
        b = sx.best
        xb = sx.x[b]
        others, D = sx.directions()
        dist = np.linalg.norm(D, axis=1)
        try:
            Dinv = np.linalg.inv(D)
            ok = np.isfinite(Dinv).all() and np.linalg.cond(D / rho) < 1e8
        except np.linalg.LinAlgError:
            ok = False
        far = int(np.argmax(dist))
        if not ok or dist[far] > 2.0 * rho:
            # geometry step: move the worst-placed vertex along the normal of its opposite face
            j = far if ok else int(np.argmax(dist))
            if ok:
                normal = Dinv[:, j]
            else:
                normal = np.zeros(d)
                normal[j % d] = 1.0
            normal /= np.linalg.norm(normal)
            cand = [np.clip(xb + sgn * rho * normal, lo, hi) for sgn in (1, -1)]
            newp = max(cand, key=lambda p: np.linalg.norm(p - xb))
            if np.linalg.norm(newp - xb) < 1e-12:
                rho /= 2
                if rho < cfg.rho_end:
                    return "converged"
                continue
            sx.x[others[j]] = newp
            sx.f[others[j]] = f(newp)
            continue

        g = Dinv @ (sx.f[others] - sx.f[b])
        s = _trust_region_step(g, rho, xb, lo, hi)
        if np.linalg.norm(s) < 0.5 * rho:
            rho /= 2
            if rho < cfg.rho_end:
                return "converged"
            continue
        xn = xb + s
        fn = f(xn)
        # |det| ratio of the simplex when vertex j is swapped for the new point
        weights = np.abs(Dinv.T @ s)
        if fn < sx.f[b]:
            j = int(np.argmax(weights * np.maximum(dist, rho)))
            sx.x[others[j]], sx.f[others[j]] = xn, fn
            continue
        worst = int(np.argmax(sx.f[others]))
        if fn < sx.f[others][worst] and weights[worst] > 0.1:
            sx.x[others[worst]], sx.f[others[worst]] = xn, fn
        rho /= 2
        if rho < cfg.rho_end:
            return "converged"


def _initial_point(cfg: OptimizerConfig, restart: int, rng: np.random.Generator,
                   lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, bool]:
    if restart == 0 and cfg.initial is not None:
        x0 = np.asarray(cfg.initial, dtype=float)
    else:
        a, b = cfg.init_range
        low = np.where(np.isfinite(lo), lo, a)
        high = np.where(np.isfinite(hi), hi, b)
        x0 = rng.uniform(low, high)
    clipped = np.clip(x0, lo, hi)
    return clipped, bool(np.any(clipped != x0))


def optimize(evaluator: ObjectiveEvaluator, config: OptimizerConfig) -> OptimizationRun:
    """Run ``config.restarts`` independent trust-region searches and keep the best.

    Restart 0 starts at ``config.initial`` when given; the others (or all, if
    no initial point is set) start at a seeded uniform draw from the bounds,
    or from ``config.init_range`` along unbounded coordinates.
    """
    lo, hi = config.bounds()
    sign = 1.0 if evaluator.sense == MINIMIZE else -1.0
    overall = OptimizationRun(sense=evaluator.sense)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5B0]))
    for r in range(config.restarts):
        x0, projected = _initial_point(config, r, rng, lo, hi)
        single = OptimizationRun(sense=evaluator.sense)
        counter = [0]

        def evaluate(z, r=r, single=single, counter=counter):
            value, res = evaluator(z, eval_seed(config.seed, r, counter[0]))
            counter[0] += 1
            entry = TraceEntry(np.array(z, dtype=float), value, res.queries if res else 0, r)
            single.record(entry)
            overall.record(entry)
            return sign * value

        status = _minimize(evaluate, x0, lo, hi, config)
        single.status = status + (" (initial point projected)" if projected else "")
        if projected:
            logger.warning("restart %d: initial point projected onto the bounds", r)
        overall.restarts.append(single)
    overall.status = ",".join(s.status for s in overall.restarts)
    return overall


def discrete_solution_distribution(theta, spec: AnsatzSpec) -> Dict[int, float]:
    """Exact sampling probabilities ``|<i|V(theta)|0>|^2`` of the trial state."""
    p = run(trial_state(spec, theta)).probabilities()
    return {i: float(v) for i, v in enumerate(p)}


def extract_solution(result: OptimizationRun, spec: AnsatzSpec) -> Tuple[int, float]:
    """Most probable basis value at the incumbent (ties toward the smaller value)."""
    dist = discrete_solution_distribution(result.incumbent_params, spec)
    p = np.array([dist[i] for i in range(len(dist))])
    i = int(np.flatnonzero(p >= p.max() - 1e-12)[0])
    return i, float(p[i])
