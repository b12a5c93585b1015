"""Grover operator construction and amplitude estimation.

Two estimators are provided: canonical phase-estimation QAE, whose output is
restricted to the grid ``sin^2(y pi / 2^m)``, and maximum-likelihood QAE over
a schedule of Grover powers, which gives continuous estimates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .library import qft
from .statevector import (
    Circuit, Predicate, ShotSampler, StateVector, apply_gate, h, marginal, phase_flip,
    probability, run,
)

logger = logging.getLogger(__name__)


@dataclass
class AEProblem:
    """State preparation ``A`` plus the predicate marking good basis states."""

    a_circuit: Circuit
    good_predicate: Predicate
    name: str = ""

    @property
    def n_state(self) -> int:
        return self.a_circuit.n_qubits

    def prepared_state(self) -> StateVector:
        return run(self.a_circuit)

    def exact_amplitude(self) -> float:
        """``a = P[good]`` read directly off the simulated ``A|0>``."""
        return probability(self.prepared_state(), self.good_predicate)


@dataclass
class EstimationResult:
    estimate: float
    queries: int
    method: str
    raw: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-12 <= self.estimate <= 1 + 1e-12:
            raise ValueError(f"estimate {self.estimate} outside [0, 1]")
        self.estimate = min(max(float(self.estimate), 0.0), 1.0)


@dataclass(frozen=True)
class MLESchedule:
    powers: Tuple[int, ...] = (0, 1, 2, 4, 8)
    shots: int = 1024

    def __post_init__(self):
        p = tuple(int(v) for v in self.powers)
        object.__setattr__(self, "powers", p)
        if not p or min(p) < 0:
            raise ValueError("Grover powers must be non-negative")
        if any(b <= a for a, b in zip(p[1:], p[2:])) or (len(p) > 1 and p[1] < p[0]):
            raise ValueError("Grover powers must increase after the first entry")
        if self.shots < 1:
            raise ValueError("shots per power must be positive")

    @classmethod
    def exponential(cls, num_powers: int, shots: int = 1024) -> "MLESchedule":
        """Powers ``(0, 1, 2, 4, ..., 2**(num_powers - 2))``."""
        return cls((0,) + tuple(2 ** j for j in range(num_powers - 1)), shots)


def _nonzero_below(n: int) -> Predicate:
    """True where any of the low ``n`` qubits is set (ignores wider registers)."""
    mask = (1 << n) - 1

    def pred(idx: np.ndarray) -> np.ndarray:
        return (idx & mask) != 0

    return pred


def grover_operator(problem: AEProblem) -> Circuit:
    """``Q = A S_0 A^dagger S_good``.

    ``S_good`` flips the sign of good states and ``S_0 = 2|0><0| - I`` flips
    every state except |0...0>.  Together this is exactly the operator whose
    eigenphases are ``+-2 theta_a`` (``a = sin^2 theta_a``), with no hidden
    global phase, so it can be controlled directly for phase estimation.
    The good predicate must depend only on the low ``n_state`` qubits.
    """
    a = problem.a_circuit
    q = Circuit(a.n_qubits)
    q.append(phase_flip(problem.good_predicate, "S_good"))
    q.extend(a.adjoint().gates)
    q.append(phase_flip(_nonzero_below(a.n_qubits), "S_0"))
    q.extend(a.gates)
    return q


def grover_probabilities(problem: AEProblem, powers: Sequence[int]) -> np.ndarray:
    """Good-state probability after ``Q^k A|0>`` for each (sorted) ``k`` in ``powers``."""
    Q = grover_operator(problem)
    n = problem.n_state
    amps = problem.prepared_state().amplitudes.copy()
    out, done = {}, 0
    for k in sorted(set(powers)):
        for _ in range(k - done):
            for g in Q.gates:
                apply_gate(amps, g, n)
        done = k
        out[k] = probability(StateVector(amps, check=False), problem.good_predicate)
    return np.array([out[k] for k in powers])


def canonical_circuit(problem: AEProblem, m: int) -> Circuit:
    """State qubits ``[0, n)``, evaluation qubits ``[n, n + m)``."""
    n = problem.n_state
    circ = Circuit(n + m)
    circ.extend(problem.a_circuit.gates)
    circ.extend(h(n + j) for j in range(m))
    Q = grover_operator(problem)
    for j in range(m):
        circ.extend(Q.power(2 ** j).controlled(n + j).gates)
    return circ.compose(qft(m, inverse=True), list(range(n, n + m)))


def canonical_qae(problem: AEProblem, m: int, sampler: Optional[ShotSampler] = None,
                  shots: int = 100) -> EstimationResult:
    """Canonical QAE from the exact evaluation-register distribution.

    With a ``sampler`` the outcome is the most frequent of ``shots`` draws
    instead of the most probable one.
    """
    if m < 1:
        raise ValueError("need at least one evaluation qubit")
    M = 2 ** m
    n = problem.n_state
    state = run(canonical_circuit(problem, m))
    dist = marginal(state, range(n, n + m))
    grid = np.sin(np.arange(M) * np.pi / M) ** 2
    if sampler is None:
        weights, queries = dist, M
    else:
        weights = sampler.multinomial(shots, dist).astype(float)
        queries = M * shots
    top = weights.max()
    y = int(np.flatnonzero(weights >= top - 1e-12 * max(top, 1))[0])
    by_value: Dict[float, float] = {}
    for yy, p in enumerate(dist):
        key = round(float(grid[yy]), 12)
        by_value[key] = by_value.get(key, 0.0) + float(p)
    raw = {"outcome": y, "distribution": dist, "estimate_distribution": by_value,
           "grover_applications": M - 1}
    if sampler is not None:
        raw["counts"] = weights.astype(int)
    return EstimationResult(float(grid[y]), queries, "canonical", raw)


def _log_likelihood(theta: np.ndarray, powers: np.ndarray, hits: np.ndarray,
                    shots: int) -> np.ndarray:
    theta = np.atleast_1d(theta)
    ang = np.outer(theta, 2 * powers + 1)
    s2 = np.clip(np.sin(ang) ** 2, 1e-300, 1.0)
    c2 = np.clip(np.cos(ang) ** 2, 1e-300, 1.0)
    return (hits * np.log(s2) + (shots - hits) * np.log(c2)).sum(axis=1)


def mle_theta(powers: Sequence[int], hits: Sequence[float], shots: int,
              grid_points: int = 10_000) -> float:
    """Maximise the Grover-power likelihood over ``theta in [0, pi/2]``.

    Dense grid scan, then golden-section refinement around the best grid point.
    """
    powers = np.asarray(powers, dtype=float)
    hits = np.asarray(hits, dtype=float)
    if np.all(hits <= 0):
        return 0.0
    if np.all(hits >= shots):
        return np.pi / 2
    grid = np.linspace(0, np.pi / 2, grid_points)
    ll = _log_likelihood(grid, powers, hits, shots)
    i = int(np.argmax(ll))
    if i == 0 or i == grid_points - 1:
        return float(grid[i])

    def neg(t):
        return -_log_likelihood(t, powers, hits, shots)[0]

    try:
        return float(optimize.golden(neg, brack=(grid[i - 1], grid[i], grid[i + 1]), tol=1e-10))
    except ValueError:
        # flat neighbourhood: the grid point is as good as any refinement
        return float(grid[i])


def mle_qae(problem: AEProblem, schedule: MLESchedule = MLESchedule(),
            sampler: Optional[ShotSampler] = None) -> EstimationResult:
    """Maximum-likelihood QAE.

    With ``sampler=None`` the hit counts are the exact expectations
    ``shots * P[good]`` (exact-probability mode); otherwise each power is
    measured ``schedule.shots`` times.
    """
    probs = grover_probabilities(problem, schedule.powers)
    N = schedule.shots
    if sampler is None:
        hits = N * probs
    else:
        hits = np.array([sampler.binomial(N, p) for p in probs], dtype=float)
    theta = mle_theta(schedule.powers, hits, N)
    queries = int(sum(N * (k + 1) for k in schedule.powers))
    raw = {"powers": schedule.powers, "hits": hits, "shots": N, "theta": theta,
           "exact_mode": sampler is None}
    return EstimationResult(float(np.sin(theta) ** 2), queries, "mle", raw)


def median_repeat(estimator: Callable[[ShotSampler], EstimationResult], repetitions: int,
                  sampler: ShotSampler) -> EstimationResult:
    """Run ``estimator`` on independent child streams and keep the median estimate."""
    if repetitions < 1 or repetitions % 2 == 0:
        raise ValueError("repetitions must be a positive odd number")
    if repetitions == 1:
        return estimator(sampler)
    results = [estimator(s) for s in sampler.spawn(repetitions)]
    order = np.argsort([r.estimate for r in results], kind="stable")
    chosen = results[order[repetitions // 2]]
    raw = dict(chosen.raw, estimates=[r.estimate for r in results])
    return EstimationResult(chosen.estimate, sum(r.queries for r in results),
                            chosen.method, raw)


# Estimator objects: ``estimator(problem, sampler=None) -> EstimationResult`` -----

class ExactEstimator:
    """Reads ``a`` directly off the statevector (the noiseless reference)."""

    name = "exact"

    def __call__(self, problem: AEProblem, sampler: Optional[ShotSampler] = None):
        return EstimationResult(problem.exact_amplitude(), 1, "exact")


class CanonicalEstimator:
    name = "canonical"

    def __init__(self, m: int = 5, shots: Optional[int] = None):
        self.m, self.shots = m, shots

    def __call__(self, problem: AEProblem, sampler: Optional[ShotSampler] = None):
        if self.shots is None or sampler is None:
            return canonical_qae(problem, self.m)
        return canonical_qae(problem, self.m, sampler, self.shots)


class MLEEstimator:
    name = "mle"

    def __init__(self, schedule: MLESchedule = MLESchedule(), exact: bool = False):
        self.schedule, self.exact = schedule, exact

    def __call__(self, problem: AEProblem, sampler: Optional[ShotSampler] = None):
        if self.exact:
            return mle_qae(problem, self.schedule)
        if sampler is None:
            raise ValueError("shot-based MLE needs a sampler")
        return mle_qae(problem, self.schedule, sampler)


class MedianEstimator:
    """Median of ``repetitions`` runs of a shot-based estimator."""

    def __init__(self, base, repetitions: int = 5):
        self.base, self.repetitions = base, repetitions
        self.name = f"{base.name}-median{repetitions}"

    def __call__(self, problem: AEProblem, sampler: Optional[ShotSampler] = None):
        if sampler is None:
            return self.base(problem, None)
        return median_repeat(lambda s: self.base(problem, s), self.repetitions, sampler)
