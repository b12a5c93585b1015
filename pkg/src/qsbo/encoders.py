"""A-operators that encode expectations, CDFs and tail measures.

Every encoder returns an :class:`AEProblem` whose good states are flagged by a
single marker qubit in |1>.  Objectives are written onto the marker through
``R_y`` rotations whose half-angle is affine in the register bits, so the
good-state probability is ``sin^2`` of an affine function of the objective.
Two flavours exist:

* quadratic-direct: half-angle ``c (phi(x) - y)``, ``a ~ c^2 E[(X - y)^2]``;
* linear-offset: half-angle ``pi/4 + c (f_hat - 1/2)``, ``a ~ 1/2 + c (E[f_hat] - 1/2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .arithmetic import (
    RegisterLayout, compare_geq, compare_leq_const, sum_register_width, weighted_sum,
    weighted_sum_ancillas,
)
from .estimation import AEProblem, EstimationResult, ExactEstimator
from .library import DiscretizedDistribution
from .statevector import Circuit, Gate, ShotSampler, bit_is, cx, mcry, x

logger = logging.getLogger(__name__)

QUADRATIC = "quadratic-direct"
LINEAR_OFFSET = "linear-offset"

Estimator = Callable[..., EstimationResult]


@dataclass(frozen=True)
class SineApproxSpec:
    """Scaling ``c`` and the normalisation bounds of a sine-approximated objective."""

    c: float
    f_min: float = 0.0
    f_max: float = 1.0
    flavor: str = LINEAR_OFFSET

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("scaling c must be positive")
        if not self.f_min < self.f_max:
            raise ValueError("need f_min < f_max")
        if self.flavor not in (QUADRATIC, LINEAR_OFFSET):
            raise ValueError(f"unknown flavor {self.flavor!r}")

    def normalise(self, f):
        return (np.asarray(f, dtype=float) - self.f_min) / (self.f_max - self.f_min)

    def decode(self, a_est: float) -> float:
        if self.flavor == QUADRATIC:
            return decode_quadratic(a_est, self.c)
        return decode_linear_offset(a_est, self.c, self.f_min, self.f_max)


@dataclass(frozen=True)
class RiskQuery:
    """One risk query: ``expectation``, ``cdf`` at index ``lam``, or ``var``/``cvar`` at ``alpha``."""

    kind: str
    alpha: Optional[float] = None
    lam: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("expectation", "cdf", "var", "cvar"):
            raise ValueError(f"unknown risk query {self.kind!r}")
        if self.kind in ("var", "cvar") and not (self.alpha is not None and 0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")
        if self.kind == "cdf" and (self.lam is None or self.lam < 0):
            raise ValueError("cdf query needs a non-negative index lam")


# Rotation helpers -----------------------------------------------------------

def affine_rotation(marker: int, half0: float, terms: Sequence[Tuple[int, float]],
                    controls: Sequence[int] = ()) -> List[Gate]:
    """``R_y`` gates giving the marker the half-angle ``half0 + sum_i w_i b_i``.

    ``terms`` are ``(qubit, w_i)`` pairs; every gate also carries ``controls``.
    All gates are ``R_y`` on one target with diagonal controls, so they commute
    and the angles simply add up on each basis state.
    """
    controls = list(controls)
    gates = []
    if half0 != 0:
        gates.append(mcry(2 * half0, controls, marker))
    for q, w in terms:
        if w != 0:
            gates.append(mcry(2 * w, controls + [q], marker))
    return gates


def _bit_terms(qubits: Sequence[int], weight: float) -> List[Tuple[int, float]]:
    """Terms for ``weight * value(qubits)`` with little-endian bits."""
    return [(q, weight * 2 ** i) for i, q in enumerate(qubits)]


def _load_basis(value: int, qubits: Sequence[int]) -> List[Gate]:
    return [x(q) for i, q in enumerate(qubits) if (value >> i) & 1]


def _check_univariate(dist: DiscretizedDistribution) -> None:
    if dist.ndim != 1:
        raise ValueError("encoder expects a univariate distribution")


# Quadratic-direct -----------------------------------------------------------

def encode_quadratic(dist: DiscretizedDistribution, y: float, c: float) -> AEProblem:
    """``a = sum_x p_x sin^2(c (phi(x) - y))``; qubits ``[0, n)`` hold X, qubit ``n`` the marker."""
    _check_univariate(dist)
    lo, hi = dist.lower[0], dist.upper[0]
    if not lo <= y <= hi:
        raise ValueError(f"y={y} outside [{lo}, {hi}]")
    if c <= 0:
        raise ValueError("scaling c must be positive")
    if c * max(abs(hi - y), abs(y - lo)) > np.pi / 2:
        raise ValueError("rotation angle exceeds pi/2; reduce c")
    n = dist.n_qubits
    circ = Circuit(n + 1).compose(dist.circuit())
    circ.extend(affine_rotation(n, c * (lo - y), _bit_terms(range(n), c * dist.step())))
    return AEProblem(circ, bit_is(n), f"quadratic(y={y:g})")


def encode_quadratic_discrete(dist: DiscretizedDistribution, y_circuit: Circuit,
                              y_lower: float, y_upper: float, c: float) -> AEProblem:
    """Quadratic objective with ``y`` itself held in a register prepared by ``y_circuit``.

    Layout: X on ``[0, n)``, y on ``[n, n + k)``, marker at ``n + k``.  The y
    register is read through its own affine grid on ``[y_lower, y_upper]``.
    """
    _check_univariate(dist)
    n, k = dist.n_qubits, y_circuit.n_qubits
    lo, hi = dist.lower[0], dist.upper[0]
    if c * max(abs(hi - y_lower), abs(y_upper - lo)) > np.pi / 2:
        raise ValueError("rotation angle exceeds pi/2; reduce c")
    y_step = (y_upper - y_lower) / (2 ** k - 1)
    marker = n + k
    circ = Circuit(n + k + 1).compose(dist.circuit()).compose(y_circuit, range(n, n + k))
    terms = _bit_terms(range(n), c * dist.step()) + _bit_terms(range(n, n + k), -c * y_step)
    circ.extend(affine_rotation(marker, c * (lo - y_lower), terms))
    return AEProblem(circ, bit_is(marker), "quadratic-discrete")


def decode_quadratic(a_est: float, c: float) -> float:
    """Undo the quadratic-direct scaling: ``E[(X - y)^2] ~ a / c^2``."""
    return float(a_est) / c ** 2


# Linear-offset ----------------------------------------------------------------

def encode_linear_offset(prep: Circuit, value_qubits: Sequence[int], slope: float,
                         offset: float, c: float, marker: Optional[int] = None,
                         value_range: Optional[Tuple[int, int]] = None) -> AEProblem:
    """Encode ``f_hat(v) = offset + slope * v`` for the integer ``v`` held in ``value_qubits``.

    ``prep`` prepares the joint state; the marker defaults to a new top qubit.
    ``f_hat`` must stay in [0, 1] over ``value_range`` (default: the whole
    register).
    """
    if c <= 0:
        raise ValueError("scaling c must be positive")
    lo_v, hi_v = value_range or (0, 2 ** len(value_qubits) - 1)
    ends = (offset + slope * lo_v, offset + slope * hi_v)
    if min(ends) < -1e-12 or max(ends) > 1 + 1e-12:
        raise ValueError("f_hat leaves [0, 1] on the register range")
    width = prep.n_qubits + (1 if marker is None else 0)
    marker = prep.n_qubits if marker is None else marker
    circ = Circuit(width).compose(prep)
    circ.extend(affine_rotation(marker, np.pi / 4 + c * (offset - 0.5),
                                _bit_terms(value_qubits, c * slope)))
    return AEProblem(circ, bit_is(marker), "linear-offset")


def encode_expectation(dist: DiscretizedDistribution, c: float) -> Tuple[AEProblem, SineApproxSpec]:
    """Linear-offset encoding of ``E[X]`` for a univariate distribution."""
    _check_univariate(dist)
    spec = SineApproxSpec(c, dist.lower[0], dist.upper[0])
    n = dist.n_qubits
    problem = encode_linear_offset(dist.circuit(), range(n), 1 / (2 ** n - 1), 0.0, c)
    return problem, spec


def decode_linear_offset(a_est: float, c: float, f_min: float, f_max: float) -> float:
    """Invert the linear sine map and rescale to objective units."""
    f_hat = (float(a_est) - 0.5) / c + 0.5
    return f_min + (f_max - f_min) * f_hat


# Newsvendor -------------------------------------------------------------------

def newsvendor_cost(s, d, p_buy: float, p_sell: float):
    """Overage cost ``p_buy (s - d)`` when ``d < s``, else lost margin ``(d - s)(p_sell - p_buy)``."""
    s, d = np.asarray(s, dtype=float), np.asarray(d, dtype=float)
    return np.where(d >= s, (d - s) * (p_sell - p_buy), p_buy * (s - d))


@dataclass
class NewsvendorEncoding:
    problem: AEProblem
    spec: SineApproxSpec
    layout: RegisterLayout


def newsvendor_bounds(dist: DiscretizedDistribution, p_buy: float, p_sell: float) -> Tuple[float, float]:
    """``(f_min, f_max)`` by enumeration over every (stock, demand) grid pair."""
    g = dist.values
    s, d = np.meshgrid(g, g, indexing="ij")
    f = newsvendor_cost(s, d, p_buy, p_sell)
    return float(f.min()), float(f.max())


def encode_newsvendor(dist: DiscretizedDistribution, stock: Union[int, Circuit],
                      p_buy: float, p_sell: float, c: float) -> NewsvendorEncoding:
    """Piecewise-linear newsvendor cost as a linear-offset A-operator.

    The cost is split as ``f = f_over + [d >= s] (d - s) p_sell`` where
    ``f_over = p_buy (s - d)`` is affine everywhere.  Stock and demand share
    the demand grid.  Layout: demand ``[0, n)``, stock ``[n, 2n)``,
    comparison qubit ``2n``, marker ``2n + 1``; the marker doubles as the
    comparator's clean ancilla before it is rotated.  ``stock`` is either a
    basis index or an n-qubit circuit (the trial state).
    """
    _check_univariate(dist)
    if not (p_buy > 0 and p_sell > p_buy):
        raise ValueError("need 0 < p_buy < p_sell")
    n = dist.n_qubits
    lay = RegisterLayout()
    dq, sq = lay.add("demand", n), lay.add("stock", n)
    cmp_q, marker = lay.add("compare", 1)[0], lay.add("marker", 1)[0]

    circ = Circuit(lay.width).compose(dist.circuit(), dq)
    if isinstance(stock, Circuit):
        if stock.n_qubits != n:
            raise ValueError(f"stock register has {stock.n_qubits} qubits, demand has {n}")
        circ.compose(stock, sq)
    else:
        if not 0 <= int(stock) < 2 ** n:
            raise ValueError(f"stock index {stock} outside [0, {2 ** n - 1}]")
        circ.extend(_load_basis(int(stock), sq))
    circ.extend(compare_geq(dq, sq, cmp_q, [marker], lay.width).gates)

    f_min, f_max = newsvendor_bounds(dist, p_buy, p_sell)
    spec = SineApproxSpec(c, f_min, f_max)
    scale = c / (f_max - f_min)
    step = dist.step()
    # f_over: p_buy * step * (s_idx - d_idx); the grids' offsets cancel
    base = np.pi / 4 + c * (-f_min / (f_max - f_min) - 0.5)
    over = _bit_terms(sq, scale * p_buy * step) + _bit_terms(dq, -scale * p_buy * step)
    circ.extend(affine_rotation(marker, base, over))
    opp = _bit_terms(dq, scale * p_sell * step) + _bit_terms(sq, -scale * p_sell * step)
    circ.extend(affine_rotation(marker, 0.0, opp, controls=[cmp_q]))
    return NewsvendorEncoding(AEProblem(circ, bit_is(marker), "newsvendor"), spec, lay)


# CDF, VaR, CVaR ---------------------------------------------------------------

def encode_cdf(dist: DiscretizedDistribution, lam: int) -> AEProblem:
    """``a = P[x <= lam]`` on the joint index of ``dist``.

    Layout: X on ``[0, n)``, marker ``n``, comparator carries ``[n+1, 2n)``
    (restored to zero).
    """
    n = dist.n_qubits
    if not 0 <= lam < 2 ** n:
        raise ValueError(f"threshold {lam} outside [0, {2 ** n - 1}]")
    width = 2 * n
    circ = Circuit(width).compose(dist.circuit())
    circ.extend(compare_leq_const(list(range(n)), lam, n, list(range(n + 1, width)), width).gates)
    return AEProblem(circ, bit_is(n), f"cdf(lam={lam})")


@dataclass
class VaRResult:
    index: int
    value: Optional[float]
    probes: Dict[int, float] = field(default_factory=dict)
    queries: int = 0


def _child(sampler: Optional[ShotSampler]) -> Optional[ShotSampler]:
    return None if sampler is None else sampler.spawn(1)[0]


def var_search(cdf_problem: Callable[[int], AEProblem], n_values: int, alpha: float,
               estimator: Estimator, sampler: Optional[ShotSampler] = None) -> VaRResult:
    """Smallest index whose estimated CDF reaches ``alpha``.

    Integer bisection over ``[0, n_values - 1]`` with one amplitude estimation
    per probe.  Noisy estimates can make the probes non-monotone, so the end
    point is walked down while the neighbour below still reaches ``alpha``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    probes: Dict[int, float] = {}
    queries = 0

    def cdf(lam: int) -> float:
        nonlocal queries
        if lam not in probes:
            res = estimator(cdf_problem(lam), _child(sampler))
            probes[lam] = res.estimate
            queries += res.queries
        return probes[lam]

    lo, hi = 0, n_values - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf(mid) >= alpha:
            hi = mid
        else:
            lo = mid + 1
    while lo > 0 and cdf(lo - 1) >= alpha:
        lo -= 1
    return VaRResult(lo, None, probes, queries)


def var(dist: DiscretizedDistribution, alpha: float, estimator: Estimator = ExactEstimator(),
        sampler: Optional[ShotSampler] = None) -> VaRResult:
    """``(lambda_alpha, phi(lambda_alpha))`` by bisection over CDF estimates."""
    _check_univariate(dist)
    res = var_search(lambda lam: encode_cdf(dist, lam), 2 ** dist.n_qubits, alpha,
                     estimator, sampler)
    res.value = float(dist.to_value(res.index))
    return res


def encode_tail_expectation(dist: DiscretizedDistribution, lam: int) -> AEProblem:
    """``a = sum_{x <= lam} p_x x / lam``.

    A comparator flags ``x <= lam``; per-index rotations controlled on the flag
    give the marker amplitude ``sqrt(x / lam)``; the comparator is then
    uncomputed.  Layout: X ``[0, n)``, flag ``n``, marker ``n + 1``, carries
    ``[n + 2, 2n + 1)``.
    """
    _check_univariate(dist)
    n = dist.n_qubits
    if not 1 <= lam < 2 ** n:
        raise ValueError(f"tail threshold {lam} outside [1, {2 ** n - 1}]")
    xs, flag, marker = list(range(n)), n, n + 1
    width = 2 * n + 1
    anc = list(range(n + 2, width))
    cmp = compare_leq_const(xs, lam, flag, anc, width)
    circ = Circuit(width).compose(dist.circuit()).extend(cmp.gates)
    for v in range(1, lam + 1):
        theta = 2 * np.arcsin(np.sqrt(v / lam))
        polarity = [(v >> i) & 1 for i in range(n)]
        circ.append(mcry(theta, xs + [flag], marker, polarity + [1]))
    circ.extend(cmp.adjoint().gates)
    return AEProblem(circ, bit_is(marker), f"tail(lam={lam})")


@dataclass
class CVaRResult:
    index_value: float
    var: VaRResult
    tail_probability: float
    queries: int

    def to_value(self, dist: DiscretizedDistribution) -> float:
        """Map the index-space CVaR through the affine grid map."""
        return float(dist.to_value(self.index_value))


def cvar(dist: DiscretizedDistribution, alpha: float, estimator: Estimator = ExactEstimator(),
         sampler: Optional[ShotSampler] = None) -> CVaRResult:
    """``E[x | x <= lambda_alpha]`` in index space, as ``a_tail * lambda / P[x <= lambda]``."""
    v = var(dist, alpha, estimator, sampler)
    lam = v.index
    p_hat = v.probes.get(lam)
    queries = v.queries
    if p_hat is None:
        r = estimator(encode_cdf(dist, lam), _child(sampler))
        p_hat, queries = r.estimate, queries + r.queries
    if lam == 0:
        return CVaRResult(0.0, v, p_hat, queries)
    tail = estimator(encode_tail_expectation(dist, lam), _child(sampler))
    queries += tail.queries
    if p_hat <= 0:
        raise ValueError("estimated tail probability is zero")
    return CVaRResult(tail.estimate * lam / p_hat, v, p_hat, queries)


# Portfolio ----------------------------------------------------------------------

@dataclass
class PortfolioLayout:
    """Register allocation for k assets of n qubits each."""

    k: int
    n: int
    layout: RegisterLayout = field(init=False)

    def __post_init__(self):
        k, n = self.k, self.n
        s = sum_register_width(k, n)
        need = weighted_sum_ancillas(k, n, s)
        if need > n or s - 1 > n:
            raise ValueError(f"(k={k}, n={n}) needs more than n addition ancillas")
        lay = RegisterLayout()
        lay.add("y", k)
        lay.add("x", n * k)
        lay.add("sum", s)
        lay.add("marker", 1)
        lay.add("add-ancillas", n)
        self.layout = lay

    @property
    def y(self) -> List[int]:
        return self.layout["y"]

    @property
    def x_regs(self) -> List[List[int]]:
        xs = self.layout["x"]
        return [xs[i * self.n:(i + 1) * self.n] for i in range(self.k)]

    @property
    def sum(self) -> List[int]:
        return self.layout["sum"]

    @property
    def marker(self) -> int:
        return self.layout["marker"][0]

    @property
    def ancillas(self) -> List[int]:
        return self.layout["add-ancillas"]

    @property
    def expectation_width(self) -> int:
        return self.layout.width

    @property
    def var_width(self) -> int:
        return self.layout.width + 1

    @property
    def compare(self) -> int:
        return self.layout.width


def _check_portfolio_dist(dist: DiscretizedDistribution, k: int) -> int:
    if dist.ndim != k:
        raise ValueError(f"distribution has {dist.ndim} dimensions, portfolio has {k} assets")
    if len(set(dist.dim_qubits)) != 1 or len(set(dist.lower)) != 1 or len(set(dist.upper)) != 1:
        raise ValueError("portfolio assets must share one grid")
    return dist.dim_qubits[0]


def portfolio_bounds(dist: DiscretizedDistribution, k: int) -> Tuple[float, float]:
    """``(f_min, f_max)`` of ``y^T x`` over every basis ``y`` and grid point ``x``."""
    vals = dist.joint_values()
    f = [vals[:, list(bits)].sum(axis=1) if any(bits) else np.zeros(len(vals))
         for bits in ([i for i in range(k) if (yv >> i) & 1] for yv in range(2 ** k))]
    f = np.concatenate(f)
    return float(f.min()), float(f.max())


def _portfolio_prep(dist: DiscretizedDistribution, y_circuit: Circuit,
                    pl: PortfolioLayout, width: int) -> Circuit:
    circ = Circuit(width).compose(y_circuit, pl.y)
    circ.compose(dist.circuit(), [q for r in pl.x_regs for q in r])
    return circ.extend(weighted_sum(pl.y, pl.x_regs, pl.sum, pl.ancillas, width).gates)


def encode_portfolio_return(dist: DiscretizedDistribution, y_circuit: Circuit,
                            c: float) -> Tuple[AEProblem, SineApproxSpec, PortfolioLayout]:
    """Linear-offset encoding of ``E[y^T X]`` (12 qubits for k = n = 2).

    ``y^T x = lower * |y| + step * sum_index`` is affine in the y bits and the
    sum register, so both feed the marker rotation directly.
    """
    k = y_circuit.n_qubits
    n = _check_portfolio_dist(dist, k)
    pl = PortfolioLayout(k, n)
    f_min, f_max = portfolio_bounds(dist, k)
    spec = SineApproxSpec(c, f_min, f_max)
    circ = _portfolio_prep(dist, y_circuit, pl, pl.expectation_width)
    scale = c / (f_max - f_min)
    terms = [(q, scale * dist.lower[0]) for q in pl.y] + _bit_terms(pl.sum, scale * dist.step())
    base = np.pi / 4 + c * (-f_min / (f_max - f_min) - 0.5)
    circ.extend(affine_rotation(pl.marker, base, terms))
    return AEProblem(circ, bit_is(pl.marker), "portfolio-return"), spec, pl


def encode_portfolio_cdf(dist: DiscretizedDistribution, y_circuit: Circuit,
                         lam: int) -> Tuple[AEProblem, PortfolioLayout]:
    """``a = P[sum_index <= lam]`` (13 qubits for k = n = 2).

    The comparator writes into a dedicated compare qubit using the addition
    ancillas as carries, the flag is copied to the marker and the comparator
    is uncomputed.
    """
    k = y_circuit.n_qubits
    n = _check_portfolio_dist(dist, k)
    pl = PortfolioLayout(k, n)
    s = len(pl.sum)
    if not 0 <= lam < 2 ** s:
        raise ValueError(f"threshold {lam} outside [0, {2 ** s - 1}]")
    width = pl.var_width
    circ = _portfolio_prep(dist, y_circuit, pl, width)
    cmp = compare_leq_const(pl.sum, lam, pl.compare, pl.ancillas, width)
    circ.extend(cmp.gates).append(cx(pl.compare, pl.marker)).extend(cmp.adjoint().gates)
    return AEProblem(circ, bit_is(pl.marker), f"portfolio-cdf(lam={lam})"), pl


def portfolio_qubit_budget(k: int, n: int) -> Dict[str, int]:
    """Per-role qubit counts of the VaR circuit; ``total`` equals its width."""
    pl = PortfolioLayout(k, n)
    sizes = pl.layout.sizes()
    budget = {"y": sizes["y"], "X": sizes["x"], "marker": sizes["marker"], "sum": sizes["sum"],
              "compare": 1, "add-ancillas": sizes["add-ancillas"]}
    budget["total"] = sum(budget.values())
    assert budget["total"] == pl.var_width
    return budget


def table_one_total(k: int, n: int) -> int:
    """``n + k + nk + ceil(log2(k (2**n - 1) + 1)) + 2``."""
    return n + k + n * k + sum_register_width(k, n) + 2


__all__ = [
    "SineApproxSpec", "RiskQuery", "affine_rotation", "encode_quadratic",
    "encode_quadratic_discrete", "decode_quadratic", "encode_linear_offset",
    "encode_expectation", "decode_linear_offset", "newsvendor_cost", "newsvendor_bounds",
    "encode_newsvendor", "NewsvendorEncoding", "encode_cdf", "var_search", "var", "VaRResult",
    "encode_tail_expectation", "cvar", "CVaRResult", "PortfolioLayout", "portfolio_bounds",
    "encode_portfolio_return", "encode_portfolio_cdf", "portfolio_qubit_budget",
    "table_one_total",
]
