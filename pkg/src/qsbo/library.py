"""Reusable circuit blocks and discretised uncertainty models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import multivariate_normal

from .statevector import Circuit, cphase, cx, h, mcry, ry

NORM_TOL = 1e-10


def qft(n: int, inverse: bool = False) -> Circuit:
    """Quantum Fourier transform on ``n`` little-endian qubits.

    Maps ``|x>`` to ``sum_k exp(2 pi i x k / 2**n) |k> / sqrt(2**n)``.
    """
    if n < 1:
        raise ValueError("QFT needs n >= 1")
    circ = Circuit(n)
    for j in reversed(range(n)):
        circ.append(h(j))
        for i in reversed(range(j)):
            circ.append(cphase(np.pi / 2 ** (j - i), i, j))
    for i in range(n // 2):
        a, b = i, n - 1 - i
        circ.extend([cx(a, b), cx(b, a), cx(a, b)])
    return circ.adjoint() if inverse else circ


@dataclass(frozen=True)
class AnsatzSpec:
    """R_y trial state on ``k`` qubits with ``reps`` linear-CNOT blocks."""

    k: int
    reps: int = 2

    def __post_init__(self):
        if self.k < 1 or self.reps < 0:
            raise ValueError("ansatz needs k >= 1 and reps >= 0")

    @property
    def num_parameters(self) -> int:
        return self.k * (self.reps + 1)


def trial_state(spec: AnsatzSpec, theta: Sequence[float]) -> Circuit:
    """Alternating R_y layers and a CNOT chain; ``reps + 1`` rotation layers."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != spec.num_parameters:
        raise ValueError(f"expected {spec.num_parameters} parameters, got {theta.size}")
    k = spec.k
    circ = Circuit(k)
    for layer in range(spec.reps + 1):
        for q in range(k):
            circ.append(ry(theta[layer * k + q], q))
        if layer < spec.reps:
            for q in range(k - 1):
                circ.append(cx(q, q + 1))
    return circ


def _check_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    n = int(round(np.log2(p.size))) if p.size else -1
    if n < 1 or 2 ** n != p.size:
        raise ValueError("need 2**n probabilities with n >= 1")
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def prepare_probabilities(p) -> Circuit:
    """Load ``sqrt(p)`` into the amplitudes of ``log2(len(p))`` qubits.

    Splits the distribution on the most significant qubit first; every lower
    qubit gets one rotation per configuration of the qubits above it.
    """
    p = _check_probabilities(p)
    n = int(np.log2(p.size))
    circ = Circuit(n)
    for q in reversed(range(n)):
        higher = list(range(q + 1, n))
        # reshape so axis 0 is the prefix (qubits above q), axis 1 is bit q
        blocks = p.reshape(2 ** (n - q - 1), 2, 2 ** q).sum(axis=2)
        for prefix, (p0, p1) in enumerate(blocks):
            total = p0 + p1
            if total <= 0 or p1 <= 0:
                continue
            theta = 2 * np.arcsin(np.sqrt(min(p1 / total, 1.0)))
            state = [(prefix >> i) & 1 for i in range(len(higher))]
            circ.append(mcry(theta, higher, q, state))
    return circ


@dataclass(frozen=True)
class DiscretizedDistribution:
    """Probabilities on an affine grid, one n-qubit grid per dimension.

    Dimension ``d`` occupies the qubit block ``[sum(dim_qubits[:d]), ...)``
    of the joint index, dimension 0 in the least significant bits.
    """

    probabilities: np.ndarray
    dim_qubits: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        p = _check_probabilities(self.probabilities)
        object.__setattr__(self, "probabilities", p)
        if 2 ** sum(self.dim_qubits) != p.size:
            raise ValueError("probability count does not match dimension qubits")
        if not len(self.dim_qubits) == len(self.lower) == len(self.upper):
            raise ValueError("one (n, lower, upper) triple per dimension")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound must be below upper bound")

    @property
    def n_qubits(self) -> int:
        return sum(self.dim_qubits)

    @property
    def ndim(self) -> int:
        return len(self.dim_qubits)

    def step(self, dim: int = 0) -> float:
        return (self.upper[dim] - self.lower[dim]) / (2 ** self.dim_qubits[dim] - 1)

    def to_value(self, index, dim: int = 0):
        """The affine map from integer grid index to sample-space value."""
        return self.lower[dim] + self.step(dim) * np.asarray(index, dtype=float)

    def grid(self, dim: int = 0) -> np.ndarray:
        return self.to_value(np.arange(2 ** self.dim_qubits[dim]), dim)

    @property
    def values(self) -> np.ndarray:
        """Grid values of a univariate distribution."""
        if self.ndim != 1:
            raise ValueError("values is defined for univariate distributions only")
        return self.grid(0)

    def dim_indices(self) -> np.ndarray:
        """``(2**n_qubits, ndim)`` array of per-dimension indices for each joint index."""
        idx = np.arange(2 ** self.n_qubits)
        out, offset = [], 0
        for n in self.dim_qubits:
            out.append((idx >> offset) & (2 ** n - 1))
            offset += n
        return np.stack(out, axis=1)

    def joint_values(self) -> np.ndarray:
        ind = self.dim_indices()
        return np.stack([self.to_value(ind[:, d], d) for d in range(self.ndim)], axis=1)

    def marginal(self, dim: int) -> np.ndarray:
        return np.bincount(self.dim_indices()[:, dim], weights=self.probabilities,
                           minlength=2 ** self.dim_qubits[dim])

    def circuit(self) -> Circuit:
        return prepare_probabilities(self.probabilities)


def discretize_normal(mu: float, sigma: float, lower: float, upper: float,
                      n: int) -> DiscretizedDistribution:
    """Gaussian density evaluated at the grid points and renormalised."""
    if not lower < upper or sigma <= 0 or n < 1:
        raise ValueError("need lower < upper, sigma > 0 and n >= 1")
    x = lower + (upper - lower) * np.arange(2 ** n) / (2 ** n - 1)
    dens = np.exp(-0.5 * ((x - mu) / sigma) ** 2)
    return DiscretizedDistribution(dens / dens.sum(), (n,), (float(lower),), (float(upper),))


def discretize_lognormal_multivariate(mu, cov, lower, upper, n) -> DiscretizedDistribution:
    """Log-normal density ``log X ~ N(mu, cov)`` on a product grid.

    ``lower``/``upper``/``n`` may be scalars (shared by all dimensions).  The
    density is taken as zero at grid points with a non-positive coordinate.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = mu.size
    if cov.shape != (k, k) or not np.allclose(cov, cov.T):
        raise ValueError("covariance must be a symmetric k x k matrix")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    lower = tuple(float(v) for v in np.broadcast_to(lower, (k,)))
    upper = tuple(float(v) for v in np.broadcast_to(upper, (k,)))
    dims = tuple(int(v) for v in np.broadcast_to(n, (k,)))
    if any(lo >= hi for lo, hi in zip(lower, upper)) or min(dims) < 1:
        raise ValueError("invalid bounds or qubit counts")

    proto = DiscretizedDistribution(np.full(2 ** sum(dims), 2.0 ** -sum(dims)),
                                    dims, lower, upper)
    pts = proto.joint_values()
    dens = np.zeros(len(pts))
    ok = np.all(pts > 0, axis=1)
    if ok.any():
        logs = np.log(pts[ok])
        dens[ok] = multivariate_normal(mu, cov).pdf(logs).reshape(-1) / np.prod(pts[ok], axis=1)
    if dens.sum() <= 0:
        raise ValueError("density vanishes on the whole grid")
    return DiscretizedDistribution(dens / dens.sum(), dims, lower, upper)
