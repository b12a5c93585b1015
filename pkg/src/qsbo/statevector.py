"""Dense statevector simulation.

Qubit ``i`` contributes ``2**i`` to a basis index (little-endian).  Basis-index
predicates are vectorised: they take an integer ``ndarray`` of indices and
return a boolean mask of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

Predicate = Callable[[np.ndarray], np.ndarray]

ATOL = 1e-10

_SELF_INVERSE = {"X", "H", "Z", "FLIP"}
_PARAMETRIC = {"RY", "P"}
KINDS = _SELF_INVERSE | _PARAMETRIC


class SimulationError(ValueError):
    """Raised for malformed gates, circuits or states."""


@dataclass(frozen=True)
class Gate:
    """A (multi-)controlled single-qubit gate or a diagonal phase flip.

    ``kind`` is one of ``X, H, Z, RY, P, FLIP``.  ``controls`` holds qubit
    indices and ``ctrl_state`` their polarity (1 fires on |1>, 0 on |0>).  A
    ``FLIP`` gate has no target; it multiplies every amplitude whose index
    satisfies ``predicate`` (and the controls) by -1.
    """

    kind: str
    targets: Tuple[int, ...] = ()
    controls: Tuple[int, ...] = ()
    ctrl_state: Tuple[int, ...] = ()
    angle: float = 0.0
    predicate: Optional[Predicate] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        if not self.ctrl_state and self.controls:
            object.__setattr__(self, "ctrl_state", (1,) * len(self.controls))
        if len(self.ctrl_state) != len(self.controls):
            raise SimulationError("ctrl_state must match controls")
        if any(s not in (0, 1) for s in self.ctrl_state):
            raise SimulationError("control polarity must be 0 or 1")
        if self.kind == "FLIP":
            if self.targets or self.predicate is None:
                raise SimulationError("FLIP takes a predicate and no targets")
        elif len(self.targets) != 1:
            raise SimulationError(f"{self.kind} acts on exactly one target")
        qubits = self.targets + self.controls
        if len(set(qubits)) != len(qubits):
            raise SimulationError("targets and controls must be disjoint")
        if any(q < 0 for q in qubits):
            raise SimulationError("negative qubit index")

    @property
    def qubits(self) -> Tuple[int, ...]:
        return self.targets + self.controls

    def adjoint(self) -> "Gate":
        if self.kind in _SELF_INVERSE:
            return self
        return Gate(self.kind, self.targets, self.controls, self.ctrl_state,
                    -self.angle, label=self.label)

    def controlled(self, qubit: int, state: int = 1) -> "Gate":
        return Gate(self.kind, self.targets, self.controls + (qubit,),
                    self.ctrl_state + (state,), self.angle, self.predicate, self.label)

    def remap(self, mapping: Sequence[int]) -> "Gate":
        """Relabel qubits through ``mapping`` (old index -> new index)."""
        pred = self.predicate
        if pred is not None:
            pred = _remapped_predicate(pred, tuple(mapping))
        return Gate(self.kind, tuple(mapping[q] for q in self.targets),
                    tuple(mapping[q] for q in self.controls), self.ctrl_state,
                    self.angle, pred, self.label)


def _remapped_predicate(pred: Predicate, mapping: Tuple[int, ...]) -> Predicate:
    def inner(idx: np.ndarray) -> np.ndarray:
        local = np.zeros_like(idx)
        for old, new in enumerate(mapping):
            local |= ((idx >> new) & 1) << old
        return pred(local)
    return inner


# Gate constructors ---------------------------------------------------------

def x(q: int) -> Gate:
    return Gate("X", (q,))


def h(q: int) -> Gate:
    return Gate("H", (q,))


def z(q: int) -> Gate:
    return Gate("Z", (q,))


def ry(theta: float, q: int) -> Gate:
    return Gate("RY", (q,), angle=float(theta))


def cx(control: int, target: int) -> Gate:
    return Gate("X", (target,), (control,))


def cry(theta: float, control: int, target: int) -> Gate:
    return Gate("RY", (target,), (control,), angle=float(theta))


def cphase(theta: float, control: int, target: int) -> Gate:
    return Gate("P", (target,), (control,), angle=float(theta))


def mcx(controls: Sequence[int], target: int, ctrl_state: Sequence[int] = ()) -> Gate:
    return Gate("X", (target,), tuple(controls), tuple(ctrl_state))


def mcz(controls: Sequence[int], target: int) -> Gate:
    return Gate("Z", (target,), tuple(controls))


def mcry(theta: float, controls: Sequence[int], target: int,
         ctrl_state: Sequence[int] = ()) -> Gate:
    return Gate("RY", (target,), tuple(controls), tuple(ctrl_state), float(theta))


def phase_flip(predicate: Predicate, label: str = "") -> Gate:
    return Gate("FLIP", predicate=predicate, label=label)


# Predicates ----------------------------------------------------------------

def bit_is(qubit: int, value: int = 1) -> Predicate:
    def pred(idx: np.ndarray) -> np.ndarray:
        return ((idx >> qubit) & 1) == value
    return pred


def index_equals(value: int) -> Predicate:
    def pred(idx: np.ndarray) -> np.ndarray:
        return idx == value
    return pred


def all_indices(idx: np.ndarray) -> np.ndarray:
    return np.ones(idx.shape, dtype=bool)


def negate(pred: Predicate) -> Predicate:
    def inner(idx: np.ndarray) -> np.ndarray:
        return ~pred(idx)
    return inner


# Circuits ------------------------------------------------------------------

@dataclass
class Circuit:
    """An ordered gate list on a fixed number of qubits."""

    n_qubits: int
    gates: List[Gate] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise SimulationError("a circuit needs at least one qubit")
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate) -> None:
        if any(q >= self.n_qubits for q in gate.qubits):
            raise SimulationError(
                f"gate on qubits {gate.qubits} outside circuit of width {self.n_qubits}")

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def compose(self, other: "Circuit", qubits: Optional[Sequence[int]] = None) -> "Circuit":
        """Append ``other``, mapping its qubit ``i`` onto ``qubits[i]``."""
        if qubits is None:
            if other.n_qubits > self.n_qubits:
                raise SimulationError("composed circuit is wider than the host")
            return self.extend(other.gates)
        if len(qubits) != other.n_qubits:
            raise SimulationError("qubit map must cover the composed circuit")
        return self.extend(g.remap(qubits) for g in other.gates)

    def adjoint(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.adjoint() for g in reversed(self.gates)])

    def controlled(self, qubit: int, state: int = 1) -> "Circuit":
        """Every gate additionally conditioned on ``qubit``.

        Valid as a controlled unitary because no gate carries a global phase.
        """
        width = max(self.n_qubits, qubit + 1)
        return Circuit(width, [g.controlled(qubit, state) for g in self.gates])

    def power(self, k: int) -> "Circuit":
        if k < 0:
            raise SimulationError("negative circuit power")
        return Circuit(self.n_qubits, list(self.gates) * k)

    def copy(self) -> "Circuit":
        return Circuit(self.n_qubits, list(self.gates))

    def __len__(self) -> int:
        return len(self.gates)


# States ----------------------------------------------------------------------

class StateVector:
    """Normalised complex amplitudes over ``2**n_qubits`` basis states."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes, n_qubits: Optional[int] = None, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        n = int(round(np.log2(len(amps)))) if len(amps) else -1
        if n < 0 or 2 ** n != len(amps):
            raise SimulationError("amplitude count must be a power of two")
        if n_qubits is not None and n_qubits != n:
            raise SimulationError(f"{len(amps)} amplitudes do not fit {n_qubits} qubits")
        if check and abs(np.vdot(amps, amps).real - 1.0) > ATOL:
            raise SimulationError("state is not normalised")
        self.n_qubits = n
        self.amplitudes = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls.basis(n_qubits, 0)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        if not 0 <= index < 2 ** n_qubits:
            raise SimulationError("basis index out of range")
        amps = np.zeros(2 ** n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, check=False)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits})"


@lru_cache(maxsize=None)
def _indices(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)
    idx.flags.writeable = False
    return idx


@lru_cache(maxsize=4096)
def _pair_indices(n: int, target: int, controls: Tuple[int, ...],
                  ctrl_state: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    idx = _indices(n)
    mask = ((idx >> target) & 1) == 0
    for c, s in zip(controls, ctrl_state):
        mask &= ((idx >> c) & 1) == s
    i0 = idx[mask]
    return i0, i0 | (1 << target)


def _control_mask(n: int, controls, ctrl_state) -> np.ndarray:
    idx = _indices(n)
    mask = np.ones(idx.shape, dtype=bool)
    for c, s in zip(controls, ctrl_state):
        mask &= ((idx >> c) & 1) == s
    return mask


_H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def _matrix(gate: Gate) -> np.ndarray:
    if gate.kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if gate.kind == "H":
        return _H.astype(complex)
    c, s = np.cos(gate.angle / 2), np.sin(gate.angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def apply_gate(amps: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    """Apply ``gate`` to a raw amplitude array in place and return it.

    No normalisation check, so this also acts linearly on arbitrary vectors.
    """
    if any(q >= n_qubits for q in gate.qubits):
        raise SimulationError(f"gate qubits {gate.qubits} out of range for {n_qubits} qubits")
    if gate.kind == "FLIP":
        mask = gate.predicate(_indices(n_qubits))
        if gate.controls:
            mask = mask & _control_mask(n_qubits, gate.controls, gate.ctrl_state)
        amps[mask] *= -1
        return amps
    i0, i1 = _pair_indices(n_qubits, gate.targets[0], gate.controls, gate.ctrl_state)
    if gate.kind == "Z":
        amps[i1] *= -1
    elif gate.kind == "P":
        amps[i1] *= np.exp(1j * gate.angle)
    elif gate.kind == "X":
        amps[i0], amps[i1] = amps[i1], amps[i0].copy()
    else:
        u = _matrix(gate)
        a0, a1 = amps[i0], amps[i1]
        amps[i0], amps[i1] = u[0, 0] * a0 + u[0, 1] * a1, u[1, 0] * a0 + u[1, 1] * a1
    return amps


def apply(state: StateVector, gate: Gate) -> StateVector:
    out = apply_gate(state.amplitudes.copy(), gate, state.n_qubits)
    return StateVector(out, check=False)


def run(circuit: Circuit, initial: Optional[StateVector] = None) -> StateVector:
    """Apply the circuit's gates in order to ``initial`` (default |0...0>)."""
    if initial is None:
        initial = StateVector.zero(circuit.n_qubits)
    if initial.n_qubits != circuit.n_qubits:
        raise SimulationError(
            f"circuit has {circuit.n_qubits} qubits but state has {initial.n_qubits}")
    amps = initial.amplitudes.copy()
    for gate in circuit.gates:
        apply_gate(amps, gate, circuit.n_qubits)
    return StateVector(amps, check=False)


def probability(state: StateVector, predicate: Predicate) -> float:
    """Total probability of the basis states satisfying ``predicate``."""
    mask = predicate(_indices(state.n_qubits))
    p = float(np.sum(np.abs(state.amplitudes[mask]) ** 2))
    return min(max(p, 0.0), 1.0)


def marginal(state: StateVector, qubits: Sequence[int]) -> np.ndarray:
    """Distribution of the integer held by ``qubits`` (qubits[0] least significant)."""
    idx = _indices(state.n_qubits)
    local = np.zeros_like(idx)
    for pos, q in enumerate(qubits):
        local |= ((idx >> q) & 1) << pos
    return np.bincount(local, weights=state.probabilities(), minlength=2 ** len(qubits))


class ShotSampler:
    """Seeded shot source.  Single owner; use :meth:`spawn` for parallel streams."""

    def __init__(self, seed: Optional[int] = None, *, _seq: Optional[np.random.SeedSequence] = None):
        self._seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self.seed = self._seq.entropy
        self.rng = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> List["ShotSampler"]:
        return [ShotSampler(_seq=s) for s in self._seq.spawn(n)]

    def binomial(self, n: int, p: float) -> int:
        return int(self.rng.binomial(n, min(max(p, 0.0), 1.0)))

    def multinomial(self, n: int, probs: np.ndarray) -> np.ndarray:
        probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
        return self.rng.multinomial(n, probs / probs.sum())


def sample(state: StateVector, shots: int, sampler: ShotSampler) -> Dict[int, int]:
    """Histogram of ``shots`` computational-basis measurements."""
    if shots < 1:
        raise SimulationError("shots must be at least 1")
    counts = sampler.multinomial(shots, state.probabilities())
    return {int(i): int(c) for i, c in enumerate(counts) if c}
