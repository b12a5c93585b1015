import numpy as np
import pytest

from qsbo.statevector import StateVector, marginal, run


def random_state(rng, n):
    v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    return StateVector(v / np.linalg.norm(v))


def basis_run(circuit, assignments):
    """Run ``circuit`` on the basis state given by ``{qubit: bit}`` and return the output index.

    Fails if the output is not a basis state.
    """
    idx = sum(bit << q for q, bit in assignments.items())
    out = run(circuit, StateVector.basis(circuit.n_qubits, idx))
    probs = out.probabilities()
    j = int(np.argmax(probs))
    assert probs[j] == pytest.approx(1.0, abs=1e-10)
    return j


def read(index, qubits):
    return sum(((index >> q) & 1) << pos for pos, q in enumerate(qubits))


def write(value, qubits):
    return {q: (value >> pos) & 1 for pos, q in enumerate(qubits)}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


__all__ = ["random_state", "basis_run", "read", "write", "marginal"]
