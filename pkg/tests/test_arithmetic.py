import itertools

import numpy as np
import pytest

from qsbo.arithmetic import (
    RegisterLayout, add_inplace, weighted_sum_ancillas, compare_geq, compare_geq_const, compare_leq_const,
    controlled_add_inplace, sum_register_width, twos_complement_inplace, weighted_sum,
)
from qsbo.statevector import Circuit, StateVector, h, marginal, run
from conftest import basis_run, random_state, read, write


def _adder(n):
    lay = RegisterLayout()
    a, b, carry, anc = lay.add("a", n), lay.add("b", n), lay.add("carry", 1)[0], lay.add("anc", 1)[0]
    return add_inplace(a, b, carry, anc), a, b, carry, anc


@pytest.mark.parametrize("n", [1, 2, 3])
def test_add_exhaustive(n):
    circ, a, b, carry, anc = _adder(n)
    for av, bv in itertools.product(range(2 ** n), repeat=2):
        out = basis_run(circ, {**write(av, a), **write(bv, b)})
        assert read(out, a) == av
        assert read(out, b + [carry]) == av + bv
        assert read(out, [anc]) == 0


def test_add_five_plus_six():
    circ, a, b, carry, _ = _adder(3)
    out = basis_run(circ, {**write(5, a), **write(6, b)})
    assert read(out, b + [carry]) == 11


def test_add_random_n4(rng):
    circ, a, b, carry, anc = _adder(4)
    for av, bv in rng.integers(0, 16, size=(40, 2)):
        out = basis_run(circ, {**write(int(av), a), **write(int(bv), b)})
        assert read(out, b + [carry]) == av + bv and read(out, a) == av and read(out, [anc]) == 0


def test_add_rejects_overlap():
    with pytest.raises(ValueError):
        add_inplace([0, 1], [1, 2], 3, 4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_controlled_add_exhaustive(n):
    lay = RegisterLayout()
    ctl = lay.add("ctl", 1)[0]
    a, b, carry, anc = lay.add("a", n), lay.add("b", n), lay.add("c", 1)[0], lay.add("anc", 1)[0]
    circ = controlled_add_inplace(ctl, a, b, carry, anc)
    for cv, av, bv in itertools.product((0, 1), range(2 ** n), range(2 ** n)):
        out = basis_run(circ, {ctl: cv, **write(av, a), **write(bv, b)})
        assert read(out, b + [carry]) == (av + bv if cv else bv)
        assert read(out, a) == av and read(out, [anc]) == 0


def test_controlled_add_superposed_control():
    lay = RegisterLayout()
    ctl, a, b = lay.add("ctl", 1)[0], lay.add("a", 2), lay.add("b", 2)
    carry, anc = lay.add("c", 1)[0], lay.add("anc", 1)[0]
    prep = Circuit(lay.width, [h(ctl)])
    init = sum(v << q for q, v in {**write(3, a), **write(1, b)}.items())
    state = run(prep, StateVector.basis(lay.width, init))
    out = run(controlled_add_inplace(ctl, a, b, carry, anc), state)
    dist = marginal(out, b + [carry])
    assert dist[1] == pytest.approx(0.5) and dist[4] == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_twos_complement_exhaustive(n):
    b, carry = list(range(n)), n
    circ = twos_complement_inplace(b, carry)
    for bv in range(2 ** n):
        out = basis_run(circ, write(bv, b))
        assert read(out, b + [carry]) == 2 ** n - bv


def test_twos_complement_examples():
    circ = twos_complement_inplace([0, 1, 2], 3)
    assert read(basis_run(circ, write(3, [0, 1, 2])), [0, 1, 2, 3]) == 5
    assert basis_run(circ, {}) == 0b1000


def _geq_layout(n):
    lay = RegisterLayout()
    return lay, lay.add("a", n), lay.add("b", n), lay.add("r", 1)[0], lay.add("anc", 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_compare_geq_exhaustive(n):
    lay, a, b, r, anc = _geq_layout(n)
    circ = compare_geq(a, b, r, anc)
    for av, bv in itertools.product(range(2 ** n), repeat=2):
        out = basis_run(circ, {**write(av, a), **write(bv, b)})
        assert read(out, [r]) == int(av >= bv)
        assert read(out, a) == av and read(out, b) == bv and read(out, anc) == 0


def test_compare_geq_random_n4(rng):
    lay, a, b, r, anc = _geq_layout(4)
    circ = compare_geq(a, b, r, anc)
    for av, bv in rng.integers(0, 16, size=(40, 2)):
        out = basis_run(circ, {**write(int(av), a), **write(int(bv), b)})
        assert read(out, [r]) == int(av >= bv) and read(out, b) == bv and read(out, a) == av


def test_compare_geq_needs_ancilla():
    with pytest.raises(ValueError):
        compare_geq([0], [1], 2, [])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_compare_leq_const_exhaustive(n):
    a, r, anc = list(range(n)), n, list(range(n + 1, 2 * n))
    for lam in range(2 ** n):
        circ = compare_leq_const(a, lam, r, anc, n_qubits=2 * n + 1)
        for av in range(2 ** n):
            out = basis_run(circ, write(av, a))
            assert read(out, [r]) == int(av <= lam)
            assert read(out, a) == av and read(out, anc) == 0


def test_compare_leq_const_examples():
    a, r, anc = [0, 1], 2, [3]
    assert read(basis_run(compare_leq_const(a, 1, r, anc), write(2, a)), [r]) == 0
    full = compare_leq_const(a, 3, r, anc)
    assert all(read(basis_run(full, write(v, a)), [r]) == 1 for v in range(4))


def test_compare_leq_const_errors():
    with pytest.raises(ValueError):
        compare_leq_const([0, 1], 4, 2, [3])
    with pytest.raises(ValueError):
        compare_leq_const([0, 1, 2], 2, 3, [4])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_compare_geq_const_exhaustive(n):
    a, r, anc = list(range(n)), n, list(range(n + 1, 2 * n))
    for value in range(2 ** n + 1):
        circ = compare_geq_const(a, value, r, anc, n_qubits=2 * n + 1)
        for av in range(2 ** n):
            out = basis_run(circ, write(av, a))
            assert read(out, [r]) == int(av >= value) and read(out, anc) == 0


def _sum_layout(k, n):
    lay = RegisterLayout()
    y = lay.add("y", k)
    xs = [lay.add(f"x{i}", n) for i in range(k)]
    s = lay.add("sum", sum_register_width(k, n))
    anc = lay.add("anc", max(n, weighted_sum_ancillas(k, n)))
    return lay, y, xs, s, anc


def test_weighted_sum_examples():
    lay, y, xs, s, anc = _sum_layout(2, 2)
    circ = weighted_sum(y, xs, s, anc)
    assert read(basis_run(circ, {**write(0, y), **write(2, xs[0]), **write(3, xs[1])}), s) == 0
    assert read(basis_run(circ, {**write(3, y), **write(2, xs[0]), **write(3, xs[1])}), s) == 5


@pytest.mark.parametrize("k,n", [(1, 2), (2, 2), (2, 1), (3, 1)])
def test_weighted_sum_exhaustive(k, n):
    lay, y, xs, s, anc = _sum_layout(k, n)
    circ = weighted_sum(y, xs, s, anc)
    for yv in range(2 ** k):
        for xv in itertools.product(range(2 ** n), repeat=k):
            init = write(yv, y)
            for reg, v in zip(xs, xv):
                init.update(write(v, reg))
            out = basis_run(circ, init)
            expect = sum(v for i, v in enumerate(xv) if (yv >> i) & 1)
            assert read(out, s) == expect
            assert read(out, anc) == 0 and read(out, y) == yv
            assert all(read(out, reg) == v for reg, v in zip(xs, xv))


def test_weighted_sum_narrow_register():
    with pytest.raises(ValueError):
        weighted_sum([0, 1], [[2, 3], [4, 5]], [6, 7], [8, 9])


def test_sum_register_width():
    assert sum_register_width(2, 2) == 3
    assert sum_register_width(1, 2) == 2
    assert sum_register_width(2, 3) == 4
    assert sum_register_width(4, 2) == 4  # 12 needs 4 bits while log2(4 * 4) = 4


@pytest.mark.parametrize("make", [
    lambda: add_inplace([0, 1, 2], [3, 4, 5], 6, 7),
    lambda: compare_geq([0, 1, 2], [3, 4, 5], 6, [7]),
    lambda: compare_leq_const([0, 1, 2], 5, 3, [4, 5]),
    lambda: weighted_sum([0, 1], [[2, 3], [4, 5]], [6, 7, 8], [9, 10]),
])
def test_reversibility(make, rng):
    circ = make()
    s = random_state(rng, circ.n_qubits)
    back = run(circ.adjoint(), run(circ, s))
    assert np.allclose(back.amplitudes, s.amplitudes, atol=1e-10)


def test_superposition_correctness():
    # uniform superposition over (a, b) in 3-bit registers; sum distribution matches classical
    n = 3
    circ, a, b, carry, anc = _adder(n)
    prep = Circuit(circ.n_qubits, [h(q) for q in a + b])
    out = run(prep.copy().compose(circ))
    dist = marginal(out, b + [carry])
    classical = np.zeros(2 ** (n + 1))
    for av, bv in itertools.product(range(2 ** n), repeat=2):
        classical[av + bv] += 1 / 4 ** n
    assert np.allclose(dist, classical, atol=1e-10)
    # joint (a, sum) stays uniform over valid pairs: amplitudes all equal magnitude
    nonzero = out.probabilities()[out.probabilities() > 1e-12]
    assert np.allclose(nonzero, 1 / 4 ** n)
