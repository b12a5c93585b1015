"""Reversible integer arithmetic on little-endian qubit registers.

All constructors return a :class:`Circuit` whose width is ``n_qubits`` (or the
largest qubit index used, plus one) so it can be composed into a host circuit
without remapping.  Registers are lists of qubit indices, least significant
bit first.
"""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Sequence

from .statevector import Circuit, Gate, cx, mcx, x

Register = Sequence[int]


class RegisterLayout:
    """Named, disjoint qubit ranges allocated left to right."""

    def __init__(self):
        self._regs: Dict[str, List[int]] = {}
        self.width = 0

    def add(self, name: str, size: int) -> List[int]:
        if name in self._regs:
            raise ValueError(f"register {name!r} already allocated")
        if size < 0:
            raise ValueError("register size must be non-negative")
        qubits = list(range(self.width, self.width + size))
        self._regs[name] = qubits
        self.width += size
        return qubits

    def __getitem__(self, name: str) -> List[int]:
        return self._regs[name]

    def __contains__(self, name: str) -> bool:
        return name in self._regs

    def __iter__(self) -> Iterator[str]:
        return iter(self._regs)

    def sizes(self) -> Dict[str, int]:
        return {name: len(q) for name, q in self._regs.items()}


def _width(n_qubits: Optional[int], *groups) -> int:
    used = [q for g in groups for q in g]
    need = max(used) + 1 if used else 1
    if n_qubits is None:
        return need
    if n_qubits < need:
        raise ValueError(f"circuit width {n_qubits} too small for qubit {need - 1}")
    return n_qubits


def _check_disjoint(*groups) -> None:
    flat = [q for g in groups for q in g]
    if len(set(flat)) != len(flat):
        raise ValueError("registers overlap")


def _maj(c: int, b: int, a: int) -> List[Gate]:
    return [cx(a, b), cx(a, c), mcx([c, b], a)]


def _uma(c: int, b: int, a: int) -> List[Gate]:
    return [mcx([c, b], a), cx(a, c), cx(c, b)]


def _ripple_add(a: Register, b: Register, carry: Optional[int], ancilla: int) -> List[Gate]:
    """Cuccaro MAJ/UMA chain: ``b <- a + b (mod 2**n)``, ``carry ^= carry-out``."""
    n = len(a)
    gates: List[Gate] = []
    prev = [ancilla] + list(a[:-1])
    for i in range(n):
        gates += _maj(prev[i], b[i], a[i])
    if carry is not None:
        gates.append(cx(a[n - 1], carry))
    for i in reversed(range(n)):
        gates += _uma(prev[i], b[i], a[i])
    return gates


def add_inplace(a_reg: Register, b_reg: Register, carry: Optional[int], ancilla: int,
                n_qubits: Optional[int] = None) -> Circuit:
    """In-place ripple-carry addition ``|a>|b>|0> -> |a>|a+b mod 2^n>|carry-out>``.

    ``carry`` may be ``None`` for addition modulo ``2**n``; ``ancilla`` must
    be |0> and is returned to |0>.
    """
    if len(a_reg) != len(b_reg) or not a_reg:
        raise ValueError("addend registers must have equal, non-zero width")
    carry_q = [] if carry is None else [carry]
    _check_disjoint(a_reg, b_reg, carry_q, [ancilla])
    circ = Circuit(_width(n_qubits, a_reg, b_reg, carry_q, [ancilla]))
    return circ.extend(_ripple_add(a_reg, b_reg, carry, ancilla))


def controlled_add_inplace(control: int, a_reg: Register, b_reg: Register,
                           carry: Optional[int], ancilla: int,
                           n_qubits: Optional[int] = None) -> Circuit:
    """:func:`add_inplace` with every internal gate conditioned on ``control``."""
    carry_q = [] if carry is None else [carry]
    _check_disjoint([control], a_reg, b_reg, carry_q, [ancilla])
    inner = add_inplace(a_reg, b_reg, carry, ancilla)
    circ = Circuit(_width(n_qubits, [control], a_reg, b_reg, carry_q, [ancilla]))
    return circ.extend(g.controlled(control) for g in inner.gates)


def _increment(reg: Register) -> List[Gate]:
    """``reg <- reg + 1 (mod 2**len(reg))`` with a cascade of multi-controlled X."""
    gates = [mcx(reg[:i], reg[i]) for i in reversed(range(1, len(reg)))]
    gates.append(x(reg[0]))
    return gates


def twos_complement_inplace(b_reg: Register, carry: int,
                            n_qubits: Optional[int] = None) -> Circuit:
    """``(b_reg, carry) <- 2**n - b`` as an (n+1)-bit value; carry starts at |0>."""
    _check_disjoint(b_reg, [carry])
    circ = Circuit(_width(n_qubits, b_reg, [carry]))
    circ.extend(x(q) for q in b_reg)
    return circ.extend(_increment(list(b_reg) + [carry]))


def compare_geq(a_reg: Register, b_reg: Register, result: int, ancillas: Sequence[int],
                n_qubits: Optional[int] = None) -> Circuit:
    """``result ^= [a >= b]`` via the carry of ``a + (2**n - b)``.

    The two's complement is formed in ``b_reg`` with ``result`` as its top
    bit, ``a`` is added in place, and ``b_reg`` is then restored with
    arithmetic modulo ``2**n`` only, which leaves ``result`` untouched.  Needs
    one clean ancilla.
    """
    if len(a_reg) != len(b_reg) or not a_reg:
        raise ValueError("compared registers must have equal, non-zero width")
    if len(ancillas) < 1:
        raise ValueError("compare_geq needs one ancilla")
    anc = ancillas[0]
    _check_disjoint(a_reg, b_reg, [result], [anc])
    circ = Circuit(_width(n_qubits, a_reg, b_reg, [result], [anc]))
    circ.extend(twos_complement_inplace(b_reg, result).gates)
    circ.extend(_ripple_add(a_reg, b_reg, result, anc))
    # undo: b <- b - a (mod 2^n), then negate mod 2^n
    circ.extend(Circuit(circ.n_qubits, _ripple_add(a_reg, b_reg, None, anc)).adjoint().gates)
    circ.extend(x(q) for q in b_reg)
    return circ.extend(_increment(b_reg))


def _geq_const_gates(a_reg: Register, value: int, result: int,
                     ancillas: Sequence[int]) -> List[Gate]:
    """``result ^= [a >= value]`` for ``1 <= value < 2**n`` by a classical carry chain."""
    n = len(a_reg)
    t = 2 ** n - value
    bits = [(t >> i) & 1 for i in range(n)]
    carries = list(ancillas[: n - 1]) + [result]
    compute: List[Gate] = []
    if bits[0]:
        compute.append(cx(a_reg[0], carries[0]))
    for i in range(1, n):
        pair = [a_reg[i], carries[i - 1]]
        if bits[i]:
            # carry = a_i OR carry_{i-1}
            compute += [x(carries[i]), mcx(pair, carries[i], (0, 0))]
        else:
            compute.append(mcx(pair, carries[i]))
    tail = [g for g in compute if g.targets[0] != result]
    uncompute = [g.adjoint() for g in reversed(tail)]
    return compute + uncompute


def compare_geq_const(a_reg: Register, value: int, result: int, ancillas: Sequence[int],
                      n_qubits: Optional[int] = None) -> Circuit:
    """``result ^= [a >= value]`` for a classical integer ``value``."""
    n = len(a_reg)
    if not 0 <= value <= 2 ** n:
        raise ValueError(f"value {value} outside [0, 2**{n}]")
    needed = max(n - 1, 0) if 0 < value < 2 ** n else 0
    if len(ancillas) < needed:
        raise ValueError(f"need {needed} ancillas, got {len(ancillas)}")
    anc = list(ancillas[:needed])
    _check_disjoint(a_reg, [result], anc)
    circ = Circuit(_width(n_qubits, a_reg, [result], anc))
    if value == 0:
        return circ.append(x(result))
    if value == 2 ** n:
        return circ
    return circ.extend(_geq_const_gates(a_reg, value, result, anc))


def compare_leq_const(a_reg: Register, lam: int, result: int, ancillas: Sequence[int],
                      n_qubits: Optional[int] = None) -> Circuit:
    """``result ^= [a <= lam]``, computed as the negation of ``a >= lam + 1``."""
    n = len(a_reg)
    if not 0 <= lam < 2 ** n:
        raise ValueError(f"threshold {lam} outside [0, {2 ** n - 1}]")
    circ = compare_geq_const(a_reg, lam + 1, result, ancillas, n_qubits)
    return circ.append(x(result))


def sum_register_width(k: int, n: int) -> int:
    """Bits needed for the largest attainable sum of ``k`` n-bit values."""
    return max(1, math.ceil(math.log2(k * (2 ** n - 1) + 1)))


def weighted_sum_ancillas(k: int, n: int, s: Optional[int] = None) -> int:
    s = sum_register_width(k, n) if s is None else s
    return (s - n) + 1


def weighted_sum(y_reg: Register, x_regs: Sequence[Register], sum_reg: Register,
                 ancillas: Sequence[int], n_qubits: Optional[int] = None) -> Circuit:
    """``sum_reg += sum_i x_i * y_i`` using one controlled adder per term.

    Each ``x_i`` is zero-padded up to the sum width with ancillas; one more
    ancilla serves as the adder's input carry.
    """
    k = len(y_reg)
    if len(x_regs) != k or k == 0:
        raise ValueError("need one value register per decision qubit")
    n = len(x_regs[0])
    if any(len(r) != n for r in x_regs):
        raise ValueError("value registers must share a width")
    s = len(sum_reg)
    if s < sum_register_width(k, n):
        raise ValueError(f"sum register of {s} qubits cannot hold {k} x {n}-bit values")
    need = weighted_sum_ancillas(k, n, s)
    if len(ancillas) < need:
        raise ValueError(f"weighted_sum needs {need} ancillas, got {len(ancillas)}")
    pad, c0 = list(ancillas[: s - n]), ancillas[s - n]
    _check_disjoint(y_reg, [q for r in x_regs for q in r], sum_reg, pad, [c0])
    circ = Circuit(_width(n_qubits, y_reg, sum_reg, ancillas[:need], *x_regs))
    for yq, xr in zip(y_reg, x_regs):
        addend = list(xr) + pad
        circ.extend(g.controlled(yq) for g in _ripple_add(addend, sum_reg, None, c0))
    return circ
