"""circuit_utils.py

Reusable circuit builders: Toffoli decomposition, multi-controlled X on a
clean-ancilla V-chain, cyclic increment adder, QFT, and the generic
``controlled`` / ``inverse`` transforms used by the Hadamard tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from simulator import Circuit, Gate, gate_matrix


@dataclass(frozen=True)
class RegisterLayout:
    """Qubit spans of a Hadamard-test circuit."""

    ancilla: int
    primary: Tuple[int, ...]
    secondary: Tuple[int, ...] = ()
    tertiary: Tuple[int, ...] = ()
    adder_ancillas: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        spans = [(self.ancilla,), self.primary, self.secondary, self.tertiary, self.adder_ancillas]
        flat = [q for span in spans for q in span]
        if len(flat) != len(set(flat)):
            raise ValueError(f"register spans overlap: {spans}")

    @property
    def width(self) -> int:
        return 1 + len(self.primary) + len(self.secondary) + len(self.tertiary) + len(self.adder_ancillas)

    def to_dict(self) -> dict:
        return {
            "ancilla": self.ancilla,
            "primary": list(self.primary),
            "secondary": list(self.secondary),
            "tertiary": list(self.tertiary),
            "adder_ancillas": list(self.adder_ancillas),
        }


def _span(start: int, length: int) -> Tuple[int, ...]:
    return tuple(range(start, start + length))


def kinetic_layout(n: int) -> RegisterLayout:
    return RegisterLayout(0, _span(1, n), adder_ancillas=_span(n + 1, max(n - 2, 0)))


def potential_layout(n: int) -> RegisterLayout:
    return RegisterLayout(0, _span(1, n), secondary=_span(n + 1, n))


def interaction_layout(n: int) -> RegisterLayout:
    return RegisterLayout(0, _span(1, n), secondary=_span(n + 1, n), tertiary=_span(2 * n + 1, n))


# T = RZ(π/4) up to a global phase.
_T = np.pi / 4


def append_toffoli(circuit: Circuit, c1: int, c2: int, target: int) -> Circuit:
    """Append the H/CX/RZ(±π/4) decomposition of CCX(c1, c2, target)."""
    ops = [
        ("H", (target,), None),
        ("CX", (c2, target), None),
        ("RZ", (target,), -_T),
        ("CX", (c1, target), None),
        ("RZ", (target,), _T),
        ("CX", (c2, target), None),
        ("RZ", (target,), -_T),
        ("CX", (c1, target), None),
        ("RZ", (c2,), _T),
        ("RZ", (target,), _T),
        ("H", (target,), None),
        ("CX", (c1, c2), None),
        ("RZ", (c1,), _T),
        ("RZ", (c2,), -_T),
        ("CX", (c1, c2), None),
    ]
    for kind, qubits, theta in ops:
        circuit.add(kind, *qubits, theta=theta)
    return circuit


def toffoli_decomposed() -> Circuit:
    """3-qubit circuit over {H, CX, RZ(±π/4)} equal to CCX up to global phase."""
    return append_toffoli(Circuit(3, metadata={"name": "toffoli"}), 0, 1, 2)


def append_mcx(circuit: Circuit, controls: Sequence[int], target: int, ancillas: Sequence[int] = ()) -> Circuit:
    """Multi-controlled X; ``k >= 3`` controls use ``k - 2`` clean ancillas."""
    controls = list(controls)
    k = len(controls)
    if k == 0:
        return circuit.add("X", target)
    if k == 1:
        return circuit.add("CX", controls[0], target)
    if k == 2:
        return circuit.add("CCX", controls[0], controls[1], target)
    if len(ancillas) < k - 2:
        raise ValueError(f"{k}-controlled X needs {k - 2} ancillas, got {len(ancillas)}")
    chain: List[Tuple[int, int, int]] = [(controls[0], controls[1], ancillas[0])]
    for i in range(2, k - 1):
        chain.append((controls[i], ancillas[i - 2], ancillas[i - 1]))
    for c_a, c_b, t in chain:
        circuit.add("CCX", c_a, c_b, t)
    circuit.add("CCX", controls[-1], ancillas[k - 3], target)
    for c_a, c_b, t in reversed(chain):
        circuit.add("CCX", c_a, c_b, t)
    return circuit


def append_increment(
    circuit: Circuit,
    data: Sequence[int],
    ancillas: Sequence[int] = (),
    controls: Sequence[int] = (),
) -> Circuit:
    """|k⟩ → |k+1 mod 2^n⟩ on ``data`` (most significant qubit first)."""
    data = list(data)
    n = len(data)
    for i in range(n):
        append_mcx(circuit, list(controls) + data[i + 1:], data[i], ancillas)
    return circuit


def cyclic_adder(n: int, controlled: bool = False) -> Circuit:
    """Cyclic +1 adder on ``n`` data qubits with ``n - 2`` ancillas.

    Uncontrolled layout: data ``0..n-1``, ancillas ``n..2n-3``.
    With ``controlled=True`` qubit 0 is the control and everything shifts by
    one, which is the kinetic Hadamard-test layout.
    """
    if n < 2:
        raise ValueError(f"cyclic adder needs n >= 2, got {n}")
    offset = 1 if controlled else 0
    data = _span(offset, n)
    ancillas = _span(offset + n, n - 2)
    circuit = Circuit(offset + n + (n - 2), metadata={"name": f"cyclic_adder_{n}"})
    return append_increment(circuit, data, ancillas, controls=(0,) if controlled else ())


def qft(n: int) -> Circuit:
    """Quantum Fourier transform with entries ω^{jk}/√N, terminal swaps included."""
    if n < 1:
        raise ValueError(f"qft needs n >= 1, got {n}")
    circuit = Circuit(n, metadata={"name": f"qft_{n}"})
    for i in range(n):
        circuit.add("H", i)
        for j in range(i + 1, n):
            circuit.add("CPHASE", j, i, theta=2.0 * np.pi / 2 ** (j - i + 1))
    for i in range(n // 2):
        circuit.add("SWAP", i, n - 1 - i)
    return circuit


def _controlled_unitary(gate: Gate, control: int) -> Gate:
    u = gate_matrix(gate)
    dim = u.shape[0]
    mat = np.eye(2 * dim, dtype=complex)
    mat[dim:, dim:] = u
    return Gate("UNITARY", (control,) + gate.qubits, matrix=mat)


def _controlled_gate(gate: Gate, control: int) -> List[Gate]:
    kind, q = gate.kind, gate.qubits
    if kind == "X":
        return [Gate("CX", (control, q[0]))]
    if kind == "CX":
        return [Gate("CCX", (control, q[0], q[1]))]
    if kind in ("RY", "RZ"):
        half = gate.theta / 2.0
        return [
            Gate(kind, q, half),
            Gate("CX", (control, q[0])),
            Gate(kind, q, -half),
            Gate("CX", (control, q[0])),
        ]
    if kind == "H":
        # H = X·RY(π/2)
        return _controlled_gate(Gate("RY", q, np.pi / 2), control) + [Gate("CX", (control, q[0]))]
    if kind == "SWAP":
        a, b = q
        return [Gate("CX", (b, a)), Gate("CCX", (control, a, b)), Gate("CX", (b, a))]
    if kind in ("MEASURE", "RESET"):
        raise ValueError(f"cannot control a {kind}")
    return [_controlled_unitary(gate, control)]


def controlled(circuit: Circuit, control: int, width: int = 0) -> Circuit:
    """Promote every gate of ``circuit`` to its version controlled on ``control``.

    The result acts as |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U. ``control`` must not be touched
    by ``circuit``.
    """
    if control in circuit.used_qubits():
        raise ValueError(f"control qubit {control} overlaps the circuit span")
    out = Circuit(max(width, circuit.width, control + 1), metadata=dict(circuit.metadata))
    out.metadata["name"] = f"c-{circuit.name}" if circuit.name else "controlled"
    for gate in circuit.gates:
        for g in _controlled_gate(gate, control):
            out.append(g)
    return out


_SELF_INVERSE = frozenset({"H", "X", "CX", "CCX", "SWAP"})


def inverse(circuit: Circuit) -> Circuit:
    """Adjoint circuit."""
    out = Circuit(circuit.width, metadata=dict(circuit.metadata))
    out.metadata["name"] = f"{circuit.name}_dg" if circuit.name else "inverse"
    for gate in reversed(circuit.gates):
        if gate.kind in ("MEASURE", "RESET"):
            raise ValueError(f"cannot invert a circuit containing {gate.kind}")
        if gate.kind in _SELF_INVERSE:
            out.append(gate)
        elif gate.kind in ("RY", "RZ", "CPHASE"):
            out.append(Gate(gate.kind, gate.qubits, -gate.theta))
        else:
            out.append(Gate("UNITARY", gate.qubits, matrix=gate_matrix(gate).conj().T))
    return out
