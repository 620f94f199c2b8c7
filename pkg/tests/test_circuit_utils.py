import numpy as np
import pytest

from circuit_utils import (
    RegisterLayout,
    append_mcx,
    controlled,
    cyclic_adder,
    interaction_layout,
    inverse,
    kinetic_layout,
    potential_layout,
    qft,
    toffoli_decomposed,
)
from simulator import Circuit, circuit_unitary, gate_matrix, Gate, run_statevector


def _equal_up_to_phase(a, b, tol=1e-10):
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[idx] / b[idx]
    return abs(abs(phase) - 1.0) < tol and np.allclose(a, phase * b, atol=tol)


def _basis(width, index):
    vec = np.zeros(2 ** width, dtype=complex)
    vec[index] = 1.0
    return vec


def test_toffoli_decomposition_matches_ccx():
    circuit = toffoli_decomposed()
    assert set(circuit.count_ops()) == {"H", "CX", "RZ"}
    assert circuit.count_ops()["CX"] == 6
    ccx = gate_matrix(Gate("CCX", (0, 1, 2)))
    assert _equal_up_to_phase(circuit_unitary(circuit), ccx)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cyclic_adder_increments_with_clean_ancillas(n):
    circuit = cyclic_adder(n)
    assert circuit.width == n + (n - 2)
    N = 2 ** n
    extra = n - 2
    for k in range(N):
        state = run_statevector(circuit, initial_state=_basis(circuit.width, k << extra))
        expected = ((k + 1) % N) << extra
        assert abs(state.data[expected]) == pytest.approx(1.0, abs=1e-12)


def test_cyclic_adder_rejects_single_qubit():
    with pytest.raises(ValueError):
        cyclic_adder(1)


def test_mcx_with_three_controls_uses_v_chain():
    circuit = Circuit(5)
    append_mcx(circuit, [0, 1, 2], 3, ancillas=[4])
    u = circuit_unitary(circuit)
    for idx in range(16):
        bits = [(idx >> (3 - i)) & 1 for i in range(4)]
        flipped = bits[:]
        if all(bits[:3]):
            flipped[3] ^= 1
        out = int("".join(map(str, flipped)), 2)
        # ancilla (qubit 4) starts and ends in |0⟩
        assert abs(u[out << 1, idx << 1]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        append_mcx(Circuit(5), [0, 1, 2], 3)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_qft_equals_dft(n):
    N = 2 ** n
    jk = np.outer(np.arange(N), np.arange(N))
    dft = np.exp(2j * np.pi * jk / N) / np.sqrt(N)
    np.testing.assert_allclose(circuit_unitary(qft(n)), dft, atol=1e-10)


def test_controlled_adder_is_block_diagonal():
    adder = Circuit(2).add("CX", 1, 0).add("X", 1)
    u = circuit_unitary(adder)
    body = Circuit(3).compose(adder, [1, 2])
    cu = circuit_unitary(controlled(body, 0))
    expected = np.block([[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), u]])
    np.testing.assert_allclose(cu, expected, atol=1e-12)


def test_controlled_rotation_and_hadamard(rng):
    body = Circuit(3)
    body.add("RY", 1, theta=float(rng.uniform(-3, 3))).add("H", 2).add("RZ", 2, theta=0.4)
    body.add("SWAP", 1, 2).add("CPHASE", 1, 2, theta=0.9)
    # the body leaves qubit 0 alone: its unitary is I ⊗ V
    v = circuit_unitary(body)[:4, :4]
    cu = circuit_unitary(controlled(body, 0))
    expected = np.block([[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), v]])
    np.testing.assert_allclose(cu, expected, atol=1e-10)


def test_controlled_rejects_overlap():
    with pytest.raises(ValueError):
        controlled(Circuit(2).add("X", 0), 0)


def test_inverse_undoes_circuit(rng):
    circuit = Circuit(3)
    for q in range(3):
        circuit.add("RY", q, theta=float(rng.uniform(-3, 3)))
    circuit.add("CX", 0, 1).add("SX", 2).add("CPHASE", 0, 2, theta=0.3).add("CCX", 0, 1, 2)
    full = circuit.copy().compose(inverse(circuit))
    np.testing.assert_allclose(circuit_unitary(full), np.eye(8), atol=1e-10)
    with pytest.raises(ValueError):
        inverse(Circuit(1).add("MEASURE", 0))


def test_layout_widths():
    assert kinetic_layout(4).width == 7
    assert potential_layout(4).width == 9
    assert interaction_layout(4).width == 13
    assert kinetic_layout(2).adder_ancillas == ()
    with pytest.raises(ValueError):
        RegisterLayout(0, (0, 1))
