import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simulator import (
    Circuit,
    ConfusionMatrix,
    DensityMatrix,
    Gate,
    QuantumChannel,
    SimulationLimitError,
    circuit_unitary,
    dump_circuit,
    expectation_z,
    marginal_probabilities,
    reset_channel,
    run_density,
    run_statevector,
    sample,
    state_fidelity,
    tensor_channels,
)


def test_qubit_zero_is_most_significant():
    circuit = Circuit(3).add("X", 0)
    state = run_statevector(circuit)
    assert np.argmax(np.abs(state.data)) == 0b100


def test_bell_state():
    circuit = Circuit(2).add("H", 0).add("CX", 0, 1)
    state = run_statevector(circuit)
    np.testing.assert_allclose(state.data, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-12)


def test_cx_control_is_first_listed_qubit():
    circuit = Circuit(2).add("X", 1).add("CX", 1, 0)
    state = run_statevector(circuit)
    assert np.argmax(np.abs(state.data)) == 0b11


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("FOO", (0,))
    with pytest.raises(ValueError):
        Gate("CX", (0, 0))
    with pytest.raises(ValueError):
        Gate("RY", (0,))
    with pytest.raises(ValueError):
        Gate("H", (0,), theta=1.0)
    with pytest.raises(ValueError):
        Circuit(2).add("CX", 0, 2)


def test_width_cap():
    with pytest.raises(SimulationLimitError):
        run_statevector(Circuit(5).add("H", 0), max_qubits=4)
    with pytest.raises(SimulationLimitError):
        run_density(Circuit(5).add("H", 0), max_qubits=4)


def test_mid_circuit_measure_rejected_by_statevector():
    circuit = Circuit(1).add("MEASURE", 0).add("H", 0)
    with pytest.raises(ValueError):
        run_statevector(circuit)


def test_terminal_measure_is_ignored():
    circuit = Circuit(1).add("H", 0).add("MEASURE", 0)
    state = run_statevector(circuit)
    np.testing.assert_allclose(np.abs(state.data) ** 2, [0.5, 0.5])


def test_compose_remaps_qubits():
    inner = Circuit(2).add("X", 0)
    outer = Circuit(3).compose(inner, [2, 1])
    assert outer.gates[0].qubits == (2,)
    assert outer.count_ops() == {"X": 1}
    assert outer.used_qubits() == [2]


def test_circuit_dict_round_trip_keeps_unitary_gates(tmp_path):
    mat = np.array([[0, 1j], [1j, 0]])
    circuit = Circuit(2, metadata={"name": "demo"}).add("RY", 0, theta=0.3).add("UNITARY", 1, matrix=mat)
    again = Circuit.from_dict(circuit.to_dict())
    np.testing.assert_allclose(circuit_unitary(again), circuit_unitary(circuit))
    path = tmp_path / "sub" / "c.json"
    dump_circuit(circuit, path)
    data = json.loads(path.read_text())
    assert data["width"] == 2 and data["metadata"]["name"] == "demo"


def test_density_matches_statevector_without_noise(rng):
    circuit = Circuit(3)
    for q in range(3):
        circuit.add("RY", q, theta=float(rng.uniform(-3, 3)))
    circuit.add("CX", 0, 1).add("CX", 1, 2).add("H", 2).add("CPHASE", 0, 2, theta=0.7)
    psi = run_statevector(circuit).data
    rho = run_density(circuit)
    np.testing.assert_allclose(rho.data, np.outer(psi, psi.conj()), atol=1e-12)
    rho.validate()


def test_reset_channel_returns_to_zero():
    circuit = Circuit(1).add("X", 0).add("RESET", 0)
    rho = run_density(circuit)
    np.testing.assert_allclose(rho.data, [[1, 0], [0, 0]], atol=1e-12)


def test_reset_error_flips_with_given_probability():
    channel = reset_channel(0.1)
    rho = channel.apply(np.array([[0, 0], [0, 1]], dtype=complex))
    np.testing.assert_allclose(np.diag(rho).real, [0.9, 0.1], atol=1e-12)


def test_channel_rejects_non_trace_preserving():
    with pytest.raises(ValueError):
        QuantumChannel((np.eye(2) * 0.5,))


def test_tensor_channels_orders_first_as_msb():
    flip = QuantumChannel((np.array([[0, 1], [1, 0]]),))
    ident = QuantumChannel((np.eye(2),))
    joint = tensor_channels([flip, ident])
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1.0
    out = joint.apply(rho)
    assert out[0b10, 0b10] == pytest.approx(1.0)


def test_channel_composition_order():
    flip = QuantumChannel((np.array([[0, 1], [1, 0]]),), label="x")
    dephase = QuantumChannel((np.sqrt(0.5) * np.eye(2), np.sqrt(0.5) * np.diag([1, -1])), label="z")
    combined = flip.compose(dephase)
    assert combined.label == "z∘x"
    plus = np.full((2, 2), 0.5, dtype=complex)
    np.testing.assert_allclose(combined.apply(plus), np.eye(2) / 2, atol=1e-12)


def test_marginal_probabilities_order():
    circuit = Circuit(3).add("X", 2)
    state = run_statevector(circuit)
    np.testing.assert_allclose(marginal_probabilities(state, [2, 0]), [0, 0, 1, 0])
    with pytest.raises(IndexError):
        marginal_probabilities(state, [3])


def test_expectation_z():
    state = run_statevector(Circuit(2).add("X", 1))
    assert expectation_z(state, 0) == pytest.approx(1.0)
    assert expectation_z(state, 1) == pytest.approx(-1.0)


def test_sampling_is_seeded_and_unbiased():
    state = run_statevector(Circuit(1).add("RY", 0, theta=2 * np.arccos(np.sqrt(0.3))))
    a = sample(state, [0], shots=20_000, seed=7)
    b = sample(state, [0], shots=20_000, seed=7)
    assert a.counts == b.counts
    assert a.probability("0") == pytest.approx(0.3, abs=0.015)
    assert a.expectation_z(0) == pytest.approx(-0.4, abs=0.03)
    np.testing.assert_allclose(a.distribution(1), [a.probability("0"), a.probability("1")])


def test_readout_confusion_flips_bits():
    state = run_statevector(Circuit(1))
    res = sample(state, [0], shots=20_000, seed=3, readout=[ConfusionMatrix(p01=0.2, p10=0.0)])
    assert res.probability("1") == pytest.approx(0.2, abs=0.015)
    keyed = sample(state, [0], shots=1000, seed=3, readout={0: ConfusionMatrix(p01=1.0)})
    assert keyed.counts == {"1": 1000}


def test_sample_rejects_bad_arguments():
    state = run_statevector(Circuit(1))
    with pytest.raises(ValueError):
        sample(state, [0], shots=0)
    with pytest.raises(ValueError):
        sample(state, [0], shots=10, readout=[None, None])
    with pytest.raises(ValueError):
        ConfusionMatrix(p01=1.5)


def test_state_fidelity_pure_and_mixed():
    plus = run_statevector(Circuit(1).add("H", 0))
    zero = np.array([1.0, 0.0])
    assert state_fidelity(plus, zero) == pytest.approx(0.5)
    mixed = DensityMatrix(np.eye(2) / 2)
    assert state_fidelity(mixed, plus) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=6, max_size=6))
def test_statevector_preserves_norm(angles):
    circuit = Circuit(3)
    for q, a in enumerate(angles[:3]):
        circuit.add("RY", q, theta=a)
    circuit.add("CX", 0, 2).add("SX", 1)
    for q, a in enumerate(angles[3:]):
        circuit.add("RZ", q, theta=a)
    circuit.add("SWAP", 0, 1).add("CCX", 2, 0, 1)
    assert run_statevector(circuit).norm() == pytest.approx(1.0, abs=1e-12)
