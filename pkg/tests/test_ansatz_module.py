import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ansatz_module import AnsatzSpec, build, parameter_count, random_parameters, state_of


def test_parameter_counts():
    assert parameter_count("real_amplitude", 4, 2) == 12
    assert parameter_count("hadamard_ry", 4, 5) == 4
    with pytest.raises(ValueError):
        parameter_count("unknown", 2)


def test_real_amplitude_gate_counts():
    spec = AnsatzSpec("real_amplitude", 4, 3, np.zeros(16))
    ops = build(spec).count_ops()
    # n(l+1) rotations and (n-1)l entanglers
    assert ops == {"RY": 16, "CX": 9}


def test_hadamard_ry_has_no_entanglers():
    spec = AnsatzSpec("hadamard_ry", 3, 0, [0.1, 0.2, 0.3])
    assert build(spec).count_ops() == {"H": 3, "RY": 3}


def test_hadamard_ry_at_zero_is_uniform():
    psi = state_of(AnsatzSpec("hadamard_ry", 3, 0, np.zeros(3)))
    np.testing.assert_allclose(psi.amplitudes, np.full(8, 1 / np.sqrt(8)), atol=1e-12)


def test_spec_validates_parameter_length():
    with pytest.raises(ValueError):
        AnsatzSpec("real_amplitude", 2, 1, [0.0])
    with pytest.raises(ValueError):
        AnsatzSpec("real_amplitude", 0, 1, [])
    spec = AnsatzSpec("real_amplitude", 2, 1, [0.0] * 4)
    assert spec.with_theta([1, 2, 3, 4]).theta == (1.0, 2.0, 3.0, 4.0)


def test_random_parameters_range(rng):
    theta = random_parameters("real_amplitude", 3, 2, rng)
    assert theta.shape == (9,)
    assert np.all(np.abs(theta) <= np.pi)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=9, max_size=9))
def test_real_amplitude_states_are_real_and_normalised(theta):
    psi = state_of(AnsatzSpec("real_amplitude", 3, 2, theta))
    assert np.max(np.abs(psi.amplitudes.imag)) < 1e-12
    assert psi.norm == pytest.approx(1.0, abs=1e-12)
