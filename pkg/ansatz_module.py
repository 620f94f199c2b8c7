"""ansatz_module.py

Parameterised trial-state circuits on the primary register.

* ``real_amplitude``: l × [RY column, ascending CX chain] then a final RY
  column, n(l+1) parameters.
* ``hadamard_ry``: H then RY(θ_q) on every qubit, n parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from grid_problem import WaveVector
from simulator import Circuit, run_statevector

ANSATZ_KINDS = ("real_amplitude", "hadamard_ry")


def parameter_count(kind: str, n: int, layers: int = 0) -> int:
    if kind == "real_amplitude":
        return n * (layers + 1)
    if kind == "hadamard_ry":
        return n
    raise ValueError(f"unknown ansatz kind {kind!r}, expected one of {ANSATZ_KINDS}")


@dataclass(frozen=True)
class AnsatzSpec:
    kind: str
    n: int
    layers: int = 0
    theta: tuple = field(default=())

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"ansatz needs n >= 1, got {self.n}")
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        theta = tuple(float(t) for t in np.asarray(self.theta, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", theta)
        expected = parameter_count(self.kind, self.n, self.layers)
        if len(theta) != expected:
            raise ValueError(f"{self.kind} with n={self.n}, l={self.layers} needs {expected} parameters, got {len(theta)}")

    @property
    def num_parameters(self) -> int:
        return len(self.theta)

    def with_theta(self, theta: Sequence[float]) -> "AnsatzSpec":
        return AnsatzSpec(self.kind, self.n, self.layers, tuple(theta))


def random_parameters(kind: str, n: int, layers: int = 0, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Uniform draw from [-π, π]."""
    rng = np.random.default_rng() if rng is None else rng
    return rng.uniform(-np.pi, np.pi, size=parameter_count(kind, n, layers))


def build(spec: AnsatzSpec) -> Circuit:
    n, theta = spec.n, spec.theta
    circuit = Circuit(n, metadata={"name": f"{spec.kind}_n{n}_l{spec.layers}"})
    if spec.kind == "hadamard_ry":
        for q in range(n):
            circuit.add("H", q)
            circuit.add("RY", q, theta=theta[q])
        return circuit

    for layer in range(spec.layers):
        for q in range(n):
            circuit.add("RY", q, theta=theta[layer * n + q])
        for q in range(n - 1):
            circuit.add("CX", q, q + 1)
    for q in range(n):
        circuit.add("RY", q, theta=theta[spec.layers * n + q])
    return circuit


def state_of(spec: AnsatzSpec) -> WaveVector:
    """Grid amplitudes of the trial state."""
    return WaveVector(run_statevector(build(spec)).data)
