"""direct_module.py

Ancilla-free energy estimate: the grid density |ψ_k|² read from the bare
ansatz gives the potential and interaction terms, the density |ψ'_k|² read
after a QFT gives the kinetic term through the Laplace spectrum.

The kinetic constant is the one that makes the estimate equal the
finite-difference stencil: E_K = -Σ_k |ψ'_k|² Δ_k / (δ² N²), since
QFT†·diag(Δ)·QFT = 2^{2n-1}·(S + S† - 2I).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ansatz_module import AnsatzSpec, build
from circuit_utils import qft
from grid_problem import EnergyBreakdown, GridProblem
from noise_module import NoiseModel, logical_readout, noisy_state
from qnpu_module import as_seed_sequence
from simulator import DENSITY_CAP, STATEVECTOR_CAP, Circuit, marginal_probabilities, run_statevector, sample

logger = logging.getLogger(__name__)

# Interaction order m: the density readout enters as Σ|ψ_k|^{m+2}.
INTERACTION_ORDER = 2


@dataclass(frozen=True)
class LaplaceSpectrum:
    n: int
    eigenvalues: np.ndarray

    @property
    def N(self) -> int:
        return 2 ** self.n


def laplace_spectrum(n: int) -> LaplaceSpectrum:
    """Δ_k = 2^{2n}[cos(2πk/2^n) - 1]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    N = 2 ** n
    k = np.arange(N)
    values = 4.0 ** n * (np.cos(2.0 * np.pi * k / N) - 1.0)
    values[0] = 0.0
    values.setflags(write=False)
    return LaplaceSpectrum(n, values)


def _distribution(circuit: Circuit, shots: Optional[int], seed, noise: Optional[NoiseModel], layout, caps) -> np.ndarray:
    statevector_cap, density_cap = caps
    if noise is not None:
        state, routed = noisy_state(circuit, noise, layout=layout, max_qubits=density_cap)
        readout = logical_readout(noise, routed)
    else:
        state = run_statevector(circuit, max_qubits=statevector_cap)
        readout = None
    if shots is None:
        return marginal_probabilities(state)
    return sample(state, shots=shots, seed=seed, readout=readout).distribution(circuit.width)


def direct_energy(
    problem: GridProblem,
    spec: AnsatzSpec,
    shots: Optional[int] = None,
    seed=None,
    noise: Optional[NoiseModel] = None,
    layout: Optional[Sequence[int]] = None,
    statevector_cap: int = STATEVECTOR_CAP,
    density_cap: int = DENSITY_CAP,
) -> EnergyBreakdown:
    """Energy from two density readouts; ``shots=None`` reads exact probabilities."""
    if spec.n != problem.n:
        raise ValueError(f"ansatz has n={spec.n}, problem has n={problem.n}")
    if shots is not None and int(shots) < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    seeds = as_seed_sequence(seed).spawn(2)
    caps = (statevector_cap, density_cap)
    ansatz = build(spec)

    p = _distribution(ansatz, shots, seeds[0], noise, layout, caps)
    fourier = ansatz.copy()
    fourier.compose(qft(spec.n))
    p_hat = _distribution(fourier, shots, seeds[1], noise, layout, caps)

    delta, N = problem.delta, problem.N
    spectrum = laplace_spectrum(problem.n).eigenvalues
    E_K = -float(np.dot(p_hat, spectrum)) / (delta ** 2 * N ** 2)
    E_P = float(np.dot(p, problem.potential))
    quartic = float(np.sum(p ** ((INTERACTION_ORDER + 2) // 2)))
    E_I = (problem.g / delta) * quartic

    norm = problem.potential_norm
    result = EnergyBreakdown(
        raw_K=1.0 - delta ** 2 * E_K,
        raw_P=E_P / norm if norm > 0 else 0.0,
        raw_I=quartic,
        E_K=E_K,
        E_P=E_P,
        E_I=E_I,
        method="direct",
        shots=None if shots is None else int(shots),
    )
    logger.debug("direct_energy: E=%.6f (K=%.6f P=%.6f I=%.6f)", result.E_total, E_K, E_P, E_I)
    return result
