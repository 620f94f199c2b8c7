"""reference_solver.py

Classical ground truth by normalised imaginary-time (gradient-flow)
iteration on the periodic grid, plus the fidelities the driver reports.

Two conventions for the nonlinear term:

* ``functional`` (default): H[ψ] carries 2(g/δ)|ψ|², the gradient of the
  energy functional, so the fixed point minimises the same cost the
  variational loop minimises.
* ``gross_pitaevskii``: H[ψ] carries (g/δ)|ψ|².

The reported ``energy`` is always the functional value (``classical_energy``);
``mu`` is ⟨ψ|H[ψ]|ψ⟩ under the chosen convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy import sparse

from grid_problem import GridProblem, WaveVector, classical_energy

logger = logging.getLogger(__name__)

CONVENTIONS = {"functional": 2.0, "gross_pitaevskii": 1.0}


class ConvergenceError(RuntimeError):
    """No convergence within ``max_steps``; ``state`` is the last iterate."""

    def __init__(self, message: str, state: "GroundState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class GroundState:
    psi: WaveVector
    energy: float
    mu: float
    residual: float
    iterations: int
    convention: str = "functional"

    @property
    def E_GS(self) -> float:
        return self.energy

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "mu": self.mu,
            "residual": self.residual,
            "iterations": self.iterations,
            "convention": self.convention,
            "psi_re": self.psi.amplitudes.real.tolist(),
            "psi_im": self.psi.amplitudes.imag.tolist(),
        }


def kinetic_operator(problem: GridProblem) -> sparse.csr_matrix:
    """-(S + S† - 2I)/(2δ²) on the periodic grid."""
    N = problem.N
    shift = sparse.eye(N, k=1, format="csr") + sparse.eye(N, k=-(N - 1), format="csr")
    laplace = shift + shift.T - 2.0 * sparse.eye(N, format="csr")
    return (-0.5 / problem.delta ** 2) * laplace.tocsr()


def _apply_h(problem: GridProblem, kinetic: sparse.csr_matrix, coupling: float, psi: np.ndarray) -> np.ndarray:
    return kinetic @ psi + (problem.potential + coupling * np.abs(psi) ** 2) * psi


def imaginary_time_ground_state(
    problem: GridProblem,
    tau_step: Optional[float] = None,
    tol: float = 1e-12,
    max_steps: int = 1_000_000,
    *,
    convention: str = "functional",
    initial: Optional[Any] = None,
    residual_tol: float = 1e-9,
) -> GroundState:
    """Iterate ψ ← normalize(ψ - dt·H[ψ]ψ) from the uniform state.

    ``dt`` is ``tau_step`` (default 0.1·δ²) capped by the explicit-Euler
    limit 0.5/‖H‖ of the current iterate's largest diagonal scale. Converged
    when the energy change is below ``tol`` and the residual
    ‖Hψ - ⟨ψ|H|ψ⟩ψ‖ below ``residual_tol``.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}, expected one of {sorted(CONVENTIONS)}")
    delta = problem.delta
    if tau_step is None:
        tau_step = 0.1 * delta ** 2
    if tau_step <= 0:
        raise ValueError(f"tau_step must be > 0, got {tau_step}")
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")

    coupling = CONVENTIONS[convention] * problem.g / delta
    kinetic = kinetic_operator(problem)
    if initial is None:
        psi = np.full(problem.N, 1.0 / np.sqrt(problem.N), dtype=complex)
    else:
        psi = WaveVector.normalized(initial).amplitudes.copy()

    v_max = float(np.max(np.abs(problem.potential))) if problem.N else 0.0
    energy = classical_energy(problem, psi, tol=1e-9).E_total
    residual = np.inf
    h_psi = _apply_h(problem, kinetic, coupling, psi)
    for step in range(1, max_steps + 1):
        h_max = 2.0 / delta ** 2 + v_max + abs(coupling) * float(np.max(np.abs(psi) ** 2))
        dt = min(tau_step, 0.5 / h_max)
        psi = psi - dt * h_psi
        psi /= np.linalg.norm(psi)

        h_psi = _apply_h(problem, kinetic, coupling, psi)
        mu = float(np.vdot(psi, h_psi).real)
        residual = float(np.linalg.norm(h_psi - mu * psi))
        new_energy = classical_energy(problem, psi, tol=1e-9).E_total
        change = abs(new_energy - energy)
        energy = new_energy
        if change < tol and residual < residual_tol:
            logger.info("Ground state converged after %d steps: E=%.12g mu=%.12g residual=%.2e", step, energy, mu, residual)
            return GroundState(WaveVector(psi), energy, mu, residual, step, convention)

    state = GroundState(WaveVector(psi), energy, float(np.vdot(psi, h_psi).real), residual, max_steps, convention)
    raise ConvergenceError(
        f"imaginary-time iteration did not converge in {max_steps} steps (residual {residual:.2e})", state
    )


def fidelity(a: Any, b: Any) -> float:
    """|⟨a|b⟩|², clipped to [0, 1]."""
    va = a.amplitudes if isinstance(a, WaveVector) else np.asarray(a, dtype=complex).reshape(-1)
    vb = b.amplitudes if isinstance(b, WaveVector) else np.asarray(b, dtype=complex).reshape(-1)
    if va.size != vb.size:
        raise ValueError(f"state sizes differ: {va.size} vs {vb.size}")
    return float(np.clip(abs(np.vdot(va, vb)) ** 2, 0.0, 1.0))


def dense_hamiltonian(problem: GridProblem) -> np.ndarray:
    """Linear part (kinetic + potential) as a dense matrix."""
    return kinetic_operator(problem).toarray() + np.diag(problem.potential)
