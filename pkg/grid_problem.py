"""grid_problem.py

Discretised nonlinear Schrödinger problem on a periodic grid.

Holds the grid geometry, the sampled potential and the classical energy
functional every quantum estimate is checked against:

    E = Σ|ψ_k|² V_k + (g/δ) Σ|ψ_k|⁴ - (1/2δ²) Σ ψ*_k (ψ_{k+1} - 2ψ_k + ψ_{k-1})

with periodic indices. Qubit 0 is the most significant bit of the grid
index everywhere in this package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Normalisation tolerance for exact states and for states coming out of
# long circuit simulations.
NORM_TOL = 1e-12
NORM_TOL_SIMULATED = 1e-9

METHODS = ("hadamard_shots", "hadamard_exact", "direct", "classical")


@dataclass(frozen=True, eq=False)
class GridProblem:
    """A discretised NLSE instance (periodic boundary, N = 2**n points)."""

    n: int
    a: float
    b: float
    V0: float
    g: float
    potential: np.ndarray = field(repr=False)
    boundary: str = "periodic"

    @property
    def N(self) -> int:
        return 2 ** self.n

    @property
    def delta(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def x(self) -> np.ndarray:
        return self.a + self.delta * np.arange(self.N)

    @property
    def x0(self) -> float:
        return (self.b - self.a) / 2.0

    @property
    def potential_norm(self) -> float:
        """Euclidean norm 𝒩 of the sampled potential vector."""
        return float(np.linalg.norm(self.potential))

    @property
    def has_potential(self) -> bool:
        return self.potential_norm > 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "a": self.a,
            "b": self.b,
            "V0": self.V0,
            "g": self.g,
            "boundary": self.boundary,
            "delta": self.delta,
            "potential_norm": self.potential_norm,
        }


def make_grid(
    n: int,
    a: float = 0.0,
    b: float = 1.0,
    V0: float = 1.0,
    g: float = 0.0,
    potential: Optional[Sequence[float]] = None,
) -> GridProblem:
    """Build a :class:`GridProblem`.

    Parameters
    ----------
    n : int
        Number of qubits of the primary register (N = 2**n grid points).
    a, b : float
        Interval endpoints, ``b > a``.
    V0 : float
        Prefactor of the quadratic potential ``V0 (x - x0)**2``.
    g : float
        Nonlinearity strength.
    potential : sequence of float, optional
        Raw samples V_k replacing the quadratic potential.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n!r}")
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise ValueError(f"interval must satisfy b > a, got a={a}, b={b}")
    n = int(n)
    N = 2 ** n
    delta = (b - a) / N
    if potential is None:
        xs = a + delta * np.arange(N)
        x0 = (b - a) / 2.0
        values = float(V0) * (xs - x0) ** 2
    else:
        values = np.asarray(potential, dtype=float)
        if values.shape != (N,):
            raise ValueError(f"potential must have {N} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("potential samples must be finite")
        values = values.copy()
    values.setflags(write=False)
    problem = GridProblem(n=n, a=float(a), b=float(b), V0=float(V0), g=float(g), potential=values)
    if not problem.has_potential:
        logger.debug("make_grid: zero potential, potential-energy path disabled")
    return problem


@dataclass(frozen=True, eq=False)
class WaveVector:
    """Normalised grid amplitudes ψ_k = √δ f(x_k)."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, values: Sequence[complex], tol: float = NORM_TOL) -> "WaveVector":
        vec = cls(np.asarray(values, dtype=complex))
        vec.check_normalized(tol)
        return vec

    @classmethod
    def normalized(cls, values: Sequence[complex]) -> "WaveVector":
        arr = np.asarray(values, dtype=complex).reshape(-1)
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise ValueError("cannot normalise the zero vector")
        return cls(arr / norm)

    def __len__(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        deviation = abs(float(np.sum(self.density)) - 1.0)
        if deviation > tol:
            raise ValueError(f"wave vector not normalised: |Σ|ψ|² - 1| = {deviation:.3e} > {tol:g}")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy components with the ancilla-level raw values they come from.

    ``raw_K = ⟨E_K⟩δ²`` stored as the shift overlap Re Σψ*_kψ_{k+1},
    ``raw_P = ⟨E_P⟩/𝒩`` and ``raw_I = ⟨E_I⟩δ/g``. ``shots`` is ``None`` in
    exact mode.
    """

    raw_K: float
    raw_P: float
    raw_I: float
    E_K: float
    E_P: float
    E_I: float
    method: str
    shots: Optional[int] = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown estimation method {self.method!r}")

    @property
    def E_total(self) -> float:
        return self.E_K + self.E_P + self.E_I

    def to_dict(self) -> Dict[str, Any]:
        return {
            "raw_K": self.raw_K,
            "raw_P": self.raw_P,
            "raw_I": self.raw_I,
            "E_K": self.E_K,
            "E_P": self.E_P,
            "E_I": self.E_I,
            "E_total": self.E_total,
            "method": self.method,
            "shots": self.shots,
        }


def scale_raw(
    problem: GridProblem,
    raw_K: float,
    raw_P: float,
    raw_I: float,
    method: str,
    shots: Optional[int] = None,
) -> EnergyBreakdown:
    """Convert raw ancilla expectations into energies."""
    delta = problem.delta
    return EnergyBreakdown(
        raw_K=float(raw_K),
        raw_P=float(raw_P),
        raw_I=float(raw_I),
        E_K=(1.0 - float(raw_K)) / delta ** 2,
        E_P=problem.potential_norm * float(raw_P),
        E_I=(problem.g / delta) * float(raw_I),
        method=method,
        shots=shots,
    )


def _as_amplitudes(psi: Any) -> np.ndarray:
    if isinstance(psi, WaveVector):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex).reshape(-1)


def classical_energy(problem: GridProblem, psi: Any, tol: float = NORM_TOL) -> EnergyBreakdown:
    """Exact energy functional of ``psi`` on ``problem``'s grid."""
    amps = _as_amplitudes(psi)
    if amps.size != problem.N:
        raise ValueError(f"wave vector has {amps.size} amplitudes, grid has {problem.N}")
    WaveVector(amps).check_normalized(tol)

    delta = problem.delta
    dens = np.abs(amps) ** 2
    psi_next = np.roll(amps, -1)
    psi_prev = np.roll(amps, 1)

    stencil = np.vdot(amps, psi_next - 2.0 * amps + psi_prev).real
    E_K = -stencil / (2.0 * delta ** 2)
    E_P = float(np.dot(dens, problem.potential))
    quartic = float(np.sum(dens ** 2))
    E_I = (problem.g / delta) * quartic

    norm = problem.potential_norm
    return EnergyBreakdown(
        raw_K=float(np.vdot(amps, psi_next).real),
        raw_P=E_P / norm if norm > 0 else 0.0,
        raw_I=quartic,
        E_K=float(E_K),
        E_P=E_P,
        E_I=float(E_I),
        method="classical",
        shots=None,
    )
