"""mps_module.py

Potential encoding: normalised samples → left-canonical matrix product
state (sequential truncated SVD, bond cap ν = 2^κ) → staircase of
multi-qubit unitaries preparing ``V̂|0…0⟩ = V/𝒩``.

Tensor index order follows the repo-wide bit convention: site ``s`` is
qubit ``s``, site 0 the most significant bit of the grid index.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Union

import numpy as np
from scipy.linalg import null_space, svd

from grid_problem import GridProblem
from simulator import Circuit, Gate, is_unitary

logger = logging.getLogger(__name__)

SINGULAR_CUTOFF = 1e-14
CANONICAL_TOL = 1e-9


class NonCanonicalMPSError(ValueError):
    """An MPS core is not a left isometry."""


def tensorize(values: Sequence[float]) -> np.ndarray:
    """``values / ‖values‖`` reshaped to ``(2,) * n``."""
    vec = np.asarray(values, dtype=float).reshape(-1)
    size = vec.size
    if size < 2 or size & (size - 1):
        raise ValueError(f"length must be a power of two >= 2, got {size}")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("cannot tensorize a zero vector")
    n = size.bit_length() - 1
    return (vec / norm).reshape((2,) * n)


@dataclass
class MPS:
    """Open-boundary MPS; ``tensors[0]`` is (2, r1), the last (r, 2), the rest (r, 2, r')."""

    tensors: List[np.ndarray]
    kappa: int
    singular_values: List[np.ndarray] = field(default_factory=list)
    discarded: List[np.ndarray] = field(default_factory=list)

    @property
    def num_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> List[int]:
        return [c.shape[2] for c in self.cores()[:-1]]

    def cores(self) -> List[np.ndarray]:
        """Every tensor as (r_left, 2, r_right)."""
        n = len(self.tensors)
        if n == 1:
            return [self.tensors[0].reshape(1, 2, 1)]
        out = []
        for s, t in enumerate(self.tensors):
            if s == 0:
                out.append(t.reshape(1, 2, t.shape[1]))
            elif s == n - 1:
                out.append(t.reshape(t.shape[0], 2, 1))
            else:
                out.append(t)
        return out

    def to_vector(self) -> np.ndarray:
        vec = np.ones((1, 1))
        for core in self.cores():
            vec = np.einsum("ab,bir->air", vec, core).reshape(-1, core.shape[2])
        return vec.reshape(-1)

    def truncation_error(self) -> float:
        """Root-sum-square of every discarded singular value."""
        return float(math.sqrt(sum(float(np.sum(d ** 2)) for d in self.discarded)))

    def is_left_canonical(self, tol: float = CANONICAL_TOL) -> bool:
        for core in self.cores()[:-1]:
            mat = core.reshape(-1, core.shape[2])
            if not np.allclose(mat.conj().T @ mat, np.eye(mat.shape[1]), atol=tol):
                return False
        return True

    def spectra(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "bond_dims": self.bond_dims,
            "singular_values": [s.tolist() for s in self.singular_values],
            "discarded": [d.tolist() for d in self.discarded],
            "truncation_error": self.truncation_error(),
        }


def _fix_phase(u: np.ndarray, vh: np.ndarray) -> None:
    """Largest-magnitude entry of every left vector made real positive (in place)."""
    for j in range(u.shape[1]):
        k = int(np.argmax(np.abs(u[:, j])))
        phase = u[k, j] / abs(u[k, j]) if abs(u[k, j]) > 0 else 1.0
        u[:, j] /= phase
        vh[j, :] *= phase


def mps_decompose(tensor: np.ndarray, kappa: int) -> MPS:
    """Left-to-right SVD sweep keeping at most ``2**kappa`` singular values per bond."""
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    arr = np.asarray(tensor)
    n = arr.ndim
    if n < 1 or any(d != 2 for d in arr.shape):
        raise ValueError(f"expected a (2,)*n tensor, got shape {arr.shape}")
    if n == 1:
        return MPS([arr.reshape(2).copy()], kappa)

    cap = 2 ** kappa
    dtype = complex if np.iscomplexobj(arr) else float
    rest = arr.reshape(2, -1).astype(dtype)
    tensors: List[np.ndarray] = []
    spectra: List[np.ndarray] = []
    discarded: List[np.ndarray] = []
    rank = 1
    for site in range(n - 1):
        mat = rest.reshape(rank * 2, -1)
        u, s, vh = svd(mat, full_matrices=False, lapack_driver="gesvd")
        keep = min(cap, int(np.sum(s > SINGULAR_CUTOFF)))
        keep = max(keep, 1)
        spectra.append(s.copy())
        discarded.append(s[keep:].copy())
        u, s, vh = u[:, :keep].copy(), s[:keep], vh[:keep, :].copy()
        _fix_phase(u, vh)
        tensors.append(u.reshape(2, keep) if site == 0 else u.reshape(rank, 2, keep))
        rest = s[:, None] * vh
        rank = keep
    tensors.append(rest.reshape(rank, 2))
    mps = MPS(tensors, kappa, spectra, discarded)
    logger.debug("mps_decompose: n=%d kappa=%d bonds=%s err=%.2e", n, kappa, mps.bond_dims, mps.truncation_error())
    return mps


def _qubits_for(rank: int) -> int:
    return math.ceil(math.log2(rank)) if rank > 1 else 0


def _complete(columns: np.ndarray) -> np.ndarray:
    """Square unitary whose leading columns are ``columns``."""
    dim, k = columns.shape
    if k == dim:
        return columns
    rest = null_space(columns.conj().T)
    return np.hstack([columns, rest])


def mps_to_circuit(mps: MPS) -> Circuit:
    """Staircase preparation circuit for a left-canonical MPS.

    The bond between sites ``s-1`` and ``s`` (rank ``r_s``) lives on the
    ``D_s = ⌈log₂ r_s⌉`` qubits just above qubit ``s``. Blocks are emitted
    from the last site to the first; block ``s`` acts on qubits
    ``s-D_s..s`` and maps |0…0⟩|b_{s+1}⟩ to Σ A_s[b_s, i_s, b_{s+1}] |b_s⟩|i_s⟩.
    """
    cores = mps.cores()
    dtype = complex if any(np.iscomplexobj(c) for c in cores) else float
    n = len(cores)
    for s, core in enumerate(cores[:-1]):
        mat = core.reshape(-1, core.shape[2])
        if not np.allclose(mat.conj().T @ mat, np.eye(mat.shape[1]), atol=CANONICAL_TOL):
            raise NonCanonicalMPSError(f"core {s} is not a left isometry")

    last = cores[-1].reshape(-1)
    norm = np.linalg.norm(last)
    if norm == 0.0:
        raise ValueError("MPS has zero norm")
    last = last / norm

    dims = [_qubits_for(c.shape[0]) for c in cores]
    circuit = Circuit(n, metadata={"name": f"mps_prep_n{n}_k{mps.kappa}", "bond_dims": mps.bond_dims})

    def emit(block: np.ndarray, site: int) -> None:
        qubits = tuple(range(site - dims[site], site + 1))
        if not is_unitary(block, 1e-10):
            raise ValueError(f"block for site {site} is not unitary")
        circuit.append(Gate("UNITARY", qubits, matrix=block))

    width = dims[-1] + 1
    column = np.zeros(2 ** width, dtype=dtype)
    column[: last.size] = last
    emit(_complete(column[:, None]), n - 1)

    for s in range(n - 2, -1, -1):
        core = cores[s]
        width = dims[s] + 1
        block = np.zeros((2 ** width, core.shape[2]), dtype=dtype)
        block[: core.shape[0] * 2, :] = core.reshape(-1, core.shape[2])
        emit(_complete(block), s)

    return circuit


def encode_potential(problem: GridProblem, kappa: int = 2) -> Circuit:
    """V̂ with ⟨binary(k)|V̂|0⟩ = V_k/𝒩."""
    if not problem.has_potential:
        raise ValueError("potential is identically zero, nothing to encode")
    mps = mps_decompose(tensorize(problem.potential), kappa)
    circuit = mps_to_circuit(mps)
    circuit.metadata["truncation_error"] = mps.truncation_error()
    return circuit


def truncation_study(problem: GridProblem, kappas: Sequence[int]) -> List[Dict[str, Any]]:
    """Per-κ reconstruction error against the truncated-SVD bound."""
    tensor = tensorize(problem.potential)
    target = tensor.reshape(-1)
    rows = []
    for kappa in kappas:
        mps = mps_decompose(tensor, int(kappa))
        row = mps.spectra()
        row["reconstruction_error"] = float(np.linalg.norm(mps.to_vector() - target))
        # left-to-right SVD sweep: error never exceeds the RSS of discarded values
        row["svd_bound"] = mps.truncation_error()
        rows.append(row)
    return rows


def dump_spectra(rows: Sequence[Dict[str, Any]], path: Union[str, os.PathLike]) -> None:
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(list(rows), fh, indent=2)
    except PermissionError as exc:
        raise PermissionError(f"cannot write truncation study to {path}") from exc
