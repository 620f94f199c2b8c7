"""simulator.py

Gate-level simulation: circuits, exact statevector and density-matrix
engines, finite-shot sampling with optional readout confusion.

Conventions
-----------
* Qubit 0 is the most significant bit of a basis index, so a state of
  width ``w`` reshaped to ``(2,) * w`` in C order has axis ``q`` for qubit
  ``q``.
* A gate's matrix is written over its qubit list in the listed order, the
  first listed qubit being the most significant.
* Density matrices are handled as tensors with ``2 * w`` axes, rows first.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

if TYPE_CHECKING:
    from noise_module import NoiseModel

logger = logging.getLogger(__name__)

STATEVECTOR_CAP = 26
DENSITY_CAP = 12
UNITARY_TOL = 1e-12
CPTP_TOL = 1e-10

# kind -> (number of qubits or None for matrix-defined, takes an angle)
GATE_KINDS: Dict[str, Tuple[Optional[int], bool]] = {
    "H": (1, False),
    "X": (1, False),
    "SX": (1, False),
    "RY": (1, True),
    "RZ": (1, True),
    "CX": (2, False),
    "CCX": (3, False),
    "CPHASE": (2, True),
    "SWAP": (2, False),
    "MEASURE": (1, False),
    "RESET": (1, False),
    "UNITARY": (None, False),
}
NON_UNITARY = frozenset({"MEASURE", "RESET"})


class SimulationLimitError(MemoryError):
    """Raised when a circuit is wider than the engine's configured cap."""


@dataclass(frozen=True)
class Gate:
    """One operation. ``matrix`` is only used by ``UNITARY`` gates."""

    kind: str
    qubits: Tuple[int, ...]
    theta: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        kind = str(self.kind).upper()
        if kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"{kind}: qubit indices must be distinct, got {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError(f"{kind}: negative qubit index in {qubits}")
        arity, has_angle = GATE_KINDS[kind]
        if kind == "UNITARY":
            if self.matrix is None:
                raise ValueError("UNITARY gate needs a matrix")
            mat = np.array(self.matrix, dtype=complex)
            dim = 2 ** len(qubits)
            if mat.shape != (dim, dim):
                raise ValueError(f"UNITARY on {len(qubits)} qubits needs a {dim}x{dim} matrix, got {mat.shape}")
            mat.setflags(write=False)
            object.__setattr__(self, "matrix", mat)
        elif len(qubits) != arity:
            raise ValueError(f"{kind} acts on {arity} qubit(s), got {qubits}")
        if has_angle:
            if self.theta is None or not np.isfinite(self.theta):
                raise ValueError(f"{kind} needs a finite angle")
            object.__setattr__(self, "theta", float(self.theta))
        elif self.theta is not None:
            raise ValueError(f"{kind} takes no angle")

    @property
    def is_unitary(self) -> bool:
        return self.kind not in NON_UNITARY

    def remap(self, mapping: Sequence[int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.theta, self.matrix)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.theta is not None:
            out["theta"] = self.theta
        if self.matrix is not None:
            out["matrix_re"] = self.matrix.real.tolist()
            out["matrix_im"] = self.matrix.imag.tolist()
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Gate":
        matrix = None
        if "matrix_re" in data:
            matrix = np.asarray(data["matrix_re"], dtype=float) + 1j * np.asarray(data.get("matrix_im", 0.0), dtype=float)
        return cls(data["kind"], tuple(data["qubits"]), data.get("theta"), matrix)


@dataclass
class Circuit:
    """Ordered gate list over ``width`` qubits."""

    width: int
    gates: List[Gate] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"circuit width must be >= 1, got {self.width}")
        self.gates = list(self.gates)
        for gate in self.gates:
            self._check(gate)

    def _check(self, gate: Gate) -> None:
        if max(gate.qubits) >= self.width:
            raise ValueError(f"{gate.kind} on {gate.qubits} exceeds circuit width {self.width}")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def name(self) -> str:
        return self.metadata.get("name", "")

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def add(self, kind: str, *qubits: int, theta: Optional[float] = None, matrix: Optional[np.ndarray] = None) -> "Circuit":
        return self.append(Gate(kind, tuple(qubits), theta, matrix))

    def compose(self, other: "Circuit", qubits: Optional[Sequence[int]] = None) -> "Circuit":
        """Append ``other``'s gates, its qubit ``i`` landing on ``qubits[i]``."""
        mapping = list(range(other.width)) if qubits is None else list(qubits)
        if len(mapping) < other.width:
            raise ValueError(f"compose needs {other.width} target qubits, got {len(mapping)}")
        for gate in other.gates:
            self.append(gate.remap(mapping))
        return self

    def copy(self) -> "Circuit":
        return Circuit(self.width, list(self.gates), dict(self.metadata))

    def count_ops(self) -> Dict[str, int]:
        return dict(Counter(g.kind for g in self.gates))

    def used_qubits(self) -> List[int]:
        return sorted({q for g in self.gates for q in g.qubits})

    def to_dict(self) -> Dict[str, Any]:
        meta = {k: v for k, v in self.metadata.items() if isinstance(v, (str, int, float, bool, list, dict, type(None)))}
        return {"width": self.width, "metadata": meta, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Circuit":
        return cls(int(data["width"]), [Gate.from_dict(g) for g in data.get("gates", [])], dict(data.get("metadata", {})))


def dump_circuit(circuit: Circuit, path: Union[str, os.PathLike]) -> None:
    """Write ``circuit`` as a JSON gate list for inspection."""
    dirname = os.path.dirname(os.fspath(path))
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(circuit.to_dict(), fh, indent=2)
    except PermissionError as exc:
        raise PermissionError(f"Cannot write circuit dump to '{path}'.") from exc


# --- Gate matrices -----------------------------------------------------------

_SQRT2_INV = 1.0 / np.sqrt(2.0)
_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "SX": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
_CCX = np.eye(8, dtype=complex)
_CCX[[6, 7]] = _CCX[[7, 6]]
_FIXED["CCX"] = _CCX


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def gate_matrix(gate: Gate) -> np.ndarray:
    """Unitary of ``gate`` over its own qubit list."""
    kind = gate.kind
    if kind in _FIXED:
        return _FIXED[kind]
    if kind == "RY":
        return ry_matrix(gate.theta)
    if kind == "RZ":
        return rz_matrix(gate.theta)
    if kind == "CPHASE":
        return np.diag([1.0, 1.0, 1.0, np.exp(1j * gate.theta)]).astype(complex)
    if kind == "UNITARY":
        return gate.matrix
    raise ValueError(f"{kind} has no unitary matrix")


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    matrix = np.asarray(matrix)
    eye = np.eye(matrix.shape[0])
    return bool(np.allclose(matrix.conj().T @ matrix, eye, atol=tol, rtol=0.0))


def apply_matrix(tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract ``matrix`` (over ``len(axes)`` binary indices) into ``tensor``."""
    k = len(axes)
    op = np.asarray(matrix).reshape((2,) * (2 * k))
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


# --- Quantum channels ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """CPTP map given by Kraus operators over ``num_qubits`` qubits."""

    kraus: Tuple[np.ndarray, ...]
    label: str = ""

    def __post_init__(self) -> None:
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        if dim & (dim - 1) or any(k.shape != (dim, dim) for k in ops):
            raise ValueError("Kraus operators must be square with a power-of-two dimension")
        completeness = sum(k.conj().T @ k for k in ops)
        err = float(np.max(np.abs(completeness - np.eye(dim))))
        if err > CPTP_TOL:
            raise ValueError(f"channel {self.label or '<unnamed>'} is not CPTP: |ΣK†K - I| = {err:.3e}")
        object.__setattr__(self, "kraus", ops)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def num_qubits(self) -> int:
        return int(np.log2(self.dim))

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Row-major vectorised form: vec(KρK†) = (K ⊗ K̄) vec(ρ)."""
        return sum(np.kron(k, k.conj()) for k in self.kraus)

    def compose(self, after: "QuantumChannel") -> "QuantumChannel":
        """Channel applying ``self`` first, then ``after``."""
        ops = [b @ a for b in after.kraus for a in self.kraus]
        ops = [k for k in ops if np.linalg.norm(k) > 1e-15] or [np.zeros((self.dim, self.dim))]
        return QuantumChannel(tuple(ops), label=f"{after.label}∘{self.label}")

    def process_fidelity(self) -> float:
        return float(sum(abs(np.trace(k)) ** 2 for k in self.kraus) / self.dim ** 2)

    def average_gate_fidelity(self) -> float:
        d = self.dim
        return (d * self.process_fidelity() + 1.0) / (d + 1.0)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)


def tensor_channels(channels: Sequence[QuantumChannel], label: str = "") -> QuantumChannel:
    """Independent channels on consecutive qubits, first channel most significant."""
    ops: List[np.ndarray] = [np.eye(1, dtype=complex)]
    for ch in channels:
        ops = [np.kron(a, b) for a in ops for b in ch.kraus]
    ops = [k for k in ops if np.linalg.norm(k) > 1e-15]
    return QuantumChannel(tuple(ops), label=label)


# --- States ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateVector:
    data: np.ndarray

    @property
    def width(self) -> int:
        return int(np.log2(self.data.size))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.data) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.data, self.data.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    data: np.ndarray

    @property
    def width(self) -> int:
        return int(np.log2(self.data.shape[0]))

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.data)), 0.0, None)

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def overlap(self, psi: Sequence[complex]) -> float:
        """⟨ψ|ρ|ψ⟩ for a pure state ψ."""
        vec = np.asarray(psi, dtype=complex).reshape(-1)
        return float(np.real(np.vdot(vec, self.data @ vec)))

    def validate(self, tol: float = 1e-9, psd_tol: float = 1e-8) -> None:
        rho = self.data
        if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0.0):
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"density matrix trace {self.trace():.12f} != 1")
        smallest = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
        if smallest < -psd_tol:
            raise ValueError(f"density matrix not positive semidefinite (λ_min={smallest:.3e})")


State = Union[StateVector, DensityMatrix]


def _check_width(width: int, cap: int, engine: str) -> None:
    if width > cap:
        raise SimulationLimitError(f"{engine} engine capped at {cap} qubits, circuit has {width}")


def _terminal_measure_split(circuit: Circuit) -> List[Gate]:
    """Gates before the trailing MEASURE block; rejects anything non-terminal."""
    gates = list(circuit.gates)
    end = len(gates)
    while end > 0 and gates[end - 1].kind == "MEASURE":
        end -= 1
    for gate in gates[:end]:
        if gate.kind == "RESET":
            raise ValueError("RESET is not supported by the statevector engine")
        if gate.kind == "MEASURE":
            raise ValueError("mid-circuit MEASURE is not supported by the statevector engine")
    return gates[:end]


def run_statevector(
    circuit: Circuit,
    max_qubits: int = STATEVECTOR_CAP,
    initial_state: Optional[Sequence[complex]] = None,
) -> StateVector:
    """Exact amplitudes of U_circuit|0…0⟩ (or of ``initial_state``)."""
    width = circuit.width
    _check_width(width, max_qubits, "statevector")
    gates = _terminal_measure_split(circuit)
    if initial_state is None:
        psi = np.zeros(2 ** width, dtype=complex)
        psi[0] = 1.0
    else:
        psi = np.array(initial_state, dtype=complex).reshape(-1)
        if psi.size != 2 ** width:
            raise ValueError(f"initial state has {psi.size} amplitudes, circuit needs {2 ** width}")
    tensor = psi.reshape((2,) * width)
    for gate in gates:
        tensor = apply_matrix(tensor, gate_matrix(gate), gate.qubits)
    return StateVector(tensor.reshape(-1))


def circuit_unitary(circuit: Circuit, max_qubits: int = 12) -> np.ndarray:
    """Dense unitary of ``circuit`` (columns are images of basis states)."""
    width = circuit.width
    _check_width(width, max_qubits, "unitary")
    gates = _terminal_measure_split(circuit)
    dim = 2 ** width
    tensor = np.eye(dim, dtype=complex).reshape((2,) * width + (dim,))
    for gate in gates:
        tensor = apply_matrix(tensor, gate_matrix(gate), gate.qubits)
    return tensor.reshape(dim, dim)


_RESET_CHANNEL = QuantumChannel(
    (np.array([[1, 0], [0, 0]], dtype=complex), np.array([[0, 1], [0, 0]], dtype=complex)),
    label="reset",
)
_MEASURE_CHANNEL = QuantumChannel(
    (np.array([[1, 0], [0, 0]], dtype=complex), np.array([[0, 0], [0, 1]], dtype=complex)),
    label="measure",
)


def reset_channel(error: float = 0.0) -> QuantumChannel:
    """Reset to |0⟩ followed by a bit flip with probability ``error``."""
    if error <= 0.0:
        return _RESET_CHANNEL
    flip = QuantumChannel(
        (np.sqrt(1.0 - error) * np.eye(2), np.sqrt(error) * _FIXED["X"]), label="reset_flip"
    )
    return _RESET_CHANNEL.compose(flip)


def _apply_superop(tensor: np.ndarray, superop: np.ndarray, qubits: Sequence[int], width: int) -> np.ndarray:
    axes = list(qubits) + [width + q for q in qubits]
    return apply_matrix(tensor, superop, axes)


def run_density(
    circuit: Circuit,
    noise: Optional["NoiseModel"] = None,
    max_qubits: int = DENSITY_CAP,
    initial_state: Optional[np.ndarray] = None,
) -> DensityMatrix:
    """Density-matrix evolution, each gate followed by its noise channel.

    ``noise`` must answer ``channel_for(gate)`` (a :class:`QuantumChannel`
    over the gate's qubits or ``None``) and expose ``reset_error``.
    Terminal measurements are left to :func:`sample`.
    """
    width = circuit.width
    _check_width(width, max_qubits, "density")
    dim = 2 ** width
    if initial_state is None:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.array(initial_state, dtype=complex)
        if rho.shape != (dim, dim):
            raise ValueError(f"initial density matrix must be {dim}x{dim}")
    tensor = rho.reshape((2,) * (2 * width))

    gates = list(circuit.gates)
    end = len(gates)
    while end > 0 and gates[end - 1].kind == "MEASURE":
        end -= 1

    reset_error = getattr(noise, "reset_error", 0.0) if noise is not None else 0.0
    for gate in gates[:end]:
        if gate.kind == "RESET":
            superop = reset_channel(reset_error).superoperator
        elif gate.kind == "MEASURE":
            superop = _MEASURE_CHANNEL.superoperator
        else:
            u = gate_matrix(gate)
            superop = np.kron(u, u.conj())
        if noise is not None and gate.kind != "RESET":
            channel = noise.channel_for(gate)
            if channel is not None:
                if channel.num_qubits != len(gate.qubits):
                    raise ValueError(f"noise channel for {gate.kind} acts on {channel.num_qubits} qubits")
                superop = channel.superoperator @ superop
        tensor = _apply_superop(tensor, superop, gate.qubits, width)
    return DensityMatrix(tensor.reshape(dim, dim))


# --- Measurement --------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Per-qubit readout error: ``p01`` = P(read 1 | prepared 0), ``p10`` = P(read 0 | prepared 1)."""

    p01: float = 0.0
    p10: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p01", "p10"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def matrix(self) -> np.ndarray:
        """Columns: prepared 0/1; rows: read 0/1."""
        return np.array([[1.0 - self.p01, self.p10], [self.p01, 1.0 - self.p10]])


@dataclass
class ShotResult:
    counts: Dict[str, int]
    shots: int

    def __post_init__(self) -> None:
        total = sum(self.counts.values())
        if total != self.shots:
            raise ValueError(f"counts sum to {total}, expected {self.shots}")

    def probability(self, bitstring: str) -> float:
        return self.counts.get(bitstring, 0) / self.shots

    def expectation_z(self, position: int = 0) -> float:
        """(count₀ - count₁)/M for the bit at ``position`` of the bitstrings."""
        ones = sum(c for bits, c in self.counts.items() if bits[position] == "1")
        return (self.shots - 2 * ones) / self.shots

    def distribution(self, num_bits: int) -> np.ndarray:
        probs = np.zeros(2 ** num_bits)
        for bits, c in self.counts.items():
            probs[int(bits, 2)] += c
        return probs / self.shots


def marginal_probabilities(state: State, qubits: Optional[Sequence[int]] = None) -> np.ndarray:
    """Exact Born distribution of ``qubits`` (first listed = most significant)."""
    width = state.width
    qubits = list(range(width)) if qubits is None else [int(q) for q in qubits]
    for q in qubits:
        if not 0 <= q < width:
            raise IndexError(f"qubit {q} out of range for width {width}")
    probs = state.probabilities().reshape((2,) * width)
    others = tuple(q for q in range(width) if q not in qubits)
    marg = probs.sum(axis=others) if others else probs
    kept = [q for q in range(width) if q in qubits]
    marg = np.transpose(marg, [kept.index(q) for q in qubits])
    marg = np.clip(marg.reshape(-1), 0.0, None)
    return marg / marg.sum()


def sample(
    state: State,
    qubits: Optional[Sequence[int]] = None,
    shots: int = 1024,
    seed: Any = None,
    readout: Optional[Union[Mapping[int, ConfusionMatrix], Sequence[Optional[ConfusionMatrix]]]] = None,
) -> ShotResult:
    """Draw ``shots`` samples of ``qubits``, then flip bits through ``readout``.

    ``readout`` is keyed by qubit index (mapping) or aligned with ``qubits``
    (sequence). Deterministic for a fixed ``seed``.
    """
    if int(shots) < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    shots = int(shots)
    qubits = list(range(state.width)) if qubits is None else [int(q) for q in qubits]
    probs = marginal_probabilities(state, qubits)
    rng = np.random.default_rng(seed)
    outcomes = rng.choice(probs.size, size=shots, p=probs)
    k = len(qubits)
    bits = (outcomes[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1

    if readout is not None:
        if isinstance(readout, Mapping):
            confusions = [readout.get(q) for q in qubits]
        else:
            confusions = list(readout)
            if len(confusions) != k:
                raise ValueError(f"readout has {len(confusions)} entries for {k} qubits")
        draws = rng.random((shots, k))
        for col, conf in enumerate(confusions):
            if conf is None:
                continue
            flip_prob = np.where(bits[:, col] == 0, conf.p01, conf.p10)
            bits[:, col] ^= (draws[:, col] < flip_prob).astype(bits.dtype)

    values = bits @ (1 << np.arange(k - 1, -1, -1))
    uniq, cnt = np.unique(values, return_counts=True)
    counts = {format(int(v), f"0{k}b"): int(c) for v, c in zip(uniq, cnt)}
    return ShotResult(counts=counts, shots=shots)


def expectation_z(state: State, qubit: int) -> float:
    """Exact ⟨Z⟩ of ``qubit``."""
    p = marginal_probabilities(state, [qubit])
    return float(np.clip(p[0] - p[1], -1.0, 1.0))


def state_fidelity(a: Union[State, Sequence[complex]], b: Union[StateVector, Sequence[complex]]) -> float:
    """|⟨a|b⟩|² for pure states, ⟨b|ρ|b⟩ when ``a`` is a density matrix."""
    vec_b = b.data if isinstance(b, StateVector) else np.asarray(b, dtype=complex).reshape(-1)
    if isinstance(a, DensityMatrix):
        return float(np.clip(a.overlap(vec_b), 0.0, 1.0))
    vec_a = a.data if isinstance(a, StateVector) else np.asarray(a, dtype=complex).reshape(-1)
    return float(np.clip(abs(np.vdot(vec_a, vec_b)) ** 2, 0.0, 1.0))

