"""transpiler.py

Rewrite circuits for a device: basis-gate rebase ({RZ, SX, X, CX}),
greedy shortest-path SWAP routing on an undirected coupling map, and the
combined ``transpile`` pass that also picks a connected block of physical
qubits so calibration data can be looked up per gate.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from circuit_utils import append_toffoli
from simulator import Circuit, Gate, gate_matrix

logger = logging.getLogger(__name__)

DEFAULT_BASIS = ("RZ", "SX", "X", "CX")
_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class DeviceTarget:
    """Basis gates plus an undirected coupling map over ``num_qubits`` qubits."""

    num_qubits: int
    coupling: Tuple[Tuple[int, int], ...]
    basis: Tuple[str, ...] = DEFAULT_BASIS
    name: str = ""

    def __post_init__(self) -> None:
        edges = []
        for a, b in self.coupling:
            a, b = int(a), int(b)
            if a == b or not (0 <= a < self.num_qubits and 0 <= b < self.num_qubits):
                raise ValueError(f"invalid coupling edge ({a}, {b}) for {self.num_qubits} qubits")
            edges.append((min(a, b), max(a, b)))
        object.__setattr__(self, "coupling", tuple(sorted(set(edges))))
        object.__setattr__(self, "basis", tuple(str(g).upper() for g in self.basis))

    @classmethod
    def line(cls, num_qubits: int) -> "DeviceTarget":
        return cls(num_qubits, tuple((i, i + 1) for i in range(num_qubits - 1)), name=f"line{num_qubits}")

    @classmethod
    def all_to_all(cls, num_qubits: int) -> "DeviceTarget":
        edges = tuple((i, j) for i in range(num_qubits) for j in range(i + 1, num_qubits))
        return cls(num_qubits, edges, name=f"full{num_qubits}")

    def neighbours(self, qubit: int) -> List[int]:
        return sorted({b for a, b in self.coupling if a == qubit} | {a for a, b in self.coupling if b == qubit})

    def is_coupled(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in set(self.coupling)

    def restrict(self, physical: Sequence[int]) -> "DeviceTarget":
        """Sub-target on ``physical`` qubits, renumbered ``0..len-1`` in that order."""
        index = {p: i for i, p in enumerate(physical)}
        edges = tuple((index[a], index[b]) for a, b in self.coupling if a in index and b in index)
        return DeviceTarget(len(physical), edges, self.basis, self.name)

    def distances(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.num_qubits
        if self.coupling:
            rows, cols = zip(*self.coupling)
        else:
            rows, cols = (), ()
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return shortest_path(graph, directed=False, unweighted=True, return_predecessors=True)


# --- Rebase --------------------------------------------------------------------

def euler_zyz(matrix: np.ndarray) -> Tuple[float, float, float]:
    """(θ, φ, λ) with U ∝ RZ(φ)·RY(θ)·RZ(λ)."""
    u = np.asarray(matrix, dtype=complex)
    u = u / np.sqrt(np.linalg.det(u))
    c, s = abs(u[0, 0]), abs(u[1, 0])
    theta = 2.0 * np.arctan2(s, c)
    if s < 1e-12:
        phi = lam = float(np.angle(u[1, 1]))
    elif c < 1e-12:
        phi = float(np.angle(u[1, 0]))
        lam = -phi
    else:
        a11, a10 = np.angle(u[1, 1]), np.angle(u[1, 0])
        phi, lam = float(a11 + a10), float(a11 - a10)
    return float(theta), phi, lam


def _rz(qubit: int, angle: float) -> List[Gate]:
    wrapped = float(np.remainder(angle + np.pi, 2.0 * np.pi) - np.pi)
    if abs(wrapped) < _ANGLE_TOL:
        return []
    return [Gate("RZ", (qubit,), wrapped)]


def decompose_1q(matrix: np.ndarray, qubit: int) -> List[Gate]:
    """RZ(λ)·SX·RZ(θ+π)·SX·RZ(φ+π) up to global phase."""
    theta, phi, lam = euler_zyz(matrix)
    if abs(theta) < _ANGLE_TOL:
        return _rz(qubit, phi + lam)
    sx = Gate("SX", (qubit,))
    return _rz(qubit, lam) + [sx] + _rz(qubit, theta + np.pi) + [sx] + _rz(qubit, phi + np.pi)


def _mux_rotation(kind: str, angles: np.ndarray, target: int, controls: Sequence[int]) -> List[Gate]:
    """Uniformly controlled RY/RZ; ``angles[i]`` applies when controls read ``i``."""
    if not controls:
        angle = float(angles[0])
        return [Gate(kind, (target,), angle)] if abs(angle) > _ANGLE_TOL else []
    half = len(angles) // 2
    a = 0.5 * (angles[:half] + angles[half:])
    b = 0.5 * (angles[:half] - angles[half:])
    rest = controls[1:]
    cx = Gate("CX", (controls[0], target))
    return _mux_rotation(kind, a, target, rest) + [cx] + _mux_rotation(kind, b, target, rest) + [cx]


def _demultiplex(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """V, D, W with a = V·D·W and b = V·D†·W."""
    t, v = linalg.schur(a @ b.conj().T, output="complex")
    d = np.sqrt(np.diag(t).astype(complex))
    w = np.diag(d) @ v.conj().T @ b
    return v, d, w


def quantum_shannon(matrix: np.ndarray, qubits: Sequence[int]) -> List[Gate]:
    """Quantum Shannon decomposition into CX and single-qubit rotations."""
    qubits = list(qubits)
    if len(qubits) == 1:
        return decompose_1q(matrix, qubits[0])
    dim = matrix.shape[0]
    half = dim // 2
    (u1, u2), thetas, (v1h, v2h) = linalg.cossin(matrix, p=half, q=half, separate=True)
    top, rest = qubits[0], qubits[1:]

    # U = diag(u1, u2) · CS · diag(v1h, v2h); the right factor acts first.
    v, d, w = _demultiplex(v1h, v2h)
    gates = quantum_shannon(w, rest)
    gates += _mux_rotation("RZ", -2.0 * np.angle(d), top, rest)
    gates += quantum_shannon(v, rest)
    gates += _mux_rotation("RY", 2.0 * np.asarray(thetas), top, rest)
    v, d, w = _demultiplex(u1, u2)
    gates += quantum_shannon(w, rest)
    gates += _mux_rotation("RZ", -2.0 * np.angle(d), top, rest)
    gates += quantum_shannon(v, rest)
    return gates


def _rebase_gate(gate: Gate, basis: Iterable[str]) -> List[Gate]:
    basis = set(basis)
    kind, q = gate.kind, gate.qubits
    if kind in basis or kind in ("MEASURE", "RESET"):
        return [gate]
    if kind == "H":
        out = _rz(q[0], np.pi / 2) + [Gate("SX", q)] + _rz(q[0], np.pi / 2)
    elif kind == "SWAP":
        a, b = q
        out = [Gate("CX", (a, b)), Gate("CX", (b, a)), Gate("CX", (a, b))]
    elif kind == "CPHASE":
        c, t = q
        half = gate.theta / 2.0
        out = [Gate("RZ", (c,), half), Gate("CX", (c, t)), Gate("RZ", (t,), -half), Gate("CX", (c, t)), Gate("RZ", (t,), half)]
    elif kind == "CCX":
        tmp = Circuit(max(q) + 1)
        append_toffoli(tmp, *q)
        out = tmp.gates
    elif len(q) == 1:
        out = decompose_1q(gate_matrix(gate), q[0])
    else:
        out = quantum_shannon(gate_matrix(gate), q)
    result: List[Gate] = []
    for g in out:
        result.extend(_rebase_gate(g, basis))
    return result


def rebase(circuit: Circuit, basis: Sequence[str] = DEFAULT_BASIS) -> Circuit:
    """Rewrite ``circuit`` over ``basis``; unitary preserved up to global phase."""
    basis = tuple(str(b).upper() for b in basis)
    if "CX" not in basis or not {"RZ", "SX"} <= set(basis):
        raise ValueError(f"rebase needs RZ, SX and CX in the basis, got {basis}")
    out = Circuit(circuit.width, metadata=dict(circuit.metadata))
    for gate in circuit.gates:
        for g in _rebase_gate(gate, basis):
            out.append(g)
    return out


# --- Routing ---------------------------------------------------------------------

def route(circuit: Circuit, target: DeviceTarget, layout: Optional[Sequence[int]] = None) -> Circuit:
    """Insert SWAPs so every two-qubit gate acts on a coupled pair.

    ``layout[i]`` is the initial physical qubit of logical qubit ``i``
    (identity by default). The result lives on ``target.num_qubits`` qubits
    and carries ``initial_layout`` / ``final_layout`` (logical → physical)
    in its metadata.
    """
    if circuit.width > target.num_qubits:
        raise ValueError(f"circuit needs {circuit.width} qubits, target has {target.num_qubits}")
    l2p = list(range(circuit.width)) if layout is None else [int(p) for p in layout]
    if len(l2p) != circuit.width or len(set(l2p)) != len(l2p) or any(not 0 <= p < target.num_qubits for p in l2p):
        raise ValueError(f"invalid layout {l2p} for {circuit.width} logical qubits")

    dist, pred = target.distances()
    if not np.all(np.isfinite(dist[np.ix_(l2p, l2p)])):
        raise ValueError(f"coupling map of {target.name or 'target'} is disconnected over qubits {l2p}")

    p2l: Dict[int, int] = {p: i for i, p in enumerate(l2p)}
    out = Circuit(target.num_qubits, metadata=dict(circuit.metadata))
    out.metadata["initial_layout"] = list(l2p)
    swaps = 0
    for gate in circuit.gates:
        if len(gate.qubits) > 2:
            raise ValueError(f"route expects at most two-qubit gates, got {gate.kind} on {gate.qubits}")
        if len(gate.qubits) == 2:
            pa, pb = l2p[gate.qubits[0]], l2p[gate.qubits[1]]
            if not np.isfinite(dist[pa, pb]):
                raise ValueError(f"physical qubits {pa} and {pb} are disconnected")
            path = [pb]
            while path[-1] != pa:
                path.append(int(pred[pa, path[-1]]))
            path.reverse()
            for here, there in zip(path[:-2], path[1:-1]):
                out.append(Gate("SWAP", (here, there)))
                swaps += 1
                la, lb = p2l.get(here), p2l.get(there)
                if la is not None:
                    l2p[la] = there
                if lb is not None:
                    l2p[lb] = here
                p2l = {p: i for i, p in enumerate(l2p)}
        out.append(gate.remap(l2p))
    out.metadata["final_layout"] = list(l2p)
    out.metadata["swaps"] = swaps
    return out


def select_qubits(target: DeviceTarget, count: int, start: int = 0) -> List[int]:
    """Breadth-first block of ``count`` connected physical qubits."""
    if count > target.num_qubits:
        raise ValueError(f"need {count} qubits, target has {target.num_qubits}")
    seen = [start]
    queue = deque([start])
    while queue and len(seen) < count:
        q = queue.popleft()
        for nb in target.neighbours(q):
            if nb not in seen:
                seen.append(nb)
                queue.append(nb)
                if len(seen) == count:
                    break
    if len(seen) < count:
        raise ValueError(f"no connected block of {count} qubits around qubit {start}")
    return seen


def transpile(circuit: Circuit, target: DeviceTarget, layout: Optional[Sequence[int]] = None) -> Circuit:
    """rebase → route → rebase on a compact block of physical qubits.

    The returned circuit has ``circuit.width`` qubits; metadata
    ``physical_qubits[i]`` is the device qubit behind compact index ``i``.
    """
    physical = list(layout) if layout is not None else select_qubits(target, circuit.width)
    if len(physical) != circuit.width:
        raise ValueError(f"layout lists {len(physical)} qubits for a {circuit.width}-qubit circuit")
    sub = target.restrict(physical)
    routed = route(rebase(circuit, target.basis), sub)
    out = rebase(routed, target.basis)
    out.metadata["physical_qubits"] = physical
    logger.debug("transpile: %s -> %s on %s", circuit.name, out.count_ops(), physical)
    return out


def permute_to_logical(state: np.ndarray, final_layout: Sequence[int]) -> np.ndarray:
    """Reorder a routed state (vector or density matrix) to logical qubit order."""
    layout = list(final_layout)
    arr = np.asarray(state)
    width = len(layout)
    if arr.ndim == 1:
        return np.transpose(arr.reshape((2,) * width), layout).reshape(-1)
    perm = layout + [width + p for p in layout]
    return np.transpose(arr.reshape((2,) * (2 * width)), perm).reshape(arr.shape)


def gate_counts(circuit: Circuit) -> Dict[str, int]:
    ops = circuit.count_ops()
    two_qubit = sum(c for k, c in ops.items() if k in ("CX", "SWAP", "CPHASE"))
    single = sum(c for k, c in ops.items() if k in ("RZ", "SX", "X", "H", "RY"))
    return {"cx": two_qubit, "single_qubit": single, "total": len(circuit)}
