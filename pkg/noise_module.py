"""noise_module.py

Calibration-driven noise: load a device snapshot, turn it into per-gate
channels (thermal relaxation on each acted qubit followed by a joint
depolarising channel calibrated to the reported gate error) and run
transpiled circuits through the density-matrix engine.

Calibration JSON schema
-----------------------
::

    {
      "name": "...", "timestamp": "...", "synthetic": true,
      "qubits":   [{"t1_us": .., "t2_us": .., "readout": {"p01": .., "p10": ..}}, ...],
      "gates":    [{"name": "sx", "qubits": [0], "duration_ns": .., "error": ..}, ...],
      "coupling": [[0, 1], ...],
      "basis":    ["rz", "sx", "x", "cx"]
    }

``p01`` is the probability of reading 1 from a qubit prepared in 0,
``p10`` of reading 0 from a qubit prepared in 1.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from simulator import (
    CPTP_TOL,
    DENSITY_CAP,
    Circuit,
    ConfusionMatrix,
    DensityMatrix,
    Gate,
    QuantumChannel,
    run_density,
    tensor_channels,
)
from transpiler import DeviceTarget, permute_to_logical, transpile

logger = logging.getLogger(__name__)

# Gates without a physical pulse.
VIRTUAL_GATES = frozenset({"rz"})


class CalibrationError(ValueError):
    """Invalid calibration snapshot; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class QubitCalibration:
    t1_us: float
    t2_us: float
    p01: float = 0.0
    p10: float = 0.0


@dataclass(frozen=True)
class GateCalibration:
    name: str
    qubits: Tuple[int, ...]
    duration_ns: float
    error: float


@dataclass(frozen=True)
class CalibrationSnapshot:
    qubits: Tuple[QubitCalibration, ...]
    gates: Tuple[GateCalibration, ...]
    coupling: Tuple[Tuple[int, int], ...]
    basis: Tuple[str, ...]
    name: str = ""
    timestamp: str = ""
    synthetic: bool = False

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def gate(self, name: str, qubits: Sequence[int]) -> Optional[GateCalibration]:
        key = (name.lower(), tuple(qubits))
        for g in self.gates:
            if (g.name, g.qubits) == key:
                return g
        return None

    def target(self) -> DeviceTarget:
        return DeviceTarget(self.num_qubits, self.coupling, tuple(b.upper() for b in self.basis), self.name)

    def summary(self) -> Dict[str, float]:
        """Means used to label a snapshot (T1, T2, single- and two-qubit errors)."""
        t1 = [q.t1_us for q in self.qubits]
        t2 = [q.t2_us for q in self.qubits]
        e1 = [g.error for g in self.gates if len(g.qubits) == 1 and g.name not in VIRTUAL_GATES]
        e2 = [g.error for g in self.gates if len(g.qubits) == 2]
        ro = [0.5 * (q.p01 + q.p10) for q in self.qubits]
        return {
            "num_qubits": self.num_qubits,
            "t1_us_mean": float(np.mean(t1)),
            "t2_us_mean": float(np.mean(t2)),
            "error_1q_mean": float(np.mean(e1)) if e1 else 0.0,
            "error_2q_mean": float(np.mean(e2)) if e2 else 0.0,
            "readout_error_mean": float(np.mean(ro)),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CalibrationSnapshot":
        if not isinstance(data, Mapping):
            raise CalibrationError("<root>", "snapshot must be a JSON object")
        for key in ("qubits", "gates", "coupling", "basis"):
            if key not in data:
                raise CalibrationError(key, "missing field")

        qubits = []
        for i, entry in enumerate(data["qubits"]):
            where = f"qubits[{i}]"
            t1 = _number(entry, "t1_us", where)
            t2 = _number(entry, "t2_us", where)
            if t1 <= 0:
                raise CalibrationError(f"{where}.t1_us", f"must be > 0, got {t1}")
            if t2 <= 0 or t2 > 2.0 * t1:
                raise CalibrationError(f"{where}.t2_us", f"must satisfy 0 < T2 <= 2*T1 (T1={t1}), got {t2}")
            readout = entry.get("readout", {})
            if not isinstance(readout, Mapping):
                raise CalibrationError(f"{where}.readout", "must be an object")
            p01 = _number(readout, "p01", f"{where}.readout", default=0.0)
            p10 = _number(readout, "p10", f"{where}.readout", default=0.0)
            for label, p in (("p01", p01), ("p10", p10)):
                if not 0.0 <= p <= 1.0:
                    raise CalibrationError(f"{where}.readout.{label}", f"must lie in [0, 1], got {p}")
            qubits.append(QubitCalibration(t1, t2, p01, p10))

        n = len(qubits)
        gates = []
        for i, entry in enumerate(data["gates"]):
            where = f"gates[{i}]"
            if "name" not in entry:
                raise CalibrationError(f"{where}.name", "missing field")
            if "qubits" not in entry:
                raise CalibrationError(f"{where}.qubits", "missing field")
            gq = tuple(int(q) for q in entry["qubits"])
            if any(not 0 <= q < n for q in gq):
                raise CalibrationError(f"{where}.qubits", f"index out of range for {n} qubits: {gq}")
            duration = _number(entry, "duration_ns", where)
            error = _number(entry, "error", where)
            if duration < 0:
                raise CalibrationError(f"{where}.duration_ns", f"must be >= 0, got {duration}")
            if not 0.0 <= error < 1.0:
                raise CalibrationError(f"{where}.error", f"must satisfy 0 <= error < 1, got {error}")
            gates.append(GateCalibration(str(entry["name"]).lower(), gq, duration, error))

        coupling = []
        for i, edge in enumerate(data["coupling"]):
            if len(edge) != 2 or any(not 0 <= int(q) < n for q in edge):
                raise CalibrationError(f"coupling[{i}]", f"invalid edge {edge}")
            coupling.append((int(edge[0]), int(edge[1])))

        return cls(
            qubits=tuple(qubits),
            gates=tuple(gates),
            coupling=tuple(coupling),
            basis=tuple(str(b).lower() for b in data["basis"]),
            name=str(data.get("name", "")),
            timestamp=str(data.get("timestamp", "")),
            synthetic=bool(data.get("synthetic", False)),
        )


def _number(entry: Mapping[str, Any], key: str, where: str, default: Optional[float] = None) -> float:
    if key not in entry:
        if default is not None:
            return default
        raise CalibrationError(f"{where}.{key}", "missing field")
    try:
        value = float(entry[key])
    except (TypeError, ValueError):
        raise CalibrationError(f"{where}.{key}", f"not a number: {entry[key]!r}") from None
    if not np.isfinite(value):
        raise CalibrationError(f"{where}.{key}", "must be finite")
    return value


def load_calibration(path: Union[str, os.PathLike]) -> CalibrationSnapshot:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CalibrationError("<json>", f"malformed JSON in {path}: {exc}") from exc
    snapshot = CalibrationSnapshot.from_dict(data)
    logger.info("Loaded calibration %s (%d qubits, %d gates)", snapshot.name or path, snapshot.num_qubits, len(snapshot.gates))
    return snapshot


# --- Channels ----------------------------------------------------------------------

def thermal_relaxation_channel(t1_us: float, t2_us: float, duration_ns: float) -> QuantumChannel:
    """Amplitude damping (1 - e^{-τ/T1}) followed by pure dephasing (1/Tφ = 1/T2 - 1/2T1)."""
    if t1_us <= 0 or t2_us <= 0 or t2_us > 2.0 * t1_us * (1 + 1e-12):
        raise ValueError(f"unphysical relaxation times T1={t1_us}, T2={t2_us}")
    tau_us = duration_ns * 1e-3
    gamma = 1.0 - np.exp(-tau_us / t1_us)
    inv_tphi = max(1.0 / t2_us - 1.0 / (2.0 * t1_us), 0.0)
    lam = 1.0 - np.exp(-2.0 * tau_us * inv_tphi)
    damping = (
        np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma)]]),
        np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]]),
    )
    dephasing = (
        np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - lam)]]),
        np.array([[0.0, 0.0], [0.0, np.sqrt(lam)]]),
    )
    ops = [p @ a for p in dephasing for a in damping]
    ops = [k for k in ops if np.linalg.norm(k) > 1e-15]
    return QuantumChannel(tuple(ops), label="thermal_relaxation")


_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def depolarizing_channel(p: float, num_qubits: int = 1) -> QuantumChannel:
    """ρ → (1 - p)ρ + p·I/d, valid for 0 <= p <= d²/(d² - 1)."""
    d2 = 4 ** num_qubits
    if not 0.0 <= p <= d2 / (d2 - 1.0) + 1e-12:
        raise ValueError(f"depolarizing parameter {p} outside [0, {d2 / (d2 - 1.0):.4f}]")
    p = min(p, d2 / (d2 - 1.0))
    ops = []
    for i, paulis in enumerate(itertools.product(_PAULIS, repeat=num_qubits)):
        op = paulis[0]
        for extra in paulis[1:]:
            op = np.kron(op, extra)
        weight = 1.0 - p * (d2 - 1) / d2 if i == 0 else p / d2
        if weight > 0:
            ops.append(np.sqrt(weight) * op)
    return QuantumChannel(tuple(ops), label=f"depolarizing({p:.3e})")


def calibrated_depolarizing(relaxation: QuantumChannel, error: float, label: str = "") -> float:
    """Depolarising strength making relaxation+depolarising reach average infidelity ``error``."""
    d = relaxation.dim
    f_relax = relaxation.process_fidelity()
    f_target = ((1.0 - error) * (d + 1) - 1.0) / d
    denom = f_relax - 1.0 / d ** 2
    p = (f_relax - f_target) / denom if denom > 0 else 0.0
    if p < 0.0:
        logger.warning(
            "Relaxation alone exceeds the reported error for %s (ε=%.3e); depolarizing clamped at 0",
            label or "gate", error,
        )
        p = 0.0
    return float(min(p, d ** 2 / (d ** 2 - 1.0)))


@dataclass
class NoiseModel:
    """Per-(gate, qubits) channels plus per-qubit readout confusion."""

    channels: Dict[Tuple[str, Tuple[int, ...]], QuantumChannel] = field(default_factory=dict)
    readout: Dict[int, ConfusionMatrix] = field(default_factory=dict)
    reset_error: float = 0.0
    target: Optional[DeviceTarget] = None
    name: str = ""

    @classmethod
    def ideal(cls, target: Optional[DeviceTarget] = None) -> "NoiseModel":
        return cls(target=target, name="ideal")

    def channel_for(self, gate: Gate) -> Optional[QuantumChannel]:
        return self.channels.get((gate.kind.lower(), tuple(gate.qubits)))

    def restrict(self, physical: Sequence[int]) -> "NoiseModel":
        """Model re-keyed to compact indices, compact ``i`` being device qubit ``physical[i]``."""
        index = {p: i for i, p in enumerate(physical)}
        channels = {}
        for (name, qubits), ch in self.channels.items():
            if all(q in index for q in qubits):
                channels[(name, tuple(index[q] for q in qubits))] = ch
        readout = {index[q]: conf for q, conf in self.readout.items() if q in index}
        target = self.target.restrict(physical) if self.target is not None else None
        return NoiseModel(channels, readout, self.reset_error, target, self.name)

    def readout_for(self, qubits: Sequence[int]) -> List[Optional[ConfusionMatrix]]:
        return [self.readout.get(q) for q in qubits]


def _gate_channel(snapshot: CalibrationSnapshot, gate: GateCalibration, order: Sequence[int]) -> QuantumChannel:
    relax = tensor_channels(
        [thermal_relaxation_channel(snapshot.qubits[q].t1_us, snapshot.qubits[q].t2_us, gate.duration_ns) for q in order],
        label="relaxation",
    )
    label = f"{gate.name}{tuple(order)}"
    p = calibrated_depolarizing(relax, gate.error, label)
    if p == 0.0:
        return relax
    return relax.compose(depolarizing_channel(p, len(order)))


def build_noise_model(snapshot: CalibrationSnapshot, reset_error: float = 0.0) -> NoiseModel:
    """Channels for every calibrated gate; RZ stays ideal."""
    if not 0.0 <= reset_error <= 1.0:
        raise ValueError(f"reset_error must lie in [0, 1], got {reset_error}")
    channels: Dict[Tuple[str, Tuple[int, ...]], QuantumChannel] = {}
    for gate in snapshot.gates:
        if gate.name in VIRTUAL_GATES or gate.name in ("measure", "reset"):
            continue
        orders = [gate.qubits]
        if len(gate.qubits) == 2:
            orders.append(gate.qubits[::-1])
        for order in orders:
            key = (gate.name, tuple(order))
            if key not in channels:
                channels[key] = _gate_channel(snapshot, gate, order)
    readout = {i: ConfusionMatrix(q.p01, q.p10) for i, q in enumerate(snapshot.qubits)}
    model = NoiseModel(channels, readout, reset_error, snapshot.target(), snapshot.name)
    logger.info("Noise model %s: %d gate channels, reset_error=%g", snapshot.name, len(channels), reset_error)
    return model


def apply_noisy(
    circuit: Circuit,
    model: NoiseModel,
    max_qubits: int = DENSITY_CAP,
    reset_prologue: bool = False,
) -> DensityMatrix:
    """Run a transpiled circuit through ``model``.

    ``circuit.metadata['physical_qubits']`` (set by ``transpile``) maps
    compact indices to device qubits. With ``reset_prologue`` every qubit is
    reset first, so ``model.reset_error`` leaks into the initial state.
    Readout confusion is applied later, by ``sample``.
    """
    physical = circuit.metadata.get("physical_qubits", list(range(circuit.width)))
    local = model.restrict(physical)
    if reset_prologue:
        prologue = Circuit(circuit.width, [Gate("RESET", (q,)) for q in range(circuit.width)], dict(circuit.metadata))
        prologue.gates.extend(circuit.gates)
        circuit = prologue
    return run_density(circuit, local, max_qubits=max_qubits)


def choi_matrix(channel: QuantumChannel) -> np.ndarray:
    """Choi matrix Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)."""
    d = channel.dim
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            choi += np.kron(unit, channel.apply(unit))
    return choi


def noisy_state(
    circuit: Circuit,
    model: NoiseModel,
    layout: Optional[Sequence[int]] = None,
    reset_prologue: bool = False,
    max_qubits: int = DENSITY_CAP,
) -> Tuple[DensityMatrix, Circuit]:
    """Transpile onto ``model.target``, run under noise, return ρ in logical qubit order.

    ``layout`` lists candidate device qubits; the first ``circuit.width`` are
    used. The transpiled circuit is returned alongside for its metadata.
    """
    if model.target is None:
        raise ValueError("noise model has no device target to transpile against")
    physical = list(layout)[: circuit.width] if layout else None
    routed = transpile(circuit, model.target, physical)
    rho = apply_noisy(routed, model, max_qubits=max_qubits, reset_prologue=reset_prologue)
    logical = permute_to_logical(rho.data, routed.metadata["final_layout"])
    return DensityMatrix(logical), routed


def logical_readout(model: NoiseModel, routed: Circuit) -> Dict[int, ConfusionMatrix]:
    """Readout confusion per logical qubit of a transpiled circuit."""
    local = model.restrict(routed.metadata["physical_qubits"])
    out = {}
    for logical, compact in enumerate(routed.metadata["final_layout"]):
        conf = local.readout.get(compact)
        if conf is not None:
            out[logical] = conf
    return out


def channel_report(model: NoiseModel, tol: float = CPTP_TOL) -> List[Dict[str, Any]]:
    """Per-channel CPTP check from the Choi matrix: positivity and trace preservation."""
    rows = []
    for (name, qubits), channel in sorted(model.channels.items()):
        choi = choi_matrix(channel)
        d = channel.dim
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))))
        # tracing out the output factor must give the identity
        partial = np.einsum("iaja->ij", choi.reshape(d, d, d, d))
        trace_error = float(np.max(np.abs(partial - np.eye(d))))
        rows.append({
            "gate": name,
            "qubits": list(qubits),
            "process_fidelity": channel.process_fidelity(),
            "choi_min_eigenvalue": min_eig,
            "trace_error": trace_error,
            "cptp": min_eig >= -tol and trace_error <= tol,
        })
    return rows
