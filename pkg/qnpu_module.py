"""qnpu_module.py

Hadamard-test energy estimation. Each circuit prepares |+⟩ on the ancilla
(qubit 0), the trial state on one or more registers and a controlled block
W, so that the ancilla ⟨Z⟩ equals Re⟨Φ|W|Φ⟩:

* kinetic   (width 2n-1): W = cyclic increment, ⟨Z⟩ = Re Σψ*_kψ_{k+1}
* potential (width 2n+1): B prepared with V̂, W = V̂†_B then CX A→B,
  ⟨Z⟩ = Σψ_k² V_k/𝒩
* interaction (width 3n+1): B and C prepared with U(θ), W = U†_B U†_C then
  CX A→B, CX A→C, ⟨Z⟩ = Σψ_k⁴
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from ansatz_module import AnsatzSpec, build
from circuit_utils import append_increment, controlled, interaction_layout, inverse, kinetic_layout, potential_layout
from grid_problem import EnergyBreakdown, GridProblem, scale_raw
from mps_module import encode_potential
from noise_module import NoiseModel, logical_readout, noisy_state
from simulator import DENSITY_CAP, STATEVECTOR_CAP, Circuit, expectation_z, run_density, run_statevector, sample
from transpiler import DeviceTarget, gate_counts, rebase, transpile

logger = logging.getLogger(__name__)

ENGINES = ("statevector", "density")

__all__ = [
    "EnergyBreakdown",
    "kinetic_circuit",
    "potential_circuit",
    "interaction_circuit",
    "estimate_energy",
    "ancilla_expectation",
]


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _hadamard_wrap(width: int, prepare: Circuit, block: Circuit, name: str) -> Circuit:
    circuit = Circuit(width, metadata={"name": name})
    circuit.add("H", 0)
    circuit.compose(prepare)
    circuit.compose(controlled(block, 0, width))
    circuit.add("H", 0)
    circuit.add("MEASURE", 0)
    return circuit


def kinetic_circuit(spec: AnsatzSpec) -> Circuit:
    if spec.n < 2:
        raise ValueError(f"kinetic circuit needs n >= 2, got {spec.n}")
    return _kinetic(spec)


def _kinetic(spec: AnsatzSpec) -> Circuit:
    """Kinetic Hadamard test; on one qubit the increment is a bare CX."""
    n = spec.n
    layout = kinetic_layout(n)
    width = layout.width
    circuit = Circuit(width, metadata={"name": f"kinetic_n{n}", "layout": layout.to_dict()})
    circuit.add("H", layout.ancilla)
    circuit.compose(build(spec), layout.primary)
    append_increment(circuit, layout.primary, layout.adder_ancillas, controls=(layout.ancilla,))
    circuit.add("H", layout.ancilla)
    circuit.add("MEASURE", layout.ancilla)
    return circuit


def potential_circuit(spec: AnsatzSpec, v_hat: Circuit) -> Circuit:
    n = spec.n
    if v_hat.width != n:
        raise ValueError(f"potential register has {v_hat.width} qubits, ansatz has {n}")
    layout = potential_layout(n)
    width = layout.width

    prepare = Circuit(width)
    prepare.compose(build(spec), layout.primary)
    prepare.compose(v_hat, layout.secondary)

    block = Circuit(width)
    block.compose(inverse(v_hat), layout.secondary)
    for a, b in zip(layout.primary, layout.secondary):
        block.add("CX", a, b)

    circuit = _hadamard_wrap(width, prepare, block, f"potential_n{n}")
    circuit.metadata["layout"] = layout.to_dict()
    return circuit


def interaction_circuit(spec: AnsatzSpec) -> Circuit:
    n = spec.n
    layout = interaction_layout(n)
    width = layout.width
    ansatz = build(spec)
    undo = inverse(ansatz)

    prepare = Circuit(width)
    for register in (layout.primary, layout.secondary, layout.tertiary):
        prepare.compose(ansatz, register)

    block = Circuit(width)
    block.compose(undo, layout.secondary)
    block.compose(undo, layout.tertiary)
    for a, b, c in zip(layout.primary, layout.secondary, layout.tertiary):
        block.add("CX", a, b)
        block.add("CX", a, c)

    circuit = _hadamard_wrap(width, prepare, block, f"interaction_n{n}")
    circuit.metadata["layout"] = layout.to_dict()
    return circuit


def ancilla_expectation(
    circuit: Circuit,
    shots: Optional[int] = None,
    seed=None,
    engine: str = "statevector",
    noise: Optional[NoiseModel] = None,
    reset_prologue: bool = False,
    layout: Optional[Sequence[int]] = None,
    statevector_cap: int = STATEVECTOR_CAP,
    density_cap: int = DENSITY_CAP,
) -> float:
    """Ancilla ⟨Z⟩ of a Hadamard-test circuit, exact or from ``shots`` samples.

    With ``noise`` the circuit is transpiled onto ``noise.target`` (device
    qubits taken from ``layout`` when given) and run through the density
    engine; the ancilla is read through its device qubit's readout confusion.
    The caps bound the width each engine accepts.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")
    confusion = None
    if noise is not None:
        state, routed = noisy_state(circuit, noise, layout=layout, reset_prologue=reset_prologue, max_qubits=density_cap)
        confusion = logical_readout(noise, routed).get(0)
    elif engine == "density":
        state = run_density(circuit, max_qubits=density_cap)
    else:
        state = run_statevector(circuit, max_qubits=statevector_cap)

    if shots is None:
        z = expectation_z(state, 0)
        if confusion is None:
            return z
        p1 = 0.5 * (1.0 - z)
        p1 = p1 * (1.0 - confusion.p10) + (1.0 - p1) * confusion.p01
        return float(1.0 - 2.0 * p1)
    return sample(state, [0], shots=shots, seed=seed, readout=[confusion]).expectation_z(0)


def estimate_energy(
    problem: GridProblem,
    spec: AnsatzSpec,
    shots: Optional[int] = None,
    seed=None,
    engine: str = "statevector",
    noise: Optional[NoiseModel] = None,
    v_hat: Optional[Circuit] = None,
    kappa: int = 2,
    reset_prologue: bool = False,
    layout: Optional[Sequence[int]] = None,
    statevector_cap: int = STATEVECTOR_CAP,
    density_cap: int = DENSITY_CAP,
) -> EnergyBreakdown:
    """Run the three Hadamard tests and scale their raw values.

    ``shots=None`` is exact mode. The three circuits get independent child
    seeds of ``seed``. A zero potential skips its circuit (raw_P = 0).
    """
    if spec.n != problem.n:
        raise ValueError(f"ansatz has n={spec.n}, problem has n={problem.n}")
    if shots is not None and int(shots) < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    seeds = as_seed_sequence(seed).spawn(3)
    kwargs = dict(
        shots=shots, engine=engine, noise=noise, reset_prologue=reset_prologue, layout=layout,
        statevector_cap=statevector_cap, density_cap=density_cap,
    )

    raw_K = ancilla_expectation(_kinetic(spec), seed=seeds[0], **kwargs)

    if problem.has_potential:
        v_hat = v_hat if v_hat is not None else encode_potential(problem, kappa)
        raw_P = ancilla_expectation(potential_circuit(spec, v_hat), seed=seeds[1], **kwargs)
    else:
        raw_P = 0.0

    raw_I = ancilla_expectation(interaction_circuit(spec), seed=seeds[2], **kwargs)

    method = "hadamard_exact" if shots is None else "hadamard_shots"
    result = scale_raw(problem, raw_K, raw_P, raw_I, method, None if shots is None else int(shots))
    logger.debug("estimate_energy %s: raw=(%.6f, %.6f, %.6f) E=%.6f", method, raw_K, raw_P, raw_I, result.E_total)
    return result


# CX / single-qubit counts of the transpiled QNPU circuits at n = 4 on a
# heavy-hex device, quoted for comparison only.
REFERENCE_GATE_COUNTS = {
    "real_amplitude": {"kinetic": (16, 42), "potential": (62, 170), "interaction": (133, 273)},
    "hadamard_ry": {"kinetic": (14, 33), "potential": (59, 160), "interaction": (70, 124)},
}


def transpile_report(
    problem: GridProblem,
    spec: AnsatzSpec,
    target: DeviceTarget,
    kappa: int = 2,
    layout: Optional[Sequence[int]] = None,
) -> List[Dict[str, object]]:
    """Gate counts of the three circuits before and after routing onto ``target``."""
    circuits = {"kinetic": _kinetic(spec), "interaction": interaction_circuit(spec)}
    if problem.has_potential:
        circuits["potential"] = potential_circuit(spec, encode_potential(problem, kappa))
    rows = []
    for label in ("kinetic", "potential", "interaction"):
        if label not in circuits:
            continue
        circuit = circuits[label]
        physical = None if layout is None else list(layout)[: circuit.width]
        before = gate_counts(rebase(circuit, target.basis))
        routed = transpile(circuit, target, physical)
        after = gate_counts(routed)
        reference = REFERENCE_GATE_COUNTS.get(spec.kind, {}).get(label)
        rows.append({
            "circuit": label,
            "ansatz": spec.kind,
            "n": spec.n,
            "width": circuit.width,
            "cx_logical": before["cx"],
            "single_qubit_logical": before["single_qubit"],
            "cx_routed": after["cx"],
            "single_qubit_routed": after["single_qubit"],
            "swaps": routed.metadata.get("swaps", 0),
            "physical_qubits": routed.metadata.get("physical_qubits"),
            "reference_cx": None if reference is None else reference[0],
            "reference_single_qubit": None if reference is None else reference[1],
        })
    return rows
