"""experiment_config.py

JSON experiment configuration: nested dataclasses mirroring the file
layout, validated field by field. Every rejection raises
:class:`ConfigError` carrying the dotted path of the offending field.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Union

from ansatz_module import ANSATZ_KINDS, parameter_count
from simulator import DENSITY_CAP, STATEVECTOR_CAP

MODES = ("noiseless", "noisy", "pretrained_eval")
AVERAGING = ("best_of_R", "average_cost")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` is the dotted key path."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _int(data: Mapping[str, Any], key: str, path: str, default: Any = None, minimum: Optional[int] = None) -> Any:
    value = data.get(key, default)
    where = f"{path}{key}"
    if value is None:
        raise ConfigError(where, "missing field")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(where, f"must be >= {minimum}, got {value}")
    return value


def _float(data: Mapping[str, Any], key: str, path: str, default: Optional[float] = None) -> float:
    value = data.get(key, default)
    where = f"{path}{key}"
    if value is None:
        raise ConfigError(where, "missing field")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(where, "must be finite")
    return value


def _choice(data: Mapping[str, Any], key: str, path: str, choices, default: str) -> str:
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(f"{path}{key}", f"expected one of {list(choices)}, got {value!r}")
    return value


def _check_keys(data: Mapping[str, Any], allowed, path: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(path.rstrip(".") or "<root>", "expected an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}{key}", "unknown field")


@dataclass(frozen=True)
class ProblemConfig:
    n: int = 2
    a: float = 0.0
    b: float = 1.0
    V0: float = 1.0
    g: float = 0.0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProblemConfig":
        _check_keys(data, ("n", "a", "b", "V0", "g"), "problem.")
        out = cls(
            n=_int(data, "n", "problem.", minimum=1),
            a=_float(data, "a", "problem.", 0.0),
            b=_float(data, "b", "problem.", 1.0),
            V0=_float(data, "V0", "problem.", 1.0),
            g=_float(data, "g", "problem.", 0.0),
        )
        if out.b <= out.a:
            raise ConfigError("problem.b", f"must be greater than a={out.a}, got {out.b}")
        return out


@dataclass(frozen=True)
class AnsatzConfig:
    kind: str = "real_amplitude"
    layers: int = 2

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AnsatzConfig":
        _check_keys(data, ("kind", "layers"), "ansatz.")
        return cls(
            kind=_choice(data, "kind", "ansatz.", ANSATZ_KINDS, "real_amplitude"),
            layers=_int(data, "layers", "ansatz.", 2, minimum=0),
        )


@dataclass(frozen=True)
class OptimizerSettings:
    max_iterations: int = 200
    rho_begin: float = 0.5
    rho_end: float = 1e-4

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OptimizerSettings":
        _check_keys(data, ("max_iterations", "rho_begin", "rho_end"), "optimizer.")
        out = cls(
            max_iterations=_int(data, "max_iterations", "optimizer.", 200, minimum=1),
            rho_begin=_float(data, "rho_begin", "optimizer.", 0.5),
            rho_end=_float(data, "rho_end", "optimizer.", 1e-4),
        )
        if out.rho_end <= 0:
            raise ConfigError("optimizer.rho_end", f"must be > 0, got {out.rho_end}")
        if out.rho_begin <= out.rho_end:
            raise ConfigError("optimizer.rho_begin", f"must exceed rho_end={out.rho_end}, got {out.rho_begin}")
        return out


@dataclass(frozen=True)
class NoiseSettings:
    snapshots: List[str] = field(default_factory=list)
    reset_error: float = 0.0
    layout: Optional[List[int]] = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NoiseSettings":
        _check_keys(data, ("snapshots", "reset_error", "layout"), "noise.")
        snapshots = data.get("snapshots", [])
        if isinstance(snapshots, str):
            snapshots = [snapshots]
        if not isinstance(snapshots, list) or not all(isinstance(s, str) for s in snapshots):
            raise ConfigError("noise.snapshots", "expected a list of file paths")
        reset_error = _float(data, "reset_error", "noise.", 0.0)
        if not 0.0 <= reset_error <= 1.0:
            raise ConfigError("noise.reset_error", f"must lie in [0, 1], got {reset_error}")
        layout = data.get("layout")
        if layout is not None:
            if not isinstance(layout, list) or not all(isinstance(q, int) and q >= 0 for q in layout):
                raise ConfigError("noise.layout", "expected a list of non-negative qubit indices")
            if len(set(layout)) != len(layout):
                raise ConfigError("noise.layout", "qubit indices must be distinct")
        return cls(list(snapshots), reset_error, layout)


TOP_LEVEL_KEYS = (
    "name", "problem", "ansatz", "shots", "executions", "mode", "averaging", "optimizer",
    "noise", "seed", "kappa", "density_cap", "statevector_cap", "evaluate_direct",
    "pretrain_noisy", "theta0",
)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "vqcfd"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    ansatz: AnsatzConfig = field(default_factory=AnsatzConfig)
    shots: Optional[int] = 100_000
    executions: int = 20
    mode: str = "noiseless"
    averaging: str = "best_of_R"
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    seed: int = 0
    kappa: int = 2
    density_cap: int = DENSITY_CAP
    statevector_cap: int = STATEVECTOR_CAP
    evaluate_direct: bool = True
    pretrain_noisy: bool = False
    theta0: Optional[List[float]] = None

    @property
    def num_parameters(self) -> int:
        return parameter_count(self.ansatz.kind, self.problem.n, self.ansatz.layers)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        _check_keys(data, TOP_LEVEL_KEYS, "")
        name = data.get("name", "vqcfd")
        if not isinstance(name, str) or not name:
            raise ConfigError("name", "expected a non-empty string")

        problem = ProblemConfig.from_dict(data.get("problem", {}))
        ansatz = AnsatzConfig.from_dict(data.get("ansatz", {}))
        shots = data.get("shots", 100_000)
        if shots is not None:
            shots = _int(data, "shots", "", 100_000, minimum=1)
        executions = _int(data, "executions", "", 20, minimum=1)
        mode = _choice(data, "mode", "", MODES, "noiseless")
        averaging = _choice(data, "averaging", "", AVERAGING, "best_of_R")
        optimizer = OptimizerSettings.from_dict(data.get("optimizer", {}))
        noise = NoiseSettings.from_dict(data.get("noise", {}))
        seed = _int(data, "seed", "", 0, minimum=0)
        kappa = _int(data, "kappa", "", 2, minimum=1)
        density_cap = _int(data, "density_cap", "", DENSITY_CAP, minimum=1)
        statevector_cap = _int(data, "statevector_cap", "", STATEVECTOR_CAP, minimum=1)

        flags = {}
        for key, default in (("evaluate_direct", True), ("pretrain_noisy", False)):
            value = data.get(key, default)
            if not isinstance(value, bool):
                raise ConfigError(key, f"expected true/false, got {value!r}")
            flags[key] = value

        if mode == "noisy" and len(noise.snapshots) != 1:
            raise ConfigError("noise.snapshots", "noisy mode trains under exactly one calibration snapshot")
        if mode != "noiseless" and noise.layout is not None and len(noise.layout) < 3 * problem.n + 1:
            raise ConfigError("noise.layout", f"needs at least {3 * problem.n + 1} physical qubits, got {len(noise.layout)}")
        if mode == "pretrained_eval":
            if ansatz.kind != "hadamard_ry":
                raise ConfigError("ansatz.kind", "pretrained_eval uses the hadamard_ry ansatz")
            if flags["pretrain_noisy"] and not noise.snapshots:
                raise ConfigError("noise.snapshots", "noisy pre-training needs a calibration snapshot")
        if 3 * problem.n + 1 > statevector_cap:
            raise ConfigError("problem.n", f"interaction circuit needs {3 * problem.n + 1} qubits, statevector_cap is {statevector_cap}")
        if mode != "noiseless" and 3 * problem.n + 1 > density_cap:
            raise ConfigError("problem.n", f"interaction circuit needs {3 * problem.n + 1} qubits, density_cap is {density_cap}")

        theta0 = data.get("theta0")
        if theta0 is not None:
            expected = parameter_count(ansatz.kind, problem.n, ansatz.layers)
            if (
                not isinstance(theta0, list)
                or len(theta0) != expected
                or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in theta0)
            ):
                raise ConfigError("theta0", f"expected a list of {expected} numbers")
            theta0 = [float(t) for t in theta0]

        return cls(
            name=name, problem=problem, ansatz=ansatz, shots=shots, executions=executions,
            mode=mode, averaging=averaging, optimizer=optimizer, noise=noise, seed=seed,
            kappa=kappa, density_cap=density_cap, statevector_cap=statevector_cap,
            evaluate_direct=flags["evaluate_direct"], pretrain_noisy=flags["pretrain_noisy"],
            theta0=theta0,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = self.to_dict()
        data["seed"] = int(seed)
        return ExperimentConfig.from_dict(data)

    def resolve_paths(self, base_dir: Union[str, os.PathLike]) -> "ExperimentConfig":
        """Snapshot paths made absolute against ``base_dir`` when not found as given."""
        resolved = []
        for path in self.noise.snapshots:
            if os.path.isabs(path) or os.path.exists(path):
                resolved.append(os.path.abspath(path))
            else:
                resolved.append(os.path.abspath(os.path.join(base_dir, path)))
        data = self.to_dict()
        data["noise"]["snapshots"] = resolved
        return ExperimentConfig.from_dict(data)


def load_config(path: Union[str, os.PathLike]) -> ExperimentConfig:
    """Read a config file, or the ``config`` echo of a run manifest."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON in {path}: {exc}") from exc
    if isinstance(data, Mapping) and "config" in data and "vqcfd_version" in data:
        data = data["config"]
    config = ExperimentConfig.from_dict(data)
    return config.resolve_paths(os.path.dirname(os.path.abspath(path)))
