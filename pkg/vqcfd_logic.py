"""vqcfd_logic.py

Experiment orchestration: trains the variational state with the Hadamard-test
cost, records the direct-path estimate and the state fidelities at every
iteration, and persists traces, a CSV summary and a manifest.

Three modes:

* ``noiseless`` / ``noisy`` with ``best_of_R``: R independent optimisations
  from a shared θ₀, the one with the lowest final energy flagged ``best``.
* ``noiseless`` / ``noisy`` with ``average_cost``: one optimisation whose
  cost is the mean of R executions; R traces share the θ sequence.
* ``pretrained_eval``: the hadamard_ry ansatz at a fixed θ (optionally
  pre-trained under the first snapshot) evaluated noiseless and under
  every configured snapshot.

Seeds: the execution ``r`` of path ``p`` (0 Hadamard test, 1 direct) at
cost evaluation ``j`` draws from ``SeedSequence(seed, spawn_key=(r, p, j))``,
so traces do not depend on thread scheduling and disabling the direct path
leaves the optimisation path untouched.
"""

from __future__ import annotations

import concurrent.futures
import csv
import datetime
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy

from ansatz_module import AnsatzSpec, build, random_parameters, state_of
from direct_module import direct_energy
from experiment_config import ConfigError, ExperimentConfig
from grid_problem import EnergyBreakdown, GridProblem, make_grid
from mps_module import encode_potential
from noise_module import NoiseModel, build_noise_model, load_calibration, noisy_state
from optimizer_module import OptimizerConfig, minimize
from qnpu_module import estimate_energy
from reference_solver import GroundState, fidelity, imaginary_time_ground_state
from trace_schema import get_summary_columns, get_trace_keys

logger = logging.getLogger(__name__)

VQCFD_VERSION = "1.0.0"
THREADS_ENV = "VQCFD_THREADS"

_HADAMARD_PATH, _DIRECT_PATH = 0, 1
# spawn key of the shared initial parameters
_THETA0_KEY = (2 ** 31 - 1,)


class RunAborted(RuntimeError):
    """A run failed or was cancelled; ``traces`` holds what was recorded."""

    def __init__(self, message: str, traces: List["RunTrace"]):
        super().__init__(message)
        self.traces = traces


class _Cancelled(Exception):
    pass


def sanitize_for_json(obj):
    """Recursively convert numpy values for JSON; non-finite floats become None."""
    if isinstance(obj, dict):
        return {k: sanitize_for_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize_for_json(elem) for elem in obj]
    if isinstance(obj, np.ndarray):
        return sanitize_for_json(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class IterationRecord:
    run: int
    iteration: int
    theta: List[float]
    vqcfd: EnergyBreakdown
    cost: float
    fidelity: float
    direct: Optional[EnergyBreakdown] = None
    snapshot: Optional[str] = None
    noisy_fidelity: Optional[float] = None
    exact: Optional[EnergyBreakdown] = None

    @property
    def delta(self) -> Optional[float]:
        if self.direct is None:
            return None
        return self.vqcfd.E_total - self.direct.E_total

    @property
    def f_prime(self) -> float:
        return 1.0 - self.fidelity

    @property
    def f_double_prime(self) -> Optional[float]:
        return None if self.noisy_fidelity is None else 1.0 - self.noisy_fidelity

    def to_dict(self) -> Dict[str, Any]:
        vq = self.vqcfd
        row: Dict[str, Any] = {
            'run': self.run,
            'iteration': self.iteration,
            'snapshot': self.snapshot,
            'theta': list(self.theta),
            'cost': self.cost,
            'E_vqcfd': vq.E_total,
            'E_K': vq.E_K,
            'E_P': vq.E_P,
            'E_I': vq.E_I,
            # component-wise quantities: ⟨E_K⟩δ², ⟨E_P⟩/𝒩, ⟨E_I⟩δ/g
            'E_K_raw': 1.0 - vq.raw_K,
            'E_P_raw': vq.raw_P,
            'E_I_raw': vq.raw_I,
            'method': vq.method,
            'shots': vq.shots,
            'E_direct': None,
            'E_K_direct': None,
            'E_P_direct': None,
            'E_I_direct': None,
            'delta': self.delta,
            'fidelity': self.fidelity,
            'f_prime': self.f_prime,
            'f_double_prime': self.f_double_prime,
            'noisy_fidelity': self.noisy_fidelity,
            'E_vqcfd_exact': None,
            'E_K_raw_exact': None,
            'E_P_raw_exact': None,
            'E_I_raw_exact': None,
        }
        if self.direct is not None:
            row.update({
                'E_direct': self.direct.E_total,
                'E_K_direct': self.direct.E_K,
                'E_P_direct': self.direct.E_P,
                'E_I_direct': self.direct.E_I,
            })
        if self.exact is not None:
            row.update({
                'E_vqcfd_exact': self.exact.E_total,
                'E_K_raw_exact': 1.0 - self.exact.raw_K,
                'E_P_raw_exact': self.exact.raw_P,
                'E_I_raw_exact': self.exact.raw_I,
            })
        return {key: row[key] for key in get_trace_keys()}


@dataclass
class RunTrace:
    run: int
    records: List[IterationRecord] = field(default_factory=list)
    snapshot: Optional[str] = None
    best: bool = False
    ground_energy: Optional[float] = None
    theta0: List[float] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    @property
    def final_record(self) -> Optional[IterationRecord]:
        """Record at the best-seen cost (what the optimiser returns)."""
        if not self.records:
            return None
        return min(self.records, key=lambda rec: rec.cost)

    @property
    def final_energy(self) -> Optional[float]:
        rec = self.final_record
        return None if rec is None else rec.vqcfd.E_total

    @property
    def final_fidelity(self) -> Optional[float]:
        rec = self.final_record
        return None if rec is None else rec.fidelity

    def energies(self) -> np.ndarray:
        return np.array([rec.vqcfd.E_total for rec in self.records])

    def summary(self) -> Dict[str, Any]:
        rec = self.final_record
        return {
            'run': self.run,
            'snapshot': self.snapshot,
            'best': self.best,
            'n_evaluations': len(self.records),
            'converged': self.converged,
            'message': self.message,
            'theta0': list(self.theta0),
            'theta_final': None if rec is None else list(rec.theta),
            'final_energy': self.final_energy,
            'final_fidelity': self.final_fidelity,
            'ground_energy': self.ground_energy,
        }


def _seed(root: int, run: int, path: int, iteration: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(root, spawn_key=(run, path, iteration))


def worker_count(executions: int) -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            count = int(value)
            if count >= 1:
                return count
        except ValueError:
            pass
        logger.warning("Ignoring invalid %s=%r", THREADS_ENV, value)
    return max(1, min(executions, os.cpu_count() or 1))


class _Experiment:
    """Shared, read-only state of one ``run_vqcfd`` call plus progress bookkeeping."""

    def __init__(self, config: ExperimentConfig, callbacks: Dict[str, Callable]):
        self.config = config
        p = config.problem
        self.problem: GridProblem = make_grid(p.n, p.a, p.b, p.V0, p.g)
        self.v_hat = encode_potential(self.problem, config.kappa) if self.problem.has_potential else None
        self.ground: GroundState = imaginary_time_ground_state(self.problem)
        self.snapshots = [load_calibration(path) for path in config.noise.snapshots]
        self.models: List[NoiseModel] = [
            build_noise_model(snap, reset_error=config.noise.reset_error) for snap in self.snapshots
        ]
        self.layout = config.noise.layout
        self.reset_prologue = config.noise.reset_error > 0.0

        self._status = callbacks.get('status', lambda k, **kw: logger.debug("status %s %s", k, kw))
        self._progress = callbacks.get('progress', lambda v: None)
        self._log = callbacks.get('log', lambda k, **kw: logger.info("%s %s", k, kw))
        self._is_cancelled = callbacks.get('is_cancelled', lambda: False)
        self._abort = threading.Event()
        self._lock = threading.Lock()
        self._done = 0
        self._total = 1

    def spec(self, theta: Sequence[float]) -> AnsatzSpec:
        a = self.config.ansatz
        return AnsatzSpec(a.kind, self.problem.n, a.layers, tuple(theta))

    def expect(self, total: int) -> None:
        self._total = max(1, total)

    def tick(self) -> None:
        with self._lock:
            self._done += 1
            done = self._done
        self._progress(min(100.0, 100.0 * done / self._total))

    def check_cancelled(self) -> None:
        if self._abort.is_set() or self._is_cancelled():
            raise _Cancelled()

    def evaluate(
        self,
        theta: Sequence[float],
        run: int,
        iteration: int,
        noise: Optional[NoiseModel] = None,
        snapshot: Optional[str] = None,
    ) -> IterationRecord:
        """Both estimators and the fidelities at ``theta``."""
        cfg = self.config
        spec = self.spec(theta)
        vq = estimate_energy(
            self.problem, spec, cfg.shots,
            seed=_seed(cfg.seed, run, _HADAMARD_PATH, iteration),
            noise=noise, v_hat=self.v_hat, kappa=cfg.kappa,
            reset_prologue=self.reset_prologue and noise is not None, layout=self.layout,
            statevector_cap=cfg.statevector_cap, density_cap=cfg.density_cap,
        )
        direct = None
        if cfg.evaluate_direct:
            direct = direct_energy(
                self.problem, spec, cfg.shots, seed=_seed(cfg.seed, run, _DIRECT_PATH, iteration),
                statevector_cap=cfg.statevector_cap,
            )

        psi_gs = self.ground.psi.amplitudes
        ideal = state_of(spec).amplitudes
        if noise is None:
            fid, noisy_fid, exact = fidelity(psi_gs, ideal), None, None
        else:
            rho, _ = noisy_state(
                build(spec), noise, layout=self.layout, reset_prologue=self.reset_prologue, max_qubits=cfg.density_cap,
            )
            fid = float(np.clip(rho.overlap(psi_gs), 0.0, 1.0))
            noisy_fid = float(np.clip(rho.overlap(ideal), 0.0, 1.0))
            exact = estimate_energy(
                self.problem, spec, None, v_hat=self.v_hat, kappa=cfg.kappa, statevector_cap=cfg.statevector_cap,
            )
        return IterationRecord(
            run=run,
            iteration=iteration,
            theta=[float(t) for t in theta],
            vqcfd=vq,
            cost=vq.E_total,
            fidelity=fid,
            direct=direct,
            snapshot=snapshot,
            noisy_fidelity=noisy_fid,
            exact=exact,
        )


def _optimizer_config(config: ExperimentConfig) -> OptimizerConfig:
    o = config.optimizer
    return OptimizerConfig(o.max_iterations, o.rho_begin, o.rho_end, config.seed)


def _initial_theta(config: ExperimentConfig) -> np.ndarray:
    if config.theta0 is not None:
        return np.asarray(config.theta0, dtype=float)
    if config.mode == "pretrained_eval":
        return np.zeros(config.num_parameters)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=_THETA0_KEY))
    return random_parameters(config.ansatz.kind, config.problem.n, config.ansatz.layers, rng)


def _train_single(exp: _Experiment, run: int, theta0: np.ndarray, noise, snapshot, sink: List[IterationRecord]) -> RunTrace:
    def cost(theta: np.ndarray) -> float:
        exp.check_cancelled()
        rec = exp.evaluate(theta, run, len(sink), noise=noise, snapshot=snapshot)
        sink.append(rec)
        exp.tick()
        return rec.cost

    try:
        result = minimize(cost, theta0, _optimizer_config(exp.config))
    except Exception:
        # stop the sibling runs at their next evaluation
        exp._abort.set()
        raise
    exp._log("logic_run_done", run=run, evaluations=result.n_evaluations, energy=result.cost)
    return RunTrace(run, sink, snapshot, False, exp.ground.energy, list(theta0), result.converged, result.message)


def _train_best_of_r(exp: _Experiment, theta0: np.ndarray, noise, snapshot, partial: Dict[int, List], pool) -> List[RunTrace]:
    R = exp.config.executions
    exp.expect(R * exp.config.optimizer.max_iterations)
    for r in range(R):
        partial[r] = []
    futures = {pool.submit(_train_single, exp, r, theta0, noise, snapshot, partial[r]): r for r in range(R)}
    traces: Dict[int, RunTrace] = {}
    for future in concurrent.futures.as_completed(futures):
        traces[futures[future]] = future.result()
    return [traces[r] for r in range(R)]


def _train_average(exp: _Experiment, theta0: np.ndarray, noise, snapshot, partial: Dict[int, List], pool) -> List[RunTrace]:
    R = exp.config.executions
    exp.expect(R * exp.config.optimizer.max_iterations)
    for r in range(R):
        partial[r] = []

    def cost(theta: np.ndarray) -> float:
        exp.check_cancelled()
        j = len(partial[0])
        records = list(pool.map(lambda r: exp.evaluate(theta, r, j, noise=noise, snapshot=snapshot), range(R)))
        mean = float(np.mean([rec.vqcfd.E_total for rec in records]))
        for r, rec in enumerate(records):
            rec.cost = mean
            partial[r].append(rec)
            exp.tick()
        return mean

    result = minimize(cost, theta0, _optimizer_config(exp.config))
    exp._log("logic_run_done", run="average", evaluations=result.n_evaluations, energy=result.cost)
    return [
        RunTrace(r, partial[r], snapshot, False, exp.ground.energy, list(theta0), result.converged, result.message)
        for r in range(R)
    ]


def _pretrained(exp: _Experiment, theta0: np.ndarray, partial: Dict[int, List], pool) -> List[RunTrace]:
    cfg = exp.config
    R = cfg.executions
    labels = ["noiseless"] + [snap.name or f"snapshot_{i}" for i, snap in enumerate(exp.snapshots)]
    models: List[Optional[NoiseModel]] = [None] + list(exp.models)
    traces: List[RunTrace] = []

    theta = np.asarray(theta0, dtype=float)
    if cfg.pretrain_noisy:
        exp._log("logic_pretrain_start", snapshot=labels[1])
        sink: List[IterationRecord] = []
        partial[-1] = sink
        exp.expect(cfg.optimizer.max_iterations + R * len(labels))
        pretrain = _train_single(exp, 0, theta, exp.models[0], f"pretrain:{labels[1]}", sink)
        theta = np.asarray(pretrain.final_record.theta)
        traces.append(pretrain)
    else:
        exp.expect(R * len(labels))

    jobs = [(label, model, r) for label, model in zip(labels, models) for r in range(R)]

    def job(args):
        label, model, r = args
        exp.check_cancelled()
        rec = exp.evaluate(theta, r, 0, noise=model, snapshot=label)
        exp.tick()
        return RunTrace(r, [rec], label, False, exp.ground.energy, list(theta), True, "evaluation only")

    for index, trace in enumerate(pool.map(job, jobs)):
        partial[index] = trace.records
        traces.append(trace)
    return traces


def _flag_best(traces: List[RunTrace]) -> None:
    candidates = [t for t in traces if t.final_energy is not None and not (t.snapshot or "").startswith("pretrain:")]
    if candidates:
        min(candidates, key=lambda t: t.final_energy).best = True


def run_vqcfd(
    config: ExperimentConfig,
    callbacks: Optional[Dict[str, Callable]] = None,
    out_dir: Optional[str] = None,
) -> List[RunTrace]:
    """Run the experiment described by ``config``.

    ``callbacks`` may supply ``status(key, **kw)``,
    ``progress(pct)``, ``log(key, **kw)`` and ``is_cancelled()``, each
    optional. With ``out_dir`` the traces, summary and manifest are written
    there, also when the run aborts.
    """
    callbacks = callbacks or {}
    exp = _Experiment(config, callbacks)
    exp._status("status_run_prep", name=config.name)
    exp._log(
        "logic_run_start", mode=config.mode, averaging=config.averaging,
        executions=config.executions, shots=config.shots, ground_energy=exp.ground.energy,
    )

    theta0 = _initial_theta(config)
    noise = exp.models[0] if config.mode == "noisy" else None
    snapshot = exp.snapshots[0].name if noise is not None else None
    partial: Dict[int, List[IterationRecord]] = {}
    n_workers = worker_count(config.executions)

    try:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            if config.mode == "pretrained_eval":
                traces = _pretrained(exp, theta0, partial, pool)
            elif config.averaging == "average_cost":
                traces = _train_average(exp, theta0, noise, snapshot, partial, pool)
            else:
                traces = _train_best_of_r(exp, theta0, noise, snapshot, partial, pool)
    except ConfigError:
        raise
    except Exception as exc:
        reason = "cancelled" if isinstance(exc, _Cancelled) else f"{type(exc).__name__}: {exc}"
        traces = [
            RunTrace(r, list(records), snapshot, False, exp.ground.energy, list(theta0), False, reason)
            for r, records in sorted(partial.items())
        ]
        exp._log("logic_run_aborted", reason=reason, partial_runs=len(traces))
        if out_dir:
            write_outputs(out_dir, config, traces, exp.ground)
        raise RunAborted(f"run '{config.name}' aborted: {reason}", traces) from exc

    _flag_best(traces)
    exp._progress(100.0)
    exp._status("status_run_done", name=config.name)
    if out_dir:
        write_outputs(out_dir, config, traces, exp.ground)
    return traces


# --- Statistics -------------------------------------------------------------------

def _rms(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean((arr - arr.mean()) ** 2)))


def statistics(traces: Sequence[RunTrace]) -> Dict[str, Any]:
    """σ over all Δ_{r,j}, σ′_j over the R energies of iteration j, best-run summary.

    Both spreads are RMS deviations about the mean. σ′ is computed per
    snapshot label (``noiseless`` when unset); ``sigma_prime`` holds the
    series when the records carry a single label and is None otherwise.
    """
    records = [rec for t in traces for rec in t.records]
    if not records:
        raise ValueError("statistics needs at least one recorded iteration")

    deltas = [rec.delta for rec in records if rec.delta is not None]
    grouped: Dict[str, Dict[int, List[float]]] = {}
    for rec in records:
        label = rec.snapshot or "noiseless"
        grouped.setdefault(label, {}).setdefault(rec.iteration, []).append(rec.vqcfd.E_total)
    by_snapshot = {
        label: [_rms(by_iteration[j]) for j in sorted(by_iteration)]
        for label, by_iteration in grouped.items()
    }
    sigma_prime = next(iter(by_snapshot.values())) if len(by_snapshot) == 1 else None

    finished = [t for t in traces if t.final_energy is not None]
    best = min(finished, key=lambda t: t.final_energy) if finished else None
    return {
        'sigma': _rms(deltas) if deltas else None,
        'mean_delta': float(np.mean(deltas)) if deltas else None,
        'sigma_prime': sigma_prime,
        'sigma_prime_by_snapshot': by_snapshot,
        'n_records': len(records),
        'best_run': None if best is None else best.run,
        'best_energy': None if best is None else best.final_energy,
        'best_fidelity': None if best is None else best.final_fidelity,
        'ground_energy': traces[0].ground_energy if traces else None,
    }


# --- Writers -----------------------------------------------------------------------

def _prepare(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_trace_jsonl(path: str, traces: Sequence[RunTrace]) -> None:
    """One JSON object per iteration record."""
    _prepare(path)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for trace in traces:
                for rec in trace.records:
                    fh.write(json.dumps(sanitize_for_json(rec.to_dict())) + "\n")
    except PermissionError as exc:
        raise PermissionError(f"Cannot write to '{path}'. File is in use or the directory is not writable.") from exc


def write_summary_csv(path: str, traces: Sequence[RunTrace]) -> None:
    columns = get_summary_columns()
    _prepare(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for trace in traces:
                for rec in trace.records:
                    row = sanitize_for_json(rec.to_dict())
                    writer.writerow(["" if row[c] is None else row[c] for c in columns])
    except PermissionError as exc:
        raise PermissionError(f"Cannot write to '{path}'. File is in use or the directory is not writable.") from exc


def build_manifest(config: ExperimentConfig, traces: Sequence[RunTrace], ground: Optional[GroundState]) -> Dict[str, Any]:
    stats = statistics(traces) if any(t.records for t in traces) else None
    return sanitize_for_json({
        'vqcfd_version': VQCFD_VERSION,
        'created': datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        'numpy_version': np.__version__,
        'scipy_version': scipy.__version__,
        'config': config.to_dict(),
        'seed': config.seed,
        'ground_state': None if ground is None else {
            'energy': ground.energy, 'mu': ground.mu, 'residual': ground.residual,
            'iterations': ground.iterations, 'convention': ground.convention,
        },
        'statistics': stats,
        'runs': [t.summary() for t in traces],
    })


def write_manifest(path: str, config: ExperimentConfig, traces: Sequence[RunTrace], ground: Optional[GroundState] = None) -> None:
    _prepare(path)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(build_manifest(config, traces, ground), fh, indent=4)
    except PermissionError as exc:
        raise PermissionError(f"Cannot write to '{path}'. File is in use or the directory is not writable.") from exc


def write_outputs(out_dir: str, config: ExperimentConfig, traces: Sequence[RunTrace], ground: Optional[GroundState]) -> Dict[str, str]:
    """traces.jsonl, summary.csv and manifest.json under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        'traces': os.path.join(out_dir, "traces.jsonl"),
        'summary': os.path.join(out_dir, "summary.csv"),
        'manifest': os.path.join(out_dir, "manifest.json"),
    }
    write_trace_jsonl(paths['traces'], traces)
    write_summary_csv(paths['summary'], traces)
    write_manifest(paths['manifest'], config, traces, ground)
    logger.info("Outputs written to %s", out_dir)
    return paths
