"""vqcfd_cli.py

Command-line entry point::

    python vqcfd_cli.py run configs/noiseless_g10_n2.json --out results/noiseless_g10
    python vqcfd_cli.py ground-state --n 4 --g 500 --out gs.json
    python vqcfd_cli.py encode-potential configs/noiseless_g10_n2.json --out enc/
    python vqcfd_cli.py transpile-report configs/noisy_g5000_n2.json
    python vqcfd_cli.py noise-validate calibrations/kolkata_like_synthetic.json

Exit codes: 0 ok, 2 configuration or calibration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from ansatz_module import ANSATZ_KINDS, AnsatzSpec, random_parameters
from experiment_config import ConfigError, ProblemConfig, load_config
from grid_problem import make_grid
from mps_module import dump_spectra, encode_potential, truncation_study
from noise_module import CalibrationError, build_noise_model, channel_report, load_calibration
from qnpu_module import transpile_report
from reference_solver import CONVENTIONS, ConvergenceError, imaginary_time_ground_state
from simulator import dump_circuit
from transpiler import DeviceTarget
from vqcfd_logic import RunAborted, run_vqcfd, sanitize_for_json, statistics

logger = logging.getLogger("vqcfd_cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s (%(name)s): %(message)s", force=True)


def _write_json(path: str, payload) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sanitize_for_json(payload), fh, indent=4)


def _write_rows(path: str, rows: List[dict]) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    columns = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row[c] is None else row[c] for c in columns])


# --- Subcommands --------------------------------------------------------------

def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out_dir = args.out or os.path.join("results", config.name)
    logger.info("Running '%s' (mode=%s, R=%d) into %s", config.name, config.mode, config.executions, out_dir)
    try:
        traces = run_vqcfd(config, out_dir=out_dir)
    except RunAborted as exc:
        logger.error("%s; partial outputs kept in %s", exc, out_dir)
        return EXIT_RUNTIME
    stats = statistics(traces)
    print(f"best run {stats['best_run']}: E = {stats['best_energy']:.8g}, "
          f"fidelity = {stats['best_fidelity']:.6f}, E_GS = {stats['ground_energy']:.8g}")
    if stats['sigma'] is not None:
        print(f"sigma (Hadamard vs direct) = {stats['sigma']:.4g}")
    print(f"outputs: {out_dir}")
    return EXIT_OK


def _problem_from_args(args):
    if args.config:
        p = load_config(args.config).problem
    else:
        if args.n is None:
            raise ConfigError("problem.n", "pass a config file or --n")
        data = {"n": args.n, "g": args.g, "V0": args.V0, "a": args.a, "b": args.b}
        p = ProblemConfig.from_dict({k: v for k, v in data.items() if v is not None})
    return make_grid(p.n, p.a, p.b, p.V0, p.g)


def cmd_ground_state(args) -> int:
    problem = _problem_from_args(args)
    try:
        ground = imaginary_time_ground_state(problem, convention=args.convention)
    except ConvergenceError as exc:
        logger.error("%s", exc)
        if args.out:
            _write_json(args.out, {"problem": problem.to_dict(), "ground_state": exc.state.to_dict(), "converged": False})
        return EXIT_RUNTIME
    print(f"E_GS = {ground.energy:.12g}")
    print(f"mu   = {ground.mu:.12g}  (residual {ground.residual:.2e}, {ground.iterations} steps)")
    if args.out:
        _write_json(args.out, {"problem": problem.to_dict(), "ground_state": ground.to_dict(), "converged": True})
        print(f"psi written to {args.out}")
    return EXIT_OK


def cmd_encode_potential(args) -> int:
    config = load_config(args.config)
    p = config.problem
    problem = make_grid(p.n, p.a, p.b, p.V0, p.g)
    if not problem.has_potential:
        raise ConfigError("problem.V0", "potential is identically zero, nothing to encode")
    kappas = args.kappas or list(range(1, max(1, problem.n // 2) + 2))
    rows = truncation_study(problem, kappas)
    os.makedirs(args.out, exist_ok=True)
    dump_spectra(rows, os.path.join(args.out, "spectra.json"))
    _write_rows(os.path.join(args.out, "truncation.csv"), [
        {
            "kappa": row["kappa"],
            "bond_dims": " ".join(str(b) for b in row["bond_dims"]),
            "reconstruction_error": row["reconstruction_error"],
            "svd_bound": row["svd_bound"],
        }
        for row in rows
    ])
    circuit = encode_potential(problem, config.kappa)
    dump_circuit(circuit, os.path.join(args.out, "potential_circuit.json"))
    for row in rows:
        print(f"kappa={row['kappa']}: bonds={row['bond_dims']} error={row['reconstruction_error']:.3e}")
    print(f"outputs: {args.out}")
    return EXIT_OK


def cmd_transpile_report(args) -> int:
    config = load_config(args.config)
    p = config.problem
    problem = make_grid(p.n, p.a, p.b, p.V0, p.g)
    if config.noise.snapshots:
        target = load_calibration(config.noise.snapshots[0]).target()
    else:
        target = DeviceTarget.line(3 * p.n + 1)
    rng = np.random.default_rng(config.seed)
    rows = []
    for kind in ANSATZ_KINDS:
        layers = config.ansatz.layers if kind == "real_amplitude" else 0
        theta = random_parameters(kind, p.n, layers, rng)
        spec = AnsatzSpec(kind, p.n, layers, tuple(theta))
        rows.extend(transpile_report(problem, spec, target, config.kappa, config.noise.layout))
    for row in rows:
        ref = "" if row["reference_cx"] is None else f" (n=4 reference {row['reference_cx']}/{row['reference_single_qubit']})"
        print(f"{row['ansatz']:>15} {row['circuit']:>11}: CX {row['cx_logical']} -> {row['cx_routed']}, "
              f"1q {row['single_qubit_logical']} -> {row['single_qubit_routed']}{ref}")
    if args.out:
        for row in rows:
            row["physical_qubits"] = " ".join(str(q) for q in row["physical_qubits"] or [])
        _write_rows(args.out, rows)
    return EXIT_OK


def cmd_noise_validate(args) -> int:
    failures = 0
    report = []
    for path in args.snapshots:
        snapshot = load_calibration(path)
        model = build_noise_model(snapshot, reset_error=args.reset_error)
        rows = channel_report(model)
        bad = [r for r in rows if not r["cptp"]]
        failures += len(bad)
        summary = snapshot.summary()
        print(f"{snapshot.name or path}: {summary['num_qubits']} qubits, "
              f"T1={summary['t1_us_mean']:.1f}us T2={summary['t2_us_mean']:.1f}us "
              f"e1={summary['error_1q_mean']:.3e} e2={summary['error_2q_mean']:.3e} "
              f"readout={summary['readout_error_mean']:.3e}; {len(rows)} channels, {len(bad)} not CPTP")
        report.append({"snapshot": path, "summary": summary, "channels": rows})
    if args.out:
        _write_json(args.out, report)
    return EXIT_RUNTIME if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqcfd", description="Variational NLSE ground-state toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run an experiment config")
    p_run.add_argument("config", help="Experiment JSON file (or a run manifest)")
    p_run.add_argument("--out", help="Output directory (default results/<name>)")
    p_run.add_argument("--seed", type=int, help="Override the config seed")
    p_run.set_defaults(func=cmd_run)

    p_gs = sub.add_parser("ground-state", help="Imaginary-time reference ground state")
    p_gs.add_argument("config", nargs="?", help="Experiment JSON file (problem block used)")
    p_gs.add_argument("--n", type=int)
    p_gs.add_argument("--g", type=float)
    p_gs.add_argument("--V0", type=float)
    p_gs.add_argument("--a", type=float)
    p_gs.add_argument("--b", type=float)
    p_gs.add_argument("--convention", choices=sorted(CONVENTIONS), default="functional")
    p_gs.add_argument("--out", help="JSON file receiving E_GS, mu and psi")
    p_gs.set_defaults(func=cmd_ground_state)

    p_enc = sub.add_parser("encode-potential", help="MPS encoding report of the potential")
    p_enc.add_argument("config")
    p_enc.add_argument("--out", default="encode_report")
    p_enc.add_argument("--kappas", type=int, nargs="+")
    p_enc.set_defaults(func=cmd_encode_potential)

    p_tr = sub.add_parser("transpile-report", help="Gate counts of the QNPU circuits")
    p_tr.add_argument("config")
    p_tr.add_argument("--out", help="CSV file")
    p_tr.set_defaults(func=cmd_transpile_report)

    p_nv = sub.add_parser("noise-validate", help="Check calibration snapshots and their channels")
    p_nv.add_argument("snapshots", nargs="+")
    p_nv.add_argument("--reset-error", type=float, default=0.0)
    p_nv.add_argument("--out", help="JSON report")
    p_nv.set_defaults(func=cmd_noise_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError) as exc:
        print(f"ERROR (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"ERROR (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, MemoryError, PermissionError) as exc:
        logger.exception("Command %s failed", args.command)
        print(f"ERROR (runtime): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
