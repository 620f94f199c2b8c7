import csv
import dataclasses
import itertools
import json
import os
from pathlib import Path

import numpy as np
import pytest

import vqcfd_logic
from ansatz_module import AnsatzSpec, build, state_of
from experiment_config import ConfigError, ExperimentConfig, load_config
from grid_problem import EnergyBreakdown, make_grid
from noise_module import build_noise_model, load_calibration, noisy_state
from reference_solver import fidelity, imaginary_time_ground_state
from simulator import SimulationLimitError
from trace_schema import get_summary_columns
from vqcfd_logic import RunAborted, run_vqcfd, sanitize_for_json, statistics, worker_count

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _config(**overrides):
    data = {
        "name": "unit",
        "problem": {"n": 2, "g": 10.0},
        "ansatz": {"kind": "real_amplitude", "layers": 1},
        "shots": None,
        "executions": 2,
        "optimizer": {"max_iterations": 6},
        "seed": 3,
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def test_exact_best_of_r_run():
    traces = run_vqcfd(_config())
    assert [t.run for t in traces] == [0, 1]
    assert sum(t.best for t in traces) == 1
    assert traces[0].theta0 == traces[1].theta0
    for trace in traces:
        assert 1 <= len(trace.records) <= 6
        assert [rec.iteration for rec in trace.records] == list(range(len(trace.records)))
        for rec in trace.records:
            assert rec.delta == pytest.approx(0.0, abs=1e-8)
            assert 0.0 <= rec.fidelity <= 1.0
            assert rec.vqcfd.E_total >= trace.ground_energy - 1e-9
    best = next(t for t in traces if t.best)
    assert best.final_energy == min(t.final_energy for t in traces)


def test_traces_do_not_depend_on_thread_count(monkeypatch):
    config = _config(shots=2000, executions=3, optimizer={"max_iterations": 4})
    monkeypatch.setenv("VQCFD_THREADS", "1")
    serial = [t.energies().tolist() for t in run_vqcfd(config)]
    monkeypatch.setenv("VQCFD_THREADS", "3")
    threaded = [t.energies().tolist() for t in run_vqcfd(config)]
    assert serial == threaded


def test_direct_path_does_not_perturb_training():
    config = _config(shots=2000, executions=1, optimizer={"max_iterations": 4})
    with_direct = run_vqcfd(config)[0]
    without = run_vqcfd(ExperimentConfig.from_dict({**config.to_dict(), "evaluate_direct": False}))[0]
    np.testing.assert_allclose(with_direct.energies(), without.energies())
    assert all(rec.direct is None and rec.delta is None for rec in without.records)
    assert all(rec.direct is not None for rec in with_direct.records)


def test_average_cost_mode_shares_parameters():
    traces = run_vqcfd(_config(shots=1000, executions=3, averaging="average_cost"))
    assert len(traces) == 3
    n = len(traces[0].records)
    assert all(len(t.records) == n for t in traces)
    for j in range(n):
        recs = [t.records[j] for t in traces]
        assert all(rec.theta == recs[0].theta for rec in recs)
        assert recs[0].cost == pytest.approx(np.mean([rec.vqcfd.E_total for rec in recs]))
    # different sub-seeds per execution
    assert len({t.records[0].vqcfd.E_total for t in traces}) > 1


def test_noisy_mode_records_noisy_quantities(kolkata_path):
    config = _config(
        problem={"n": 1, "g": 2.0}, executions=1, optimizer={"max_iterations": 2},
        mode="noisy", noise={"snapshots": [kolkata_path]},
    )
    trace = run_vqcfd(config)[0]
    assert trace.snapshot == "kolkata_like_synthetic"
    for rec in trace.records:
        assert rec.exact is not None and rec.exact.method == "hadamard_exact"
        assert 0.0 < rec.noisy_fidelity < 1.0
        assert rec.f_double_prime == pytest.approx(1.0 - rec.noisy_fidelity)
        row = rec.to_dict()
        assert row['snapshot'] == "kolkata_like_synthetic"
        assert row['E_vqcfd_exact'] == pytest.approx(rec.exact.E_total)


def test_pretrained_evaluation_across_snapshots(kolkata_path, mumbai_path):
    config = _config(
        problem={"n": 1, "g": 5.0}, ansatz={"kind": "hadamard_ry", "layers": 0},
        executions=2, mode="pretrained_eval", noise={"snapshots": [kolkata_path, mumbai_path]},
    )
    traces = run_vqcfd(config)
    labels = [t.snapshot for t in traces]
    assert labels == ["noiseless"] * 2 + ["kolkata_like_synthetic"] * 2 + ["mumbai_like_synthetic"] * 2
    assert all(len(t.records) == 1 and t.records[0].theta == [0.0] for t in traces)
    assert traces[0].records[0].noisy_fidelity is None
    assert traces[2].records[0].noisy_fidelity < 1.0
    # exact estimates: executions of one label coincide
    assert traces[0].final_energy == pytest.approx(traces[1].final_energy)


@pytest.mark.slow
def test_noisy_pretraining_precedes_evaluation(kolkata_path):
    config = _config(
        problem={"n": 1, "g": 5.0}, ansatz={"kind": "hadamard_ry", "layers": 0},
        executions=1, mode="pretrained_eval", pretrain_noisy=True,
        optimizer={"max_iterations": 3, "rho_begin": 0.1}, noise={"snapshots": [kolkata_path]},
    )
    traces = run_vqcfd(config)
    assert traces[0].snapshot == "pretrain:kolkata_like_synthetic"
    assert not traces[0].best
    trained = traces[0].final_record.theta
    assert all(t.records[0].theta == trained for t in traces[1:])


def test_cancellation_keeps_partial_outputs(tmp_path):
    calls = itertools.count()
    logs = []
    callbacks = {
        'is_cancelled': lambda: next(calls) >= 3,
        'log': lambda key, **kw: logs.append(key),
    }
    with pytest.raises(RunAborted) as info:
        run_vqcfd(_config(), callbacks=callbacks, out_dir=str(tmp_path))
    traces = info.value.traces
    assert sum(len(t.records) for t in traces) == 3
    assert all(t.message == "cancelled" for t in traces)
    assert 'logic_run_aborted' in logs
    with open(tmp_path / "traces.jsonl", encoding="utf-8") as fh:
        assert len(fh.readlines()) == 3
    assert (tmp_path / "manifest.json").exists()


def test_outputs_and_manifest(tmp_path):
    config = _config()
    progress = []
    traces = run_vqcfd(config, callbacks={'progress': progress.append}, out_dir=str(tmp_path))
    assert progress[-1] == 100.0
    with open(tmp_path / "summary.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == get_summary_columns()
    assert len(rows) - 1 == sum(len(t.records) for t in traces)

    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest['vqcfd_version'] == vqcfd_logic.VQCFD_VERSION
    assert manifest['seed'] == 3
    assert manifest['statistics']['sigma'] == pytest.approx(0.0, abs=1e-8)
    assert [r['best'] for r in manifest['runs']].count(True) == 1
    assert load_config(tmp_path / "manifest.json") == config

    first = json.loads((tmp_path / "traces.jsonl").read_text().splitlines()[0])
    assert first['method'] == "hadamard_exact" and first['shots'] is None


def test_statistics():
    traces = run_vqcfd(_config(shots=500, executions=2, optimizer={"max_iterations": 3}))
    stats = statistics(traces)
    assert stats['n_records'] == sum(len(t.records) for t in traces)
    assert len(stats['sigma_prime']) == max(len(t.records) for t in traces)
    assert stats['sigma'] > 0.0
    assert stats['best_run'] in (0, 1)
    with pytest.raises(ValueError):
        statistics([vqcfd_logic.RunTrace(0)])


def _record(delta, energy=0.0, iteration=0, snapshot=None):
    vqcfd = EnergyBreakdown(0.0, 0.0, 0.0, energy + delta, 0.0, 0.0, "hadamard_shots", 100)
    direct = EnergyBreakdown(0.0, 0.0, 0.0, energy, 0.0, 0.0, "direct", 100)
    return vqcfd_logic.IterationRecord(0, iteration, [0.0], vqcfd, vqcfd.E_total, 1.0, direct=direct, snapshot=snapshot)


def test_statistics_sigma_of_constant_deltas_is_zero():
    stats = statistics([vqcfd_logic.RunTrace(0, [_record(0.7, iteration=j) for j in range(10)])])
    assert stats['sigma'] == pytest.approx(0.0, abs=1e-12)
    assert stats['mean_delta'] == pytest.approx(0.7)


def test_statistics_sigma_of_two_point_deltas():
    d = 0.3
    records = [_record(sign * d, iteration=j) for j, sign in enumerate([1.0, -1.0] * 50)]
    assert statistics([vqcfd_logic.RunTrace(0, records)])['sigma'] == pytest.approx(d)


def test_statistics_sigma_of_gaussian_deltas():
    deltas = np.random.default_rng(8).normal(0.1, 0.05, size=10_000)
    records = [_record(float(x), iteration=j) for j, x in enumerate(deltas)]
    assert statistics([vqcfd_logic.RunTrace(0, records)])['sigma'] == pytest.approx(0.05, rel=0.1)


def test_statistics_groups_spread_by_snapshot():
    traces = [
        vqcfd_logic.RunTrace(r, [_record(0.0, energy=energy, snapshot=label)], label)
        for r, (label, energy) in enumerate([("a", 1.0), ("a", 1.0), ("b", 5.0), ("b", 5.0)])
    ]
    stats = statistics(traces)
    assert stats['sigma_prime_by_snapshot'] == {"a": [0.0], "b": [0.0]}
    assert stats['sigma_prime'] is None

    single = statistics(traces[:2])
    assert single['sigma_prime'] == [0.0]


def test_unexpected_failure_keeps_partial_outputs(tmp_path, monkeypatch):
    calls = itertools.count()
    original = vqcfd_logic.estimate_energy

    def flaky(*args, **kwargs):
        if next(calls) == 2:
            raise RuntimeError("backend lost")
        return original(*args, **kwargs)

    monkeypatch.setattr(vqcfd_logic, "estimate_energy", flaky)
    with pytest.raises(RunAborted) as info:
        run_vqcfd(_config(executions=1), out_dir=str(tmp_path))
    assert isinstance(info.value.__cause__, RuntimeError)
    traces = info.value.traces
    assert sum(len(t.records) for t in traces) == 2
    assert traces[0].message.startswith("RuntimeError")
    assert len((tmp_path / "traces.jsonl").read_text().splitlines()) == 2


def test_config_errors_are_not_wrapped(monkeypatch):
    def broken(*args, **kwargs):
        raise ConfigError("noise.layout", "device qubit missing")

    monkeypatch.setattr(vqcfd_logic, "estimate_energy", broken)
    with pytest.raises(ConfigError):
        run_vqcfd(_config(executions=1))


def test_engine_caps_apply_during_run():
    config = dataclasses.replace(_config(executions=1), statevector_cap=4)
    with pytest.raises(RunAborted) as info:
        run_vqcfd(config)
    assert isinstance(info.value.__cause__, SimulationLimitError)


def test_uniform_state_at_strong_coupling(kolkata_path, mumbai_path):
    ground = imaginary_time_ground_state(make_grid(2, V0=1.0, g=5000.0))
    spec = AnsatzSpec("hadamard_ry", 2, 0, [0.0, 0.0])
    clean = fidelity(ground.psi, state_of(spec))
    assert clean > 0.99
    for path in (kolkata_path, mumbai_path):
        rho, _ = noisy_state(build(spec), build_noise_model(load_calibration(path)))
        assert abs(clean - rho.overlap(ground.psi.amplitudes)) < 0.01


@pytest.mark.slow
@pytest.mark.parametrize("g", [10, 500, 5000])
def test_noiseless_training_reaches_ground_state(g):
    config = dataclasses.replace(load_config(CONFIGS / f"noiseless_g{g}_n2.json"), evaluate_direct=False)
    assert statistics(run_vqcfd(config))['best_fidelity'] > 0.98


@pytest.mark.slow
def test_cost_averaging_smooths_late_iterations():
    averaged_config = dataclasses.replace(load_config(CONFIGS / "averaged_g10_n2.json"), evaluate_direct=False)
    averaged = run_vqcfd(averaged_config)
    best_of_r = run_vqcfd(dataclasses.replace(averaged_config, averaging="best_of_R"))

    smooth = [rec.cost for rec in averaged[0].records][-20:]
    rough = list(next(t for t in best_of_r if t.best).energies())[-20:]
    assert len(smooth) == len(rough) == 20
    assert np.var(smooth, ddof=1) < np.var(rough, ddof=1)
    assert statistics(averaged)['best_fidelity'] > 0.98
    assert statistics(best_of_r)['best_fidelity'] > 0.98


@pytest.mark.slow
def test_noisy_training_on_synthetic_device():
    config = dataclasses.replace(load_config(CONFIGS / "noisy_g5000_n2.json"), evaluate_direct=False)
    traces = run_vqcfd(config)
    ground = imaginary_time_ground_state(make_grid(2, V0=1.0, g=5000.0))

    final = next(t for t in traces if t.best).final_record
    trained = AnsatzSpec("real_amplitude", 2, 2, final.theta)
    assert fidelity(ground.psi, state_of(trained)) > 0.98
    # two CX on a ~1e-2 pair bound F'' near 0.98
    assert final.noisy_fidelity > 0.97
    for trace in traces:
        rec = trace.final_record
        assert rec.vqcfd.raw_P < rec.exact.raw_P
        assert rec.vqcfd.raw_I < rec.exact.raw_I


def test_sanitize_for_json():
    data = {"a": np.float64(np.nan), "b": [np.int64(2), np.bool_(True)], "c": np.arange(2), "d": (1.5, float("inf"))}
    assert sanitize_for_json(data) == {"a": None, "b": [2, True], "c": [0, 1], "d": [1.5, None]}


def test_worker_count(monkeypatch):
    monkeypatch.setenv("VQCFD_THREADS", "5")
    assert worker_count(2) == 5
    monkeypatch.setenv("VQCFD_THREADS", "zero")
    assert 1 <= worker_count(2) <= 2
    monkeypatch.delenv("VQCFD_THREADS")
    assert worker_count(1) == 1
    assert os.cpu_count() is None or worker_count(10_000) <= os.cpu_count()
