import csv
import json

import pytest

import vqcfd_cli


def _write_config(tmp_path, **overrides):
    data = {
        "name": "cli",
        "problem": {"n": 2, "g": 10.0},
        "ansatz": {"kind": "real_amplitude", "layers": 1},
        "shots": None,
        "executions": 1,
        "optimizer": {"max_iterations": 3},
        "seed": 1,
    }
    data.update(overrides)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    code = vqcfd_cli.main(["-q", "run", _write_config(tmp_path), "--out", str(out), "--seed", "4"])
    assert code == 0
    assert "best run 0" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest['seed'] == 4


def test_invalid_config_exits_with_config_code(tmp_path, capsys):
    code = vqcfd_cli.main(["-q", "run", _write_config(tmp_path, executions=0)])
    assert code == 2
    assert "executions" in capsys.readouterr().err


def test_missing_file_is_a_config_error(tmp_path):
    assert vqcfd_cli.main(["-q", "run", str(tmp_path / "nope.json")]) == 2


def test_ground_state_from_flags(tmp_path, capsys):
    out = tmp_path / "gs.json"
    assert vqcfd_cli.main(["-q", "ground-state", "--n", "3", "--g", "20", "--out", str(out)]) == 0
    assert "E_GS" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert data['converged'] and len(data['ground_state']['psi_re']) == 8
    assert vqcfd_cli.main(["-q", "ground-state"]) == 2


def test_encode_potential_report(tmp_path):
    out = tmp_path / "enc"
    assert vqcfd_cli.main(["-q", "encode-potential", _write_config(tmp_path, problem={"n": 4}), "--out", str(out), "--kappas", "1", "2"]) == 0
    with open(out / "truncation.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["kappa"] for r in rows] == ["1", "2"]
    assert json.loads((out / "potential_circuit.json").read_text())["width"] == 4
    zero = _write_config(tmp_path, problem={"n": 2, "V0": 0.0})
    assert vqcfd_cli.main(["-q", "encode-potential", zero, "--out", str(out)]) == 2


def test_transpile_report_csv(tmp_path):
    out = tmp_path / "report.csv"
    assert vqcfd_cli.main(["-q", "transpile-report", _write_config(tmp_path), "--out", str(out)]) == 0
    with open(out, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["ansatz"] for r in rows} == {"real_amplitude", "hadamard_ry"}
    assert len(rows) == 6


def test_noise_validate(kolkata_path, tmp_path, capsys):
    out = tmp_path / "noise.json"
    assert vqcfd_cli.main(["-q", "noise-validate", kolkata_path, "--out", str(out)]) == 0
    assert "0 not CPTP" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert report[0]["summary"]["num_qubits"] == 27


def test_broken_calibration_exits_with_config_code(tmp_path):
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"qubits": []}))
    assert vqcfd_cli.main(["-q", "noise-validate", str(path)]) == 2


def test_subcommand_required():
    with pytest.raises(SystemExit):
        vqcfd_cli.main([])
