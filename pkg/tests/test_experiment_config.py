import json
import os
from pathlib import Path

import pytest

from experiment_config import ConfigError, ExperimentConfig, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _base(**overrides):
    data = {
        "name": "unit",
        "problem": {"n": 2, "g": 10.0},
        "ansatz": {"kind": "real_amplitude", "layers": 1},
        "shots": None,
        "executions": 2,
        "optimizer": {"max_iterations": 5},
        "seed": 3,
    }
    data.update(overrides)
    return data


def test_defaults_and_parameter_count():
    config = ExperimentConfig.from_dict(_base())
    assert config.shots is None
    assert config.mode == "noiseless" and config.averaging == "best_of_R"
    assert config.num_parameters == 4
    assert config.problem.V0 == 1.0 and config.problem.a == 0.0 and config.problem.b == 1.0


@pytest.mark.parametrize("data, field", [
    (_base(executions=0), "executions"),
    (_base(shots=0), "shots"),
    (_base(extra=1), "extra"),
    (_base(problem={"n": 0}), "problem.n"),
    (_base(problem={"n": 2, "a": 1.0, "b": 0.5}), "problem.b"),
    (_base(ansatz={"kind": "ladder"}), "ansatz.kind"),
    (_base(optimizer={"rho_begin": 1e-5, "rho_end": 1e-4}), "optimizer.rho_begin"),
    (_base(theta0=[0.0, 1.0]), "theta0"),
    (_base(evaluate_direct="yes"), "evaluate_direct"),
    (_base(mode="noisy"), "noise.snapshots"),
    (_base(mode="pretrained_eval"), "ansatz.kind"),
    (_base(noise={"reset_error": 1.5}), "noise.reset_error"),
    (_base(noise={"layout": [0, 0, 1]}), "noise.layout"),
    (_base(problem={"n": 4}, mode="noisy", noise={"snapshots": ["x.json"]}), "problem.n"),
    (_base(problem={"n": 2}, statevector_cap=6), "problem.n"),
    (_base(mode="noisy", noise={"snapshots": ["x.json"], "layout": [0, 1, 2]}), "noise.layout"),
])
def test_rejections_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data)
    assert info.value.field == field


def test_with_seed_and_round_trip():
    config = ExperimentConfig.from_dict(_base(theta0=[0.1, 0.2, 0.3, 0.4]))
    again = ExperimentConfig.from_dict(config.with_seed(9).to_dict())
    assert again.seed == 9
    assert again.theta0 == [0.1, 0.2, 0.3, 0.4]


def test_load_config_resolves_snapshots_relative_to_file(tmp_path):
    (tmp_path / "cal").mkdir()
    (tmp_path / "cal" / "dev.json").write_text("{}")
    data = _base(mode="noisy", noise={"snapshots": ["cal/dev.json"]})
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(data))
    config = load_config(path)
    assert config.noise.snapshots == [str(tmp_path / "cal" / "dev.json")]


def test_load_config_reads_manifest_echo(tmp_path):
    config = ExperimentConfig.from_dict(_base())
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"vqcfd_version": "1.0.0", "config": config.to_dict()}))
    assert load_config(path) == config


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == "<json>"


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_bundled_configs_load(name):
    config = load_config(os.path.join(CONFIGS, name))
    for snapshot in config.noise.snapshots:
        assert os.path.exists(snapshot)
