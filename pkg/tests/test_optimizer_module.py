import numpy as np
import pytest

from optimizer_module import CostEvaluationError, OptimizerConfig, minimize


class _Stop(Exception):
    pass


def _bowl(theta):
    return float(np.sum((theta - np.array([0.3, -1.2, 0.7])) ** 2))


def test_minimises_a_quadratic_bowl():
    result = minimize(_bowl, [0.0, 0.0, 0.0], OptimizerConfig(max_iterations=400, rho_begin=0.5, rho_end=1e-6))
    np.testing.assert_allclose(result.theta, [0.3, -1.2, 0.7], atol=1e-3)
    assert result.cost == pytest.approx(0.0, abs=1e-5)
    assert result.n_evaluations == len(result.trace)
    assert [e.iteration for e in result.trace] == list(range(len(result.trace)))


def test_minimises_sphere_from_offset_start():
    result = minimize(lambda t: float(np.sum(t ** 2)), [3.0, -2.0], OptimizerConfig(max_iterations=500, rho_end=1e-6))
    assert np.linalg.norm(result.theta) < 1e-4
    assert result.cost < 1e-6


@pytest.mark.slow
def test_minimises_rosenbrock_valley():
    def rosenbrock(theta):
        return float((1.0 - theta[0]) ** 2 + 100.0 * (theta[1] - theta[0] ** 2) ** 2)

    config = OptimizerConfig(max_iterations=30000, rho_begin=0.5, rho_end=1e-9)
    result = minimize(rosenbrock, [-1.2, 1.0], config)
    np.testing.assert_allclose(result.theta, [1.0, 1.0], atol=1e-3)


def test_returns_best_seen_point_on_noisy_cost():
    rng = np.random.default_rng(5)
    result = minimize(lambda t: _bowl(t) + rng.normal(0.0, 0.05), [1.0, 1.0, 1.0], OptimizerConfig(max_iterations=60))
    costs = [e.cost for e in result.trace]
    best = int(np.argmin(costs))
    assert result.cost == costs[best]
    np.testing.assert_allclose(result.theta, result.trace[best].theta)
    running = result.best_so_far()
    assert np.all(np.diff(running) <= 0)


def test_budget_caps_evaluations():
    result = minimize(_bowl, [2.0, 2.0, 2.0], OptimizerConfig(max_iterations=8))
    assert result.n_evaluations <= 8


def test_non_finite_cost_raises_with_trace():
    calls = []

    def cost(theta):
        calls.append(theta)
        return np.nan if len(calls) == 3 else _bowl(theta)

    with pytest.raises(CostEvaluationError) as info:
        minimize(cost, [0.0, 0.0, 0.0])
    assert len(info.value.trace) == 3
    assert np.isnan(info.value.trace[-1].cost)


def test_callback_sees_entries_and_can_abort():
    seen = []

    def callback(entry):
        seen.append(entry.iteration)
        if entry.iteration == 4:
            raise _Stop()

    with pytest.raises(_Stop):
        minimize(_bowl, [0.0, 0.0, 0.0], callback=callback)
    assert seen == [0, 1, 2, 3, 4]


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(max_iterations=0)
    with pytest.raises(ValueError):
        OptimizerConfig(rho_begin=1e-5, rho_end=1e-4)
    with pytest.raises(ValueError):
        minimize(_bowl, [])
