import numpy as np
import pytest

from config import Config
from procam.optimizer import LMConfig, levenberg_marquardt, numeric_jacobian


def rosenbrock(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def test_linear_problem_converges_fast():
    c = np.array([1.0, 2.0, 3.0])
    result = levenberg_marquardt(lambda x: x - c, np.zeros(3))
    assert result.converged
    assert result.iterations <= 3
    np.testing.assert_allclose(result.x, c, atol=1e-5)


def test_rosenbrock():
    config = LMConfig(residual_tol=1e-24)
    result = levenberg_marquardt(rosenbrock, [-1.2, 1.0], config)
    assert result.converged
    np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-6)


def test_accepted_costs_never_increase():
    result = levenberg_marquardt(rosenbrock, [-1.2, 1.0])
    history = np.array(result.cost_history)
    assert np.all(np.diff(history) <= 0)
    assert result.cost <= result.initial_cost


def test_iteration_limit_is_reported_not_raised():
    result = levenberg_marquardt(rosenbrock, [-1.2, 1.0], LMConfig(max_iters=1))
    assert not result.converged
    assert result.reason == "max_iters"
    assert result.iterations == 1


def test_zero_residual_start_is_a_fixed_point():
    result = levenberg_marquardt(lambda x: x - 2.0, [2.0, 2.0])
    assert result.converged
    assert result.iterations == 0
    np.testing.assert_array_equal(result.x, [2.0, 2.0])


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        levenberg_marquardt(lambda x: np.array([np.nan]), [0.0])


def test_summary_keys():
    summary = levenberg_marquardt(rosenbrock, [-1.2, 1.0]).summary()
    assert {"iterations", "cost", "converged", "reason"} <= set(summary)


def test_numeric_jacobian_of_linear_map():
    A = np.array([[1.0, 2.0], [3.0, -4.0], [0.5, 0.0]])
    x = np.array([0.3, -0.7])
    J = numeric_jacobian(lambda v: A @ v, x, A @ x, LMConfig())
    np.testing.assert_allclose(J, A, atol=1e-6)


class TestConfig:
    def test_damping_schedule_validated(self):
        with pytest.raises(ValueError):
            LMConfig(lambda_up=0.5)

    def test_defaults(self):
        config = LMConfig()
        assert config.lambda_init == 1e-3
        assert config.max_iters == 200

    def test_from_environment_config(self):
        config = Config.lm_config(max_iters=5, step_tol=None)
        assert config.max_iters == 5
        assert config.step_tol == Config.LM_STEP_TOL
