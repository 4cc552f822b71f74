"""Tests for the benchmark system models and trajectory simulation."""

import numpy as np
import pytest

from conftest import linear_model
from pflow.model import (
    SystemModel,
    jacobian_check,
    random_coupled_model,
    simulate,
    ungm_model,
)


class TestUngmModel:
    def test_noise_variances(self):
        m = ungm_model()
        assert m.Q[0, 0] == 10.0
        assert m.R[0, 0] == 0.1

    def test_measurement_value(self):
        m = ungm_model()
        np.testing.assert_allclose(m.measurement(np.array([10.0])), [5.0])

    def test_transition_at_origin(self):
        # 8 cos(1.2) with the time index starting at 1.
        m = ungm_model()
        np.testing.assert_allclose(
            m.transition(np.array([0.0]), 1), [2.898862035813389], rtol=1e-12
        )

    def test_transition_jacobian_at_origin(self):
        m = ungm_model()
        np.testing.assert_allclose(m.transition_jacobian(np.array([0.0]), 1), [[25.5]])

    def test_measurement_jacobian(self):
        m = ungm_model()
        np.testing.assert_allclose(m.measurement_jacobian(np.array([10.0])), [[1.0]])


class TestRandomCoupledModel:
    def test_measurement_noise_variance(self):
        m = random_coupled_model(3, np.random.default_rng(0))
        assert m.R[0, 0] == 5.0

    def test_measurement_is_squared_norm(self):
        m = random_coupled_model(2, np.random.default_rng(0))
        np.testing.assert_allclose(m.measurement(np.array([1.0, 2.0])), [5.0])

    def test_measurement_jacobian_is_gradient(self):
        m = random_coupled_model(2, np.random.default_rng(0))
        np.testing.assert_allclose(
            m.measurement_jacobian(np.array([1.0, 2.0])), [[2.0, 4.0]]
        )

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("dim", [1, 3, 10, 25])
    def test_transition_is_stable(self, dim, seed):
        m = random_coupled_model(dim, np.random.default_rng(seed))
        F = m.transition_jacobian(np.zeros(dim), 1)
        assert np.max(np.abs(np.linalg.eigvals(F))) < 1.0

    @pytest.mark.parametrize("seed", range(8))
    def test_process_noise_is_spd(self, seed):
        m = random_coupled_model(12, np.random.default_rng(seed))
        np.linalg.cholesky(m.Q)  # raises when not SPD
        np.testing.assert_allclose(m.Q, m.Q.T)

    def test_rejects_nonpositive_dim(self):
        with pytest.raises(ValueError):
            random_coupled_model(0, np.random.default_rng(0))

    def test_pathological_rng_raises(self):
        class SingularRng:
            def uniform(self, size):
                return np.ones(size)

        with pytest.raises(RuntimeError, match="condition"):
            random_coupled_model(3, SingularRng())


class TestSimulate:
    def test_zero_steps_is_empty(self):
        traj = simulate(ungm_model(), np.zeros(1), 0, np.random.default_rng(0))
        assert traj.steps == 0
        assert traj.states.shape == (0, 1)
        assert traj.measurements.shape == (0, 1)

    def test_noise_free_follows_recursion(self):
        m = ungm_model()
        quiet = SystemModel(
            n_x=1, n_z=1,
            transition=m.transition, measurement=m.measurement,
            transition_jacobian=m.transition_jacobian,
            measurement_jacobian=m.measurement_jacobian,
            Q=np.zeros((1, 1)), R=np.zeros((1, 1)),
        )
        traj = simulate(quiet, np.zeros(1), 5, np.random.default_rng(0))
        x = np.zeros(1)
        for k in range(1, 6):
            x = m.transition(x, k)
            np.testing.assert_allclose(traj.states[k - 1], x)
            np.testing.assert_allclose(traj.measurements[k - 1], m.measurement(x))

    def test_fixed_seed_is_reproducible(self):
        m = random_coupled_model(4, np.random.default_rng(5))
        a = simulate(m, np.zeros(4), 20, np.random.default_rng(42))
        b = simulate(m, np.zeros(4), 20, np.random.default_rng(42))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.measurements, b.measurements)

    def test_rejects_wrong_initial_dimension(self):
        with pytest.raises(ValueError):
            simulate(ungm_model(), np.zeros(2), 3, np.random.default_rng(0))

    def test_lengths_match_steps(self):
        traj = simulate(ungm_model(), np.zeros(1), 7, np.random.default_rng(1))
        assert traj.steps == 7
        assert len(traj.states) == len(traj.measurements) == 7


class TestJacobianCheck:
    def test_ungm_measurement_jacobian(self):
        m = ungm_model()
        assert m.measurement_jacobian(np.array([10.0]))[0, 0] == 1.0
        assert jacobian_check(m, np.array([10.0]), 1) < 1e-5

    def test_linear_model_is_machine_exact(self):
        m = linear_model([[0.3, 0.1], [0.0, 0.5]], np.eye(2), [[1.0, 2.0]], [[1.0]])
        assert jacobian_check(m, np.array([1.0, -2.0]), 1) < 1e-9

    def test_ungm_transition_jacobian(self):
        assert jacobian_check(ungm_model(), np.array([1.0]), 1) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_coupled_model_jacobians(self, seed):
        rng = np.random.default_rng(seed)
        m = random_coupled_model(6, rng)
        x = rng.standard_normal(6)
        assert jacobian_check(m, x, 1) < 1e-5
