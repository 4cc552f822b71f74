"""System models and ground-truth simulation for the filtering benchmarks.

Provides:
1. SystemModel - immutable bundle of transition/measurement functions,
   their Jacobians, and the noise covariances Q and R
2. Trajectory - a simulated ground-truth state/measurement sequence
3. ungm_model - the standard univariate nonstationary growth model
4. random_coupled_model - a randomly generated, fully coupled, stable
   linear motion model with a quadratic scalar measurement
5. simulate / jacobian_check utilities
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray

# Condition-number cap for the random similarity transform; uniform(0,1)
# matrices are occasionally near-singular and would corrupt F.
_MAX_TF_CONDITION = 1e6
_MAX_TF_DRAWS = 100

# Jitter added to a numerically semidefinite process-noise covariance so
# that Cholesky-based sampling always succeeds.
_Q_JITTER = 1e-9


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Discrete-time model x_k = g(x_{k-1}, k) + w_k, z_k = h(x_k) + v_k.

    The process noise w and measurement noise v are zero-mean Gaussian
    with covariances Q (n_x x n_x) and R (n_z x n_z). Instances are
    immutable and safe to share across concurrent runs.

    Attributes:
        n_x: State dimension.
        n_z: Measurement dimension (1 for both benchmark models).
        transition: g(x, k) -> next state mean, shape (n_x,).
        measurement: h(x) -> measurement mean, shape (n_z,).
        transition_jacobian: dg/dx at (x, k), shape (n_x, n_x).
        measurement_jacobian: dh/dx at x, shape (n_z, n_x).
        Q: Process-noise covariance, symmetric positive definite.
        R: Measurement-noise covariance, symmetric positive definite.
    """

    n_x: int
    n_z: int
    transition: Callable[[Array, int], Array]
    measurement: Callable[[Array], Array]
    transition_jacobian: Callable[[Array, int], Array]
    measurement_jacobian: Callable[[Array], Array]
    Q: Array
    R: Array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground-truth states x_1..x_N and measurements z_1..z_N.

    Attributes:
        states: Array of shape (steps, n_x).
        measurements: Array of shape (steps, n_z).
        steps: Number of time steps N.
    """

    states: Array
    measurements: Array
    steps: int


def _cholesky_or_zero(cov: Array) -> Array:
    """Lower Cholesky factor of a covariance, or zeros for the zero matrix.

    The all-zero case supports noise-free test limits where covariances
    are replaced by zero.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    return np.linalg.cholesky(cov)


def ungm_model() -> SystemModel:
    """The univariate nonstationary growth model.

    Transition x/2 + 25x/(1+x^2) + 8*cos(1.2k), measurement x^2/20,
    process-noise variance 10, measurement-noise variance 0.1.
    """

    def transition(x: Array, k: int) -> Array:
        x0 = x[0]
        return np.array([0.5 * x0 + 25.0 * x0 / (1.0 + x0 * x0) + 8.0 * np.cos(1.2 * k)])

    def measurement(x: Array) -> Array:
        return np.array([x[0] * x[0] / 20.0])

    def transition_jacobian(x: Array, k: int) -> Array:
        x0 = x[0]
        return np.array([[0.5 + 25.0 * (1.0 - x0 * x0) / (1.0 + x0 * x0) ** 2]])

    def measurement_jacobian(x: Array) -> Array:
        return np.array([[x[0] / 10.0]])

    return SystemModel(
        n_x=1,
        n_z=1,
        transition=transition,
        measurement=measurement,
        transition_jacobian=transition_jacobian,
        measurement_jacobian=measurement_jacobian,
        Q=np.array([[10.0]]),
        R=np.array([[0.1]]),
    )


def random_coupled_model(dim: int, rng: np.random.Generator) -> SystemModel:
    """Random fully coupled stable linear model with measurement x.x.

    The transition matrix is F = T U T^-1 where U is diagonal with
    eigenvalues -u, u ~ uniform(0,1), so the discrete map is stable.
    T and the process-noise factor have uniform(0,1) entries and
    Q = T_Q T_Q^T. The scalar measurement is the squared state norm
    with noise variance 5.

    Args:
        dim: State dimension, >= 1.
        rng: Source of randomness.

    Raises:
        ValueError: If dim < 1.
        RuntimeError: If no well-conditioned similarity transform is
            found in 100 draws (pathological random stream).
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")

    for _ in range(_MAX_TF_DRAWS):
        t_f = rng.uniform(size=(dim, dim))
        if np.linalg.cond(t_f) < _MAX_TF_CONDITION:
            break
    else:
        raise RuntimeError(
            f"no similarity transform with condition number < {_MAX_TF_CONDITION:g} "
            f"found in {_MAX_TF_DRAWS} draws"
        )

    eigenvalues = -rng.uniform(size=dim)
    F = t_f @ np.diag(eigenvalues) @ np.linalg.inv(t_f)

    t_q = rng.uniform(size=(dim, dim))
    Q = t_q @ t_q.T
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        Q = Q + _Q_JITTER * np.eye(dim)
        np.linalg.cholesky(Q)  # must succeed after jitter

    def transition(x: Array, k: int) -> Array:
        return F @ x

    def measurement(x: Array) -> Array:
        return np.array([x @ x])

    def transition_jacobian(x: Array, k: int) -> Array:
        return F

    def measurement_jacobian(x: Array) -> Array:
        return 2.0 * x[np.newaxis, :]

    return SystemModel(
        n_x=dim,
        n_z=1,
        transition=transition,
        measurement=measurement,
        transition_jacobian=transition_jacobian,
        measurement_jacobian=measurement_jacobian,
        Q=Q,
        R=np.array([[5.0]]),
    )


def simulate(
    model: SystemModel, x0: Array, steps: int, rng: np.random.Generator
) -> Trajectory:
    """Simulate a ground-truth trajectory and its noisy measurements.

    x_k = g(x_{k-1}, k) + w_k and z_k = h(x_k) + v_k for k = 1..steps,
    with the time index of the first transition being 1. Deterministic
    for a fixed rng state.

    Args:
        model: The system to simulate.
        x0: Initial state, shape (n_x,).
        steps: Number of steps; 0 yields an empty trajectory.
        rng: Source of randomness.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_x,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({model.n_x},)")

    chol_q = _cholesky_or_zero(model.Q)
    chol_r = _cholesky_or_zero(model.R)

    states = np.zeros((steps, model.n_x))
    measurements = np.zeros((steps, model.n_z))
    x = x0
    for k in range(1, steps + 1):
        x = model.transition(x, k) + chol_q @ rng.standard_normal(model.n_x)
        z = model.measurement(x) + chol_r @ rng.standard_normal(model.n_z)
        states[k - 1] = x
        measurements[k - 1] = z
    return Trajectory(states=states, measurements=measurements, steps=steps)


def _central_difference_jacobian(
    func: Callable[[Array], Array], x: Array, n_out: int
) -> Array:
    """Central-difference Jacobian with per-coordinate step 1e-6*(1+|x_i|)."""
    n = x.size
    jac = np.zeros((n_out, n))
    for i in range(n):
        h = 1e-6 * (1.0 + abs(x[i]))
        x_plus = x.copy()
        x_minus = x.copy()
        x_plus[i] += h
        x_minus[i] -= h
        jac[:, i] = (func(x_plus) - func(x_minus)) / (2.0 * h)
    return jac


def jacobian_check(model: SystemModel, x: Array, k: int) -> float:
    """Largest relative deviation of the analytic Jacobians from central differences.

    Entries are compared as |analytic - numeric| / (1 + |analytic|), and
    the maximum over both the transition and measurement Jacobians is
    returned. Smooth models should stay below 1e-5.
    """
    x = np.asarray(x, dtype=float)

    g_analytic = np.atleast_2d(model.transition_jacobian(x, k))
    g_numeric = _central_difference_jacobian(lambda v: model.transition(v, k), x, model.n_x)
    h_analytic = np.atleast_2d(model.measurement_jacobian(x))
    h_numeric = _central_difference_jacobian(model.measurement, x, model.n_z)

    dev_g = np.abs(g_analytic - g_numeric) / (1.0 + np.abs(g_analytic))
    dev_h = np.abs(h_analytic - h_numeric) / (1.0 + np.abs(h_analytic))
    return float(max(dev_g.max(), dev_h.max()))
