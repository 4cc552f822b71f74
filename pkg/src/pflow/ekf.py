"""Extended Kalman filter recursion.

The EKF runs in parallel with every particle-flow variant to supply the
predicted covariance the flow drift needs, and doubles as the baseline
estimator in the benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemModel

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Gaussian state estimate: mean (n_x,) and covariance (n_x, n_x).

    Covariances produced by the operations below are symmetrized to guard
    against round-off; positive definiteness is preserved by construction
    for valid models.
    """

    mean: Array
    covariance: Array


def _symmetrize(P: Array) -> Array:
    return 0.5 * (P + P.T)


_PD_JITTER = 1e-12


def _ensure_positive_definite(P: Array) -> Array:
    """Restore the covariance invariant when round-off breaks it.

    The textbook update (I - K H) P cancels catastrophically when the
    innovation dwarfs the measurement noise; on extreme instances the
    result acquires negative eigenvalues that the dynamics then amplify.
    Healthy covariances pass through untouched.
    """
    try:
        np.linalg.cholesky(P)
        return P
    except np.linalg.LinAlgError:
        pass
    eigenvalues, vectors = np.linalg.eigh(P)
    floor = _PD_JITTER * max(1.0, float(eigenvalues.max()))
    repaired = (vectors * np.maximum(eigenvalues, floor)) @ vectors.T
    return _symmetrize(repaired)


def ekf_predict(belief: GaussianBelief, model: SystemModel, k: int) -> GaussianBelief:
    """Time update: mean through g, covariance G P G^T + Q.

    G is the transition Jacobian evaluated at the current mean.
    """
    G = np.atleast_2d(model.transition_jacobian(belief.mean, k))
    mean = model.transition(belief.mean, k)
    covariance = _symmetrize(G @ belief.covariance @ G.T + model.Q)
    return GaussianBelief(mean=mean, covariance=covariance)


def ekf_update(belief: GaussianBelief, model: SystemModel, z: Array) -> GaussianBelief:
    """Measurement update with h linearized at the predicted mean.

    S = H P H^T + R, K = P H^T S^-1, mean += K (z - h(mean)),
    covariance = (I - K H) P, symmetrized afterwards.

    Raises:
        np.linalg.LinAlgError: If the innovation covariance is not
            positive definite (R was not SPD - a construction bug).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    H = np.atleast_2d(model.measurement_jacobian(belief.mean))
    P = belief.covariance

    PHt = P @ H.T
    S = H @ PHt + model.R
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "innovation covariance is not positive definite; check that R is SPD"
        ) from exc

    K = np.linalg.solve(S.T, PHt.T).T
    mean = belief.mean + K @ (z - model.measurement(belief.mean))
    covariance = _ensure_positive_definite(_symmetrize((np.eye(model.n_x) - K @ H) @ P))
    return GaussianBelief(mean=mean, covariance=covariance)
