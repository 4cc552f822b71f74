"""Shared test helpers."""

import numpy as np

from pflow.model import SystemModel


def linear_model(F, Q, H, R) -> SystemModel:
    """A linear-Gaussian system model from plain matrices."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return SystemModel(
        n_x=F.shape[0],
        n_z=H.shape[0],
        transition=lambda x, k: F @ x,
        measurement=lambda x: H @ x,
        transition_jacobian=lambda x, k: F,
        measurement_jacobian=lambda x: H,
        Q=np.atleast_2d(np.asarray(Q, dtype=float)),
        R=np.atleast_2d(np.asarray(R, dtype=float)),
    )
