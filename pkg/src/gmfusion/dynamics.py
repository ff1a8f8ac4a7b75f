"""Linear stochastic dynamics x' = F x + w, w ~ N(0, Q), and the information-form prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gmfusion.errors import ContractError, SingularityError
from gmfusion.gaussian import (
    Gaussian,
    GaussianMixture,
    InformationState,
    as_vector,
    from_information,
    to_information,
)


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    F: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ContractError(f"F must be square, got {F.shape}")
        if Q.shape != F.shape:
            raise ContractError(f"Q shape {Q.shape} does not match F shape {F.shape}")
        scale = max(np.max(np.abs(Q)), 1.0)
        if np.max(np.abs(Q - Q.T)) > 1e-12 * scale:
            raise ContractError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q)[0] < -1e-12 * scale:
            raise ContractError("Q must be positive semidefinite")
        F.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @classmethod
    def constant_velocity(cls, dt: float, q: float, spatial_dim: int = 2) -> "LinearDynamics":
        """Position/velocity model with state [p_1..p_d, v_1..v_d] and white-acceleration noise."""
        d = spatial_dim
        eye = np.eye(d)
        F = np.block([[eye, dt * eye], [np.zeros((d, d)), eye]])
        Q = q * np.block(
            [[dt**3 / 3 * eye, dt**2 / 2 * eye], [dt**2 / 2 * eye, dt * eye]]
        )
        return cls(F, Q)


def _noise_factor(Q: np.ndarray) -> np.ndarray:
    # Eigen factor rather than Cholesky so that singular (or zero) Q is allowed.
    eig, vec = np.linalg.eigh(Q)
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def propagate_truth(x, d: LinearDynamics, seed: int) -> np.ndarray:
    x = as_vector(x)
    if x.shape[0] != d.dim:
        raise ContractError(f"state has dimension {x.shape[0]}, dynamics has {d.dim}")
    if not np.any(d.Q):
        return d.F @ x
    z = np.random.default_rng(seed).standard_normal(d.dim)
    return d.F @ x + _noise_factor(d.Q) @ z


def predict_gaussian(g: Gaussian, d: LinearDynamics) -> Gaussian:
    if g.dim != d.dim:
        raise ContractError(f"state has dimension {g.dim}, dynamics has {d.dim}")
    cov = d.F @ g.cov @ d.F.T + d.Q
    try:
        return Gaussian(d.F @ g.mean, 0.5 * (cov + cov.T))
    except ContractError as exc:
        raise SingularityError(f"predicted covariance is singular: {exc}") from exc


def predict_information(prev: InformationState, d: LinearDynamics) -> InformationState:
    """Information-form prediction.

    Computes ``Y- = [F (Y+)^-1 F^T + Q]^-1`` and ``y- = Y- F (Y+)^-1 y+`` by way
    of the covariance form, so the predicted mean is exactly ``F mu+``.
    """
    return to_information(predict_gaussian(from_information(prev), d))


def predict_mixture(m: GaussianMixture, d: LinearDynamics) -> GaussianMixture:
    return GaussianMixture(m.weights, tuple(predict_gaussian(c, d) for c in m.components))
