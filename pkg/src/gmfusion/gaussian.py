"""
Gaussian and Gaussian-mixture value types.

Both types validate on construction and are immutable afterwards. A
covariance must be positive definite; its Cholesky factor is cached for
density evaluation. All densities are returned as natural logs.

Random draws use NumPy's ``default_rng`` (PCG64) seeded with the caller's
integer seed, so a fixed seed gives bitwise-identical samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

from gmfusion.errors import ContractError, SingularityError

LOG_2PI = math.log(2.0 * math.pi)

# Relative eigenvalue floor below which a covariance is not considered PD.
PD_RTOL = 1e-12
# Matrices with a condition number above this are refused for inversion.
MAX_CONDITION = 1e12
WEIGHT_SUM_TOL = 1e-9
_ASYMMETRY_RTOL = 1e-8


def as_vector(x) -> np.ndarray:
    """Flatten (n,), (n,1) or (1,n) input into a float (n,) array."""
    return np.asarray(x, dtype=float).reshape(-1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def symmetrize_spd(matrix, name: str = "covariance") -> np.ndarray:
    """Return ``(M + M.T)/2`` once M is known to be a nearly symmetric PD matrix.

    Indefinite input raises ContractError; positive semidefinite input whose
    smallest eigenvalue is within ``PD_RTOL`` of zero raises SingularityError.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"{name}: expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name}: non-finite entries")
    scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > _ASYMMETRY_RTOL * scale:
        raise ContractError(f"{name}: matrix is not symmetric")
    m = 0.5 * (m + m.T)
    eig = np.linalg.eigvalsh(m)
    if eig[-1] <= 0.0 or eig[0] < -PD_RTOL * eig[-1]:
        raise ContractError(
            f"{name}: not positive definite (eigenvalues {eig[0]:.3e} .. {eig[-1]:.3e})"
        )
    if eig[0] <= PD_RTOL * eig[-1]:
        raise SingularityError(
            f"{name}: numerically singular (eigenvalues {eig[0]:.3e} .. {eig[-1]:.3e})"
        )
    return m


def condition_number(sym: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(sym)
    if eig[0] <= 0.0:
        return math.inf
    return float(eig[-1] / eig[0])


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal density N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean)
        cov = symmetrize_spd(self.cov)
        if cov.shape[0] != mean.shape[0]:
            raise ContractError(
                f"mean has length {mean.shape[0]} but covariance is {cov.shape[0]}x{cov.shape[1]}"
            )
        if not np.all(np.isfinite(mean)):
            raise ContractError("mean has non-finite entries")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __repr__(self) -> str:
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussians sharing one dimension.

    Weights must be nonnegative and sum to one within ``WEIGHT_SUM_TOL``;
    they are renormalized exactly on construction.
    """

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        w = as_vector(self.weights)
        if not comps:
            raise ContractError("mixture has no components")
        if w.shape[0] != len(comps):
            raise ContractError(f"{w.shape[0]} weights for {len(comps)} components")
        if not all(isinstance(c, Gaussian) for c in comps):
            raise ContractError("mixture components must be Gaussian instances")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ContractError(f"mixture components have differing dimensions {sorted(dims)}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ContractError("mixture weights must be finite and nonnegative")
        total = float(np.sum(w))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ContractError(f"mixture weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w / total))
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, weights, means, covs) -> "GaussianMixture":
        return cls(weights, tuple(Gaussian(m, c) for m, c in zip(means, covs, strict=True)))

    @classmethod
    def single(cls, g: Gaussian) -> "GaussianMixture":
        return cls([1.0], (g,))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[tuple[float, Gaussian]]:
        return iter(zip(self.weights.tolist(), self.components))

    def __repr__(self) -> str:
        return f"GaussianMixture(weights={self.weights.tolist()}, n={len(self)})"


@dataclass(frozen=True, eq=False)
class InformationState:
    """Gaussian in information form: ``Y = cov^-1``, ``y = cov^-1 @ mean``."""

    y: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        y = as_vector(self.y)
        Y = symmetrize_spd(self.Y, name="information matrix")
        if Y.shape[0] != y.shape[0]:
            raise ContractError("information vector and matrix sizes differ")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "Y", _frozen(Y))

    @property
    def dim(self) -> int:
        return self.y.shape[0]


def _check_point(g: Gaussian, x) -> np.ndarray:
    x = as_vector(x)
    if x.shape[0] != g.dim:
        raise ContractError(f"point has dimension {x.shape[0]}, density has {g.dim}")
    return x


def gaussian_logpdf(g: Gaussian, x) -> float:
    """ln N(x; g.mean, g.cov)."""
    x = _check_point(g, x)
    L = g._chol
    r = solve_triangular(L, x - g.mean, lower=True, check_finite=False)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (g.dim * LOG_2PI + log_det + float(r @ r))


def component_logpdfs(m: GaussianMixture, x) -> np.ndarray:
    return np.array([gaussian_logpdf(c, x) for c in m.components])


def mixture_logpdf(m: GaussianMixture, x) -> float:
    """ln sum_i w_i N(x; mu_i, P_i), evaluated with log-sum-exp."""
    with np.errstate(divide="ignore"):
        log_w = np.log(m.weights)
    return float(logsumexp(log_w + component_logpdfs(m, x)))


def to_information(g: Gaussian) -> InformationState:
    if condition_number(g.cov) > MAX_CONDITION:
        raise SingularityError("covariance is numerically singular")
    factor = cho_factor(g.cov, lower=True)
    Y = cho_solve(factor, np.eye(g.dim))
    y = cho_solve(factor, g.mean)
    return InformationState(y, Y)


def from_information(s: InformationState) -> Gaussian:
    if condition_number(s.Y) > MAX_CONDITION:
        raise SingularityError("information matrix is numerically singular")
    factor = cho_factor(s.Y, lower=True)
    return Gaussian(cho_solve(factor, s.y), cho_solve(factor, np.eye(s.dim)))


def sample_mixture_labeled(
    m: GaussianMixture, count: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` samples; returns ``(samples[count, n], component_index[count])``."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(m), size=count, p=m.weights)
    z = rng.standard_normal((count, m.dim))
    means = np.stack([c.mean for c in m.components])
    chols = np.stack([c._chol for c in m.components])
    samples = means[labels] + np.einsum("kij,kj->ki", chols[labels], z)
    return samples, labels


def sample_mixture(m: GaussianMixture, count: int, seed: int) -> np.ndarray:
    return sample_mixture_labeled(m, count, seed)[0]
