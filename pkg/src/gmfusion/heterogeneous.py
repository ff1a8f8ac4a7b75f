"""
Fusion of two agents' different prior mixtures without measurements.

Each component mean of one agent is treated as an identity-mapped noisy
observation of the other agent's state. Every pair ``(i, j)`` of
components yields one fused Gaussian and an association likelihood
``N(mu_i - mu_j; 0, P_i + P_j)``; the fused mixture therefore has
``N1 * N2`` components, ordered row-major over ``(i, j)``.

Computations are arranged so that swapping the two agents gives bitwise
identical numbers: the fused component is formed from the commutative
information sum, the per-pair log weight adds the two prior log weights
before the likelihood, and the normalizer sums sorted terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

from gmfusion.errors import ContractError, DegenerateAssociationError, SingularityError
from gmfusion.gaussian import LOG_2PI, Gaussian, GaussianMixture, to_information


def pairwise_component_fuse(g1: Gaussian, g2: Gaussian) -> Gaussian:
    """Kalman fusion of two independent estimates of one state.

    Equal to ``mu1 + P1 (P1+P2)^-1 (mu2-mu1)`` with covariance
    ``P1 - P1 (P1+P2)^-1 P1``, computed as ``(P1^-1 + P2^-1)^-1``.
    """
    if g1.dim != g2.dim:
        raise ContractError(f"cannot fuse {g1.dim}-D with {g2.dim}-D Gaussian")
    a, b = to_information(g1), to_information(g2)
    Y = a.Y + b.Y
    y = a.y + b.y
    try:
        factor = cho_factor(Y, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularityError("fused information matrix is singular") from exc
    return Gaussian(cho_solve(factor, y), cho_solve(factor, np.eye(g1.dim)))


def association_likelihood(g1: Gaussian, g2: Gaussian) -> float:
    """ln N(mu1 - mu2; 0, P1 + P2): how well one component's mean explains the other."""
    if g1.dim != g2.dim:
        raise ContractError(f"cannot associate {g1.dim}-D with {g2.dim}-D Gaussian")
    S = g1.cov + g2.cov
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularityError("combined covariance is singular") from exc
    r = solve_triangular(L, g1.mean - g2.mean, lower=True)
    with np.errstate(over="ignore"):
        # an overflowing distance is a vanishing association, reported as -inf
        maha = float(r @ r)
    return -0.5 * (g1.dim * LOG_2PI + 2.0 * float(np.sum(np.log(np.diag(L)))) + maha)


@dataclass(frozen=True, eq=False)
class AssociationWeights:
    """Posterior weight of every (agent-1 component, agent-2 component) pair."""

    matrix: np.ndarray
    log_likelihoods: np.ndarray

    def transpose(self) -> "AssociationWeights":
        return AssociationWeights(self.matrix.T.copy(), self.log_likelihoods.T.copy())

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def kept_pairs(self, prune_threshold: float = 0.0) -> list[tuple[int, int]]:
        """Row-major pairs whose weight is not below ``prune_threshold``."""
        rows, cols = self.matrix.shape
        return [(i, j) for i in range(rows) for j in range(cols)
                if self.matrix[i, j] >= prune_threshold]


def _sorted_logsumexp(values: np.ndarray) -> float:
    # Sorting first makes the sum independent of which agent is listed first.
    return float(logsumexp(np.sort(values, axis=None)))


def fuse_priors(
    m1: GaussianMixture, m2: GaussianMixture, prune_threshold: float = 0.0
) -> tuple[GaussianMixture, AssociationWeights]:
    """Fuse two agents' priors into one mixture of up to ``len(m1) * len(m2)`` components.

    Components whose association weight falls below ``prune_threshold`` are
    dropped and the rest renormalized. The returned ``AssociationWeights``
    always holds the full, unpruned matrix.
    """
    if m1.dim != m2.dim:
        raise ContractError(f"priors have different dimensions {m1.dim} and {m2.dim}")
    if prune_threshold < 0.0:
        raise ContractError("prune_threshold must be nonnegative")
    n1, n2 = len(m1), len(m2)
    with np.errstate(divide="ignore"):
        lw1, lw2 = np.log(m1.weights), np.log(m2.weights)

    log_l = np.empty((n1, n2))
    fused = []
    for i, c1 in enumerate(m1.components):
        for j, c2 in enumerate(m2.components):
            log_l[i, j] = association_likelihood(c1, c2)
            fused.append(pairwise_component_fuse(c1, c2))

    log_w = (lw1[:, None] + lw2[None, :]) + log_l
    if not np.any(np.isfinite(log_w)):
        raise DegenerateAssociationError("every component association vanished")
    matrix = np.exp(log_w - _sorted_logsumexp(log_w))
    weights = AssociationWeights(matrix, log_l)

    kept = weights.kept_pairs(prune_threshold)
    if not kept:
        raise DegenerateAssociationError(
            f"no association weight reaches prune_threshold={prune_threshold}"
        )
    kept_w = np.array([matrix[i, j] for i, j in kept])
    mixture = GaussianMixture(kept_w / kept_w.sum(), tuple(fused[i * n2 + j] for i, j in kept))
    return mixture, weights
