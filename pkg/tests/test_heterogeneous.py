import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from gmfusion import (
    ContractError,
    DegenerateAssociationError,
    Gaussian,
    GaussianMixture,
    association_likelihood,
    fuse_priors,
    pairwise_component_fuse,
)

from conftest import random_gaussian, random_mixture, random_spd


def _covariance_form(g1, g2):
    """mu1 + P1 (P1+P2)^-1 (mu2-mu1) and P1 - P1 (P1+P2)^-1 P1."""
    K = g1.cov @ np.linalg.inv(g1.cov + g2.cov)
    return g1.mean + K @ (g2.mean - g1.mean), g1.cov - K @ g1.cov


def test_identical_components_halve_covariance():
    g = Gaussian([1.0, 2.0], np.eye(2))
    f = pairwise_component_fuse(g, g)
    np.testing.assert_allclose(f.mean, [1.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(f.cov, 0.5 * np.eye(2), atol=1e-15)


def test_equal_covariances_give_midpoint():
    f = pairwise_component_fuse(Gaussian([0.0, 0.0], np.eye(2)), Gaussian([2.0, 4.0], np.eye(2)))
    np.testing.assert_allclose(f.mean, [1.0, 2.0], atol=1e-15)


def test_same_gaussian_general_cov(rng):
    P = random_spd(rng, 3)
    g = Gaussian([1.0, -1.0, 0.5], P)
    np.testing.assert_allclose(pairwise_component_fuse(g, g).cov, P / 2, rtol=1e-12, atol=1e-14)


def test_fuse_matches_covariance_form(rng):
    for n in range(1, 5):
        g1, g2 = random_gaussian(rng, n), random_gaussian(rng, n)
        mean, cov = _covariance_form(g1, g2)
        f = pairwise_component_fuse(g1, g2)
        np.testing.assert_allclose(f.mean, mean, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(f.cov, cov, rtol=1e-10, atol=1e-12)
        # loewner order: fused covariance never exceeds either input
        assert np.linalg.eigvalsh(g1.cov - f.cov)[0] > -1e-12
        assert np.linalg.eigvalsh(g2.cov - f.cov)[0] > -1e-12


def test_fuse_is_bitwise_symmetric(rng):
    for n in range(1, 5):
        g1, g2 = random_gaussian(rng, n), random_gaussian(rng, n)
        a, b = pairwise_component_fuse(g1, g2), pairwise_component_fuse(g2, g1)
        assert a.mean.tobytes() == b.mean.tobytes()
        assert a.cov.tobytes() == b.cov.tobytes()


def test_association_same_mean_identity():
    g = Gaussian([3.0, 3.0], np.eye(2))
    value = association_likelihood(g, g)
    assert value == pytest.approx(math.log(1.0 / (4.0 * math.pi)), abs=1e-14)
    assert value == pytest.approx(-2.5310242, abs=1e-7)


def test_association_matches_scipy(rng):
    for n in range(1, 5):
        g1, g2 = random_gaussian(rng, n), random_gaussian(rng, n)
        ref = multivariate_normal(np.zeros(n), g1.cov + g2.cov).logpdf(g1.mean - g2.mean)
        assert association_likelihood(g1, g2) == pytest.approx(ref, rel=1e-12)
        assert association_likelihood(g1, g2) == association_likelihood(g2, g1)


def test_association_far_apart_stays_finite():
    value = association_likelihood(Gaussian([0.0], [[0.5]]), Gaussian([10.0], [[0.5]]))
    assert math.isfinite(value) and value < -50.0


def test_fused_mixture_layout(rng):
    m1, m2 = random_mixture(rng, 2, 2), random_mixture(rng, 2, 3)
    fused, aw = fuse_priors(m1, m2)
    assert len(fused) == 6 and aw.shape == (2, 3)
    assert fused.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for idx, (i, j) in enumerate((i, j) for i in range(2) for j in range(3)):
        expected = pairwise_component_fuse(m1.components[i], m2.components[j])
        assert fused.components[idx].mean.tobytes() == expected.mean.tobytes()
        assert fused.weights[idx] == pytest.approx(aw.matrix[i, j], rel=1e-14)


def test_weights_follow_prior_times_association(rng):
    m1, m2 = random_mixture(rng, 2, 2, spread=1.0), random_mixture(rng, 2, 2, spread=1.0)
    _, aw = fuse_priors(m1, m2)
    raw = np.array([[w1 * w2 * multivariate_normal(np.zeros(2), c1.cov + c2.cov).pdf(c1.mean - c2.mean)
                     for w2, c2 in m2] for w1, c1 in m1])
    np.testing.assert_allclose(aw.matrix, raw / raw.sum(), rtol=1e-10)


def test_single_identical_components():
    g = Gaussian([0.0, 0.0], 2.0 * np.eye(2))
    fused, aw = fuse_priors(GaussianMixture.single(g), GaussianMixture.single(g))
    assert len(fused) == 1 and aw.matrix[0, 0] == 1.0
    np.testing.assert_allclose(fused.components[0].cov, np.eye(2), atol=1e-15)


def test_swap_transposes_exactly(rng):
    m1, m2 = random_mixture(rng, 3, 2), random_mixture(rng, 3, 4)
    f12, a12 = fuse_priors(m1, m2)
    f21, a21 = fuse_priors(m2, m1)
    assert a12.transpose().matrix.tobytes() == a21.matrix.tobytes()
    assert a12.log_likelihoods.T.tobytes() == a21.log_likelihoods.tobytes()
    for i in range(2):
        for j in range(4):
            a, b = f12.components[i * 4 + j], f21.components[j * 2 + i]
            assert a.cov.tobytes() == b.cov.tobytes()


def test_pruning_drops_small_pairs_keeps_matrix():
    m1 = GaussianMixture.from_arrays([0.5, 0.5], [[0.0, 0.0], [20.0, 0.0]], [np.eye(2)] * 2)
    m2 = GaussianMixture.from_arrays([0.5, 0.5], [[0.1, 0.0], [20.1, 0.0]], [np.eye(2)] * 2)
    full, aw = fuse_priors(m1, m2)
    pruned, aw_p = fuse_priors(m1, m2, prune_threshold=1e-6)
    assert len(full) == 4 and len(pruned) == 2
    assert aw_p.matrix.tobytes() == aw.matrix.tobytes()
    assert aw.kept_pairs(1e-6) == [(0, 0), (1, 1)]
    assert pruned.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_prune_everything_raises():
    g = GaussianMixture.single(Gaussian([0.0], [[1.0]]))
    with pytest.raises(DegenerateAssociationError):
        fuse_priors(g, g, prune_threshold=1.5)


def test_all_associations_vanish():
    # squared distance overflows, so every pair's log weight is -inf
    m1 = GaussianMixture.single(Gaussian([0.0], [[1.0]]))
    m2 = GaussianMixture.single(Gaussian([1e200], [[1.0]]))
    with pytest.raises(DegenerateAssociationError):
        fuse_priors(m1, m2)


def test_dimension_mismatch():
    with pytest.raises(ContractError):
        fuse_priors(GaussianMixture.single(Gaussian([0.0], [[1.0]])),
                    GaussianMixture.single(Gaussian([0.0, 0.0], np.eye(2))))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), k1=st.integers(1, 3), k2=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_swap_invariance_property(n, k1, k2, seed):
    rng = np.random.default_rng(seed)
    m1, m2 = random_mixture(rng, n, k1, spread=2.0), random_mixture(rng, n, k2, spread=2.0)
    _, a12 = fuse_priors(m1, m2)
    _, a21 = fuse_priors(m2, m1)
    np.testing.assert_allclose(a12.matrix.T, a21.matrix, atol=1e-12, rtol=0)
    np.testing.assert_allclose(a12.log_likelihoods.T, a21.log_likelihoods, atol=1e-15, rtol=0)
    assert a12.matrix.sum() == pytest.approx(1.0, abs=1e-12)
