import numpy as np
import pytest

from gmfusion import Gaussian, GaussianMixture

# Acceptance criteria append (label, passed, detail) here; printed at session end.
ACCEPTANCE_LOG: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE_LOG:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


def random_spd(rng, n, lo=0.2, hi=5.0):
    """SPD matrix with eigenvalues drawn from [lo, hi]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * rng.uniform(lo, hi, n)) @ q.T


def random_gaussian(rng, n, spread=3.0, lo=0.2, hi=5.0):
    return Gaussian(rng.normal(0.0, spread, n), random_spd(rng, n, lo, hi))


def random_mixture(rng, n, k, spread=3.0, lo=0.2, hi=5.0):
    w = rng.dirichlet(np.ones(k))
    return GaussianMixture(w, tuple(random_gaussian(rng, n, spread, lo, hi) for _ in range(k)))


def kalman_update(mean, cov, z, h, H, R):
    """Covariance-form EKF measurement update (scalar z, 1 x n Jacobian)."""
    H = np.atleast_2d(H)
    S = float((H @ cov @ H.T)[0, 0]) + R
    K = cov @ H.T / S
    mean_post = mean + (K * (z - h)).ravel()
    cov_post = (np.eye(len(mean)) - K @ H) @ cov
    return mean_post, 0.5 * (cov_post + cov_post.T), S


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
