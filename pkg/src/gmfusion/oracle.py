"""
Centralized reference fusion, used only to check the decentralized path.

Nothing here calls into the consensus or homogeneous-fusion code. The
measurement model and its Jacobian are recomputed directly, and densities
come from ``scipy.stats``. Only the value types are shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import multivariate_normal, norm

from gmfusion.errors import ConditioningError, ContractError, DegenerateWeightsError
from gmfusion.gaussian import Gaussian, GaussianMixture
from gmfusion.sensing import LinearSensor, RangeSensor

# Log densities below this underflow exp() and make density ratios meaningless.
MIN_LOG_DENSITY = -700.0


def _h_and_jacobian(sensor, x: np.ndarray) -> tuple[float, np.ndarray]:
    if isinstance(sensor, RangeSensor):
        d = sensor.position.size
        diff = x[:d] - sensor.position
        r = float(np.sqrt(diff @ diff))
        H = np.zeros(x.size)
        H[:d] = diff / r
        return r, H
    if isinstance(sensor, LinearSensor):
        return float(np.dot(sensor.row, x)), np.array(sensor.row, dtype=float)
    raise ContractError(f"oracle does not know sensor type {type(sensor).__name__}")


def _logpdf(g: Gaussian, x) -> float:
    return float(multivariate_normal(mean=g.mean, cov=g.cov).logpdf(x))


@dataclass(frozen=True, eq=False)
class CentralizedResult:
    posterior: GaussianMixture
    log_likelihoods: np.ndarray

    @property
    def likelihoods(self) -> np.ndarray:
        return np.exp(self.log_likelihoods)


def _normalize(log_w: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(log_w)):
        raise DegenerateWeightsError("all component likelihoods vanished")
    top = np.max(log_w)
    w = np.exp(log_w - top)
    return w / w.sum()


def fuse_centralized(
    prior: GaussianMixture,
    observations: Sequence[float],
    sensors: Sequence,
    mode: str = "ekf",
) -> CentralizedResult:
    """Fuse every agent's measurement at a single aggregator.

    Each component gets ``y+ = y- + sum_s di_s`` and ``Y+ = Y- + sum_s dI_s``;
    weights follow the Bayes weight update with component likelihoods
    evaluated at the component prior means.
    """
    if len(observations) != len(sensors) or not sensors:
        raise ContractError("need one observation per sensor and at least one sensor")
    comps = []
    log_l = np.empty(len(prior))
    for k, c in enumerate(prior.components):
        mu = c.mean
        Y = np.linalg.inv(c.cov)
        y = Y @ mu
        loglik_sum = 0.0
        for z, sensor in zip(observations, sensors):
            h, H = _h_and_jacobian(sensor, mu)
            R = sensor.noise_var
            z_used = z - h + H @ mu if mode == "ekf" else z
            y = y + H * z_used / R
            Y = Y + np.outer(H, H) / R
            loglik_sum += float(norm.logpdf(z, loc=h, scale=np.sqrt(R)))
        P = np.linalg.inv(Y)
        post = Gaussian(P @ y, 0.5 * (P + P.T))
        comps.append(post)
        log_l[k] = _logpdf(c, mu) - _logpdf(post, mu) + loglik_sum
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.weights) + log_l
    return CentralizedResult(GaussianMixture(_normalize(log_w), tuple(comps)), log_l)


def weight_update_at_point(
    prior: GaussianMixture,
    posterior: GaussianMixture,
    x_c,
    observations: Sequence[float] | None = None,
    sensors: Sequence | None = None,
) -> np.ndarray:
    """Posterior weights from prior/posterior density ratios at an arbitrary point ``x_c``.

    Without observations the measurement likelihood is assumed common to all
    components and cancels, which is exact only for linear measurements.
    With observations each component's likelihood is the measurement model
    linearized about that component's prior mean (the model its posterior
    was computed under), evaluated at ``x_c``; this is exact for range
    sensors too.

    Raises ``ConditioningError`` when any prior or posterior component has
    log density below -700 at ``x_c``.
    """
    x_c = np.asarray(x_c, dtype=float).reshape(-1)
    if len(prior) != len(posterior):
        raise ContractError("prior and posterior have different component counts")
    if (observations is None) != (sensors is None):
        raise ContractError("pass observations and sensors together")
    log_w = np.empty(len(prior))
    for k, (w, c, post) in enumerate(zip(prior.weights, prior.components, posterior.components)):
        lp, lq = _logpdf(c, x_c), _logpdf(post, x_c)
        if lp < MIN_LOG_DENSITY or lq < MIN_LOG_DENSITY:
            raise ConditioningError(
                f"x_c is too far from component {k} (log densities {lp:.1f}, {lq:.1f})"
            )
        term = lp - lq
        if observations is not None:
            for z, sensor in zip(observations, sensors):
                h, H = _h_and_jacobian(sensor, c.mean)
                pred = h + H @ (x_c - c.mean)
                term += float(norm.logpdf(z, loc=pred, scale=np.sqrt(sensor.noise_var)))
        log_w[k] = (np.log(w) if w > 0 else -np.inf) + term
    return _normalize(log_w)
