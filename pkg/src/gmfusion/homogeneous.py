"""
Decentralized fusion when every agent holds the same prior Gaussian mixture.

For each prior component every agent computes its local information
contribution and the log-likelihood of its own measurement evaluated at the
component's prior mean. These are stacked into one payload and averaged by
Metropolis-Hastings consensus. Each agent then scales its consensus average
by the network size ``S`` to recover the network sums, updates every
component in information form and re-weights the components with

    ln l_i = ln p_i(mu_i) - ln p_i+(mu_i) + sum_s ln p(z_s | mu_i)

which is evaluated at the component's own prior mean so it stays well
conditioned, and never leaves the log domain.

Payload layout (per node, ``N`` components of dimension ``n``): all
components' information vectors, then the row-major upper triangles of all
information matrices, then the ``N`` log-likelihood scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from gmfusion.errors import ContractError, DegenerateWeightsError
from gmfusion.gaussian import (
    Gaussian,
    GaussianMixture,
    InformationState,
    from_information,
    gaussian_logpdf,
    to_information,
)
from gmfusion.network import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    ConsensusResult,
    SensorGraph,
    run_consensus,
)
from gmfusion.sensing import InfoDelta, ScalarSensor, info_contribution, measurement_loglik


@dataclass(frozen=True)
class ConsensusConfig:
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS


def pack_payload(deltas: Sequence[InfoDelta]) -> np.ndarray:
    n = deltas[0].di.shape[0]
    iu = np.triu_indices(n)
    return np.concatenate(
        [np.concatenate([d.di for d in deltas]),
         np.concatenate([d.dI[iu] for d in deltas]),
         np.array([d.log_lik for d in deltas], dtype=float)]
    )


def unpack_payload(payload: np.ndarray, n_components: int, dim: int) -> list[InfoDelta]:
    tri = dim * (dim + 1) // 2
    expected = n_components * (dim + tri + 1)
    if payload.shape[0] != expected:
        raise ContractError(f"payload length {payload.shape[0]}, expected {expected}")
    iu = np.triu_indices(dim)
    vecs = payload[: n_components * dim].reshape(n_components, dim)
    tris = payload[n_components * dim : n_components * (dim + tri)].reshape(n_components, tri)
    lls = payload[n_components * (dim + tri) :]
    out = []
    for k in range(n_components):
        dI = np.zeros((dim, dim))
        dI[iu] = tris[k]
        dI = dI + np.triu(dI, 1).T
        out.append(InfoDelta(vecs[k].copy(), dI, float(lls[k])))
    return out


def local_component_update(
    component: Gaussian, z: float, sensor: ScalarSensor, mode: str = "ekf"
) -> InfoDelta:
    """One agent's contribution for one prior component, log-likelihood seeded locally."""
    delta = info_contribution(z, component.mean, sensor, mode)
    return delta.with_log_lik(measurement_loglik(z, component.mean, sensor))


def component_likelihood_log(prior_i: Gaussian, post_i: Gaussian, consensus_loglik_sum: float) -> float:
    return (
        gaussian_logpdf(prior_i, prior_i.mean)
        - gaussian_logpdf(post_i, prior_i.mean)
        + consensus_loglik_sum
    )


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """exp(log_w - logsumexp(log_w)), refusing the all-zero case."""
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not np.any(finite) or np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise DegenerateWeightsError("no component has a finite, positive likelihood")
    return np.exp(log_w - logsumexp(log_w))


@dataclass(frozen=True, eq=False)
class HomogeneousFusionResult:
    posteriors: list            # one GaussianMixture per agent
    log_likelihoods: np.ndarray  # (agents, components): ln l_i as seen by each agent
    consensus: ConsensusResult
    connected: bool
    warnings: list = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.stack([m.weights for m in self.posteriors])

    def max_disagreement(self) -> float:
        """Largest absolute difference of any posterior parameter between agent 0 and the others."""
        ref = self.posteriors[0]
        worst = 0.0
        for other in self.posteriors[1:]:
            worst = max(worst, float(np.max(np.abs(ref.weights - other.weights))))
            for a, b in zip(ref.components, other.components):
                worst = max(worst, float(np.max(np.abs(a.mean - b.mean))),
                            float(np.max(np.abs(a.cov - b.cov))))
        return worst


def fuse_homogeneous(
    g: SensorGraph,
    prior: GaussianMixture,
    observations: Sequence[float],
    sensors: Sequence[ScalarSensor],
    config: ConsensusConfig = ConsensusConfig(),
    mode: str = "ekf",
) -> HomogeneousFusionResult:
    """Fuse one scalar measurement per agent into the shared prior mixture.

    ``prior`` is the predicted (a priori) mixture. Every agent uses the
    network size ``g.node_count`` to scale consensus averages back to sums.
    On a disconnected graph the per-agent results differ; this is reported
    in ``connected`` and ``warnings`` rather than raised.
    """
    S = g.node_count
    if len(observations) != S or len(sensors) != S:
        raise ContractError(
            f"graph has {S} agents but got {len(observations)} observations and {len(sensors)} sensors"
        )
    N, n = len(prior), prior.dim

    init = np.stack([
        pack_payload([local_component_update(c, float(z), sensor, mode) for c in prior.components])
        for z, sensor in zip(observations, sensors)
    ])
    cons = run_consensus(g, init, config.tol, config.max_iters)

    warnings = []
    connected = g.is_connected()
    if not connected:
        warnings.append("sensor graph is disconnected; agents do not share one posterior")
    if not cons.converged:
        warnings.append(
            f"consensus did not converge in {cons.iterations} rounds (last change {cons.final_change:.3e})"
        )

    priors_info = [to_information(c) for c in prior.components]
    with np.errstate(divide="ignore"):
        log_prior_w = np.log(prior.weights)

    posteriors, all_ll = [], []
    for s in range(S):
        avg = unpack_payload(cons.values[s], N, n)
        comps, log_l = [], np.empty(N)
        for i, (c, info, d) in enumerate(zip(prior.components, priors_info, avg)):
            post = from_information(InformationState(info.y + S * d.di, info.Y + S * d.dI))
            comps.append(post)
            log_l[i] = component_likelihood_log(c, post, S * d.log_lik)
        w = normalize_log_weights(log_prior_w + log_l)
        posteriors.append(GaussianMixture(w, tuple(comps)))
        all_ll.append(log_l)

    return HomogeneousFusionResult(posteriors, np.array(all_ll), cons, connected, warnings)
