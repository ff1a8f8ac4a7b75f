"""Run one scenario end to end and write its result files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gmfusion.dynamics import predict_mixture, propagate_truth
from gmfusion.errors import FusionError
from gmfusion.gaussian import GaussianMixture, sample_mixture_labeled
from gmfusion.heterogeneous import fuse_priors
from gmfusion.homogeneous import ConsensusConfig, fuse_homogeneous
from gmfusion.oracle import fuse_centralized
from gmfusion.scenario import Scenario
from gmfusion.sensing import measure_range

SYMMETRY_TOL = 1e-12

# Stream labels for seed derivation.
_TRUTH, _MEASURE, _PARTICLES = 0, 1, 2


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit child seed for one random stream of an episode."""
    ss = np.random.SeedSequence([seed, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ReportedMixture:
    label: str
    agent: int          # -1 marks the centralized reference
    mixture: GaussianMixture


@dataclass
class EpisodeReport:
    scenario_hash: str
    seed: int
    mode: str
    weights_header: list
    weights_rows: list
    mixtures: list                      # list[ReportedMixture]
    diagnostics: dict
    warnings: list = field(default_factory=list)
    particles: np.ndarray | None = None  # rows of (x, y, component, agent)

    def to_json(self) -> str:
        doc = {
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "mode": self.mode,
            "weights": {"header": self.weights_header, "rows": self.weights_rows},
            "diagnostics": self.diagnostics,
            "warnings": self.warnings,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def weights_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.weights_header)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in self.weights_rows])
        return buf.getvalue()

    def mixture_json(self) -> str:
        doc = {"mixtures": [
            {
                "label": m.label,
                "agent": m.agent,
                "components": [
                    {"weight": w, "mean": c.mean.tolist(), "covariance": c.cov.tolist()}
                    for w, c in m.mixture
                ],
            }
            for m in self.mixtures
        ]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def particles_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "component", "agent"])
        for x, y, comp, agent in self.particles:
            w.writerow([repr(float(x)), repr(float(y)), int(comp), int(agent)])
        return buf.getvalue()


def _homogeneous(s: Scenario) -> tuple[list, list, list, dict, list]:
    prior = s.mixture(0)
    sensors = s.range_sensors()
    graph = s.sensor_graph()
    truth = np.asarray(s.truth, dtype=float)
    dyn = s.linear_dynamics()
    if dyn is not None:
        prior = predict_mixture(prior, dyn)
        truth = propagate_truth(truth, dyn, derive_seed(s.seed, _TRUTH))

    if s.observations is not None:
        z = list(s.observations)
    else:
        z = [measure_range(truth, sen, derive_seed(s.seed, _MEASURE, k)) for k, sen in enumerate(sensors)]

    dec = fuse_homogeneous(graph, prior, z, sensors,
                           ConsensusConfig(s.consensus.tol, s.consensus.max_iters), s.linearization)
    cen = fuse_centralized(prior, z, sensors, s.linearization)

    dec_w = dec.posteriors[0].weights
    rows = [[i, float(p), float(c), float(d)]
            for i, (p, c, d) in enumerate(zip(prior.weights, cen.posterior.weights, dec_w))]
    mixtures = [ReportedMixture(f"agent {k}", k, m) for k, m in enumerate(dec.posteriors)]
    mixtures.append(ReportedMixture("centralized", -1, cen.posterior))
    diag = {
        "agents": graph.node_count,
        "components": len(prior),
        "connected": dec.connected,
        "consensus_iterations": dec.consensus.iterations,
        "consensus_converged": dec.consensus.converged,
        "consensus_final_change": dec.consensus.final_change,
        "consensus_tol": s.consensus.tol,
        "linearization": s.linearization,
        "truth": truth.tolist(),
        "observations": [float(v) for v in z],
        "agent_weights": [m.weights.tolist() for m in dec.posteriors],
        "centralized_log_likelihoods": cen.log_likelihoods.tolist(),
        "max_agent_disagreement": dec.max_disagreement(),
        "max_weight_gap_vs_centralized": float(np.max(np.abs(dec.weights - cen.posterior.weights))),
    }
    return ["component", "prior", "centralized", "decentralized"], rows, mixtures, diag, list(dec.warnings)


def _heterogeneous(s: Scenario) -> tuple[list, list, list, dict, list]:
    m1, m2 = s.mixture(0), s.mixture(1)
    fused12, w12 = fuse_priors(m1, m2, s.prune_threshold)
    fused21, w21 = fuse_priors(m2, m1, s.prune_threshold)

    # Agent 2's components are ordered (j, i); reorder them to (i, j) before comparing.
    n1, n2 = len(m1), len(m2)
    kept12 = w12.kept_pairs(s.prune_threshold)
    kept21 = {pair: k for k, pair in enumerate(w21.kept_pairs(s.prune_threshold))}
    gap = float(np.max(np.abs(w21.matrix - w12.matrix.T)))
    for k, (i, j) in enumerate(kept12):
        k21 = kept21.get((j, i))
        if k21 is None:
            gap = np.inf
            break
        a, b = fused12.components[k], fused21.components[k21]
        gap = max(gap, float(np.max(np.abs(a.mean - b.mean))), float(np.max(np.abs(a.cov - b.cov))),
                  abs(fused12.weights[k] - fused21.weights[k21]))
    symmetric = gap <= SYMMETRY_TOL
    warnings = [] if symmetric else [f"agent fused estimates differ by {gap:.3e}"]

    rows = [[i, j, float(w12.matrix[i, j])] for i in range(n1) for j in range(n2)]
    mixtures = [ReportedMixture("agent 0 fused", 0, fused12), ReportedMixture("agent 1 fused", 1, fused21)]
    diag = {
        "agents": 2,
        "components": [n1, n2],
        "fused_components": len(fused12),
        "prune_threshold": s.prune_threshold,
        "association_log_likelihoods": w12.log_likelihoods.tolist(),
        "weight_sum": float(w12.matrix.sum()),
        "agent_symmetry_gap": gap,
        "agent_symmetric": symmetric,
    }
    return ["i1", "j2", "weight"], rows, mixtures, diag, warnings


def run_episode(s: Scenario) -> EpisodeReport:
    """Execute the scenario; identical scenario and seed give identical reports."""
    if s.mode == "homogeneous":
        header, rows, mixtures, diag, warnings = _homogeneous(s)
    elif s.mode == "heterogeneous":
        header, rows, mixtures, diag, warnings = _heterogeneous(s)
    else:
        raise FusionError(f"unknown mode {s.mode!r}")

    particles = None
    if s.emit_particles > 0:
        blocks = []
        for k, rm in enumerate(mixtures):
            xs, labels = sample_mixture_labeled(rm.mixture, s.emit_particles,
                                                derive_seed(s.seed, _PARTICLES, k))
            blocks.append(np.column_stack([xs[:, 0], xs[:, 1], labels, np.full(len(labels), rm.agent)]))
        particles = np.vstack(blocks)

    return EpisodeReport(
        scenario_hash=s.digest(),
        seed=s.seed,
        mode=s.mode,
        weights_header=header,
        weights_rows=rows,
        mixtures=mixtures,
        diagnostics=diag,
        warnings=warnings,
        particles=particles,
    )


def emit_outputs(r: EpisodeReport, out_dir) -> list[Path]:
    """Write weights.csv, mixture.json, report.json and (if sampled) particles.csv."""
    out = Path(out_dir)
    files = {
        "weights.csv": r.weights_csv(),
        "mixture.json": r.mixture_json(),
        "report.json": r.to_json(),
    }
    if r.particles is not None:
        files["particles.csv"] = r.particles_csv()
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write episode output: {exc.strerror}", str(exc.filename or out)) from exc
    return written
