"""
Scenario files: one JSON document describing a single fusion episode.

Example (homogeneous)::

    {
      "name": "three agents on a chain",
      "mode": "homogeneous",
      "state_dim": 2,
      "priors": [[{"weight": 0.5, "mean": [0, 0], "cov": [[1, 0], [0, 1]]}, ...]],
      "sensors": [{"position": [0, 0], "noise_var": 0.25}, ...],
      "graph": {"nodes": 3, "edges": [[0, 1], [1, 2]]},
      "truth": [5.0, 6.0],
      "consensus": {"tol": 1e-10, "max_iters": 10000},
      "seed": 7,
      "emit_particles": 1000
    }

Optional keys: ``dynamics`` (``{"F": ..., "Q": ...}``), ``observations``
(explicit measurement per sensor, overriding simulation),
``linearization`` (``"ekf"`` or ``"literal"``) and ``prune_threshold``
(heterogeneous mode). Heterogeneous scenarios carry exactly two priors and
ignore every measurement-related key.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from gmfusion.dynamics import LinearDynamics
from gmfusion.errors import ContractError, FusionError, ScenarioParseError, ScenarioValidationError
from gmfusion.gaussian import WEIGHT_SUM_TOL, Gaussian, GaussianMixture
from gmfusion.network import DEFAULT_MAX_ITERS, DEFAULT_TOL, SensorGraph
from gmfusion.sensing import LINEARIZATION_MODES, MIN_RANGE, RangeSensor

log = logging.getLogger(__name__)

MODES = ("homogeneous", "heterogeneous")
GOLDEN = ("table1", "table2")


@dataclass
class ComponentSpec:
    weight: float
    mean: list
    cov: list


@dataclass
class SensorSpec:
    position: list
    noise_var: float


@dataclass
class GraphSpec:
    nodes: int
    edges: list


@dataclass
class DynamicsSpec:
    F: list
    Q: list


@dataclass
class ConsensusSpec:
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS


@dataclass
class Scenario:
    mode: str
    state_dim: int
    priors: list                      # list of list[ComponentSpec]
    sensors: list = field(default_factory=list)
    graph: GraphSpec | None = None
    truth: list | None = None
    dynamics: DynamicsSpec | None = None
    consensus: ConsensusSpec = field(default_factory=ConsensusSpec)
    seed: int = 0
    emit_particles: int = 0
    observations: list | None = None
    linearization: str = "ekf"
    prune_threshold: float = 0.0
    name: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # Domain objects ---------------------------------------------------------

    def mixture(self, k: int) -> GaussianMixture:
        comps = self.priors[k]
        return GaussianMixture.from_arrays(
            [c.weight for c in comps], [c.mean for c in comps], [c.cov for c in comps]
        )

    def range_sensors(self) -> list[RangeSensor]:
        return [RangeSensor(s.position, s.noise_var) for s in self.sensors]

    def sensor_graph(self) -> SensorGraph:
        return SensorGraph.from_edges(self.graph.nodes, self.graph.edges)

    def linear_dynamics(self) -> LinearDynamics | None:
        if self.dynamics is None:
            return None
        return LinearDynamics(self.dynamics.F, self.dynamics.Q)


# Parsing ---------------------------------------------------------------------


class _Reader:
    """Pulls typed fields out of raw JSON, recording every problem instead of stopping."""

    def __init__(self):
        self.problems: list[str] = []

    def fail(self, where: str, msg: str) -> None:
        self.problems.append(f"{where}: {msg}")

    def number(self, obj, key, where, default=None, integer=False):
        if key not in obj:
            if default is None:
                self.fail(where, f"missing required field '{key}'")
            return default
        v = obj[key]
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            self.fail(f"{where}.{key}", f"expected {'an integer' if integer else 'a number'}, got {v!r}")
            return default
        return int(v) if integer else float(v)

    def vector(self, v, where) -> list | None:
        if not isinstance(v, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
        ):
            self.fail(where, f"expected a list of numbers, got {v!r}")
            return None
        return [float(x) for x in v]

    def matrix(self, v, where) -> list | None:
        if not isinstance(v, list) or not v:
            self.fail(where, f"expected a list of rows, got {v!r}")
            return None
        rows = [self.vector(r, f"{where}[{i}]") for i, r in enumerate(v)]
        return None if any(r is None for r in rows) else rows


def _mixture_spec(rd: _Reader, raw, where) -> list | None:
    if not isinstance(raw, list) or not raw:
        rd.fail(where, "expected a non-empty list of components")
        return None
    comps = []
    for i, c in enumerate(raw):
        cw = f"{where}[{i}]"
        if not isinstance(c, dict):
            rd.fail(cw, "expected an object with weight, mean, cov")
            continue
        w = rd.number(c, "weight", cw)
        mean = rd.vector(c.get("mean"), f"{cw}.mean")
        cov = rd.matrix(c.get("cov"), f"{cw}.cov")
        if w is not None and mean is not None and cov is not None:
            comps.append(ComponentSpec(w, mean, cov))
    return comps if len(comps) == len(raw) else None


def scenario_from_dict(data: Any) -> Scenario:
    """Build and validate a Scenario; raises ScenarioValidationError listing every problem."""
    rd = _Reader()
    if not isinstance(data, dict):
        raise ScenarioValidationError(["scenario: top level must be an object"])

    mode = data.get("mode")
    state_dim = rd.number(data, "state_dim", "scenario", integer=True)

    priors = []
    raw_priors = data.get("priors")
    if not isinstance(raw_priors, list):
        rd.fail("priors", "expected a list of mixtures")
    else:
        for k, raw in enumerate(raw_priors):
            priors.append(_mixture_spec(rd, raw, f"priors[{k}]"))

    sensors = []
    for i, s in enumerate(data.get("sensors") or []):
        if not isinstance(s, dict):
            rd.fail(f"sensors[{i}]", "expected an object")
            continue
        pos = rd.vector(s.get("position"), f"sensors[{i}].position")
        r = rd.number(s, "noise_var", f"sensors[{i}]")
        if pos is not None and r is not None:
            sensors.append(SensorSpec(pos, r))

    graph = None
    if data.get("graph") is not None:
        g = data["graph"]
        if not isinstance(g, dict):
            rd.fail("graph", "expected an object with nodes and edges")
        else:
            nodes = rd.number(g, "nodes", "graph", integer=True)
            edges = g.get("edges", [])
            if not isinstance(edges, list) or not all(
                isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e) for e in edges
            ):
                rd.fail("graph.edges", "expected a list of [i, j] integer pairs")
                edges = []
            if nodes is not None:
                graph = GraphSpec(nodes, [list(e) for e in edges])

    truth = rd.vector(data["truth"], "truth") if data.get("truth") is not None else None

    dynamics = None
    if data.get("dynamics") is not None:
        d = data["dynamics"]
        if not isinstance(d, dict):
            rd.fail("dynamics", "expected an object with F and Q")
        else:
            F, Q = rd.matrix(d.get("F"), "dynamics.F"), rd.matrix(d.get("Q"), "dynamics.Q")
            if F is not None and Q is not None:
                dynamics = DynamicsSpec(F, Q)

    cons_raw = data.get("consensus") or {}
    consensus = ConsensusSpec(
        rd.number(cons_raw, "tol", "consensus", default=DEFAULT_TOL),
        rd.number(cons_raw, "max_iters", "consensus", default=DEFAULT_MAX_ITERS, integer=True),
    )
    observations = None
    if data.get("observations") is not None:
        observations = rd.vector(data["observations"], "observations")

    s = Scenario(
        mode=mode,
        state_dim=state_dim if state_dim is not None else 0,
        priors=priors,
        sensors=sensors,
        graph=graph,
        truth=truth,
        dynamics=dynamics,
        consensus=consensus,
        seed=rd.number(data, "seed", "scenario", default=0, integer=True),
        emit_particles=rd.number(data, "emit_particles", "scenario", default=0, integer=True),
        observations=observations,
        linearization=data.get("linearization", "ekf"),
        prune_threshold=rd.number(data, "prune_threshold", "scenario", default=0.0),
        name=str(data.get("name", "")),
    )
    problems = rd.problems + validate(s)
    if problems:
        raise ScenarioValidationError(problems)
    return s


def _check_mixture(spec, where, n) -> list[str]:
    out = []
    if spec is None:
        return out
    weights = [c.weight for c in spec]
    if any(w < 0 for w in weights):
        out.append(f"{where}: negative component weight")
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        out.append(f"{where}: weights sum to {total:.12g}, expected 1")
    for i, c in enumerate(spec):
        if len(c.mean) != n:
            out.append(f"{where}[{i}].mean: length {len(c.mean)}, expected state_dim={n}")
            continue
        if len(c.cov) != n or any(len(r) != n for r in c.cov):
            out.append(f"{where}[{i}].cov: expected a {n}x{n} matrix")
            continue
        try:
            Gaussian(c.mean, c.cov)
        except FusionError as exc:
            out.append(f"{where}[{i}].cov: {exc}")
    return out


def validate(s: Scenario) -> list[str]:
    """Every invariant violation in ``s``; empty when valid."""
    p: list[str] = []
    n = s.state_dim
    if s.mode not in MODES:
        p.append(f"mode: expected one of {MODES}, got {s.mode!r}")
    if not isinstance(n, int) or n < 1:
        p.append(f"state_dim: must be a positive integer, got {n!r}")
        n = 0
    for k, spec in enumerate(s.priors):
        if n:
            p.extend(_check_mixture(spec, f"priors[{k}]", n))

    if s.mode == "homogeneous":
        if len(s.priors) != 1:
            p.append(f"priors: homogeneous mode takes exactly 1 shared prior, got {len(s.priors)}")
        if not s.sensors:
            p.append("sensors: homogeneous mode requires at least one sensor")
        if s.graph is None:
            p.append("graph: homogeneous mode requires a sensor graph")
        elif s.graph.nodes != len(s.sensors):
            p.append(f"graph.nodes: {s.graph.nodes} nodes but {len(s.sensors)} sensors")
        if s.truth is None:
            p.append("truth: homogeneous mode requires a truth state")
        elif n and len(s.truth) != n:
            p.append(f"truth: length {len(s.truth)}, expected state_dim={n}")
        if s.observations is not None and len(s.observations) != len(s.sensors):
            p.append(f"observations: {len(s.observations)} values for {len(s.sensors)} sensors")
        for i, sen in enumerate(s.sensors):
            if not 1 <= len(sen.position) <= max(min(n, 3), 1):
                p.append(f"sensors[{i}].position: dimension {len(sen.position)} does not fit state_dim={n}")
            if not sen.noise_var > 0:
                p.append(f"sensors[{i}].noise_var: must be positive, got {sen.noise_var}")
            elif (s.truth is not None and s.observations is None and s.dynamics is None
                  and len(s.truth) >= len(sen.position)):
                gap = np.linalg.norm(np.array(s.truth[: len(sen.position)]) - np.array(sen.position))
                if gap <= MIN_RANGE:
                    p.append(f"sensors[{i}].position: coincides with truth; range undefined")
        if len({sen.noise_var for sen in s.sensors}) > 1:
            log.warning("scenario sensors have differing noise variances; fusion assumes homogeneous sensors")
    elif s.mode == "heterogeneous":
        if len(s.priors) != 2:
            p.append(f"priors: heterogeneous mode takes exactly 2 priors, got {len(s.priors)}")
        if not 0.0 <= s.prune_threshold < 1.0:
            p.append(f"prune_threshold: must lie in [0, 1), got {s.prune_threshold}")

    if s.graph is not None:
        try:
            SensorGraph.from_edges(s.graph.nodes, s.graph.edges)
        except ContractError as exc:
            p.append(f"graph: {exc}")

    if s.dynamics is not None:
        try:
            dyn = LinearDynamics(s.dynamics.F, s.dynamics.Q)
            if n and dyn.dim != n:
                p.append(f"dynamics: {dyn.dim}x{dyn.dim} matrices for state_dim={n}")
        except (ContractError, ValueError) as exc:
            p.append(f"dynamics: {exc}")

    if not s.consensus.tol > 0:
        p.append(f"consensus.tol: must be positive, got {s.consensus.tol}")
    if s.consensus.max_iters < 1:
        p.append(f"consensus.max_iters: must be >= 1, got {s.consensus.max_iters}")
    if not 0 <= s.seed < 2**64:
        p.append(f"seed: must be a 64-bit unsigned integer, got {s.seed}")
    if s.emit_particles < 0:
        p.append(f"emit_particles: must be >= 0, got {s.emit_particles}")
    elif s.emit_particles and n == 1:
        p.append("emit_particles: particle output needs state_dim >= 2 (x, y columns)")
    if s.linearization not in LINEARIZATION_MODES:
        p.append(f"linearization: expected one of {LINEARIZATION_MODES}, got {s.linearization!r}")
    return p


def parse_scenario_text(text: str, source: str = "<string>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"{path}: cannot read scenario ({exc.strerror})") from exc
    return scenario_from_dict(parse_scenario_text(text, str(path)))


def dump_scenario(s: Scenario) -> str:
    return json.dumps(s.to_dict(), indent=2, sort_keys=True) + "\n"


def write_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dump_scenario(s))
    return path


def golden_path(name: str) -> Path:
    """Path of a bundled scenario, ``table1`` or ``table2``."""
    if name not in GOLDEN:
        raise KeyError(f"unknown golden scenario {name!r}; choose from {GOLDEN}")
    return Path(str(resources.files("gmfusion") / "scenarios" / f"{name}.scenario"))
