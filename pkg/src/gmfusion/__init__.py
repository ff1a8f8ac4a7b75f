"""Decentralized consensus fusion of Gaussian-mixture target estimates."""

from gmfusion.dynamics import LinearDynamics, predict_information, predict_mixture, propagate_truth
from gmfusion.errors import (
    ConditioningError,
    ContractError,
    DegenerateAssociationError,
    DegenerateWeightsError,
    FusionError,
    ScenarioParseError,
    ScenarioValidationError,
    SingularityError,
)
from gmfusion.gaussian import (
    Gaussian,
    GaussianMixture,
    InformationState,
    from_information,
    gaussian_logpdf,
    mixture_logpdf,
    sample_mixture,
    to_information,
)
from gmfusion.heterogeneous import (
    AssociationWeights,
    association_likelihood,
    fuse_priors,
    pairwise_component_fuse,
)
from gmfusion.homogeneous import (
    ConsensusConfig,
    HomogeneousFusionResult,
    component_likelihood_log,
    fuse_homogeneous,
    local_component_update,
)
from gmfusion.network import SensorGraph, consensus_round, mhmc_weights, neighbors, run_consensus
from gmfusion.sensing import (
    InfoDelta,
    LinearSensor,
    RangeSensor,
    info_contribution,
    measure_range,
    measurement_loglik,
    range_jacobian,
)

__version__ = "0.1.0"
