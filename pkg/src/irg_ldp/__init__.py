from __future__ import annotations

from irg_ldp.app import ExperimentConfig, RunRecord, dispatch, exact_small_oracle
from irg_ldp.config import SimulationSettings, optional_env, parse_weights, require_env
from irg_ldp.domain import (
    ConfigError,
    CouplingUnavailableError,
    DomainError,
    EstimationError,
    ModelParams,
    WeightDist,
    edge_probability,
    kernel,
)
from irg_ldp.infrastructure import StreamFactory
from irg_ldp.services import (
    Graph,
    TreePool,
    build_pool,
    components,
    compute_quantities,
    estimate_theta,
    generate,
    hubs,
)

__all__ = [
    "ConfigError",
    "CouplingUnavailableError",
    "DomainError",
    "EstimationError",
    "ExperimentConfig",
    "Graph",
    "ModelParams",
    "RunRecord",
    "SimulationSettings",
    "StreamFactory",
    "TreePool",
    "WeightDist",
    "build_pool",
    "components",
    "compute_quantities",
    "dispatch",
    "edge_probability",
    "estimate_theta",
    "exact_small_oracle",
    "generate",
    "hubs",
    "kernel",
    "optional_env",
    "parse_weights",
    "require_env",
]
