from irg_ldp.domain.errors import (
    ConfigError,
    CouplingUnavailableError,
    DomainError,
    EstimationError,
)
from irg_ldp.domain.model import (
    ModelParams,
    WeightDist,
    edge_probability,
    kernel,
    kernel_mass_split,
    mean_kernel,
    sample_weight,
)

__all__ = [
    "ConfigError",
    "CouplingUnavailableError",
    "DomainError",
    "EstimationError",
    "ModelParams",
    "WeightDist",
    "edge_probability",
    "kernel",
    "kernel_mass_split",
    "mean_kernel",
    "sample_weight",
]
