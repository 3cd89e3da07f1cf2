from irg_ldp.services.branching import (
    ProgenySample,
    ThetaEstimate,
    TreePool,
    build_delta_pool,
    build_pool,
    estimate_g_ell,
    estimate_H,
    estimate_no_connection,
    estimate_theta,
    estimate_type_prob,
    pbar,
    sample_progeny,
    theta_rank_one_oracle,
)
from irg_ldp.services.graph import (
    ComponentStats,
    ComponentType,
    CoupledGraphs,
    DeltaIrgModel,
    Graph,
    build_delta_irg,
    classify_component,
    components,
    count_types,
    generate,
    generate_coupled,
    kernel_delta,
)
from irg_ldp.services.ldp import (
    CEstimate,
    HubWeights,
    LdpQuantities,
    compute_quantities,
    estimate_C,
    hubs,
    hubs_asymptotic,
    phi_threshold,
    rate_function,
    upper_tail_prediction,
    y_membership,
)

__all__ = [
    "CEstimate",
    "ComponentStats",
    "ComponentType",
    "CoupledGraphs",
    "DeltaIrgModel",
    "Graph",
    "HubWeights",
    "LdpQuantities",
    "ProgenySample",
    "ThetaEstimate",
    "TreePool",
    "build_delta_irg",
    "build_delta_pool",
    "build_pool",
    "classify_component",
    "components",
    "compute_quantities",
    "count_types",
    "estimate_C",
    "estimate_H",
    "estimate_g_ell",
    "estimate_no_connection",
    "estimate_theta",
    "estimate_type_prob",
    "generate",
    "generate_coupled",
    "hubs",
    "hubs_asymptotic",
    "kernel_delta",
    "pbar",
    "phi_threshold",
    "rate_function",
    "sample_progeny",
    "theta_rank_one_oracle",
    "upper_tail_prediction",
    "y_membership",
]
