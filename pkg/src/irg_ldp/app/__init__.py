from irg_ldp.app.cli import dispatch, emit_plot_data, read_plot_data
from irg_ldp.app.experiments import (
    ExperimentConfig,
    RunRecord,
    exact_small_oracle,
    run_conditional,
    run_coupling_check,
    run_lln,
    run_naive_tail,
    run_planted_hubs,
    sample_hubs_in_y,
)

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "dispatch",
    "emit_plot_data",
    "exact_small_oracle",
    "read_plot_data",
    "run_conditional",
    "run_coupling_check",
    "run_lln",
    "run_naive_tail",
    "run_planted_hubs",
    "sample_hubs_in_y",
]
