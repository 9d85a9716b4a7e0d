from cmdp_alm.experiment.baseline import npg_pd_baseline, npg_step
from cmdp_alm.experiment.config import ExperimentConfig, GridPoint, TileCoderSpec
from cmdp_alm.experiment.outputs import emit_outputs, plot_series
from cmdp_alm.experiment.runner import (
    ExperimentResult,
    IterationMetrics,
    RunRecord,
    run_experiment,
    run_point,
    select_run,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "GridPoint",
    "IterationMetrics",
    "RunRecord",
    "TileCoderSpec",
    "emit_outputs",
    "npg_pd_baseline",
    "npg_step",
    "plot_series",
    "run_experiment",
    "run_point",
    "select_run",
]
