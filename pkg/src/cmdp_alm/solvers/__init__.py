from cmdp_alm.solvers.features import (
    FeatureMap,
    TileCoderConfig,
    one_hot_features,
    tile_code,
)
from cmdp_alm.solvers.ppqa import (
    LogLinearPolicy,
    PpqaConfig,
    PpqaOracle,
    SurrogateAudit,
    log_linear_probs,
    ppqa_update,
    solve_subproblem_ppqa,
    surrogate_loss_and_grad,
)
from cmdp_alm.solvers.pqa import (
    PqaConfig,
    PqaOracle,
    pqa_step,
    project_simplex,
    solve_subproblem_pqa,
)

__all__ = [
    "FeatureMap",
    "TileCoderConfig",
    "one_hot_features",
    "tile_code",
    "LogLinearPolicy",
    "PpqaConfig",
    "PpqaOracle",
    "SurrogateAudit",
    "log_linear_probs",
    "ppqa_update",
    "solve_subproblem_ppqa",
    "surrogate_loss_and_grad",
    "PqaConfig",
    "PqaOracle",
    "pqa_step",
    "project_simplex",
    "solve_subproblem_pqa",
]
