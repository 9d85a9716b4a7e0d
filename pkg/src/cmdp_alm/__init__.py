from cmdp_alm.augmented_lagrangian import BudgetMode, DualState, run_alm
from cmdp_alm.cmdp import TabularCmdp, TabularPolicy, policy_evaluate
from cmdp_alm.convex_alm import ConvexProblem, run_convex_alm
from cmdp_alm.lp import build_occupancy_lp, optimal_solution, solve_lp
from cmdp_alm.run_config import RunConfig

try:
    from ._version import version as __version__
except ImportError:
    __version__ = "unknown version"


__all__ = [
    "run_alm",
    "BudgetMode",
    "DualState",
    "TabularCmdp",
    "TabularPolicy",
    "policy_evaluate",
    "ConvexProblem",
    "run_convex_alm",
    "build_occupancy_lp",
    "optimal_solution",
    "solve_lp",
    "RunConfig",
    "__version__",
]
