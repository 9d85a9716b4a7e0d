"""
Wall-clock benchmarks for the tabular solvers and the grid runner.

    python tests/benchmarks/benchmark_grid.py
"""

from pathlib import Path

from utils import print_table, timeit

from cmdp_alm.augmented_lagrangian import DualState
from cmdp_alm.envs import make_env
from cmdp_alm.experiment import ExperimentConfig, run_experiment
from cmdp_alm.run_config import RunConfig
from cmdp_alm.solvers.features import TileCoderConfig, tile_code
from cmdp_alm.solvers.ppqa import LogLinearPolicy, PpqaConfig, solve_subproblem_ppqa
from cmdp_alm.solvers.pqa import PqaConfig, PqaOracle, solve_subproblem_pqa

CONFIGS = Path(__file__).parents[2] / "configs"

cmdp, geometry = make_env("cliff-world")
dual = DualState(lam=[1.0], beta=10.0)
features = tile_code(TileCoderConfig(60, 4, 3), geometry, cmdp.n_actions)
cliff_pqa = ExperimentConfig.from_file(CONFIGS / "cliff_world_pqa.toml")

if __name__ == "__main__":
    results = {}
    results["pqa subproblem (K=100)"] = timeit(solve_subproblem_pqa)(
        cmdp,
        dual,
        PqaOracle().initial_state(cmdp),
        PqaConfig(step_size=1.0, max_iters=100),
    )
    results["ppqa subproblem (K=10, n=250, d=60)"] = timeit(solve_subproblem_ppqa)(
        cmdp,
        dual,
        LogLinearPolicy.zeros(features),
        PpqaConfig(step_size=1.0, surrogate_steps=250, max_iters=10),
    )
    for workers in (1, 3):
        results[f"cliff-world pqa grid ({workers} workers)"] = timeit(
            run_experiment, iteration=1
        )(cliff_pqa, RunConfig(max_workers=workers, show_progress=False))
    print_table(results)
