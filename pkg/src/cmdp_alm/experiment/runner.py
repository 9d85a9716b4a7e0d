from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from cmdp_alm.augmented_lagrangian import AlmTrace, BudgetMode, run_alm
from cmdp_alm.cmdp import TabularCmdp, TabularPolicy
from cmdp_alm.envs import make_env
from cmdp_alm.envs.grid import GridGeometry
from cmdp_alm.exceptions import NoQualifyingConfiguration
from cmdp_alm.executor import run_batch
from cmdp_alm.experiment.baseline import npg_pd_baseline
from cmdp_alm.experiment.config import ONE_HOT, ExperimentConfig, GridPoint
from cmdp_alm.lp import OracleReport, optimal_solution
from cmdp_alm.run_config import RunConfig
from cmdp_alm.solvers.features import FeatureMap, one_hot_features, tile_code
from cmdp_alm.solvers.ppqa import PpqaConfig, PpqaOracle
from cmdp_alm.solvers.pqa import PqaConfig, PqaOracle

logger = logging.getLogger(__name__)

GAP_TOL = 1e-8


@dataclass(frozen=True)
class IterationMetrics:
    iter: int
    cum_grads: int
    v_r: float
    v_c: t.Tuple[float, ...]
    gap: float
    violations: t.Tuple[float, ...]

    @property
    def max_violation(self) -> float:
        """max_i (b_i - V_ci); 0 for an unconstrained model."""
        return max(self.violations, default=0.0)


@dataclass
class RunRecord:
    """
    One grid point: its configuration, the per-outer-iteration metrics against the
    LP optimum V*, the final (last-iterate) policy and the raw trace.
    """

    point: GridPoint
    env: str
    v_star: float
    metrics: t.List[IterationMetrics]
    final_policy: TabularPolicy
    trace: AlmTrace
    flags: t.Tuple[str, ...] = ()

    @property
    def index(self) -> int:
        return self.point.index

    @property
    def final(self) -> IterationMetrics:
        return self.metrics[-1]

    @property
    def final_gap(self) -> float:
        return self.final.gap

    @property
    def final_max_violation(self) -> float:
        return self.final.max_violation

    @property
    def total_grads(self) -> int:
        return self.final.cum_grads

    def constraint_oscillation(self) -> float:
        """Mean |V_c(pi_{t+1}) - V_c(pi_t)| over iterations and constraints."""
        if len(self.metrics) < 2:
            return 0.0
        v_c = np.asarray([m.v_c for m in self.metrics])
        if v_c.size == 0:
            return 0.0
        return float(np.mean(np.abs(np.diff(v_c, axis=0))))


def metrics_from_trace(cmdp: TabularCmdp, trace: AlmTrace, v_star: float) -> t.List[IterationMetrics]:
    metrics = []
    for it in trace.iterations:
        gap = v_star - it.v_r
        violations = tuple(float(v) for v in cmdp.thresholds - it.v_c)
        # only infeasible iterates may beat the constrained optimum
        if gap < -GAP_TOL and max(violations, default=0.0) <= GAP_TOL:
            logger.warning(
                "iteration %d is feasible with V_r=%.12g above the LP optimum %.12g",
                it.iter,
                it.v_r,
                v_star,
            )
        metrics.append(
            IterationMetrics(
                iter=it.iter,
                cum_grads=it.cum_grads,
                v_r=it.v_r,
                v_c=tuple(float(v) for v in it.v_c),
                gap=gap,
                violations=violations,
            )
        )
    return metrics


def build_features(point: GridPoint, geometry: GridGeometry, n_actions: int) -> FeatureMap:
    if point.features is None or point.features == ONE_HOT:
        return one_hot_features(geometry.n_states, n_actions)
    return tile_code(point.features.build(), geometry, n_actions)  # type: ignore[union-attr]


def run_point(
    point: GridPoint,
    cmdp: TabularCmdp,
    geometry: GridGeometry,
    v_star: float,
    rng: np.random.Generator,
    initial_policy: str = "uniform",
    budget_mode: BudgetMode = BudgetMode.FIXED,
) -> RunRecord:
    """Runs one grid point; `rng` is only drawn from for random initial policies."""
    logger.debug("grid point %d: %s %s", point.index, point.algorithm, point.label)
    random_start = initial_policy == "random"
    if point.algorithm == "npg-pd-baseline":
        start = (
            TabularPolicy.random(rng, cmdp.n_states, cmdp.n_actions) if random_start else None
        )
        policy, trace = npg_pd_baseline(
            cmdp,
            T=point.T,
            primal_eta=point.step_size,
            dual_eta=point.dual_step_size,  # type: ignore[arg-type]
            initial_policy=start,
        )
    else:
        oracle: t.Union[PqaOracle, PpqaOracle]
        if point.algorithm == "pqa-alm":
            oracle = PqaOracle(PqaConfig(step_size=point.step_size, max_iters=point.K))  # type: ignore[arg-type]
        else:
            features = build_features(point, geometry, cmdp.n_actions)
            oracle = PpqaOracle(
                features,
                PpqaConfig(
                    step_size=point.step_size,
                    surrogate_steps=point.surrogate_steps,  # type: ignore[arg-type]
                    surrogate_step_size=point.surrogate_step_size,  # type: ignore[arg-type]
                    max_iters=point.K,  # type: ignore[arg-type]
                ),
            )
        state = oracle.initial_state(cmdp, rng if random_start else None)
        policy, trace = run_alm(
            cmdp,
            oracle,
            T=point.T,
            beta=point.beta,  # type: ignore[arg-type]
            sigma=point.sigma,  # type: ignore[arg-type]
            mode=budget_mode,
            inner_iters=point.K,
            initial_state=state,
        )
    flags = sorted({flag for it in trace.iterations for flag in it.flags})
    return RunRecord(
        point=point,
        env=cmdp.name,
        v_star=v_star,
        metrics=metrics_from_trace(cmdp, trace, v_star),
        final_policy=policy,
        trace=trace,
        flags=tuple(flags),
    )


def select_run(records: t.Sequence[RunRecord], eps_sel: float) -> RunRecord:
    """
    The run with the smallest final optimality gap among those whose final policy
    violates no constraint by more than `eps_sel`; ties go to the earlier grid point.
    """
    if not records:
        raise ValueError("no runs to select from")
    qualifying = [r for r in records if r.final_max_violation <= eps_sel]
    if not qualifying:
        best = min(r.final_max_violation for r in records)
        raise NoQualifyingConfiguration(eps_sel, best)
    return min(qualifying, key=lambda r: (r.final_gap, r.index))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    oracle: OracleReport
    records: t.List[RunRecord]
    selected: t.Optional[RunRecord] = None
    best_violation: t.Optional[float] = None

    @property
    def eps_sel(self) -> float:
        return self.config.eps_sel

    def require_selection(self) -> RunRecord:
        if self.selected is None:
            raise NoQualifyingConfiguration(self.eps_sel, self.best_violation)
        return self.selected

    def representative(self) -> RunRecord:
        """The selected run, or the least-violating run when none qualifies."""
        if self.selected is not None:
            return self.selected
        return min(self.records, key=lambda r: (r.final_max_violation, r.index))

    def summary(self) -> t.List[t.Dict[str, t.Any]]:
        rows = []
        for r in self.records:
            rows.append(
                {
                    "index": r.index,
                    "algorithm": r.point.algorithm,
                    "config": r.point.label,
                    "v_star": r.v_star,
                    "final_v_r": r.final.v_r,
                    "final_gap": r.final_gap,
                    "final_max_violation": r.final_max_violation,
                    "total_grads": r.total_grads,
                    "v_c_oscillation": r.constraint_oscillation(),
                    "qualifies": r.final_max_violation <= self.eps_sel,
                    "selected": self.selected is not None and r.index == self.selected.index,
                    "flags": ";".join(r.flags),
                }
            )
        return rows


def run_experiment(
    config: ExperimentConfig, run_config: t.Optional[RunConfig] = None
) -> ExperimentResult:
    """
    Runs every grid point of `config` and applies the selection rule.

    Grid points run in parallel; point i draws from a generator seeded with
    (config.seed, i), so results do not depend on the number of workers.
    """
    run_config = run_config or RunConfig()
    run_config = RunConfig(
        max_workers=run_config.max_workers,
        show_progress=run_config.show_progress,
        seed=config.seed,
    )
    cmdp, geometry = make_env(config.env)
    oracle = optimal_solution(cmdp)
    points = config.grid()
    logger.info(
        "running %s: %d grid points on %s (V*=%.10g)",
        config.label,
        len(points),
        config.env,
        oracle.v_star,
    )
    records: t.List[RunRecord] = run_batch(
        f"Running {config.label}",
        run_point,
        [
            dict(
                point=point,
                cmdp=cmdp,
                geometry=geometry,
                v_star=oracle.v_star,
                rng=run_config.spawn_rng(point.index),
                initial_policy=config.initial_policy,
                budget_mode=config.budget_mode,
            )
            for point in points
        ],
        run_config,
    )
    result = ExperimentResult(config=config, oracle=oracle, records=records)
    try:
        result.selected = select_run(records, config.eps_sel)
    except NoQualifyingConfiguration as e:
        result.best_violation = e.best_violation
        logger.warning("%s: %s", config.label, e.message)
    else:
        logger.info(
            "%s: selected grid point %d (%s) with gap %.3e and violation %.3e",
            config.label,
            result.selected.index,
            result.selected.point.label,
            result.selected.final_gap,
            result.selected.final_max_violation,
        )
    return result
