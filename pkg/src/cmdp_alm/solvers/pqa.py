"""
Projected Q-ascent (PQA): the tabular subproblem solver of PQA-ALM.

One step moves every state's action distribution along the Q-function of the
pseudo-reward and projects back onto the simplex:

    pi_{k+1}(.|s) = Proj_simplex(pi_k(.|s) + eta * Q_Gamma(pi_k)(s, .))
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from cmdp_alm.augmented_lagrangian import (
    DualState,
    InnerBudget,
    SubproblemOracle,
    SubproblemResult,
    al_value,
    pseudo_reward,
    smoothness_constant,
)
from cmdp_alm.cmdp import TabularCmdp, TabularPolicy, policy_evaluate

logger = logging.getLogger(__name__)

ASCENT_TOL = 1e-10


def project_simplex(v: np.ndarray) -> np.ndarray:
    """
    Euclidean projection onto the probability simplex, applied to the last axis.

    Sort-then-threshold: with u sorted in decreasing order, the support size is the
    largest k with u_k > (sum_{j<=k} u_j - 1) / k and the output is max(v - tau, 0)
    for tau = (sum_{j<=k} u_j - 1) / k.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite values")
    rows = np.atleast_2d(v)
    n = rows.shape[-1]
    u = -np.sort(-rows, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ks = np.arange(1, n + 1)
    in_support = u - css / ks > 0
    support = n - np.argmax(in_support[:, ::-1], axis=-1)
    tau = css[np.arange(rows.shape[0]), support - 1] / support
    out = np.maximum(rows - tau[:, None], 0.0)
    out /= out.sum(axis=-1, keepdims=True)
    return out.reshape(v.shape)


def resolve_step_size(
    step_size: t.Union[float, str],
    cmdp: TabularCmdp,
    dual: DualState,
    smoothness: t.Optional[float] = None,
) -> float:
    """A fixed eta, or rho_min / L_t for "auto"."""
    if step_size == "auto":
        L_t = smoothness if smoothness is not None else smoothness_constant(cmdp, dual)
        return cmdp.rho_min / L_t
    return float(step_size)


@dataclass
class PqaConfig:
    """
    Attributes
    ----------
    step_size : float or "auto"
        eta > 0, or "auto" for the theory step rho_min / L_t.
    max_iters : int
        K, used when the solver runs outside the outer loop.
    ascent_check : bool
        Record L after every step and warn when it decreases.
    warm_start : bool
        Start each subproblem from the previous answer (otherwise from uniform).
    """

    step_size: t.Union[float, str] = 1.0
    max_iters: int = 100
    ascent_check: bool = False
    warm_start: bool = True

    def __post_init__(self):
        if isinstance(self.step_size, str):
            if self.step_size != "auto":
                raise ValueError(
                    f"step_size must be a positive number or 'auto', got {self.step_size!r}"
                )
        elif self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")

    def resolve_step_size(
        self, cmdp: TabularCmdp, dual: DualState, smoothness: t.Optional[float] = None
    ) -> float:
        return resolve_step_size(self.step_size, cmdp, dual, smoothness)


def pqa_step(
    cmdp: TabularCmdp, policy: TabularPolicy, dual: DualState, eta: float
) -> TabularPolicy:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    gamma_table = pseudo_reward(cmdp, policy, dual)
    q = policy_evaluate(cmdp, policy, gamma_table).q
    step = eta * q
    # projection is invariant to per-row shifts
    step -= step.max(axis=1, keepdims=True)
    return TabularPolicy(project_simplex(policy.probs + step))


def _run_pqa(
    cmdp: TabularCmdp,
    dual: DualState,
    start: TabularPolicy,
    eta: float,
    num_iters: int,
    ascent_check: bool,
) -> SubproblemResult[TabularPolicy]:
    policy = start
    values: t.List[float] = []
    flags: t.List[str] = []
    if ascent_check:
        values.append(al_value(cmdp, policy, dual))
    for k in range(num_iters):
        policy = pqa_step(cmdp, policy, dual, eta)
        if ascent_check:
            values.append(al_value(cmdp, policy, dual))
            if values[-1] - values[-2] < -ASCENT_TOL and "ascent_violation" not in flags:
                logger.warning(
                    "augmented Lagrangian decreased by %.3e at inner step %d (eta=%.3g)",
                    values[-2] - values[-1],
                    k + 1,
                    eta,
                )
                flags.append("ascent_violation")
    return SubproblemResult(
        policy=policy, state=policy, grad_evals=num_iters, al_values=values, flags=flags
    )


def solve_subproblem_pqa(
    cmdp: TabularCmdp,
    dual: DualState,
    warm_start: TabularPolicy,
    config: PqaConfig,
) -> SubproblemResult[TabularPolicy]:
    """
    K = config.max_iters PQA steps from `warm_start`; each step counts as one
    gradient evaluation.
    """
    eta = config.resolve_step_size(cmdp, dual)
    return _run_pqa(cmdp, dual, warm_start, eta, config.max_iters, config.ascent_check)


@dataclass
class PqaOracle(SubproblemOracle[TabularPolicy]):
    config: PqaConfig = field(default_factory=PqaConfig)

    @property
    def name(self) -> str:
        return "pqa-alm"

    def initial_state(
        self, cmdp: TabularCmdp, rng: t.Optional[np.random.Generator] = None
    ) -> TabularPolicy:
        if rng is None:
            return TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
        return TabularPolicy.random(rng, cmdp.n_states, cmdp.n_actions)

    def solve(
        self,
        cmdp: TabularCmdp,
        dual: DualState,
        warm_start: TabularPolicy,
        budget: InnerBudget,
    ) -> SubproblemResult[TabularPolicy]:
        start = (
            warm_start
            if self.config.warm_start
            else TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
        )
        eta = self.config.resolve_step_size(cmdp, dual, budget.smoothness)
        return _run_pqa(cmdp, dual, start, eta, budget.num_iters, self.config.ascent_check)
