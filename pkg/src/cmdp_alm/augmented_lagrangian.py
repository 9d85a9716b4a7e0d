"""
The augmented Lagrangian of a CMDP and the generic inexact ALM outer loop.

For a policy pi and multipliers lambda >= 0 with penalty beta > 0 the objective is

    L(pi, lambda) = V_r(rho) + (beta / 2) * sum_i ( -min(V_ci(rho) - b_i - lambda_i / beta, 0) ** 2
                                                    + (lambda_i / beta) ** 2 )

which the primal step maximizes (approximately) and the dual step then moves
lambda against the constraint excess measured through the optimal slack.

Several helpers accept beta = 0 and then return the plain Lagrangian
V_r + sum_i lambda_i (V_ci - b_i), which is the beta -> 0 limit of the formula above.
"""

from __future__ import annotations

import csv
import logging
import math
import typing as t
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from cmdp_alm.cmdp import (
    TabularCmdp,
    TabularPolicy,
    evaluate_rewards,
    policy_evaluate,
    state_distribution,
    value_iteration,
)
from cmdp_alm.convex_alm import RateConstants, rate_constants
from cmdp_alm.exceptions import OutputWriteError, SlaterConditionError
from cmdp_alm.utils import format_float

if t.TYPE_CHECKING:
    import pandas as pd

logger = logging.getLogger(__name__)

StateT = t.TypeVar("StateT")


@dataclass(frozen=True)
class DualState:
    """
    Multipliers and schedule of the outer loop.

    Attributes
    ----------
    lam : np.ndarray
        Lagrange multipliers, one per constraint.
    beta : float
        Penalty parameter. Zero is accepted by the objective helpers (plain
        Lagrangian); the outer loop requires beta > 0.
    outer_iter : int
        Outer iteration t >= 1.
    sigma : float
        Tolerance schedule constant; the subproblem target at iteration t is
        eps_t = sigma / t**2.
    """

    lam: np.ndarray
    beta: float
    outer_iter: int = 1
    sigma: float = 1.0

    def __post_init__(self):
        lam = np.array(self.lam, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(lam)):
            raise ValueError("multipliers must be finite")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.outer_iter < 1:
            raise ValueError(f"outer_iter must be >= 1, got {self.outer_iter}")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def initial(cls, n_constraints: int, beta: float, sigma: float = 1.0) -> "DualState":
        """lambda_1 = 0 at t = 1."""
        return cls(lam=np.zeros(n_constraints), beta=beta, outer_iter=1, sigma=sigma)

    @property
    def eps(self) -> float:
        return self.eps_at(self.outer_iter)

    def eps_at(self, t: int) -> float:
        return self.sigma / t**2


def penalty_weights(
    constraint_values: np.ndarray, thresholds: np.ndarray, dual: DualState
) -> np.ndarray:
    """
    w_i = -beta * min(V_ci - b_i - lambda_i / beta, 0) = max(lambda_i - beta (V_ci - b_i), 0).

    These are the weights of the constraint rewards inside the pseudo-reward.
    """
    excess = np.asarray(constraint_values, dtype=np.float64) - thresholds
    return np.maximum(dual.lam - dual.beta * excess, 0.0)


def al_value_from_values(
    reward_value: float,
    constraint_values: np.ndarray,
    thresholds: np.ndarray,
    dual: DualState,
) -> float:
    excess = np.asarray(constraint_values, dtype=np.float64) - thresholds
    if dual.beta == 0.0:
        return float(reward_value + dual.lam @ excess)
    shifted = np.minimum(excess - dual.lam / dual.beta, 0.0)
    penalty = (dual.beta / 2.0) * np.sum(-(shifted**2) + (dual.lam / dual.beta) ** 2)
    return float(reward_value + penalty)


def reward_and_constraint_values(
    cmdp: TabularCmdp, policy: TabularPolicy
) -> t.Tuple[float, np.ndarray]:
    """V_r(rho) and the vector of V_ci(rho) from one factorization."""
    stacked = np.concatenate([cmdp.reward[None], cmdp.constraint_rewards], axis=0)
    values = evaluate_rewards(cmdp, policy, stacked)
    return float(values[0]), values[1:]


def al_value(cmdp: TabularCmdp, policy: TabularPolicy, dual: DualState) -> float:
    """Augmented Lagrangian L(pi, lambda) at the given policy."""
    reward_value, constraint_values = reward_and_constraint_values(cmdp, policy)
    return al_value_from_values(reward_value, constraint_values, cmdp.thresholds, dual)


def pseudo_reward(
    cmdp: TabularCmdp, policy: TabularPolicy, dual: DualState
) -> np.ndarray:
    """
    Gamma(pi) = r - beta * sum_i c_i * min(V_ci - b_i - lambda_i / beta, 0).

    Its Q-function gives the policy gradient of the augmented Lagrangian.
    """
    _, constraint_values = reward_and_constraint_values(cmdp, policy)
    weights = penalty_weights(constraint_values, cmdp.thresholds, dual)
    return cmdp.reward + np.tensordot(weights, cmdp.constraint_rewards, axes=1)


def al_gradient(cmdp: TabularCmdp, policy: TabularPolicy, dual: DualState) -> np.ndarray:
    """
    Gradient of L with respect to the policy table:
    d^pi(s) * Q_Gamma(s, a) / (1 - gamma), with d^pi the normalized state distribution.
    """
    gamma_table = pseudo_reward(cmdp, policy, dual)
    q = policy_evaluate(cmdp, policy, gamma_table).q
    d = state_distribution(cmdp, policy)
    return d[:, None] * q / (1.0 - cmdp.discount)


def slack(v_c: float, b: float, lam: float, beta: float) -> float:
    """Optimal slack xi = max(V_c - b - lambda / beta, 0)."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return max(v_c - b - lam / beta, 0.0)


def dual_update(
    dual: DualState, constraint_values: np.ndarray, thresholds: np.ndarray
) -> DualState:
    """
    lambda' = lambda - (beta / 2) (V_c - b - xi), evaluated in its two closed forms:
    lambda / 2 where V_c >= b + lambda / beta, lambda - (beta / 2)(V_c - b) elsewhere.
    """
    if dual.beta <= 0:
        raise ValueError(f"beta must be positive, got {dual.beta}")
    excess = np.asarray(constraint_values, dtype=np.float64) - thresholds
    slack_active = excess >= dual.lam / dual.beta
    lam = np.where(slack_active, dual.lam / 2.0, dual.lam - (dual.beta / 2.0) * excess)
    return DualState(
        lam=lam, beta=dual.beta, outer_iter=dual.outer_iter + 1, sigma=dual.sigma
    )


def smoothness_constant(cmdp: TabularCmdp, dual: DualState) -> float:
    """
    Smoothness L_t of the augmented Lagrangian in the policy table:

        iota * s * (1 + sum_i (beta (s / (1 - gamma) + |b_i|) + lambda_i)) + beta m A^2 s^2 / (1 - gamma)

    with iota = 2 gamma A / (1 - gamma)^3 and s the reward scale. For rewards in
    [0, 1] and b >= 0 this is iota (1 + beta sum_i (1/(1-gamma) + b_i + lambda_i/beta))
    + beta m A^2 / (1 - gamma).
    """
    gamma = cmdp.discount
    n_actions = cmdp.n_actions
    scale = cmdp.reward_scale
    iota = 2.0 * gamma * n_actions / (1.0 - gamma) ** 3
    per_constraint = dual.beta * (scale / (1.0 - gamma) + np.abs(cmdp.thresholds)) + dual.lam
    curvature = iota * scale * (1.0 + float(np.sum(per_constraint)))
    penalty = (
        dual.beta * cmdp.n_constraints * n_actions**2 * scale**2 / (1.0 - gamma)
    )
    return float(curvature + penalty)


def dual_variable_bound(cmdp: TabularCmdp, zeta: np.ndarray) -> np.ndarray:
    """
    Upper bound M_i = (r_hi - r_lo) / (zeta_i (1 - gamma)) on the optimal multipliers.
    """
    zeta = np.asarray(zeta, dtype=np.float64).reshape(-1)
    for i, margin in enumerate(zeta):
        if margin <= 0:
            raise SlaterConditionError(i, float(margin))
    lo, hi = cmdp.reward_bounds  # type: ignore[misc]
    width = max(hi - lo, np.finfo(float).tiny)
    return width / (zeta * (1.0 - cmdp.discount))


def pseudo_reward_bound(
    cmdp: TabularCmdp, dual: DualState, zeta: np.ndarray
) -> float:
    """
    Upper bound U on every entry of Gamma(pi_t) along a run with certified
    subproblems:

        U = s * (1 + beta * sum_i max(b_i - r_lo / (1 - gamma), 0)
                 + sqrt(m) * sqrt(||M||^2 + beta sigma pi^2 / 3) + ||M||_1)

    For rewards in [0, 1] and b >= 0 this is 1 + beta ||b||_1
    + sqrt(m) sqrt(||M||^2 + beta sigma pi^2 / 3) + ||M||_1.
    """
    bound = dual_variable_bound(cmdp, zeta)
    lo, _ = cmdp.reward_bounds  # type: ignore[misc]
    scale = cmdp.reward_scale
    m = cmdp.n_constraints
    violation_cap = np.maximum(cmdp.thresholds - lo / (1.0 - cmdp.discount), 0.0)
    dual_radius = math.sqrt(
        float(bound @ bound) + dual.beta * dual.sigma * math.pi**2 / 3.0
    )
    total = (
        1.0
        + dual.beta * float(np.sum(violation_cap))
        + math.sqrt(m) * dual_radius
        + float(np.sum(bound))
    )
    return scale * total


def inner_budget(L_t: float, eps_t: float, rho_min: float, gamma: float) -> int:
    """
    K_t = ceil(32 L_t (1 + 1 / ((1 - gamma) rho_min)) / ((1 - gamma)^2 rho_min eps_t)).
    """
    if L_t <= 0 or eps_t <= 0:
        raise ValueError(f"L_t and eps_t must be positive, got {L_t} and {eps_t}")
    if rho_min <= 0:
        raise ValueError(
            "rho_min must be positive: the inner-loop rate needs every state to have "
            "positive initial probability"
        )
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    horizon = 1.0 - gamma
    k = 32.0 * L_t * (1.0 + 1.0 / (horizon * rho_min)) / (horizon**2 * rho_min * eps_t)
    return int(math.ceil(k))


def theory_step_size(cmdp: TabularCmdp, dual: DualState) -> float:
    """eta = rho_min / L_t."""
    return cmdp.rho_min / smoothness_constant(cmdp, dual)


def cmdp_rate_constants(
    cmdp: TabularCmdp,
    beta: float,
    sigma: float,
    lambda_star: np.ndarray,
    v_star: float,
    zeta: t.Optional[np.ndarray] = None,
) -> RateConstants:
    """
    Rate constants B, kappa, C of the outer loop on this CMDP.

    The initial dual gap d(lambda_1) - d(lambda*) is replaced by the upper bound
    max_pi V_r(rho) - V*, which keeps C a valid constant. When Slater margins are
    given, the alternative B computed from the multiplier bound M is attached too.
    """
    unconstrained = value_iteration(cmdp, cmdp.reward).scalar_value
    delta_1 = max(unconstrained - v_star, 0.0)
    alt_norm = None
    if zeta is not None:
        alt_norm = float(np.linalg.norm(dual_variable_bound(cmdp, zeta)))
    return rate_constants(
        lambda_star_norm=float(np.linalg.norm(lambda_star)),
        beta=beta,
        sigma=sigma,
        delta_1=delta_1,
        alt_lambda_norm=alt_norm,
    )


class BudgetMode(str, Enum):
    """
    How many inner iterations each subproblem receives.

    Attributes
    ----------
    THEORY : str
        K_t from `inner_budget` with eps_t = sigma / t^2 (certified, very large).
    FIXED : str
        A user-fixed K for every outer iteration.
    """

    THEORY = "theory-budget"
    FIXED = "fixed-budget"


@dataclass(frozen=True)
class InnerBudget:
    num_iters: int
    eps: float
    smoothness: float


@dataclass
class SubproblemResult(t.Generic[StateT]):
    """
    Output of one subproblem solve.

    `state` is whatever the solver warm-starts from (a tabular policy for PQA, a
    log-linear parameter for PPQA); `policy` is the induced tabular policy.
    """

    policy: TabularPolicy
    state: StateT
    grad_evals: int
    al_values: t.List[float] = field(default_factory=list)
    flags: t.List[str] = field(default_factory=list)


@dataclass
class SubproblemOracle(ABC, t.Generic[StateT]):
    """
    Approximately maximizes L(., lambda_t) from a warm start.
    """

    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def initial_state(
        self, cmdp: TabularCmdp, rng: t.Optional[np.random.Generator] = None
    ) -> StateT:
        """Starting point of the first subproblem (uniform, or random given rng)."""
        ...

    @abstractmethod
    def solve(
        self,
        cmdp: TabularCmdp,
        dual: DualState,
        warm_start: StateT,
        budget: InnerBudget,
    ) -> SubproblemResult[StateT]: ...


@dataclass(frozen=True)
class AlmIteration:
    iter: int
    eps_t: float
    lam: np.ndarray
    v_r: float
    v_c: np.ndarray
    al_value: float
    inner_grads: int
    cum_grads: int
    max_pseudo_reward: float
    flags: t.Tuple[str, ...] = ()


@dataclass
class AlmTrace:
    """
    Per-outer-iteration diagnostics of `run_alm`.

    Row t holds lambda_t (the multipliers the subproblem was formed with), the
    values of pi_{t+1}, and L(pi_{t+1}, lambda_t).
    """

    beta: float
    sigma: float
    mode: BudgetMode
    iterations: t.List[AlmIteration] = field(default_factory=list)
    final_dual: t.Optional[DualState] = None
    pseudo_reward_bound: t.Optional[float] = None
    rate_constants: t.Optional[RateConstants] = None

    def append(self, record: AlmIteration):
        if self.iterations and record.cum_grads < self.iterations[-1].cum_grads:
            raise ValueError("cumulative gradient counts must be non-decreasing")
        self.iterations.append(record)

    @property
    def multipliers(self) -> np.ndarray:
        """lambda_1 .. lambda_{T+1}, shape (T + 1, m)."""
        rows = [it.lam for it in self.iterations]
        if self.final_dual is not None:
            rows.append(self.final_dual.lam)
        return np.asarray(rows)

    def fieldnames(self) -> t.List[str]:
        m = len(self.iterations[0].lam) if self.iterations else 0
        return (
            ["iter", "eps_t"]
            + [f"lambda_{i}" for i in range(m)]
            + ["v_r"]
            + [f"v_c_{i}" for i in range(m)]
            + ["al_value", "inner_grads", "cum_grads"]
        )

    def to_list(self) -> t.List[t.Dict[str, t.Any]]:
        rows = []
        for it in self.iterations:
            row: t.Dict[str, t.Any] = {"iter": it.iter, "eps_t": it.eps_t}
            row.update({f"lambda_{i}": v for i, v in enumerate(it.lam)})
            row["v_r"] = it.v_r
            row.update({f"v_c_{i}": v for i, v in enumerate(it.v_c)})
            row.update(
                {
                    "al_value": it.al_value,
                    "inner_grads": it.inner_grads,
                    "cum_grads": it.cum_grads,
                }
            )
            rows.append(row)
        return rows

    def to_csv(self, path: t.Union[str, Path]):
        """Writes the trace with floats at 17 significant digits."""
        rows = self.to_list()
        try:
            with open(path, "w", newline="") as csvfile:
                writer = csv.DictWriter(csvfile, fieldnames=self.fieldnames())
                writer.writeheader()
                for row in rows:
                    writer.writerow(
                        {
                            k: format_float(v) if isinstance(v, float) else v
                            for k, v in row.items()
                        }
                    )
        except OSError as e:
            raise OutputWriteError(str(path), str(e)) from e

    def to_pandas(self) -> "pd.DataFrame":
        try:
            import pandas as pd
        except ImportError:
            raise ImportError(
                "pandas is not installed. Please install it using `pip install pandas`."
            )
        return pd.DataFrame(self.to_list())


def run_alm(
    cmdp: TabularCmdp,
    oracle: SubproblemOracle,
    T: int,
    beta: float,
    sigma: float = 1.0,
    mode: t.Union[BudgetMode, str] = BudgetMode.FIXED,
    inner_iters: t.Optional[int] = None,
    initial_state: t.Any = None,
    zeta: t.Optional[np.ndarray] = None,
    max_inner_iters: t.Optional[int] = None,
) -> t.Tuple[TabularPolicy, AlmTrace]:
    """
    Inexact augmented-Lagrangian policy optimization.

    Starting from lambda_1 = 0, each outer iteration t asks `oracle` for an
    approximate maximizer of L(., lambda_t) (warm-started from the previous
    answer) and then applies `dual_update`. Returns pi_{T+1} and the trace.

    Parameters
    ----------
    mode : BudgetMode
        THEORY gives the oracle K_t = inner_budget(L_t, sigma/t^2, rho_min, gamma)
        iterations; FIXED gives it `inner_iters` every time.
    zeta : np.ndarray, optional
        Slater margins. When given, the pseudo-reward bound U is computed and every
        Gamma(pi_{t+1}) is audited against it.
    max_inner_iters : int, optional
        Refuse to start a theory-budget subproblem longer than this.
    """
    mode = BudgetMode(mode)
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if mode is BudgetMode.FIXED and (inner_iters is None or inner_iters < 0):
        raise ValueError("fixed-budget mode needs a non-negative inner_iters")

    dual = DualState.initial(cmdp.n_constraints, beta=beta, sigma=sigma)
    trace = AlmTrace(beta=beta, sigma=sigma, mode=mode)
    u_bound = None
    if zeta is not None:
        u_bound = pseudo_reward_bound(cmdp, dual, zeta)
        trace.pseudo_reward_bound = u_bound

    state = initial_state if initial_state is not None else oracle.initial_state(cmdp)
    policy: t.Optional[TabularPolicy] = None
    cum_grads = 0
    for outer in range(1, T + 1):
        eps_t = dual.eps
        smoothness = smoothness_constant(cmdp, dual)
        if mode is BudgetMode.THEORY:
            num_iters = inner_budget(smoothness, eps_t, cmdp.rho_min, cmdp.discount)
            if max_inner_iters is not None and num_iters > max_inner_iters:
                raise ValueError(
                    f"theory budget K_{outer}={num_iters} exceeds max_inner_iters={max_inner_iters}"
                )
        else:
            num_iters = int(inner_iters)  # type: ignore[arg-type]
        logger.debug(
            "outer iteration %d: eps_t=%.3e L_t=%.3e K_t=%d lambda=%s",
            outer,
            eps_t,
            smoothness,
            num_iters,
            dual.lam,
        )

        result = oracle.solve(
            cmdp, dual, state, InnerBudget(num_iters=num_iters, eps=eps_t, smoothness=smoothness)
        )
        state = result.state
        policy = result.policy
        reward_value, constraint_values = reward_and_constraint_values(cmdp, policy)
        value = al_value_from_values(reward_value, constraint_values, cmdp.thresholds, dual)
        weights = penalty_weights(constraint_values, cmdp.thresholds, dual)
        max_gamma = float(
            np.max(cmdp.reward + np.tensordot(weights, cmdp.constraint_rewards, axes=1))
        )
        flags = list(result.flags)
        if u_bound is not None and max_gamma > u_bound + 1e-9:
            logger.warning(
                "pseudo-reward entry %.6g exceeds its bound %.6g at outer iteration %d",
                max_gamma,
                u_bound,
                outer,
            )
            flags.append("pseudo_reward_above_bound")
        cum_grads += result.grad_evals
        trace.append(
            AlmIteration(
                iter=outer,
                eps_t=eps_t,
                lam=dual.lam,
                v_r=reward_value,
                v_c=constraint_values,
                al_value=value,
                inner_grads=result.grad_evals,
                cum_grads=cum_grads,
                max_pseudo_reward=max_gamma,
                flags=tuple(flags),
            )
        )
        dual = dual_update(dual, constraint_values, cmdp.thresholds)

    trace.final_dual = dual
    logger.info(
        "%s finished %d outer iterations (%d gradient evaluations), V_r=%.6g",
        oracle.name,
        T,
        cum_grads,
        trace.iterations[-1].v_r,
    )
    assert policy is not None
    return policy, trace
