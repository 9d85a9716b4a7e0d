"""
Projected PQA (PPQA) for log-linear policies.

Each update computes the tabular PQA target pi_{k+1/2} from the current log-linear
policy, then moves theta towards it by plain gradient descent on the forward-KL
surrogate

    l_k(theta) = sum_s d^{pi_k}(s) sum_a pi_{k+1/2}(a|s) * (-log pi_theta(a|s))

which is convex and 1-smooth in theta when every feature row has norm <= 1.
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr, log_softmax, softmax

from cmdp_alm.augmented_lagrangian import (
    DualState,
    InnerBudget,
    SubproblemOracle,
    SubproblemResult,
)
from cmdp_alm.cmdp import TabularCmdp, TabularPolicy, state_distribution
from cmdp_alm.solvers.features import FeatureMap
from cmdp_alm.solvers.pqa import pqa_step, resolve_step_size

logger = logging.getLogger(__name__)

LOSS_INCREASE_TOL = 1e-12


@dataclass(frozen=True)
class LogLinearPolicy:
    """pi_theta(a|s) proportional to exp(<phi(s, a), theta>)."""

    theta: np.ndarray
    features: FeatureMap

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.shape != (self.features.dim,):
            raise ValueError(
                f"theta has {theta.shape[0]} entries, features have dimension {self.features.dim}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, features: FeatureMap) -> "LogLinearPolicy":
        return cls(np.zeros(features.dim), features)

    def with_theta(self, theta: np.ndarray) -> "LogLinearPolicy":
        return LogLinearPolicy(theta, self.features)


def log_linear_probs(policy: LogLinearPolicy) -> TabularPolicy:
    return TabularPolicy(softmax(policy.features.logits(policy.theta), axis=1))


def surrogate_loss_and_grad(
    d_pi_k: np.ndarray, target: TabularPolicy, policy: LogLinearPolicy
) -> t.Tuple[float, np.ndarray]:
    """
    Soft-label cross-entropy between `target` and pi_theta, weighted by `d_pi_k`,
    and its gradient sum_s d(s) sum_a (pi_theta(a|s) - target(a|s)) phi(s, a).
    """
    d = np.asarray(d_pi_k, dtype=np.float64)
    phi = policy.features.phi
    log_probs = log_softmax(phi @ policy.theta, axis=1)
    loss = -float(np.einsum("s,sa,sa->", d, target.probs, log_probs))
    residual = np.exp(log_probs) - target.probs
    grad = np.einsum("s,sa,sad->d", d, residual, phi)
    return loss, grad


def weighted_entropy(d_pi_k: np.ndarray, target: TabularPolicy) -> float:
    """sum_s d(s) H(target(.|s)); the surrogate never goes below this value."""
    return float(np.asarray(d_pi_k) @ entr(target.probs).sum(axis=1))


@dataclass(frozen=True)
class SurrogateAudit:
    """
    Surrogate losses l_k(omega_0), ..., l_k(omega_N) of one update.

    `final_loss - entropy_floor` bounds the combined optimization and
    approximation error of the update from above.
    """

    losses: t.Tuple[float, ...]
    entropy_floor: float
    diverged: bool

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def excess_loss(self) -> float:
        return self.final_loss - self.entropy_floor


def ppqa_update(
    cmdp: TabularCmdp,
    dual: DualState,
    policy: LogLinearPolicy,
    eta: float,
    surrogate_steps: int,
    surrogate_step_size: float,
) -> t.Tuple[LogLinearPolicy, SurrogateAudit]:
    if surrogate_steps < 0:
        raise ValueError(f"surrogate_steps must be non-negative, got {surrogate_steps}")
    if surrogate_step_size <= 0:
        raise ValueError(f"surrogate_step_size must be positive, got {surrogate_step_size}")
    current = log_linear_probs(policy)
    target = pqa_step(cmdp, current, dual, eta)
    d = state_distribution(cmdp, current)

    omega = policy.theta.copy()
    losses: t.List[float] = []
    for _ in range(surrogate_steps):
        loss, grad = surrogate_loss_and_grad(d, target, policy.with_theta(omega))
        losses.append(loss)
        omega = omega - surrogate_step_size * grad
    updated = policy.with_theta(omega)
    losses.append(surrogate_loss_and_grad(d, target, updated)[0])

    increases = np.diff(losses)
    diverged = bool(np.any(increases > LOSS_INCREASE_TOL * max(1.0, abs(losses[0]))))
    if diverged:
        logger.warning(
            "surrogate loss increased during %d descent steps (zeta=%.3g): %.6g -> %.6g",
            surrogate_steps,
            surrogate_step_size,
            losses[0],
            losses[-1],
        )
    return updated, SurrogateAudit(
        losses=tuple(losses),
        entropy_floor=weighted_entropy(d, target),
        diverged=diverged,
    )


@dataclass
class PpqaConfig:
    """
    Attributes
    ----------
    step_size : float or "auto"
        eta of the tabular PQA target, or "auto" for rho_min / L_t.
    surrogate_steps : int
        N gradient-descent steps on the surrogate per update.
    surrogate_step_size : float
        zeta; the surrogate is 1-smooth, so zeta <= 1 guarantees descent.
    max_iters : int
        K, used when the solver runs outside the outer loop.
    warm_start : bool
        Start each subproblem from the previous theta (otherwise from theta = 0).
    """

    step_size: t.Union[float, str] = 1.0
    surrogate_steps: int = 50
    surrogate_step_size: float = 1.0
    max_iters: int = 100
    warm_start: bool = True

    def __post_init__(self):
        if isinstance(self.step_size, str):
            if self.step_size != "auto":
                raise ValueError(
                    f"step_size must be a positive number or 'auto', got {self.step_size!r}"
                )
        elif self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.surrogate_steps < 0:
            raise ValueError(
                f"surrogate_steps must be non-negative, got {self.surrogate_steps}"
            )
        if self.surrogate_step_size <= 0:
            raise ValueError(
                f"surrogate_step_size must be positive, got {self.surrogate_step_size}"
            )
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")


def _run_ppqa(
    cmdp: TabularCmdp,
    dual: DualState,
    start: LogLinearPolicy,
    eta: float,
    num_iters: int,
    config: PpqaConfig,
) -> SubproblemResult[LogLinearPolicy]:
    policy = start
    flags: t.List[str] = []
    excess: t.List[float] = []
    for _ in range(num_iters):
        policy, audit = ppqa_update(
            cmdp, dual, policy, eta, config.surrogate_steps, config.surrogate_step_size
        )
        excess.append(audit.excess_loss)
        if audit.diverged and "surrogate_loss_increase" not in flags:
            flags.append("surrogate_loss_increase")
    if excess:
        logger.debug(
            "PPQA subproblem: %d updates, surrogate excess loss max %.3e last %.3e",
            num_iters,
            max(excess),
            excess[-1],
        )
    return SubproblemResult(
        policy=log_linear_probs(policy),
        state=policy,
        grad_evals=num_iters,
        flags=flags,
    )


def solve_subproblem_ppqa(
    cmdp: TabularCmdp,
    dual: DualState,
    warm_start: LogLinearPolicy,
    config: PpqaConfig,
) -> SubproblemResult[LogLinearPolicy]:
    """K = config.max_iters PPQA updates; each counts as one gradient evaluation."""
    eta = resolve_step_size(config.step_size, cmdp, dual)
    return _run_ppqa(cmdp, dual, warm_start, eta, config.max_iters, config)


@dataclass
class PpqaOracle(SubproblemOracle[LogLinearPolicy]):
    features: FeatureMap
    config: PpqaConfig = field(default_factory=PpqaConfig)

    @property
    def name(self) -> str:
        return "ppqa-alm"

    def initial_state(
        self, cmdp: TabularCmdp, rng: t.Optional[np.random.Generator] = None
    ) -> LogLinearPolicy:
        if rng is None:
            return LogLinearPolicy.zeros(self.features)
        return LogLinearPolicy(rng.normal(size=self.features.dim), self.features)

    def solve(
        self,
        cmdp: TabularCmdp,
        dual: DualState,
        warm_start: LogLinearPolicy,
        budget: InnerBudget,
    ) -> SubproblemResult[LogLinearPolicy]:
        start = warm_start if self.config.warm_start else LogLinearPolicy.zeros(self.features)
        eta = resolve_step_size(self.config.step_size, cmdp, dual, budget.smoothness)
        return _run_ppqa(cmdp, dual, start, eta, budget.num_iters, self.config)
