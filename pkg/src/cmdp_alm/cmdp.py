"""
Exact tabular CMDP model, policy evaluation and occupancy measures.

All objects here are immutable and every operation is a pure function, so they can
be shared freely between worker threads.
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.linalg import lu_factor, lu_solve

from cmdp_alm.exceptions import InvalidCmdpError, InvalidPolicyError
from cmdp_alm.utils import as_float_array

logger = logging.getLogger(__name__)

STOCHASTIC_ATOL = 1e-12
ZERO_MARGINAL = 1e-12


@dataclass(frozen=True)
class TabularCmdp:
    """
    Discounted constrained MDP with a fully known model.

    Attributes
    ----------
    transition : np.ndarray
        P(s'|s,a) with shape (S, A, S).
    reward : np.ndarray
        r(s,a) with shape (S, A).
    constraint_rewards : np.ndarray
        c_i(s,a) with shape (m, S, A). A policy is feasible when
        V_{c_i}(rho) >= b_i for every i.
    thresholds : np.ndarray
        b with shape (m,).
    discount : float
        gamma in [0, 1).
    initial_dist : np.ndarray
        rho with shape (S,).
    reward_bounds : tuple of float, optional
        Interval [r_lo, r_hi] containing every entry of r and of each c_i. Computed
        from the tables when omitted.
    name : str
        Label used in logs and documents.
    """

    transition: np.ndarray
    reward: np.ndarray
    constraint_rewards: np.ndarray
    thresholds: np.ndarray
    discount: float
    initial_dist: np.ndarray
    reward_bounds: t.Optional[t.Tuple[float, float]] = None
    name: str = "cmdp"

    def __post_init__(self):
        try:
            transition = as_float_array(self.transition, "transition", 3)
            reward = as_float_array(self.reward, "reward", 2)
            constraints = np.asarray(self.constraint_rewards, dtype=np.float64)
            if constraints.size == 0:
                constraints = np.zeros((0,) + reward.shape)
            constraints = as_float_array(constraints, "constraint_rewards", 3)
            thresholds = as_float_array(
                np.asarray(self.thresholds, dtype=np.float64).reshape(-1),
                "thresholds",
                1,
            )
            rho = as_float_array(self.initial_dist, "initial_dist", 1)
        except ValueError as e:
            raise InvalidCmdpError(str(e)) from e

        n_states, n_actions = reward.shape
        if n_states < 1 or n_actions < 1:
            raise InvalidCmdpError("the model needs at least one state and one action")
        if transition.shape != (n_states, n_actions, n_states):
            raise InvalidCmdpError(
                f"transition has shape {transition.shape}, expected {(n_states, n_actions, n_states)}"
            )
        if constraints.shape[1:] != (n_states, n_actions):
            raise InvalidCmdpError(
                f"constraint_rewards has shape {constraints.shape}, expected (m, {n_states}, {n_actions})"
            )
        if thresholds.shape != (constraints.shape[0],):
            raise InvalidCmdpError(
                f"expected {constraints.shape[0]} thresholds, got {thresholds.shape[0]}"
            )
        if rho.shape != (n_states,):
            raise InvalidCmdpError(
                f"initial_dist has shape {rho.shape}, expected ({n_states},)"
            )
        if not 0.0 <= float(self.discount) < 1.0:
            raise InvalidCmdpError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(transition < 0):
            raise InvalidCmdpError("transition probabilities must be non-negative")
        row_err = np.max(np.abs(transition.sum(axis=2) - 1.0))
        if row_err > STOCHASTIC_ATOL:
            raise InvalidCmdpError(
                f"transition rows must sum to 1 (max deviation {row_err:.3e})"
            )
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > STOCHASTIC_ATOL:
            raise InvalidCmdpError("initial_dist must be a probability vector")

        entries = np.concatenate([reward.ravel(), constraints.ravel()])
        if self.reward_bounds is None:
            bounds = (float(entries.min()), float(entries.max()))
        else:
            lo, hi = (float(v) for v in self.reward_bounds)
            if lo > hi:
                raise InvalidCmdpError(f"reward_bounds [{lo}, {hi}] is empty")
            if entries.min() < lo or entries.max() > hi:
                raise InvalidCmdpError(
                    f"rewards and costs span [{entries.min()}, {entries.max()}], "
                    f"outside reward_bounds [{lo}, {hi}]"
                )
            bounds = (lo, hi)

        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "constraint_rewards", constraints)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "reward_bounds", bounds)

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.constraint_rewards.shape[0]

    @property
    def rho_min(self) -> float:
        return float(self.initial_dist.min())

    @property
    def reward_scale(self) -> float:
        """max(|r_lo|, |r_hi|); multiplies every value-range term in the bounds."""
        lo, hi = self.reward_bounds  # type: ignore[misc]
        return max(abs(lo), abs(hi))

    def with_thresholds(self, thresholds: t.Sequence[float]) -> "TabularCmdp":
        return TabularCmdp(
            transition=self.transition,
            reward=self.reward,
            constraint_rewards=self.constraint_rewards,
            thresholds=np.asarray(thresholds, dtype=np.float64),
            discount=self.discount,
            initial_dist=self.initial_dist,
            reward_bounds=None,
            name=self.name,
        )

    def without_constraints(self) -> "TabularCmdp":
        return TabularCmdp(
            transition=self.transition,
            reward=self.reward,
            constraint_rewards=np.zeros((0, self.n_states, self.n_actions)),
            thresholds=np.zeros(0),
            discount=self.discount,
            initial_dist=self.initial_dist,
            name=self.name,
        )

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        n_states: int,
        n_actions: int,
        n_constraints: int = 1,
        discount: float = 0.9,
        rho_floor: float = 0.0,
    ) -> "TabularCmdp":
        """
        Random instance with rewards and costs in [0, 1].

        Each threshold is set to the constraint value of the uniform policy, so the
        constraint is non-trivial and the Slater margin is positive unless the
        uniform policy happens to maximize that constraint value. Every initial
        probability is at least `rho_floor`.
        """
        transition = rng.random((n_states, n_actions, n_states))
        transition /= transition.sum(axis=2, keepdims=True)
        if rho_floor * n_states > 1.0:
            raise ValueError(f"rho_floor {rho_floor} is infeasible for {n_states} states")
        rho = rho_floor + (1.0 - rho_floor * n_states) * rng.dirichlet(np.ones(n_states))
        rho /= rho.sum()
        reward = rng.random((n_states, n_actions))
        constraints = rng.random((n_constraints, n_states, n_actions))
        cmdp = cls(
            transition=transition,
            reward=reward,
            constraint_rewards=constraints,
            thresholds=np.zeros(n_constraints),
            discount=discount,
            initial_dist=rho,
            reward_bounds=(0.0, 1.0),
            name="random",
        )
        uniform = TabularPolicy.uniform(n_states, n_actions)
        return TabularCmdp(
            transition=cmdp.transition,
            reward=cmdp.reward,
            constraint_rewards=cmdp.constraint_rewards,
            thresholds=constraint_values(cmdp, uniform),
            discount=discount,
            initial_dist=cmdp.initial_dist,
            reward_bounds=(0.0, 1.0),
            name="random",
        )

    def to_document(self) -> "CmdpDocument":
        return CmdpDocument(
            name=self.name,
            n_states=self.n_states,
            n_actions=self.n_actions,
            gamma=self.discount,
            rho=self.initial_dist.tolist(),
            rewards=self.reward.ravel().tolist(),
            constraints=[
                ConstraintDocument(values=c.ravel().tolist(), threshold=float(b))
                for c, b in zip(self.constraint_rewards, self.thresholds)
            ],
            transition=self.transition.ravel().tolist(),
            reward_bounds=list(self.reward_bounds),  # type: ignore[arg-type]
        )

    @classmethod
    def from_document(cls, document: "CmdpDocument") -> "TabularCmdp":
        S, A = document.n_states, document.n_actions
        m = len(document.constraints)
        return cls(
            transition=np.asarray(document.transition).reshape(S, A, S),
            reward=np.asarray(document.rewards).reshape(S, A),
            constraint_rewards=np.asarray(
                [c.values for c in document.constraints], dtype=np.float64
            ).reshape(m, S, A),
            thresholds=np.asarray([c.threshold for c in document.constraints]),
            discount=document.gamma,
            initial_dist=np.asarray(document.rho),
            reward_bounds=(
                None
                if document.reward_bounds is None
                else (document.reward_bounds[0], document.reward_bounds[1])
            ),
            name=document.name,
        )

    def save_json(self, path: t.Union[str, Path]):
        with open(path, "w") as f:
            f.write(self.to_document().model_dump_json(indent=2))

    @classmethod
    def load_json(cls, path: t.Union[str, Path]) -> "TabularCmdp":
        with open(path, "r") as f:
            raw = f.read()
        try:
            document = CmdpDocument.model_validate_json(raw)
        except ValueError as e:
            raise InvalidCmdpError(f"cannot parse {path}: {e}") from e
        return cls.from_document(document)


class ConstraintDocument(BaseModel):
    values: t.List[float]
    threshold: float


class CmdpDocument(BaseModel):
    """
    Self-describing JSON form of a `TabularCmdp`. Arrays are flattened row-major:
    `rewards[s * A + a]`, `transition[(s * A + a) * S + s_next]`.
    """

    name: str = "cmdp"
    n_states: int = Field(gt=0)
    n_actions: int = Field(gt=0)
    gamma: float
    rho: t.List[float]
    rewards: t.List[float]
    constraints: t.List[ConstraintDocument] = Field(default_factory=list)
    transition: t.List[float]
    reward_bounds: t.Optional[t.List[float]] = None

    @model_validator(mode="after")
    def check_sizes(self) -> "CmdpDocument":
        S, A = self.n_states, self.n_actions
        if len(self.rho) != S:
            raise ValueError(f"rho has {len(self.rho)} entries, expected {S}")
        if len(self.rewards) != S * A:
            raise ValueError(f"rewards has {len(self.rewards)} entries, expected {S * A}")
        if len(self.transition) != S * A * S:
            raise ValueError(
                f"transition has {len(self.transition)} entries, expected {S * A * S}"
            )
        for i, c in enumerate(self.constraints):
            if len(c.values) != S * A:
                raise ValueError(
                    f"constraint {i} has {len(c.values)} entries, expected {S * A}"
                )
        if self.reward_bounds is not None and len(self.reward_bounds) != 2:
            raise ValueError("reward_bounds must be [r_lo, r_hi]")
        return self


@dataclass(frozen=True)
class TabularPolicy:
    """Row-stochastic table pi(a|s) of shape (S, A)."""

    probs: np.ndarray

    def __post_init__(self):
        try:
            probs = as_float_array(self.probs, "policy", 2)
        except ValueError as e:
            raise InvalidPolicyError(str(e)) from e
        if np.any(probs < 0):
            raise InvalidPolicyError(
                f"negative probability {probs.min():.3e} in policy table"
            )
        row_err = np.max(np.abs(probs.sum(axis=1) - 1.0))
        if row_err > STOCHASTIC_ATOL:
            raise InvalidPolicyError(f"rows must sum to 1 (max deviation {row_err:.3e})")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: t.Sequence[int], n_actions: int) -> "TabularPolicy":
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), np.asarray(actions)] = 1.0
        return cls(probs)

    @classmethod
    def random(
        cls, rng: np.random.Generator, n_states: int, n_actions: int
    ) -> "TabularPolicy":
        """Policy with rows drawn uniformly from the interior of the simplex."""
        probs = rng.dirichlet(np.ones(n_actions), size=n_states)
        return cls(probs / probs.sum(axis=1, keepdims=True))

    def total_variation(self, other: "TabularPolicy") -> np.ndarray:
        """Per-state total-variation distance to `other`."""
        return 0.5 * np.abs(self.probs - other.probs).sum(axis=1)


@dataclass(frozen=True)
class ValuePair:
    v: np.ndarray
    q: np.ndarray
    scalar_value: float


@dataclass(frozen=True)
class OccupancyMeasure:
    """
    Unnormalized discounted state-action visitation mu(s,a); total mass 1/(1-gamma).
    """

    mu: np.ndarray
    discount: float

    @property
    def state_marginal(self) -> np.ndarray:
        """Normalized state distribution d(s) = (1-gamma) sum_a mu(s,a)."""
        return (1.0 - self.discount) * self.mu.sum(axis=1)

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    def flow_residual(self, cmdp: TabularCmdp) -> np.ndarray:
        """Bellman flow residual per state; zero for every valid occupancy measure."""
        inflow = np.einsum("sat,sa->t", cmdp.transition, self.mu)
        return self.mu.sum(axis=1) - cmdp.initial_dist - cmdp.discount * inflow


def _check_shapes(cmdp: TabularCmdp, policy: TabularPolicy):
    if policy.probs.shape != (cmdp.n_states, cmdp.n_actions):
        raise InvalidPolicyError(
            f"policy has shape {policy.probs.shape}, model expects "
            f"{(cmdp.n_states, cmdp.n_actions)}"
        )


def policy_transition(cmdp: TabularCmdp, policy: TabularPolicy) -> np.ndarray:
    """State-to-state kernel P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
    _check_shapes(cmdp, policy)
    return np.einsum("sa,sat->st", policy.probs, cmdp.transition)


def _factorize(cmdp: TabularCmdp, policy: TabularPolicy):
    system = np.eye(cmdp.n_states) - cmdp.discount * policy_transition(cmdp, policy)
    return lu_factor(system)


def policy_evaluate(
    cmdp: TabularCmdp, policy: TabularPolicy, pseudo_reward: np.ndarray
) -> ValuePair:
    """
    Exact V, Q and V(rho) of `policy` for an arbitrary reward table, from a dense LU
    solve of (I - gamma P_pi) V = u_pi.
    """
    u = np.asarray(pseudo_reward, dtype=np.float64)
    if u.shape != (cmdp.n_states, cmdp.n_actions):
        raise ValueError(
            f"pseudo_reward has shape {u.shape}, expected {(cmdp.n_states, cmdp.n_actions)}"
        )
    if not np.all(np.isfinite(u)):
        raise ValueError("pseudo_reward contains non-finite entries")
    lu = _factorize(cmdp, policy)
    u_pi = np.einsum("sa,sa->s", policy.probs, u)
    v = lu_solve(lu, u_pi)
    q = u + cmdp.discount * np.einsum("sat,t->sa", cmdp.transition, v)
    return ValuePair(v=v, q=q, scalar_value=float(cmdp.initial_dist @ v))


def evaluate_rewards(
    cmdp: TabularCmdp, policy: TabularPolicy, rewards: np.ndarray
) -> np.ndarray:
    """
    V(rho) for a stack of reward tables of shape (k, S, A), sharing one factorization.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[0] == 0:
        return np.zeros(0)
    lu = _factorize(cmdp, policy)
    u_pi = np.einsum("sa,ksa->sk", policy.probs, rewards)
    v = lu_solve(lu, u_pi)
    return cmdp.initial_dist @ v


def constraint_values(cmdp: TabularCmdp, policy: TabularPolicy) -> np.ndarray:
    """Vector of V_{c_i}(rho)."""
    _check_shapes(cmdp, policy)
    return evaluate_rewards(cmdp, policy, cmdp.constraint_rewards)


def occupancy_measure(cmdp: TabularCmdp, policy: TabularPolicy) -> OccupancyMeasure:
    """mu(s,a) = [rho^T (I - gamma P_pi)^{-1}](s) * pi(a|s)."""
    lu = _factorize(cmdp, policy)
    visitation = lu_solve(lu, cmdp.initial_dist, trans=1)
    return OccupancyMeasure(
        mu=visitation[:, None] * policy.probs, discount=cmdp.discount
    )


def state_distribution(cmdp: TabularCmdp, policy: TabularPolicy) -> np.ndarray:
    """Normalized discounted state distribution d^pi (sums to one)."""
    lu = _factorize(cmdp, policy)
    return (1.0 - cmdp.discount) * lu_solve(lu, cmdp.initial_dist, trans=1)


def policy_from_occupancy(mu: OccupancyMeasure) -> TabularPolicy:
    """
    pi(a|s) = mu(s,a) / sum_a' mu(s,a'). States with marginal <= 1e-12 get the uniform
    row; any completion there leaves every value unchanged.
    """
    table = np.clip(np.asarray(mu.mu, dtype=np.float64), 0.0, None)
    n_actions = table.shape[1]
    marginal = table.sum(axis=1, keepdims=True)
    visited = marginal[:, 0] > ZERO_MARGINAL
    probs = np.full(table.shape, 1.0 / n_actions)
    probs[visited] = table[visited] / marginal[visited]
    return TabularPolicy(probs)


@dataclass(frozen=True)
class OptimalSolution:
    v: np.ndarray
    policy: TabularPolicy
    scalar_value: float
    iterations: int = field(default=0)


def value_iteration(
    cmdp: TabularCmdp,
    reward: np.ndarray,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> OptimalSolution:
    """
    Optimal values of the unconstrained MDP with reward table `reward`.

    Value iteration runs until successive iterates differ by at most `tol`; the
    greedy policy is then polished by exact policy iteration so the returned
    policy is optimal and its values are exact.
    """
    reward = np.asarray(reward, dtype=np.float64)
    gamma = cmdp.discount
    v = np.zeros(cmdp.n_states)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        q = reward + gamma * np.einsum("sat,t->sa", cmdp.transition, v)
        v_next = q.max(axis=1)
        delta = np.max(np.abs(v_next - v))
        v = v_next
        if delta <= tol:
            break
    else:
        logger.warning(
            "value iteration stopped after %d sweeps (last change %.3e)", max_iters, delta
        )

    actions = q.argmax(axis=1)
    for _ in range(cmdp.n_states * cmdp.n_actions + 1):
        policy = TabularPolicy.deterministic(actions, cmdp.n_actions)
        values = policy_evaluate(cmdp, policy, reward)
        best = values.q.max(axis=1)
        current = values.q[np.arange(cmdp.n_states), actions]
        improvable = best > current + 1e-12 * np.maximum(1.0, np.abs(best))
        if not np.any(improvable):
            break
        actions = np.where(improvable, values.q.argmax(axis=1), actions)
    logger.debug("value iteration converged in %d sweeps", iterations)
    return OptimalSolution(
        v=values.v,
        policy=policy,
        scalar_value=values.scalar_value,
        iterations=iterations,
    )


