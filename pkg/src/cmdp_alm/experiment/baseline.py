"""
NPG-PD baseline: softmax natural policy gradient on the Lagrangian
V_r + sum_i lambda_i (V_ci - b_i), alternated with projected dual descent.

This is the package's own rendition of the primal-dual baseline; its results are
labelled "npg-pd-baseline" everywhere.
"""

from __future__ import annotations

import logging
import typing as t

import numpy as np
from scipy.special import softmax

from cmdp_alm.augmented_lagrangian import (
    AlmIteration,
    AlmTrace,
    BudgetMode,
    DualState,
    al_value_from_values,
    reward_and_constraint_values,
)
from cmdp_alm.cmdp import (
    TabularCmdp,
    TabularPolicy,
    policy_evaluate,
)

logger = logging.getLogger(__name__)


def npg_step(
    cmdp: TabularCmdp, policy: TabularPolicy, reward: np.ndarray, eta: float
) -> TabularPolicy:
    """
    pi'(a|s) proportional to pi(a|s) exp(eta / (1 - gamma) * Q(s, a)).
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    q = policy_evaluate(cmdp, policy, reward).q
    with np.errstate(divide="ignore"):
        logits = np.log(policy.probs) + (eta / (1.0 - cmdp.discount)) * q
    return TabularPolicy(softmax(logits, axis=1))


def npg_pd_baseline(
    cmdp: TabularCmdp,
    T: int,
    primal_eta: float,
    dual_eta: float,
    initial_policy: t.Optional[TabularPolicy] = None,
) -> t.Tuple[TabularPolicy, AlmTrace]:
    """
    T primal-dual iterations from lambda = 0. The dual step uses the constraint
    values of pi_t, the same iterate the primal step differentiates at.

    The trace uses the ALM schema: row t holds lambda_t, the values of pi_{t+1} and
    the Lagrangian L(pi_{t+1}, lambda_t); every step is one gradient evaluation.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if primal_eta <= 0 or dual_eta <= 0:
        raise ValueError(
            f"step sizes must be positive, got primal {primal_eta} and dual {dual_eta}"
        )
    policy = initial_policy or TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
    lam = np.zeros(cmdp.n_constraints)
    trace = AlmTrace(beta=0.0, sigma=1.0, mode=BudgetMode.FIXED)
    _, v_c = reward_and_constraint_values(cmdp, policy)
    for step in range(1, T + 1):
        reward = cmdp.reward + np.tensordot(lam, cmdp.constraint_rewards, axes=1)
        next_policy = npg_step(cmdp, policy, reward, primal_eta)
        next_v_r, next_v_c = reward_and_constraint_values(cmdp, next_policy)
        trace.append(
            AlmIteration(
                iter=step,
                eps_t=0.0,
                lam=lam,
                v_r=next_v_r,
                v_c=next_v_c,
                al_value=al_value_from_values(
                    next_v_r, next_v_c, cmdp.thresholds, DualState(lam, beta=0.0)
                ),
                inner_grads=1,
                cum_grads=step,
                max_pseudo_reward=float(np.max(reward)),
            )
        )
        lam = np.maximum(lam - dual_eta * (v_c - cmdp.thresholds), 0.0)
        policy, v_c = next_policy, next_v_c
    trace.final_dual = DualState(lam, beta=0.0, outer_iter=T + 1)
    logger.info(
        "npg-pd-baseline finished %d iterations, V_r=%.6g lambda=%s",
        T,
        trace.iterations[-1].v_r,
        lam,
    )
    return policy, trace
