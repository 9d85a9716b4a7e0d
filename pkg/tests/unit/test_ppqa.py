from __future__ import annotations

import numpy as np
import pytest

from cmdp_alm.augmented_lagrangian import DualState, InnerBudget
from cmdp_alm.cmdp import TabularPolicy, state_distribution
from cmdp_alm.solvers.features import FeatureMap, normalize_rows, one_hot_features
from cmdp_alm.solvers.pqa import pqa_step
from cmdp_alm.solvers.ppqa import (
    LogLinearPolicy,
    PpqaConfig,
    PpqaOracle,
    log_linear_probs,
    ppqa_update,
    solve_subproblem_ppqa,
    surrogate_loss_and_grad,
    weighted_entropy,
)


@pytest.fixture
def dense_features() -> FeatureMap:
    rng = np.random.default_rng(0)
    return FeatureMap(normalize_rows(rng.normal(size=(4, 3, 10))))


@pytest.fixture
def surrogate_inputs(dense_features):
    rng = np.random.default_rng(1)
    weights = rng.dirichlet(np.ones(4))
    target = TabularPolicy.random(rng, 4, 3)
    return weights, target, dense_features


def test_zero_parameters_give_uniform_policy(dense_features):
    probs = log_linear_probs(LogLinearPolicy.zeros(dense_features)).probs
    np.testing.assert_allclose(probs, 1.0 / 3, atol=1e-15)


def test_softmax_ignores_action_independent_directions():
    rng = np.random.default_rng(2)
    phi = 0.5 * normalize_rows(rng.normal(size=(3, 2, 4)))
    phi[:, :, 0] = 0.3
    features = FeatureMap(phi)
    theta = rng.normal(size=4)
    shifted = theta + 7.0 * np.eye(4)[0]
    np.testing.assert_allclose(
        log_linear_probs(LogLinearPolicy(theta, features)).probs,
        log_linear_probs(LogLinearPolicy(shifted, features)).probs,
        atol=1e-12,
    )


def test_one_hot_parameters_recover_any_interior_policy():
    rng = np.random.default_rng(3)
    target = TabularPolicy.random(rng, 5, 3)
    theta = (np.log(target.probs) + rng.normal(size=(5, 1))).reshape(-1)
    policy = LogLinearPolicy(theta, one_hot_features(5, 3))
    np.testing.assert_allclose(log_linear_probs(policy).probs, target.probs, atol=1e-12)


def test_log_linear_policy_validation(dense_features):
    with pytest.raises(ValueError):
        LogLinearPolicy(np.zeros(3), dense_features)
    with pytest.raises(ValueError):
        LogLinearPolicy(np.full(10, np.nan), dense_features)


def test_surrogate_is_stationary_at_the_target():
    rng = np.random.default_rng(4)
    target = TabularPolicy.random(rng, 4, 2)
    weights = rng.dirichlet(np.ones(4))
    policy = LogLinearPolicy(np.log(target.probs).reshape(-1), one_hot_features(4, 2))
    loss, grad = surrogate_loss_and_grad(weights, target, policy)
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)
    assert loss == pytest.approx(weighted_entropy(weights, target), abs=1e-12)


def test_surrogate_gradient_matches_finite_differences(surrogate_inputs):
    weights, target, features = surrogate_inputs
    rng = np.random.default_rng(5)
    theta = rng.normal(size=10)
    _, grad = surrogate_loss_and_grad(weights, target, LogLinearPolicy(theta, features))
    h = 1e-5
    for j in range(10):
        step = h * np.eye(10)[j]
        forward, _ = surrogate_loss_and_grad(weights, target, LogLinearPolicy(theta + step, features))
        backward, _ = surrogate_loss_and_grad(weights, target, LogLinearPolicy(theta - step, features))
        assert (forward - backward) / (2 * h) == pytest.approx(grad[j], abs=1e-6)


def test_surrogate_is_convex_and_one_smooth(surrogate_inputs):
    weights, target, features = surrogate_inputs
    rng = np.random.default_rng(6)

    def loss_and_grad(theta):
        return surrogate_loss_and_grad(weights, target, LogLinearPolicy(theta, features))

    for _ in range(50):
        first, second = rng.normal(scale=3.0, size=(2, 10))
        loss_first, grad_first = loss_and_grad(first)
        loss_second, grad_second = loss_and_grad(second)
        loss_mid, _ = loss_and_grad(0.5 * (first + second))
        assert loss_mid <= 0.5 * (loss_first + loss_second) + 1e-10
        assert np.linalg.norm(grad_first - grad_second) <= np.linalg.norm(first - second) + 1e-12


def test_zero_surrogate_steps_keep_parameters(random_cmdp, dense_features):
    cmdp = random_cmdp(seed=0, n_states=4, n_actions=3)
    policy = LogLinearPolicy(np.random.default_rng(7).normal(size=10), dense_features)
    updated, audit = ppqa_update(cmdp, DualState.initial(1, beta=1.0), policy, 0.5, 0, 1.0)
    np.testing.assert_array_equal(updated.theta, policy.theta)
    assert len(audit.losses) == 1
    assert not audit.diverged


def test_surrogate_losses_decrease_with_unit_step(random_cmdp, dense_features):
    cmdp = random_cmdp(seed=1, n_states=4, n_actions=3)
    policy = LogLinearPolicy.zeros(dense_features)
    _, audit = ppqa_update(cmdp, DualState(lam=[0.5], beta=2.0), policy, 1.0, 40, 1.0)
    assert len(audit.losses) == 41
    assert all(b <= a + 1e-12 for a, b in zip(audit.losses, audit.losses[1:]))
    assert not audit.diverged
    assert audit.excess_loss >= -1e-12


def test_one_hot_update_reproduces_tabular_step(random_cmdp):
    cmdp = random_cmdp(seed=2, n_states=3, n_actions=2, discount=0.5, rho_floor=0.2)
    features = one_hot_features(3, 2)
    dual = DualState(lam=[0.3], beta=1.0)
    policy = LogLinearPolicy.zeros(features)
    eta = 0.05

    updated, audit = ppqa_update(cmdp, dual, policy, eta, 2000, 1.0)
    target = pqa_step(cmdp, log_linear_probs(policy), dual, eta)
    distance = log_linear_probs(updated).total_variation(target)
    assert np.all(distance <= 1e-4)
    d = state_distribution(cmdp, log_linear_probs(policy))
    assert audit.entropy_floor == pytest.approx(weighted_entropy(d, target))
    assert audit.excess_loss <= 1e-8


def test_zero_iterations_return_warm_start(random_cmdp, dense_features):
    cmdp = random_cmdp(seed=3, n_states=4, n_actions=3)
    warm = LogLinearPolicy(np.random.default_rng(8).normal(size=10), dense_features)
    result = solve_subproblem_ppqa(
        cmdp, DualState.initial(1, beta=1.0), warm, PpqaConfig(max_iters=0)
    )
    assert result.state is warm
    assert result.grad_evals == 0
    np.testing.assert_array_equal(result.policy.probs, log_linear_probs(warm).probs)


def test_config_validation():
    with pytest.raises(ValueError):
        PpqaConfig(step_size=-1.0)
    with pytest.raises(ValueError):
        PpqaConfig(surrogate_steps=-1)
    with pytest.raises(ValueError):
        PpqaConfig(surrogate_step_size=0.0)
    with pytest.raises(ValueError):
        PpqaConfig(step_size="tuned")


def test_oracle_counts_outer_updates(random_cmdp, dense_features):
    cmdp = random_cmdp(seed=4, n_states=4, n_actions=3)
    oracle = PpqaOracle(dense_features, PpqaConfig(step_size=0.5, surrogate_steps=5))
    assert oracle.name == "ppqa-alm"
    np.testing.assert_array_equal(oracle.initial_state(cmdp).theta, np.zeros(10))
    start = oracle.initial_state(cmdp, np.random.default_rng(5))
    np.testing.assert_array_equal(
        start.theta, oracle.initial_state(cmdp, np.random.default_rng(5)).theta
    )
    result = oracle.solve(
        cmdp, DualState.initial(1, beta=1.0), start, InnerBudget(num_iters=4, eps=1.0, smoothness=1.0)
    )
    assert result.grad_evals == 4
    assert isinstance(result.state, LogLinearPolicy)
    assert result.flags == []
