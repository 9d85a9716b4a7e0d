from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from cmdp_alm.augmented_lagrangian import (
    AlmIteration,
    AlmTrace,
    BudgetMode,
    DualState,
    al_gradient,
    al_value,
    al_value_from_values,
    cmdp_rate_constants,
    dual_update,
    dual_variable_bound,
    inner_budget,
    penalty_weights,
    pseudo_reward,
    pseudo_reward_bound,
    reward_and_constraint_values,
    run_alm,
    slack,
    smoothness_constant,
)
from cmdp_alm.cmdp import (
    TabularCmdp,
    TabularPolicy,
    constraint_values,
    evaluate_rewards,
    policy_evaluate,
)
from cmdp_alm.exceptions import SlaterConditionError
from cmdp_alm.lp import optimal_solution
from cmdp_alm.solvers.pqa import PqaConfig, PqaOracle


def unit_interval_cmdp(discount: float, n_actions: int) -> TabularCmdp:
    """Two states, one constraint with b = 0 and rewards spanning [0, 1]."""
    n_states = 2
    transition = np.full((n_states, n_actions, n_states), 1.0 / n_states)
    reward = np.zeros((n_states, n_actions))
    reward[0, 0] = 1.0
    return TabularCmdp(
        transition=transition,
        reward=reward,
        constraint_rewards=np.ones((1, n_states, n_actions)),
        thresholds=np.zeros(1),
        discount=discount,
        initial_dist=np.full(n_states, 1.0 / n_states),
        reward_bounds=(0.0, 1.0),
    )


def interior_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    random = TabularPolicy.random(rng, n_states, n_actions).probs
    return TabularPolicy(0.5 * random + 0.5 / n_actions)


# objective and closed forms


def test_al_value_equals_reward_value_when_multipliers_vanish_and_constraints_hold():
    dual = DualState(lam=[0.0, 0.0], beta=3.0)
    value = al_value_from_values(1.25, np.array([0.5, 2.0]), np.array([0.0, 1.0]), dual)
    assert value == 1.25


def test_al_value_quadratic_penalty_on_violation():
    # g = -0.5 with lambda = 0 and beta = 2 costs (beta / 2) g^2 = 0.25
    dual = DualState(lam=[0.0], beta=2.0)
    value = al_value_from_values(1.0, np.array([0.5]), np.array([1.0]), dual)
    assert value == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("beta", [1e-2, 1e-3, 1e-4])
def test_al_value_approaches_plain_lagrangian_as_beta_vanishes(beta):
    lam = np.array([0.7, 1.3])
    v_c = np.array([0.2, 0.9])
    b = np.array([0.5, 0.1])
    excess = v_c - b
    lagrangian = al_value_from_values(2.0, v_c, b, DualState(lam=lam, beta=0.0))
    assert lagrangian == pytest.approx(2.0 + lam @ excess, abs=1e-15)
    augmented = al_value_from_values(2.0, v_c, b, DualState(lam=lam, beta=beta))
    assert abs(augmented - lagrangian) <= 0.5 * beta * float(excess @ excess) + 1e-12


@pytest.mark.parametrize(
    "excess, lam, beta",
    [(-1.0, 0.5, 2.0), (0.3, 1.0, 1.0), (2.0, 1.0, 1.0), (0.0, 0.0, 5.0), (0.1, 4.0, 0.5)],
)
def test_al_value_matches_maximization_over_slack(excess, lam, beta):
    def lagrangian_with_slack(z: float) -> float:
        return lam * (excess - z) - 0.5 * beta * (excess - z) ** 2

    xi = slack(excess, 0.0, lam, beta)
    closed_form = al_value_from_values(0.0, np.array([excess]), np.zeros(1), DualState([lam], beta))
    assert closed_form == pytest.approx(lagrangian_with_slack(xi), abs=1e-12)
    grid = np.linspace(0.0, abs(excess) + lam / beta + 1.0, 2001)
    assert max(lagrangian_with_slack(z) for z in grid) <= closed_form + 1e-12


def test_slack_examples():
    assert slack(5.0, 0.0, 2.0, 1.0) == 3.0
    assert slack(-1.0, 0.0, 2.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        slack(1.0, 0.0, 1.0, 0.0)


def test_al_value_is_concave_along_occupancy_mixtures(random_cmdp):
    cmdp = random_cmdp(seed=4, n_constraints=2)
    rng = np.random.default_rng(1)
    dual = DualState(lam=[0.4, 1.1], beta=5.0)
    stacked = np.concatenate([cmdp.reward[None], cmdp.constraint_rewards], axis=0)
    from cmdp_alm.cmdp import occupancy_measure

    mu_a = occupancy_measure(cmdp, TabularPolicy.random(rng, cmdp.n_states, cmdp.n_actions)).mu
    mu_b = occupancy_measure(cmdp, TabularPolicy.random(rng, cmdp.n_states, cmdp.n_actions)).mu

    def objective(mu):
        values = np.einsum("sa,ksa->k", mu, stacked)
        return al_value_from_values(values[0], values[1:], cmdp.thresholds, dual)

    for weight in np.linspace(0.0, 1.0, 11):
        mixed = weight * mu_a + (1.0 - weight) * mu_b
        assert objective(mixed) >= weight * objective(mu_a) + (1 - weight) * objective(mu_b) - 1e-12


def test_pseudo_reward_drops_satisfied_constraints(random_cmdp):
    cmdp = random_cmdp(seed=2)
    policy = TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
    # V_c - b = 1 >= lambda / beta = 0.5
    shifted = cmdp.with_thresholds(constraint_values(cmdp, policy) - 1.0)
    gamma_table = pseudo_reward(shifted, policy, DualState(lam=[0.5], beta=1.0))
    np.testing.assert_array_equal(gamma_table, shifted.reward)


def test_pseudo_reward_weights_violated_constraint(random_cmdp):
    cmdp = random_cmdp(seed=3)
    policy = TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
    # beta = 2, lambda = 0 and V_c - b = -0.5 gives weight 1
    shifted = cmdp.with_thresholds(constraint_values(cmdp, policy) + 0.5)
    gamma_table = pseudo_reward(shifted, policy, DualState(lam=[0.0], beta=2.0))
    np.testing.assert_allclose(
        gamma_table, shifted.reward + shifted.constraint_rewards[0], atol=1e-12
    )


def test_penalty_weights_are_non_negative():
    dual = DualState(lam=[1.0, 0.0, 2.0], beta=4.0)
    weights = penalty_weights(np.array([3.0, -1.0, 0.5]), np.zeros(3), dual)
    np.testing.assert_array_equal(weights, [0.0, 4.0, 0.0])


@pytest.mark.parametrize("seed", range(20))
def test_al_gradient_matches_finite_differences(random_cmdp, seed):
    cmdp = random_cmdp(seed=seed, n_states=4, n_actions=3, n_constraints=2)
    rng = np.random.default_rng(100 + seed)
    policy = interior_policy(rng, cmdp.n_states, cmdp.n_actions)
    dual = DualState(lam=rng.uniform(0.0, 2.0, size=2), beta=10.0)
    grad = al_gradient(cmdp, policy, dual)
    h = 1e-6
    for _ in range(3):
        direction = rng.standard_normal(policy.probs.shape)
        direction -= direction.mean(axis=1, keepdims=True)
        forward = al_value(cmdp, TabularPolicy(policy.probs + h * direction), dual)
        backward = al_value(cmdp, TabularPolicy(policy.probs - h * direction), dual)
        finite_difference = (forward - backward) / (2 * h)
        analytic = float(np.sum(grad * direction))
        assert abs(finite_difference - analytic) <= 1e-5 * max(1.0, abs(analytic))


# dual update


def test_dual_update_examples():
    dual = DualState(lam=[2.0], beta=1.0)
    assert dual_update(dual, np.array([5.0]), np.zeros(1)).lam[0] == 1.0
    assert dual_update(dual, np.array([-1.0]), np.zeros(1)).lam[0] == 2.5


def test_dual_update_advances_outer_iteration_and_keeps_schedule():
    dual = DualState(lam=[0.0, 1.0], beta=2.0, outer_iter=3, sigma=0.5)
    updated = dual_update(dual, np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    assert updated.outer_iter == 4
    assert updated.sigma == 0.5
    assert updated.eps == pytest.approx(0.5 / 16)
    assert np.all(updated.lam >= 0.0)


@pytest.mark.parametrize("excess", [-3.0, -0.2, 0.0, 0.4, 0.5, 0.6, 7.0])
def test_dual_update_two_case_form_matches_slack_form(excess):
    lam, beta = 1.0, 2.0
    dual = DualState(lam=[lam], beta=beta)
    expected = lam - (beta / 2) * (excess - slack(excess, 0.0, lam, beta))
    assert dual_update(dual, np.array([excess]), np.zeros(1)).lam[0] == pytest.approx(expected)


def test_dual_state_validation():
    with pytest.raises(ValueError):
        DualState(lam=[np.nan], beta=1.0)
    with pytest.raises(ValueError):
        DualState(lam=[0.0], beta=-1.0)
    with pytest.raises(ValueError):
        DualState(lam=[0.0], beta=1.0, outer_iter=0)
    with pytest.raises(ValueError):
        dual_update(DualState(lam=[0.0], beta=0.0), np.zeros(1), np.zeros(1))


def test_tolerance_schedule():
    dual = DualState.initial(1, beta=1.0)
    assert [dual.eps_at(t) for t in (1, 2, 3)] == [1.0, 0.25, 1.0 / 9]


# constants


def test_smoothness_constant_examples():
    cmdp = unit_interval_cmdp(discount=0.5, n_actions=2)
    assert smoothness_constant(cmdp, DualState(lam=[0.0], beta=1.0)) == pytest.approx(56.0)

    wide = unit_interval_cmdp(discount=0.9, n_actions=4).without_constraints()
    # iota = 2 gamma A / (1 - gamma)^3
    assert smoothness_constant(wide, DualState(lam=[], beta=1.0)) == pytest.approx(7200.0)


def test_smoothness_constant_grows_with_beta_and_multipliers():
    cmdp = unit_interval_cmdp(discount=0.5, n_actions=2)
    base = smoothness_constant(cmdp, DualState(lam=[0.0], beta=1.0))
    assert smoothness_constant(cmdp, DualState(lam=[0.0], beta=2.0)) > base
    assert smoothness_constant(cmdp, DualState(lam=[1.0], beta=1.0)) > base


def test_pseudo_reward_bound_example():
    cmdp = unit_interval_cmdp(discount=0.5, n_actions=2)
    dual = DualState.initial(1, beta=1.0, sigma=1.0)
    np.testing.assert_allclose(dual_variable_bound(cmdp, np.array([1.0])), [2.0])
    expected = 1.0 + math.sqrt(4.0 + math.pi**2 / 3.0) + 2.0
    assert pseudo_reward_bound(cmdp, dual, np.array([1.0])) == pytest.approx(expected)


def test_dual_variable_bound_requires_slater_margin():
    cmdp = unit_interval_cmdp(discount=0.5, n_actions=2)
    with pytest.raises(SlaterConditionError):
        dual_variable_bound(cmdp, np.array([0.0]))


def test_inner_budget():
    assert inner_budget(1.0, 1.0, 1.0, 0.0) == 64
    assert inner_budget(1.0, 2.0, 1.0, 0.0) == 32
    with pytest.raises(ValueError, match="rho_min"):
        inner_budget(1.0, 1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        inner_budget(1.0, 0.0, 1.0, 0.5)


# outer loop


def test_run_alm_rejects_bad_arguments(random_cmdp):
    cmdp = random_cmdp()
    oracle = PqaOracle()
    with pytest.raises(ValueError):
        run_alm(cmdp, oracle, T=0, beta=1.0, inner_iters=1)
    with pytest.raises(ValueError):
        run_alm(cmdp, oracle, T=1, beta=0.0, inner_iters=1)
    with pytest.raises(ValueError):
        run_alm(cmdp, oracle, T=1, beta=1.0, mode=BudgetMode.FIXED)


def test_run_alm_with_zero_inner_steps_returns_initial_policy(random_cmdp):
    cmdp = random_cmdp(seed=5)
    policy, trace = run_alm(cmdp, PqaOracle(), T=3, beta=1.0, inner_iters=0)
    np.testing.assert_array_equal(
        policy.probs, TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions).probs
    )
    assert [it.cum_grads for it in trace.iterations] == [0, 0, 0]


def test_run_alm_keeps_multipliers_at_zero_for_vacuous_constraints(random_cmdp):
    cmdp = random_cmdp(seed=6)
    cmdp = cmdp.with_thresholds([-100.0])
    policy, trace = run_alm(
        cmdp, PqaOracle(PqaConfig(step_size=1.0)), T=5, beta=10.0, inner_iters=20
    )
    assert np.all(trace.multipliers == 0.0)
    assert trace.multipliers.shape == (6, 1)
    values = [it.v_r for it in trace.iterations]
    assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))


def test_run_alm_trace_bookkeeping(random_cmdp):
    cmdp = random_cmdp(seed=7, n_constraints=2)
    _, trace = run_alm(cmdp, PqaOracle(), T=4, beta=2.0, sigma=0.5, inner_iters=7)
    assert [it.iter for it in trace.iterations] == [1, 2, 3, 4]
    assert [it.cum_grads for it in trace.iterations] == [7, 14, 21, 28]
    assert [it.eps_t for it in trace.iterations] == [0.5 / t**2 for t in range(1, 5)]
    assert trace.final_dual is not None and trace.final_dual.outer_iter == 5
    np.testing.assert_array_equal(trace.iterations[0].lam, [0.0, 0.0])


def test_trace_rejects_decreasing_gradient_counts():
    trace = AlmTrace(beta=1.0, sigma=1.0, mode=BudgetMode.FIXED)
    row = dict(eps_t=1.0, lam=np.zeros(1), v_r=0.0, v_c=np.zeros(1), al_value=0.0)
    trace.append(AlmIteration(iter=1, inner_grads=5, cum_grads=5, max_pseudo_reward=1.0, **row))
    with pytest.raises(ValueError):
        trace.append(
            AlmIteration(iter=2, inner_grads=0, cum_grads=4, max_pseudo_reward=1.0, **row)
        )


def test_trace_csv_keeps_full_precision(tmp_path, random_cmdp):
    cmdp = random_cmdp(seed=8)
    _, trace = run_alm(cmdp, PqaOracle(), T=3, beta=1.0, inner_iters=5)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with open(path, newline="") as csvfile:
        rows = list(csv.DictReader(csvfile))
    assert list(rows[0]) == [
        "iter", "eps_t", "lambda_0", "v_r", "v_c_0", "al_value", "inner_grads", "cum_grads"
    ]
    for row, it in zip(rows, trace.iterations):
        assert float(row["v_r"]) == it.v_r
        assert float(row["lambda_0"]) == it.lam[0]
        assert int(row["cum_grads"]) == it.cum_grads


def test_trace_to_pandas(random_cmdp):
    pytest.importorskip("pandas")
    _, trace = run_alm(random_cmdp(seed=8), PqaOracle(), T=3, beta=1.0, inner_iters=5)
    df = trace.to_pandas()
    assert list(df.columns) == trace.fieldnames()
    assert df["cum_grads"].tolist() == [5, 10, 15]


@pytest.mark.slow
def test_theory_budget_keeps_multipliers_near_optimum(random_cmdp):
    cmdp = random_cmdp(seed=11, n_states=2, n_actions=2, discount=0.1, rho_floor=0.4)
    report = optimal_solution(cmdp)
    beta, sigma, T = 1.0, 4.0, 3
    _, trace = run_alm(
        cmdp,
        PqaOracle(PqaConfig(step_size="auto")),
        T=T,
        beta=beta,
        sigma=sigma,
        mode=BudgetMode.THEORY,
        zeta=report.zeta,
    )
    constants = cmdp_rate_constants(cmdp, beta, sigma, report.lambda_star, report.v_star)
    lambda_star_norm = float(np.linalg.norm(report.lambda_star))
    for t, lam in enumerate(trace.multipliers, start=1):
        bound = constants.dual_distance_bound(t, lambda_star_norm)
        assert np.linalg.norm(lam - report.lambda_star) <= bound + 1e-6

    dual = DualState.initial(1, beta=beta, sigma=sigma)
    for it in trace.iterations:
        smoothness = smoothness_constant(cmdp, DualState(it.lam, beta, it.iter, sigma))
        assert it.inner_grads == inner_budget(
            smoothness, dual.eps_at(it.iter), cmdp.rho_min, cmdp.discount
        )
        assert it.max_pseudo_reward <= trace.pseudo_reward_bound
        assert "pseudo_reward_above_bound" not in it.flags


def test_values_share_one_factorization(random_cmdp):
    cmdp = random_cmdp(seed=9, n_constraints=3)
    policy = TabularPolicy.uniform(cmdp.n_states, cmdp.n_actions)
    stacked = evaluate_rewards(cmdp, policy, cmdp.constraint_rewards)
    np.testing.assert_allclose(stacked, constraint_values(cmdp, policy), rtol=0, atol=0)


def test_reward_and_constraint_values(random_cmdp):
    cmdp = random_cmdp(seed=10, n_constraints=2)
    policy = TabularPolicy.random(np.random.default_rng(10), cmdp.n_states, cmdp.n_actions)
    v_r, v_c = reward_and_constraint_values(cmdp, policy)
    assert v_r == pytest.approx(policy_evaluate(cmdp, policy, cmdp.reward).scalar_value, abs=1e-12)
    np.testing.assert_allclose(v_c, constraint_values(cmdp, policy), atol=1e-12)
