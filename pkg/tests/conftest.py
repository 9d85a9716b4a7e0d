from __future__ import annotations

import numpy as np
import pytest

from cmdp_alm.cmdp import TabularCmdp


def pytest_configure(config):
    """
    configure pytest
    """
    # Extra Pytest Markers
    # add `e2e`
    config.addinivalue_line(
        "markers",
        "e2e: End-to-end reproductions of the benchmark results",
    )
    # add `slow`
    config.addinivalue_line(
        "markers",
        "slow: Tests that take more than a few seconds",
    )


@pytest.fixture
def random_cmdp():
    """Factory for seeded random CMDPs with rewards and costs in [0, 1]."""

    def _make(
        seed: int = 0,
        n_states: int = 4,
        n_actions: int = 3,
        n_constraints: int = 1,
        discount: float = 0.9,
        rho_floor: float = 0.0,
    ) -> TabularCmdp:
        rng = np.random.default_rng(seed)
        return TabularCmdp.random(
            rng,
            n_states=n_states,
            n_actions=n_actions,
            n_constraints=n_constraints,
            discount=discount,
            rho_floor=rho_floor,
        )

    return _make


@pytest.fixture
def two_state_mdp() -> TabularCmdp:
    """
    Unconstrained 2-state, 2-action MDP with gamma = 0.5 and uniform rho.
    Action 1 moves to the other state; state 1 pays more.
    """
    transition = np.array(
        [
            [[1.0, 0.0], [0.0, 1.0]],
            [[0.0, 1.0], [1.0, 0.0]],
        ]
    )
    reward = np.array([[0.0, 0.2], [1.0, 0.5]])
    return TabularCmdp(
        transition=transition,
        reward=reward,
        constraint_rewards=np.zeros((0, 2, 2)),
        thresholds=np.zeros(0),
        discount=0.5,
        initial_dist=np.array([0.5, 0.5]),
        name="two-state",
    )
