"""
Constrained Cliff World.

    . . . . . . .
    . . . . . . .
    S C C C C C G

Moving into a cliff cell returns the agent to S with reward 0 and cost -1;
entering G pays +1 and G is absorbing. Moves off the grid leave the agent in
place. gamma = 0.9, b = -0.17 and the initial distribution is uniform.

The shortest route to G already avoids the cliff, so the constraint holds with
slack at the optimum and lambda* = 0. Deep Sea Treasure is the binding case.
"""

from __future__ import annotations

import typing as t

import numpy as np

from cmdp_alm.cmdp import TabularCmdp
from cmdp_alm.envs.grid import GridGeometry

ROWS, COLS = 3, 7
START = (2, 0)
GOAL = (2, 6)
CLIFF = tuple((2, col) for col in range(1, 6))
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
ACTION_NAMES = ("up", "right", "down", "left")

DISCOUNT = 0.9
THRESHOLD = -0.17
GOAL_REWARD = 1.0
FALL_COST = -1.0


def cliff_world_geometry() -> GridGeometry:
    return GridGeometry(
        rows=ROWS,
        cols=COLS,
        action_names=ACTION_NAMES,
        cells={"start": (START,), "goal": (GOAL,), "cliff": CLIFF},
    )


def cliff_world() -> t.Tuple[TabularCmdp, GridGeometry]:
    geometry = cliff_world_geometry()
    S, A = geometry.n_states, geometry.n_actions
    transition = np.zeros((S, A, S))
    reward = np.zeros((S, A))
    cost = np.zeros((S, A))
    start = geometry.state_of(*START)

    for s in range(S):
        cell = geometry.coords(s)
        kind = geometry.kind_of(cell)
        for a, (dr, dc) in enumerate(MOVES):
            if kind == "goal":
                transition[s, a, s] = 1.0
                continue
            if kind == "cliff":
                # only reachable through the initial distribution
                transition[s, a, start] = 1.0
                continue
            target = (cell[0] + dr, cell[1] + dc)
            if not geometry.contains(target):
                target = cell
            target_kind = geometry.kind_of(target)
            if target_kind == "cliff":
                transition[s, a, start] = 1.0
                cost[s, a] = FALL_COST
            else:
                transition[s, a, geometry.state_of(*target)] = 1.0
                if target_kind == "goal":
                    reward[s, a] = GOAL_REWARD

    cmdp = TabularCmdp(
        transition=transition,
        reward=reward,
        constraint_rewards=cost[None],
        thresholds=np.array([THRESHOLD]),
        discount=DISCOUNT,
        initial_dist=np.full(S, 1.0 / S),
        reward_bounds=(FALL_COST, GOAL_REWARD),
        name="cliff-world",
    )
    return cmdp, geometry
