"""
Constrained Deep Sea Treasure.

    S . . . .
    . . . . .
    . M . . .
    . . M . .
    T . . . .

Every action descends one row: action 0 keeps the column, action 1 also moves one
column right and costs 0.02 reward (at the right edge it only descends, free of
charge). Entering T pays +1, entering a landmine M costs -2, and the bottom row
is absorbing. gamma = 0.9, b = -0.1 and the initial distribution is uniform.
"""

from __future__ import annotations

import typing as t

import numpy as np

from cmdp_alm.cmdp import TabularCmdp
from cmdp_alm.envs.grid import GridGeometry

SIZE = 5
START = (0, 0)
TREASURE = (4, 0)
LANDMINES = ((2, 1), (3, 2))
ACTION_NAMES = ("down", "down-right")

DISCOUNT = 0.9
THRESHOLD = -0.1
TREASURE_REWARD = 1.0
RIGHT_PENALTY = -0.02
LANDMINE_COST = -2.0


def deep_sea_treasure_geometry() -> GridGeometry:
    return GridGeometry(
        rows=SIZE,
        cols=SIZE,
        action_names=ACTION_NAMES,
        cells={"start": (START,), "treasure": (TREASURE,), "landmine": LANDMINES},
    )


def deep_sea_treasure() -> t.Tuple[TabularCmdp, GridGeometry]:
    geometry = deep_sea_treasure_geometry()
    S, A = geometry.n_states, geometry.n_actions
    transition = np.zeros((S, A, S))
    reward = np.zeros((S, A))
    cost = np.zeros((S, A))

    for s in range(S):
        row, col = geometry.coords(s)
        for a in range(A):
            if row == SIZE - 1:
                transition[s, a, s] = 1.0
                continue
            moves_right = a == 1 and col < SIZE - 1
            target = (row + 1, col + 1 if moves_right else col)
            transition[s, a, geometry.state_of(*target)] = 1.0
            if moves_right:
                reward[s, a] += RIGHT_PENALTY
            kind = geometry.kind_of(target)
            if kind == "treasure":
                reward[s, a] += TREASURE_REWARD
            elif kind == "landmine":
                cost[s, a] = LANDMINE_COST

    cmdp = TabularCmdp(
        transition=transition,
        reward=reward,
        constraint_rewards=cost[None],
        thresholds=np.array([THRESHOLD]),
        discount=DISCOUNT,
        initial_dist=np.full(S, 1.0 / S),
        reward_bounds=(LANDMINE_COST, TREASURE_REWARD),
        name="deep-sea-treasure",
    )
    return cmdp, geometry
