"""Continuous-state GridWorld on the unit square.

Episodes start uniformly in [0, 0.05]^2 and end in the goal square
[0.95, 1]^2; every step costs -1. A rectangular obstacle (x in [0.45, 0.55],
y in [0, 0.8]) forces a detour over the top: any move whose endpoint lands
inside the obstacle is cancelled and the agent stays put. Moves are 0.05
along an axis for the four-action variant, or 0.05 * a for the continuous
variant with a in [-1, 1]^2. States are clipped to the unit square.
"""

from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec

WALL_X = (0.45, 0.55)
WALL_Y_TOP = 0.8
GOAL_LOW = 0.95
STEP = 0.05

# action order: up, down, left, right
_MOVES = np.array([[0.0, STEP], [0.0, -STEP], [-STEP, 0.0], [STEP, 0.0]])


def in_wall(s) -> bool:
    return WALL_X[0] <= s[0] <= WALL_X[1] and s[1] <= WALL_Y_TOP


def in_goal(s) -> bool:
    return s[0] >= GOAL_LOW and s[1] >= GOAL_LOW


class GridWorld(Env):
    def __init__(self):
        self.spec = EnvSpec(
            tag="gridworld",
            state_dim=2,
            gamma=0.99,
            episode_cap=2000,
            n_actions=4,
            state_low=np.zeros(2),
            state_high=np.ones(2),
        )

    def initial_state(self, rng):
        return rng.uniform(0.0, STEP, size=2)

    def dynamics(self, s, a, rng=None):
        a = self._check_discrete_action(a)
        proposed = np.clip(s + _MOVES[a], 0.0, 1.0)
        return s.copy() if in_wall(proposed) else proposed

    def is_terminal(self, s):
        return in_goal(s)

    def reward(self, s, a, s_next, terminal):
        return -1.0


class ContinuousActionGridWorld(GridWorld):
    """Same square, goal, and wall; actions are displacements in [-1, 1]^2."""

    def __init__(self):
        self.spec = EnvSpec(
            tag="gridworld-cont-action",
            state_dim=2,
            gamma=0.99,
            episode_cap=2000,
            action_dim=2,
            state_low=np.zeros(2),
            state_high=np.ones(2),
        )

    def dynamics(self, s, a, rng=None):
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        proposed = np.clip(s + STEP * a, 0.0, 1.0)
        return s.copy() if in_wall(proposed) else proposed
