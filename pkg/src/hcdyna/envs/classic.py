"""Classic-control tasks: MountainCar, CartPole, Acrobot.

Dynamics, rewards, and start distributions follow the well-known v0/v1
definitions of these tasks, with the physics constants frozen below.
MountainCar terminates exactly when position >= 0.5 and keeps a -1 reward on
every step; CartPole pays +1 while alive; Acrobot pays -1 until the goal
condition, 0 on the terminating step. Episode caps: MountainCar 2000 (longer
than stock, so truncation is rare and bootstrapping stays honest), CartPole
and Acrobot 500.
"""

from __future__ import annotations

import logging

import numpy as np

from .base import Env, EnvSpec

logger = logging.getLogger(__name__)


class MountainCar(Env):
    MIN_POS, MAX_POS = -1.2, 0.6
    MAX_SPEED = 0.07
    GOAL_POS = 0.5
    FORCE = 0.001
    GRAVITY = 0.0025

    def __init__(self):
        self.spec = EnvSpec(
            tag="mountaincar",
            state_dim=2,
            gamma=0.99,
            episode_cap=2000,
            n_actions=3,
            state_low=np.array([self.MIN_POS, -self.MAX_SPEED]),
            state_high=np.array([self.MAX_POS, self.MAX_SPEED]),
        )

    def initial_state(self, rng):
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def dynamics(self, s, a, rng=None):
        a = self._check_discrete_action(a)
        pos, vel = s
        vel = vel + (a - 1) * self.FORCE - self.GRAVITY * np.cos(3 * pos)
        vel = float(np.clip(vel, -self.MAX_SPEED, self.MAX_SPEED))
        pos = float(np.clip(pos + vel, self.MIN_POS, self.MAX_POS))
        if pos == self.MIN_POS and vel < 0:
            vel = 0.0
        return np.array([pos, vel])

    def is_terminal(self, s):
        return s[0] >= self.GOAL_POS

    def reward(self, s, a, s_next, terminal):
        return -1.0


class CartPole(Env):
    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    TOTAL_MASS = MASS_CART + MASS_POLE
    LENGTH = 0.5  # half pole length
    POLEMASS_LENGTH = MASS_POLE * LENGTH
    FORCE_MAG = 10.0
    TAU = 0.02
    X_THRESHOLD = 2.4
    THETA_THRESHOLD = 12 * 2 * np.pi / 360

    def __init__(self):
        inf = np.inf
        self.spec = EnvSpec(
            tag="cartpole",
            state_dim=4,
            gamma=0.99,
            episode_cap=500,
            n_actions=2,
            state_low=np.array([-2 * self.X_THRESHOLD, -inf, -2 * self.THETA_THRESHOLD, -inf]),
            state_high=np.array([2 * self.X_THRESHOLD, inf, 2 * self.THETA_THRESHOLD, inf]),
        )

    def initial_state(self, rng):
        return rng.uniform(-0.05, 0.05, size=4)

    def dynamics(self, s, a, rng=None):
        a = self._check_discrete_action(a)
        x, x_dot, theta, theta_dot = s
        force = self.FORCE_MAG if a == 1 else -self.FORCE_MAG
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        temp = (force + self.POLEMASS_LENGTH * theta_dot**2 * sin_t) / self.TOTAL_MASS
        theta_acc = (self.GRAVITY * sin_t - cos_t * temp) / (
            self.LENGTH * (4.0 / 3.0 - self.MASS_POLE * cos_t**2 / self.TOTAL_MASS)
        )
        x_acc = temp - self.POLEMASS_LENGTH * theta_acc * cos_t / self.TOTAL_MASS
        return np.array(
            [
                x + self.TAU * x_dot,
                x_dot + self.TAU * x_acc,
                theta + self.TAU * theta_dot,
                theta_dot + self.TAU * theta_acc,
            ]
        )

    def is_terminal(self, s):
        return abs(s[0]) > self.X_THRESHOLD or abs(s[2]) > self.THETA_THRESHOLD

    def reward(self, s, a, s_next, terminal):
        return 1.0

    def uniform_state(self, rng):
        # velocities are unbounded; sample them from a documented working range
        low = np.array([-self.X_THRESHOLD, -3.0, -self.THETA_THRESHOLD, -3.0])
        high = -low
        return rng.uniform(low, high)


def _wrap_angle(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


class Acrobot(Env):
    """Two-link underactuated pendulum; state is (cos/sin of both angles, velocities)."""

    DT = 0.2
    L1 = 1.0
    M1 = M2 = 1.0
    LC1 = LC2 = 0.5
    I1 = I2 = 1.0
    G = 9.8
    MAX_VEL_1 = 4 * np.pi
    MAX_VEL_2 = 9 * np.pi
    TORQUES = (-1.0, 0.0, 1.0)

    def __init__(self):
        self.spec = EnvSpec(
            tag="acrobot",
            state_dim=6,
            gamma=0.99,
            episode_cap=500,
            n_actions=3,
            state_low=np.array([-1, -1, -1, -1, -self.MAX_VEL_1, -self.MAX_VEL_2]),
            state_high=np.array([1, 1, 1, 1, self.MAX_VEL_1, self.MAX_VEL_2]),
            projection="box-and-angle-pairs",
        )

    def initial_state(self, rng):
        return self._observe(rng.uniform(-0.1, 0.1, size=4))

    @staticmethod
    def _observe(internal):
        t1, t2, w1, w2 = internal
        return np.array([np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2), w1, w2])

    @staticmethod
    def _internal(s):
        return np.array([np.arctan2(s[1], s[0]), np.arctan2(s[3], s[2]), s[4], s[5]])

    def _dsdt(self, state, torque):
        t1, t2, w1, w2 = state
        d1 = (
            self.M1 * self.LC1**2
            + self.M2 * (self.L1**2 + self.LC2**2 + 2 * self.L1 * self.LC2 * np.cos(t2))
            + self.I1
            + self.I2
        )
        d2 = self.M2 * (self.LC2**2 + self.L1 * self.LC2 * np.cos(t2)) + self.I2
        phi2 = self.M2 * self.LC2 * self.G * np.cos(t1 + t2 - np.pi / 2)
        phi1 = (
            -self.M2 * self.L1 * self.LC2 * w2**2 * np.sin(t2)
            - 2 * self.M2 * self.L1 * self.LC2 * w2 * w1 * np.sin(t2)
            + (self.M1 * self.LC1 + self.M2 * self.L1) * self.G * np.cos(t1 - np.pi / 2)
            + phi2
        )
        ddw2 = (
            torque + d2 / d1 * phi1 - self.M2 * self.L1 * self.LC2 * w1**2 * np.sin(t2) - phi2
        ) / (self.M2 * self.LC2**2 + self.I2 - d2**2 / d1)
        ddw1 = -(d2 * ddw2 + phi1) / d1
        return np.array([w1, w2, ddw1, ddw2])

    def dynamics(self, s, a, rng=None):
        a = self._check_discrete_action(a)
        torque = self.TORQUES[a]
        y = self._internal(s)
        # one RK4 step of size DT
        k1 = self._dsdt(y, torque)
        k2 = self._dsdt(y + self.DT / 2 * k1, torque)
        k3 = self._dsdt(y + self.DT / 2 * k2, torque)
        k4 = self._dsdt(y + self.DT * k3, torque)
        y = y + self.DT / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        y[0] = _wrap_angle(y[0])
        y[1] = _wrap_angle(y[1])
        y[2] = float(np.clip(y[2], -self.MAX_VEL_1, self.MAX_VEL_1))
        y[3] = float(np.clip(y[3], -self.MAX_VEL_2, self.MAX_VEL_2))
        return self._observe(y)

    def is_terminal(self, s):
        # -cos(t1) - cos(t1 + t2) > 1, expanded in the trig representation
        cos_sum = s[0] * s[2] - s[1] * s[3]
        return -s[0] - cos_sum > 1.0

    def reward(self, s, a, s_next, terminal):
        return 0.0 if terminal else -1.0

    def project(self, s):
        out = np.array(s, dtype=float)
        for i in (0, 2):
            norm_sq = out[i] ** 2 + out[i + 1] ** 2
            if norm_sq == 0.0:
                logger.warning("cannot normalize zero-length angle pair; replacing with (1, 0)")
                out[i], out[i + 1] = 1.0, 0.0
            elif abs(norm_sq - 1.0) > 1e-12:
                norm = np.sqrt(norm_sq)
                out[i] /= norm
                out[i + 1] /= norm
        out[4] = np.clip(out[4], -self.MAX_VEL_1, self.MAX_VEL_1)
        out[5] = np.clip(out[5], -self.MAX_VEL_2, self.MAX_VEL_2)
        return out

    def uniform_state(self, rng):
        t1, t2 = rng.uniform(-np.pi, np.pi, size=2)
        w1 = rng.uniform(-self.MAX_VEL_1, self.MAX_VEL_1)
        w2 = rng.uniform(-self.MAX_VEL_2, self.MAX_VEL_2)
        return self._observe(np.array([t1, t2, w1, w2]))
