"""Dynamics models queried during planning.

``ExactModel`` defers to the environment's own step function (the "true
model"); any stochasticity is resolved by a model-owned rng so planning never
perturbs the environment's stream. ``LearnedDiffModel`` is a neural model of
the state *difference*: a network maps (state, action encoding) to a
predicted s' - s, trained online with mini-batches from the ER buffer.

Rewards and termination for learned queries come from the task's analytic
reward rule and termination predicate evaluated on (s, s'); all five tasks
have fixed per-step rewards, and nothing about planning ever marks a
truncation (step caps belong to real episodes only).
"""

from __future__ import annotations

import logging

import numpy as np

from . import nn
from .envs.base import Env

logger = logging.getLogger(__name__)


def encode_action(env: Env, a) -> np.ndarray:
    """One-hot for discrete tasks, the raw action vector for continuous ones."""
    if env.spec.discrete:
        onehot = np.zeros(env.spec.n_actions)
        onehot[int(a)] = 1.0
        return onehot
    return np.asarray(a, dtype=np.float64)


class ExactModel:
    """Queryable wrapper around the true dynamics."""

    def __init__(self, env: Env, rng: np.random.Generator | None = None):
        self.env = env
        self.rng = rng

    def query(self, s: np.ndarray, a):
        projected = self.env.project(s)
        if not np.array_equal(projected, s):
            logger.warning("exact model queried with infeasible state %s; projecting", s)
            s = projected
        return self.env.step(s, a, self.rng)

    def query_batch(self, states: np.ndarray, actions):
        next_states = np.empty_like(states)
        rewards = np.empty(len(states))
        terminals = np.empty(len(states), dtype=bool)
        for i, (s, a) in enumerate(zip(states, actions)):
            next_states[i], rewards[i], terminals[i] = self.query(s, a)
        return next_states, rewards, terminals


class LearnedDiffModel:
    """Neural difference model: s' = project(s + net(s, a)).

    Two 64-unit rectifier hidden layers, Adam with a fixed 1e-4 learning
    rate, mini-batches of 128 drawn uniformly from the ER buffer, one update
    per environment step.
    """

    HIDDEN = (64, 64)
    LEARNING_RATE = 1e-4
    BATCH_SIZE = 128

    def __init__(self, env: Env, rng: np.random.Generator):
        self.env = env
        d = env.spec.state_dim
        a_dim = env.spec.n_actions if env.spec.discrete else env.spec.action_dim
        self.net = nn.init_xavier([d + a_dim, *self.HIDDEN, d], 0.0003, rng)
        self.opt = nn.adam_init(self.net, self.LEARNING_RATE)

    def _inputs(self, states: np.ndarray, actions) -> np.ndarray:
        states = np.atleast_2d(states)
        if self.env.spec.discrete:
            enc = np.zeros((len(states), self.env.spec.n_actions))
            enc[np.arange(len(states)), np.asarray(actions, dtype=int)] = 1.0
        else:
            enc = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        return np.concatenate([states, enc], axis=1)

    def predict_delta(self, states: np.ndarray, actions) -> np.ndarray:
        return nn.forward(self.net, self._inputs(states, actions))

    def train_step(self, er_buffer, rng: np.random.Generator) -> float | None:
        """One Adam step on the mean squared difference error; no-op when the
        buffer holds fewer than a mini-batch of transitions."""
        if len(er_buffer) < self.BATCH_SIZE:
            return None
        states, actions, _, next_states, _ = er_buffer.sample(self.BATCH_SIZE, rng)
        x = self._inputs(states, actions)
        pred = nn.forward(self.net, x)
        target = next_states - states
        err = pred - target
        loss = float(np.mean(err**2))
        grads = nn.param_gradient(self.net, x, 2.0 * err / err.size)
        nn.adam_step(self.net, self.opt, grads)
        return loss

    def query(self, s: np.ndarray, a):
        s_next = self.env.project(s + self.predict_delta(s[None, :], [a])[0])
        terminal = self.env.is_terminal(s_next)
        return s_next, self.env.reward(s, a, s_next, terminal), bool(terminal)

    def query_batch(self, states: np.ndarray, actions):
        deltas = self.predict_delta(states, actions)
        next_states = np.empty_like(states)
        rewards = np.empty(len(states))
        terminals = np.empty(len(states), dtype=bool)
        for i in range(len(states)):
            next_states[i] = self.env.project(states[i] + deltas[i])
            terminals[i] = self.env.is_terminal(next_states[i])
            rewards[i] = self.env.reward(states[i], actions[i], next_states[i], terminals[i])
        return next_states, rewards, terminals

    def save(self, path) -> None:
        nn.save_checkpoint(self.net, path)

    def load(self, path) -> None:
        loaded = nn.load_checkpoint(path)
        if loaded.layer_sizes != self.net.layer_sizes:
            raise ValueError(f"checkpoint sizes {loaded.layer_sizes} != model sizes {self.net.layer_sizes}")
        self.net = loaded
        self.opt = nn.adam_init(self.net, self.LEARNING_RATE)


def make_model(kind: str, env: Env, rng: np.random.Generator):
    if kind == "exact":
        return ExactModel(env, rng)
    if kind == "learned":
        return LearnedDiffModel(env, rng)
    raise ValueError(f"unknown model kind {kind!r}; expected 'exact' or 'learned'")
