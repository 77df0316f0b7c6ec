"""Q-learning agents with experience replay, target networks, and planning.

One agent = one logical thread of control. Randomness is split into named
streams (exploration, ER sampling, planning-state sampling, hill-climb noise,
model training) so that algorithm variants consume identical draws from the
streams they share; with the mixing rate at 0 the planning batch never

touches the planning-state stream or the model, which makes an hc-dyna run
bitwise-identical to plain DQN under the same seed.

Per environment step the agent performs ``planning_steps`` mini-batch
updates. Each batch takes floor(rho * b) simulated transitions, whose states
come from the algorithm's search-control source (hill-climbing queue, ER
states, or uniform draws), whose actions are epsilon-greedy under the current
network, and whose outcomes come from the model; the remaining transitions
are uniform ER samples. Plain DQN is the rho = 0 special case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import nn, search_control as sc
from .envs.base import Env
from .errors import NonFiniteError

logger = logging.getLogger(__name__)

DQN_ALGORITHMS = ("dqn", "hc-dyna", "onpolicy-dyna", "uniform-dyna")
DDPG_ALGORITHMS = ("ddpg", "ddpg-hc-dyna", "ddpg-onpolicy-dyna")
ALGORITHMS = DQN_ALGORITHMS + DDPG_ALGORITHMS


@dataclass
class Transition:
    s: np.ndarray
    a: object  # int action index or continuous action vector
    r: float
    s_next: np.ndarray
    terminal: bool  # true termination only; step-cap truncation stays False


@dataclass
class AgentConfig:
    rho: float = 0.5
    planning_steps: int = 1
    batch_size: int = 32
    target_sync_every: int = 1000
    learning_rate: float = 1e-4
    epsilon_train: float = 0.1
    epsilon_eval: float = 0.05
    warmup_steps: int = 5000
    gamma: float = 0.99
    buffer_capacity: int = 100_000
    queue_capacity: int = 1_000_000
    hidden_sizes: tuple = (32, 32)
    output_half_width: float = 0.0003

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.planning_steps < 1:
            raise ValueError("planning_steps must be >= 1")


class ERBuffer:
    """Recency buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int = 100_000):
        self.capacity = int(capacity)
        self._size = 0
        self._head = 0
        self._s = self._a = self._r = self._s2 = self._term = None

    def __len__(self) -> int:
        return self._size

    def _alloc(self, t: Transition) -> None:
        n = min(self.capacity, 1024)
        d = len(t.s)
        self._s = np.empty((n, d))
        self._s2 = np.empty((n, d))
        self._r = np.empty(n)
        self._term = np.empty(n, dtype=bool)
        if np.isscalar(t.a) or np.asarray(t.a).ndim == 0:
            self._a = np.empty(n, dtype=np.int64)
        else:
            self._a = np.empty((n, len(t.a)))

    def _grow(self) -> None:
        new_cap = min(self.capacity, self._s.shape[0] * 2)
        for name in ("_s", "_a", "_r", "_s2", "_term"):
            old = getattr(self, name)
            new = np.empty((new_cap, *old.shape[1:]), dtype=old.dtype)
            new[: self._size] = old[: self._size]
            setattr(self, name, new)

    def add(self, t: Transition) -> None:
        if self._s is None:
            self._alloc(t)
        if self._size < self.capacity:
            if self._size == self._s.shape[0]:
                self._grow()
            i = self._size
            self._size += 1
        else:
            i = self._head
            self._head = (self._head + 1) % self.capacity
        self._s[i] = t.s
        self._a[i] = t.a
        self._r[i] = t.r
        self._s2[i] = t.s_next
        self._term[i] = t.terminal

    def sample(self, n: int, rng: np.random.Generator):
        if self._size == 0:
            raise ValueError("cannot sample from an empty ER buffer")
        idx = rng.integers(0, self._size, size=n)
        return (
            self._s[idx].copy(),
            self._a[idx].copy(),
            self._r[idx].copy(),
            self._s2[idx].copy(),
            self._term[idx].copy(),
        )

    def sample_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty ER buffer")
        idx = rng.integers(0, self._size, size=n)
        return self._s[idx].copy()

    def states(self) -> np.ndarray:
        return self._s[: self._size].copy()

    def copy(self) -> "ERBuffer":
        out = ERBuffer(self.capacity)
        out._size = self._size
        out._head = self._head
        for name in ("_s", "_a", "_r", "_s2", "_term"):
            arr = getattr(self, name)
            setattr(out, name, None if arr is None else arr.copy())
        return out


def act(qnet: nn.MLP, s: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(qnet.output_dim))
    return int(np.argmax(nn.forward(qnet, s)))


def q_learning_update(
    qnet: nn.MLP,
    target_net: nn.MLP,
    batch,
    opt: nn.AdamState,
    gamma: float,
) -> float:
    """One Adam step on the mean squared TD error.

    Targets are r + gamma * (1 - terminal) * max_a' Q_target(s', a'); batch is
    the (states, actions, rewards, next_states, terminals) tuple.
    """
    s, a, r, s2, term = batch
    q_next = nn.forward(target_net, s2).max(axis=1)
    targets = r + gamma * (1.0 - term) * q_next
    y, cache = nn._forward_cache(qnet, np.asarray(s, dtype=np.float64))
    rows = np.arange(len(r))
    td = y[rows, a] - targets
    loss = float(np.mean(td**2))
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite TD loss {loss}")
    out_grad = np.zeros_like(y)
    out_grad[rows, a] = 2.0 * td / len(r)
    grads = nn._backward_params(qnet, cache, out_grad)
    nn.adam_step(qnet, opt, grads)
    return loss


class DQNAgent:
    """DQN plus the Dyna planning variants selected by ``algorithm``."""

    def __init__(
        self,
        env: Env,
        algorithm: str,
        model,
        cfg: AgentConfig,
        hc_cfg: sc.HCConfig,
        streams: dict,
    ):
        if algorithm not in DQN_ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {DQN_ALGORITHMS}")
        self.env = env
        self.algorithm = algorithm
        self.model = model
        self.cfg = cfg
        self.hc_cfg = hc_cfg
        self.streams = streams
        d = env.spec.state_dim
        sizes = [d, *cfg.hidden_sizes, env.spec.n_actions]
        self.qnet = nn.init_xavier(sizes, cfg.output_half_width, streams["init"])
        self.target_net = self.qnet.copy()
        self.opt = nn.adam_init(self.qnet, cfg.learning_rate)
        self.buffer = ERBuffer(cfg.buffer_capacity)
        self.queue = sc.SearchControlQueue(d, cfg.queue_capacity)
        self.tracker = sc.CovarianceTracker(d)
        self.updates = 0

    # -- interaction --------------------------------------------------------

    def act(self, s: np.ndarray, epsilon: float | None = None) -> int:
        eps = self.cfg.epsilon_train if epsilon is None else epsilon
        return act(self.qnet, s, eps, self.streams["explore"])

    def warmup_action(self, s: np.ndarray) -> int:
        return act(self.qnet, s, 1.0, self.streams["explore"])

    def eval_action(self, s: np.ndarray, rng: np.random.Generator) -> int:
        return act(self.qnet, s, self.cfg.epsilon_eval, rng)

    def observe(self, t: Transition) -> None:
        """Record a real transition and update the stream statistics."""
        self.buffer.add(t)
        self.tracker.observe(t.s)
        self.queue.update_threshold(t.s, t.s_next, self.hc_cfg.threshold_ema)

    # -- planning -----------------------------------------------------------

    def uses_hill_climbing(self) -> bool:
        return self.algorithm == "hc-dyna"

    def hill_climb(self) -> int:
        return sc.run_hill_climb(
            partial(sc.value_gradient, self.qnet),
            self.buffer,
            self.tracker,
            self.queue,
            self.hc_cfg,
            self.streams["hc"],
            self.env.project,
        )

    def _planning_states(self, count: int) -> np.ndarray | None:
        rng = self.streams["sc"]
        if self.algorithm == "hc-dyna":
            if len(self.queue) == 0:
                return None
            return self.queue.sample(count, rng)
        if self.algorithm == "onpolicy-dyna":
            return self.buffer.sample_states(count, rng)
        if self.algorithm == "uniform-dyna":
            return np.stack([self.env.uniform_state(rng) for _ in range(count)])
        return None  # dqn

    def _simulate(self, states: np.ndarray):
        """Epsilon-greedy actions under the current network, outcomes from the model."""
        rng = self.streams["sc"]
        greedy = np.argmax(nn.forward(self.qnet, states), axis=1)
        explore = rng.random(len(states)) < self.cfg.epsilon_train
        random_a = rng.integers(self.env.spec.n_actions, size=len(states))
        actions = np.where(explore, random_a, greedy)
        s2, r, term = self.model.query_batch(states, actions)
        return states, actions, r, s2, term

    def _mixed_batch(self):
        b = self.cfg.batch_size
        sim = 0 if self.algorithm == "dqn" else int(self.cfg.rho * b)
        if sim > 0:
            states = self._planning_states(sim)
            if states is None:
                logger.warning("%s: search-control source empty, falling back to pure ER batch", self.algorithm)
                sim = 0
        if sim == 0:
            return self.buffer.sample(b, self.streams["er"]), 0
        sim_batch = self._simulate(states)
        if sim == b:
            return sim_batch, sim
        er = self.buffer.sample(b - sim, self.streams["er"])
        batch = tuple(np.concatenate([x, y]) for x, y in zip(sim_batch, er))
        return batch, sim

    def plan_step(self) -> float:
        """One mixed mini-batch update; syncs the target every tau updates."""
        batch, _ = self._mixed_batch()
        loss = q_learning_update(self.qnet, self.target_net, batch, self.opt, self.cfg.gamma)
        self.updates += 1
        if self.updates % self.cfg.target_sync_every == 0:
            self.target_net.copy_from(self.qnet)
        return loss

    def plan(self) -> float:
        loss = 0.0
        for _ in range(self.cfg.planning_steps):
            loss = self.plan_step()
        return loss
