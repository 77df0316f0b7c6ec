"""Deterministic-policy-gradient actor-critic for the continuous-action task.

The critic regresses onto r + gamma * (1 - terminal) * Q'(s', pi'(s')); the
actor ascends the critic through its own output. Exploration adds Gaussian
noise to the actor's action. Target networks are hard-copied on the same
cadence as the DQN target.

For search control the ascent direction on states is the critic's input
gradient at the frozen greedy action a* = pi(s) - cheaper than, and distinct
from, differentiating the full composition Q(s, pi(s)).
"""

from __future__ import annotations

import logging
from functools import partial

import numpy as np

from . import nn, search_control as sc
from .agent import AgentConfig, ERBuffer, Transition
from .envs.base import Env
from .errors import NonFiniteError

logger = logging.getLogger(__name__)

TRAIN_NOISE_STD = 0.1


def ddpg_update(
    actor: nn.MLP,
    critic: nn.MLP,
    actor_target: nn.MLP,
    critic_target: nn.MLP,
    actor_opt: nn.AdamState,
    critic_opt: nn.AdamState,
    batch,
    gamma: float,
) -> float:
    """One critic regression step followed by one actor ascent step."""
    s, a, r, s2, term = batch
    n, d = s.shape
    a2 = nn.forward(actor_target, s2)
    q2 = nn.forward(critic_target, np.concatenate([s2, a2], axis=1))[:, 0]
    targets = r + gamma * (1.0 - term) * q2

    x = np.concatenate([s, a], axis=1)
    y, cache = nn._forward_cache(critic, x)
    td = y[:, 0] - targets
    loss = float(np.mean(td**2))
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite critic loss {loss}")
    out_grad = (2.0 * td / n)[:, None]
    nn.adam_step(critic, critic_opt, nn._backward_params(critic, cache, out_grad))

    # actor: ascend mean Q(s, pi(s)) by chaining dQ/da through the actor
    a_pi = nn.forward(actor, s)
    dq = nn.input_gradient(critic, np.concatenate([s, a_pi], axis=1), 0)
    actor_out_grad = -dq[:, d:] / n
    nn.adam_step(actor, actor_opt, nn.param_gradient(actor, s, actor_out_grad))
    return loss


def ddpg_value_gradient(actor: nn.MLP, critic: nn.MLP, s: np.ndarray) -> np.ndarray:
    """d/ds of Q(s, a*) at the frozen action a* = pi(s).

    The actor is evaluated once and treated as a constant; nothing
    backpropagates through it.
    """
    s = np.asarray(s, dtype=np.float64)
    a_star = nn.forward(actor, s)
    g = nn.input_gradient(critic, np.concatenate([s, a_star]), 0)
    return g[: s.size]


class DDPGAgent:
    """DDPG plus the same planning variants as the DQN agent."""

    ALGORITHMS = ("ddpg", "ddpg-hc-dyna", "ddpg-onpolicy-dyna")

    def __init__(
        self,
        env: Env,
        algorithm: str,
        model,
        cfg: AgentConfig,
        hc_cfg: sc.HCConfig,
        streams: dict,
    ):
        if algorithm not in self.ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {self.ALGORITHMS}")
        if env.spec.discrete:
            raise ValueError(f"{algorithm} needs a continuous-action task, got {env.spec.tag}")
        self.env = env
        self.algorithm = algorithm
        self.model = model
        self.cfg = cfg
        self.hc_cfg = hc_cfg
        self.streams = streams
        d, m = env.spec.state_dim, env.spec.action_dim
        init = streams["init"]
        self.actor = nn.init_xavier([d, *cfg.hidden_sizes, m], cfg.output_half_width, init, output_activation="tanh")
        self.critic = nn.init_xavier([d + m, *cfg.hidden_sizes, 1], cfg.output_half_width, init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = nn.adam_init(self.actor, cfg.learning_rate)
        self.critic_opt = nn.adam_init(self.critic, cfg.learning_rate)
        self.buffer = ERBuffer(cfg.buffer_capacity)
        self.queue = sc.SearchControlQueue(d, cfg.queue_capacity)
        self.tracker = sc.CovarianceTracker(d)
        self.updates = 0

    # -- interaction --------------------------------------------------------

    def _noisy_action(self, s: np.ndarray, noise_std: float, rng: np.random.Generator) -> np.ndarray:
        a = nn.forward(self.actor, s)
        return np.clip(a + rng.normal(0.0, noise_std, size=a.shape), -1.0, 1.0)

    def act(self, s: np.ndarray, noise_std: float = TRAIN_NOISE_STD) -> np.ndarray:
        return self._noisy_action(s, noise_std, self.streams["explore"])

    def warmup_action(self, s: np.ndarray) -> np.ndarray:
        return self.streams["explore"].uniform(-1.0, 1.0, size=self.env.spec.action_dim)

    def eval_action(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._noisy_action(s, self.cfg.epsilon_eval, rng)

    def observe(self, t: Transition) -> None:
        self.buffer.add(t)
        self.tracker.observe(t.s)
        self.queue.update_threshold(t.s, t.s_next, self.hc_cfg.threshold_ema)

    # -- planning -----------------------------------------------------------

    def uses_hill_climbing(self) -> bool:
        return self.algorithm == "ddpg-hc-dyna"

    def hill_climb(self) -> int:
        return sc.run_hill_climb(
            partial(ddpg_value_gradient, self.actor, self.critic),
            self.buffer,
            self.tracker,
            self.queue,
            self.hc_cfg,
            self.streams["hc"],
            self.env.project,
        )

    def _planning_states(self, count: int) -> np.ndarray | None:
        rng = self.streams["sc"]
        if self.algorithm == "ddpg-hc-dyna":
            if len(self.queue) == 0:
                return None
            return self.queue.sample(count, rng)
        if self.algorithm == "ddpg-onpolicy-dyna":
            return self.buffer.sample_states(count, rng)
        return None

    def _mixed_batch(self):
        b = self.cfg.batch_size
        sim = 0 if self.algorithm == "ddpg" else int(self.cfg.rho * b)
        if sim > 0:
            states = self._planning_states(sim)
            if states is None:
                logger.warning("%s: search-control source empty, falling back to pure ER batch", self.algorithm)
                sim = 0
        if sim == 0:
            return self.buffer.sample(b, self.streams["er"])
        rng = self.streams["sc"]
        actions = np.clip(
            nn.forward(self.actor, states) + rng.normal(0.0, TRAIN_NOISE_STD, size=(sim, self.env.spec.action_dim)),
            -1.0,
            1.0,
        )
        s2, r, term = self.model.query_batch(states, actions)
        sim_batch = (states, actions, r, s2, term)
        if sim == b:
            return sim_batch
        er = self.buffer.sample(b - sim, self.streams["er"])
        return tuple(np.concatenate([x, y]) for x, y in zip(sim_batch, er))

    def plan_step(self) -> float:
        loss = ddpg_update(
            self.actor,
            self.critic,
            self.actor_target,
            self.critic_target,
            self.actor_opt,
            self.critic_opt,
            self._mixed_batch(),
            self.cfg.gamma,
        )
        self.updates += 1
        if self.updates % self.cfg.target_sync_every == 0:
            self.actor_target.copy_from(self.actor)
            self.critic_target.copy_from(self.critic)
        return loss

    def plan(self) -> float:
        loss = 0.0
        for _ in range(self.cfg.planning_steps):
            loss = self.plan_step()
        return loss
