"""Common environment contract.

Environments are stateless value objects: ``step(s, a, rng)`` is a pure
function of its arguments (plus the injected rng for stochastic tasks), and
the caller owns episode bookkeeping (current state, step counter,
truncation at ``spec.episode_cap``). That same ``step`` doubles as the exact
dynamics model.

Each environment also exposes the pieces planning needs on its own:
``project`` (the feasibility projection used by hill climbing),
``is_terminal`` (the true termination predicate, applied to next states), and
``reward`` (the analytic reward rule).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvSpec:
    tag: str
    state_dim: int
    gamma: float
    episode_cap: int
    n_actions: int | None = None   # discrete action count
    action_dim: int | None = None  # continuous action dimension (box [-1,1]^m)
    state_low: np.ndarray = field(default=None)   # -inf where unbounded
    state_high: np.ndarray = field(default=None)
    projection: str = "box"

    @property
    def discrete(self) -> bool:
        return self.n_actions is not None


@dataclass
class EnvState:
    """A state vector plus the episode step counter the runner tracks."""

    s: np.ndarray
    steps_elapsed: int = 0


class Env:
    """Base class; subclasses fill in dynamics, termination, and reward."""

    spec: EnvSpec

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def dynamics(self, s: np.ndarray, a, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def is_terminal(self, s: np.ndarray) -> bool:
        raise NotImplementedError

    def reward(self, s: np.ndarray, a, s_next: np.ndarray, terminal: bool) -> float:
        raise NotImplementedError

    def step(self, s: np.ndarray, a, rng: np.random.Generator | None = None):
        """Returns (s_next, reward, terminal)."""
        s_next = self.dynamics(s, a, rng)
        terminal = self.is_terminal(s_next)
        return s_next, self.reward(s, a, s_next, terminal), terminal

    def project(self, s: np.ndarray) -> np.ndarray:
        """Map an arbitrary vector onto the feasible state set (idempotent)."""
        return np.clip(s, self.spec.state_low, self.spec.state_high)

    def uniform_state(self, rng: np.random.Generator) -> np.ndarray:
        """A state drawn uniformly from the feasible set (for Uniform-Dyna)."""
        low, high = self._sampling_bounds()
        return rng.uniform(low, high)

    def _sampling_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        low, high = self.spec.state_low, self.spec.state_high
        if not (np.isfinite(low).all() and np.isfinite(high).all()):
            raise NotImplementedError(f"{self.spec.tag}: unbounded state, override uniform_state")
        return low, high

    def _check_discrete_action(self, a) -> int:
        a = int(a)
        if not 0 <= a < self.spec.n_actions:
            raise ValueError(f"invalid action {a} for {self.spec.tag} ({self.spec.n_actions} actions)")
        return a
