"""Search-control state generation by noisy preconditioned hill climbing.

The planning states come from trajectories that ascend the current value
surface V(s) = max_a Q(s, a). Each ascent step preconditions the value
gradient with the online estimate of the state covariance (scale invariance
across state variables), normalizes the step length, adds Gaussian noise
drawn with that same covariance, and projects back onto the feasible set:

    s <- project(s + (step_size / ||C g||) * C g + X),   X ~ N(0, eta * C)

States along the trajectory are admitted to a bounded FIFO queue whenever
they are at least ``epsilon_a`` away from the last admitted state, where
``epsilon_a`` tracks an exponential moving average of real transition
lengths and distances are dimension-normalized: d(a, b) = ||a - b||_2 / sqrt(d).

``langevin_step`` is the plain Euler-Maruyama recursion; the noisy ascent
chain behaves like it qualitatively (its long-run state distribution is
approximately proportional to exp(V)), and the recursion is kept here as an
independently testable reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn
from .errors import NonFiniteError

logger = logging.getLogger(__name__)

DEGENERATE_GRADIENT_NORM = 1e-12


@dataclass
class HCConfig:
    """Hill-climbing knobs; defaults are the standard run settings."""

    steps: int = 100            # ascent steps per environment step
    noise_scale: float = 0.1    # eta
    step_size: float = 0.1      # numerator of the normalized step rule
    threshold_ema: float = 0.001  # beta for the epsilon_a moving average
    jitter: float = 1e-8        # diagonal regularizer for noise sampling

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if not 0 < self.threshold_ema < 1:
            raise ValueError("threshold_ema must be in (0, 1)")


class CovarianceTracker:
    """Online state covariance via running means of s and s s^T.

    Keeps exact running sums so after T observations the estimate equals the
    batch formula (1/T) sum s_i s_i^T - mean mean^T. Before any observation
    the covariance is the identity.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self._sum_s = np.zeros(dim)
        self._sum_ss = np.zeros((dim, dim))

    def observe(self, s: np.ndarray) -> None:
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.dim,):
            raise ValueError(f"state shape {s.shape} != ({self.dim},)")
        if not np.isfinite(s).all():
            raise NonFiniteError(f"non-finite state observation: {s}")
        self.count += 1
        self._sum_s += s
        self._sum_ss += np.outer(s, s)

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.dim)
        return self._sum_s / self.count

    @property
    def mean_outer(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros((self.dim, self.dim))
        return self._sum_ss / self.count

    def covariance(self) -> np.ndarray:
        if self.count == 0:
            return np.eye(self.dim)
        m = self.mean
        cov = self.mean_outer - np.outer(m, m)
        return (cov + cov.T) / 2.0  # keep exactly symmetric


class SearchControlQueue:
    """Bounded FIFO of states with the admission threshold epsilon_a."""

    def __init__(self, dim: int, capacity: int = 1_000_000):
        self.dim = dim
        self.capacity = int(capacity)
        self.epsilon_a = 0.0
        self._buf = np.empty((min(self.capacity, 4096), dim))
        self._size = 0
        self._head = 0  # next write position once full

    def __len__(self) -> int:
        return self._size

    def _grow(self) -> None:
        new_cap = min(self.capacity, self._buf.shape[0] * 2)
        buf = np.empty((new_cap, self.dim))
        buf[: self._size] = self._buf[: self._size]
        self._buf = buf

    def append(self, s: np.ndarray) -> None:
        if self._size < self.capacity:
            if self._size == self._buf.shape[0]:
                self._grow()
            self._buf[self._size] = s
            self._size += 1
        else:
            self._buf[self._head] = s  # overwrite the oldest entry
            self._head = (self._head + 1) % self.capacity

    def update_threshold(self, s: np.ndarray, s_next: np.ndarray, beta: float = 0.001) -> float:
        """EMA of real transition lengths in normalized distance units."""
        d = normalized_distance(s, s_next)
        self.epsilon_a = (1.0 - beta) * self.epsilon_a + beta * d
        return self.epsilon_a

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty search-control queue")
        idx = rng.integers(0, self._size, size=n)
        return self._buf[idx].copy()

    def states(self) -> np.ndarray:
        """All stored states, oldest first."""
        if self._size < self.capacity:
            return self._buf[: self._size].copy()
        return np.concatenate([self._buf[self._head :], self._buf[: self._head]])


def normalized_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.linalg.norm(diff)) / np.sqrt(diff.size)


def value_gradient(qnet: nn.MLP, s: np.ndarray) -> np.ndarray:
    """Gradient of max_a Q(s, a) w.r.t. s, ties broken by lowest action index.

    Hot path of every hill-climbing step, so it runs on flat vectors instead
    of the batched network routines.
    """
    weights, biases = qnet.weights, qnet.biases
    last = len(weights) - 1
    h = np.asarray(s, dtype=np.float64)
    acts = [h]
    for i in range(last):
        h = h @ weights[i] + biases[i]
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    y = h @ weights[last] + biases[last]
    a = int(np.argmax(y))
    delta = weights[last][:, a]
    if qnet.output_activation == "tanh":
        ya = np.tanh(y[a])
        delta = delta * (1.0 - ya * ya)
    for i in range(last, 0, -1):
        delta = weights[i - 1] @ (delta * (acts[i] > 0))
    return delta


def _noise_transform(cov: np.ndarray, cfg: HCConfig) -> np.ndarray:
    """Factor L with L L^T = noise_scale * (cov + jitter I)."""
    c = cfg.noise_scale * (cov + cfg.jitter * np.eye(cov.shape[0]))
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        # covariance estimates can be indefinite at rounding level
        vals, vecs = np.linalg.eigh(c)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def hc_step(
    s: np.ndarray,
    g: np.ndarray,
    cov: np.ndarray,
    cfg: HCConfig,
    rng: np.random.Generator,
    project: Callable[[np.ndarray], np.ndarray],
    noise_transform: np.ndarray | None = None,
) -> np.ndarray:
    """One noisy preconditioned ascent step from ``s`` with value gradient ``g``.

    When ||cov @ g|| vanishes the normalized step is undefined, so the
    deterministic term is dropped and the step is pure diffusion. Callers
    iterating under a fixed covariance can pass the precomputed
    ``noise_transform`` factor to avoid refactorizing every step.
    """
    v = cov @ g
    norm = float(np.sqrt(v @ v))
    out = s if norm < DEGENERATE_GRADIENT_NORM else s + (cfg.step_size / norm) * v
    if cfg.noise_scale > 0:
        if noise_transform is None:
            noise_transform = _noise_transform(cov, cfg)
        out = out + noise_transform @ rng.standard_normal(s.size)
    return project(out)


def climb_trajectory(
    value_grad: Callable[[np.ndarray], np.ndarray],
    s0: np.ndarray,
    cov: np.ndarray,
    cfg: HCConfig,
    rng: np.random.Generator,
    project: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """The (steps, d) sequence of ascent iterates from ``s0`` (s0 excluded)."""
    s = np.asarray(s0, dtype=np.float64)
    transform = _noise_transform(cov, cfg) if cfg.noise_scale > 0 else None
    out = np.empty((cfg.steps, s.size))
    for i in range(cfg.steps):
        s = hc_step(s, value_grad(s), cov, cfg, rng, project, noise_transform=transform)
        out[i] = s
    return out


def run_hill_climb(
    value_grad: Callable[[np.ndarray], np.ndarray],
    er_buffer,
    tracker: CovarianceTracker,
    queue: SearchControlQueue,
    cfg: HCConfig,
    rng: np.random.Generator,
    project: Callable[[np.ndarray], np.ndarray],
) -> int:
    """One hill-climbing pass: start from a buffer state, admit spaced iterates.

    The start state is sampled uniformly from the ER buffer (no-op when the
    buffer is empty). A trajectory state is admitted when its normalized
    distance from the last admitted state is at least epsilon_a; the last
    admitted state starts infinitely far away, so the first iterate is
    admitted whenever epsilon_a is finite. Returns the number admitted.
    """
    if len(er_buffer) == 0:
        logger.warning("hill climbing skipped: ER buffer is empty")
        return 0
    s0 = er_buffer.sample_states(1, rng)[0]
    trajectory = climb_trajectory(value_grad, s0, tracker.covariance(), cfg, rng, project)
    eps = queue.epsilon_a
    admitted = 0
    anchor = None
    for s in trajectory:
        far = np.isfinite(eps) if anchor is None else normalized_distance(anchor, s) >= eps
        if far:
            queue.append(s)
            anchor = s
            admitted += 1
    return admitted


def langevin_step(
    y: np.ndarray,
    grad_u: Callable[[np.ndarray], np.ndarray],
    step_size: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Euler-Maruyama step: y + a * grad U(y) + sqrt(2a) * z, z standard normal."""
    if step_size <= 0:
        raise ValueError("step_size must be > 0")
    y = np.asarray(y, dtype=np.float64)
    return y + step_size * grad_u(y) + np.sqrt(2.0 * step_size) * rng.standard_normal(y.size)
