"""Tabular Dyna-Q on the 20x20 grid, with pluggable search-control sources.

This is the sampling-distribution study: the learner is plain tabular
Q-learning with a counted transition model and ten planning updates per real
step; what varies is where the planning *states* come from. Sources:

  - ``er``: planning replays stored (state, action) pairs only;
  - ``hc-dyna``: coordinate-space hill climbing on the current value
    estimates V(s) = max_a Q(s, a), via finite differences over the 8
    neighboring cells, feeding a bounded queue with spaced admissions;
  - ``gibbs``: states sampled with probability proportional to exp(V);
  - ``hc-dyna-vstar`` / ``gibbs-vstar``: the same two driven by the exact
    optimal values instead of the estimates;
  - ``uniform-dyna``: states uniform over the grid;
  - ``onpolicy-dyna``: states uniform from the ER buffer.

Every source mixes with ER at rate rho: each planning update picks the
search-control source with probability rho, otherwise replays a buffered
pair. Planning actions are epsilon-greedy under the current table, and
outcomes are sampled from the counted model; a pair the model has never seen
falls back to a buffered pair so every planning update does real work.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from .envs.tabular import (
    GOAL_CELL,
    GRID,
    N_ACTIONS,
    N_CELLS,
    PITCH,
    START_CELL,
    TabularGridWorld,
    cell_to_center,
    cell_to_colrow,
    center_to_cell,
    colrow_to_cell,
)

ALGORITHMS = (
    "er",
    "hc-dyna",
    "gibbs",
    "hc-dyna-vstar",
    "gibbs-vstar",
    "uniform-dyna",
    "onpolicy-dyna",
)

# learning-rate sweep: 2^0 .. 2^-2.5 on the standard grid
LEARNING_RATES = tuple(2.0**e for e in (0.0, -0.25, -0.5, -0.75, -1.0, -1.5, -2.0, -2.5))

EXPLORATION_EPSILON = 0.2
PLANNING_STEPS = 10
HC_STEPS_PER_ENV_STEP = 80
HC_NOISE_STD = 0.05
BUFFER_CAPACITY = 100_000
QUEUE_CAPACITY = 100_000
THRESHOLD_EMA = 0.001

# 8-neighborhood in (dcol, drow) order; "stay" is considered first and wins ties
_NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _build_neighbor_tables():
    cells, dists = [], []
    for c in range(N_CELLS):
        col, row = cell_to_colrow(c)
        ns, ds = [], []
        for dc, dr in _NEIGHBOR_OFFSETS:
            nc, nr = col + dc, row + dr
            if 0 <= nc < GRID and 0 <= nr < GRID:
                ns.append(colrow_to_cell(nc, nr))
                ds.append(PITCH * math.sqrt(dc * dc + dr * dr))
        cells.append(tuple(ns))
        dists.append(tuple(ds))
    return cells, dists


_NEIGHBORS, _NEIGHBOR_DISTS = _build_neighbor_tables()
_CENTER_X = tuple(float(cell_to_center(c)[0]) for c in range(N_CELLS))
_CENTER_Y = tuple(float(cell_to_center(c)[1]) for c in range(N_CELLS))


def value_iteration(
    success_prob: float = 0.8,
    tol: float = 1e-10,
    max_sweeps: int = 1_000_000,
) -> np.ndarray:
    """Exact optimal values for the slippery grid (gamma = 1, goal value 0).

    Every stationary policy reaches the absorbing goal with probability one
    (the random-slip component gives each direction positive probability), so
    undiscounted value iteration converges; we iterate to a sup-norm Bellman
    residual below ``tol``.
    """
    env = TabularGridWorld(success_prob)
    p = env.transition_kernel().reshape(N_CELLS * N_ACTIONS, N_CELLS)
    v = np.zeros(N_CELLS)
    for _ in range(max_sweeps):
        q = (p @ v).reshape(N_CELLS, N_ACTIONS) - 1.0
        v_new = q.max(axis=1)
        v_new[GOAL_CELL] = 0.0
        residual = np.abs(v_new - v).max()
        v = v_new
        if residual < tol:
            return v
    raise RuntimeError(f"value iteration did not reach residual {tol} in {max_sweeps} sweeps")


def bellman_residual(v: np.ndarray, success_prob: float = 0.8) -> float:
    env = TabularGridWorld(success_prob)
    p = env.transition_kernel().reshape(N_CELLS * N_ACTIONS, N_CELLS)
    q = (p @ v).reshape(N_CELLS, N_ACTIONS) - 1.0
    backed = q.max(axis=1)
    backed[GOAL_CELL] = 0.0
    return float(np.abs(backed - v).max())


def gibbs_sample(v: np.ndarray, rng: np.random.Generator) -> int:
    """One categorical draw with probabilities softmax(v), max-subtracted."""
    z = np.exp(v - v.max())
    cdf = np.cumsum(z)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def fd_hill_climb(
    v: np.ndarray,
    start_cell: int,
    steps: int,
    rng: np.random.Generator,
    noise_std: float = HC_NOISE_STD,
) -> list[int]:
    """Noisy finite-difference ascent over grid cells; returns visited cells.

    Each step jitters the current cell's center with Gaussian noise, snaps to
    the nearest valid cell, then moves to the 8-neighbor with the largest
    value-increase rate (V(n) - V(c)) / distance, where diagonal neighbors
    divide by sqrt(2) * pitch. Staying put counts as rate 0 and is preferred
    on ties, so the walk only moves when some neighbor strictly improves.
    """
    values = v.tolist()
    noise = rng.normal(0.0, noise_std, size=(steps, 2)).tolist()
    cell = start_cell
    out = []
    for nx, ny in noise:
        x = _CENTER_X[cell] + nx
        y = _CENTER_Y[cell] + ny
        col = int(x * GRID)
        row = int(y * GRID)
        col = 0 if col < 0 else (GRID - 1 if col >= GRID else col)
        row = 0 if row < 0 else (GRID - 1 if row >= GRID else row)
        cell = col * GRID + row
        best_rate, best_cell = 0.0, cell
        base = values[cell]
        for n, d in zip(_NEIGHBORS[cell], _NEIGHBOR_DISTS[cell]):
            rate = (values[n] - base) / d
            if rate > best_rate:
                best_rate, best_cell = rate, n
        cell = best_cell
        out.append(cell)
    return out


_SQRT2 = math.sqrt(2.0)


def _center_distance(a: int, b: int) -> float:
    return math.hypot(_CENTER_X[a] - _CENTER_X[b], _CENTER_Y[a] - _CENTER_Y[b]) / _SQRT2


class CountModel:
    """Empirical transition model built by counting observed outcomes."""

    def __init__(self, n_states: int = N_CELLS, n_actions: int = N_ACTIONS, terminal_state: int = GOAL_CELL):
        self.terminal_state = terminal_state
        self.counts = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
        self.totals = np.zeros((n_states, n_actions), dtype=np.int64)
        self.reward_sum = np.zeros((n_states, n_actions, n_states))

    def observe(self, s: int, a: int, s_next: int, r: float) -> None:
        self.counts[s, a, s_next] += 1
        self.totals[s, a] += 1
        self.reward_sum[s, a, s_next] += r

    def has_data(self, s: int, a: int) -> bool:
        return self.totals[s, a] > 0

    def sample(self, s: int, a: int, rng: np.random.Generator):
        """Draw an outcome (s', r, terminal) proportional to observed counts."""
        row = self.counts[s, a]
        cdf = np.cumsum(row)
        u = rng.integers(cdf[-1])
        s_next = int(np.searchsorted(cdf, u, side="right"))
        r = self.reward_sum[s, a, s_next] / row[s_next]
        return s_next, float(r), s_next == self.terminal_state


class PairBuffer:
    """Recency buffer of visited (state, action) pairs."""

    def __init__(self, capacity: int = BUFFER_CAPACITY):
        self.capacity = capacity
        self._s = np.empty(capacity, dtype=np.int32)
        self._a = np.empty(capacity, dtype=np.int32)
        self._size = 0
        self._head = 0

    def __len__(self):
        return self._size

    def add(self, s: int, a: int) -> None:
        if self._size < self.capacity:
            i = self._size
            self._size += 1
        else:
            i = self._head
            self._head = (self._head + 1) % self.capacity
        self._s[i] = s
        self._a[i] = a

    def sample_pair(self, rng: np.random.Generator):
        i = rng.integers(self._size)
        return int(self._s[i]), int(self._a[i])

    def sample_state(self, rng: np.random.Generator) -> int:
        return int(self._s[rng.integers(self._size)])

    def sample_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._s[rng.integers(0, self._size, size=n)].astype(int)


class CellQueue:
    """Bounded FIFO of cells for hill-climbing search control."""

    def __init__(self, capacity: int = QUEUE_CAPACITY):
        self.capacity = capacity
        self._cells = np.empty(capacity, dtype=np.int32)
        self._size = 0
        self._head = 0

    def __len__(self):
        return self._size

    def append(self, cell: int) -> None:
        if self._size < self.capacity:
            i = self._size
            self._size += 1
        else:
            i = self._head
            self._head = (self._head + 1) % self.capacity
        self._cells[i] = cell

    def sample(self, rng: np.random.Generator) -> int:
        return int(self._cells[rng.integers(self._size)])

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._cells[rng.integers(0, self._size, size=n)].astype(int)

    def cells(self) -> np.ndarray:
        return self._cells[: self._size].astype(int)


class TabularDynaAgent:
    """Q-table learner with counted model and a selectable planning source."""

    def __init__(
        self,
        algorithm: str,
        lr: float,
        rho: float = 0.5,
        epsilon: float = EXPLORATION_EPSILON,
        gamma: float = 1.0,
        planning_steps: int = PLANNING_STEPS,
        v_star: np.ndarray | None = None,
        n_states: int = N_CELLS,
        n_actions: int = N_ACTIONS,
        terminal_state: int = GOAL_CELL,
    ):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown tabular algorithm {algorithm!r}; known: {ALGORITHMS}")
        if algorithm.endswith("vstar") and v_star is None:
            raise ValueError(f"{algorithm} needs the optimal value function")
        if algorithm not in ("er", "onpolicy-dyna") and n_states != N_CELLS:
            raise ValueError(f"{algorithm} search control assumes the {GRID}x{GRID} grid geometry")
        self.algorithm = algorithm
        self.lr = lr
        self.rho = rho
        self.epsilon = epsilon
        self.gamma = gamma
        self.planning_steps = planning_steps
        self.v_star = v_star
        self.n_states = n_states
        self.n_actions = n_actions
        self.q = np.zeros((n_states, n_actions))
        self.model = CountModel(n_states, n_actions, terminal_state)
        self.buffer = PairBuffer()
        self.queue = CellQueue()
        self.epsilon_a = 0.0
        self.planning_updates = 0

    # -- policy ---------------------------------------------------------------

    def greedy_action(self, s: int) -> int:
        return int(np.argmax(self.q[s]))

    def act(self, s: int, rng: np.random.Generator, epsilon: float | None = None) -> int:
        eps = self.epsilon if epsilon is None else epsilon
        if rng.random() < eps:
            return int(rng.integers(self.n_actions))
        return self.greedy_action(s)

    # -- learning ---------------------------------------------------------------

    def q_update(self, s: int, a: int, r: float, s_next: int, terminal: bool) -> None:
        boot = 0.0 if terminal else self.gamma * self.q[s_next].max()
        self.q[s, a] += self.lr * (r + boot - self.q[s, a])

    def value_estimates(self) -> np.ndarray:
        return self.q.max(axis=1)

    def _sc_values(self) -> np.ndarray:
        return self.v_star if self.algorithm.endswith("vstar") else self.value_estimates()

    def observe(self, s: int, a: int, r: float, s_next: int, terminal: bool) -> None:
        """Real-step bookkeeping: Q update, model counts, buffer, threshold."""
        self.q_update(s, a, r, s_next, terminal)
        self.model.observe(s, a, s_next, r)
        self.buffer.add(s, a)
        d = _center_distance(s, s_next)
        self.epsilon_a = (1 - THRESHOLD_EMA) * self.epsilon_a + THRESHOLD_EMA * d

    def fill_search_control(self, rng: np.random.Generator) -> None:
        """Run the hill-climbing pass for the HC variants (no-op otherwise)."""
        if not self.algorithm.startswith("hc-dyna"):
            return
        start = self.buffer.sample_state(rng)
        trajectory = fd_hill_climb(self._sc_values(), start, HC_STEPS_PER_ENV_STEP, rng)
        anchor = None
        for cell in trajectory:
            if anchor is None or _center_distance(anchor, cell) >= self.epsilon_a:
                self.queue.append(cell)
                anchor = cell

    def _draw_sc_state(self, rng: np.random.Generator) -> int | None:
        if self.algorithm.startswith("hc-dyna"):
            return self.queue.sample(rng) if len(self.queue) else None
        if self.algorithm.startswith("gibbs"):
            return gibbs_sample(self._sc_values(), rng)
        if self.algorithm == "uniform-dyna":
            return int(rng.integers(N_CELLS))
        if self.algorithm == "onpolicy-dyna":
            return self.buffer.sample_state(rng)
        return None  # er

    def _planning_action(self, s: int, rng: np.random.Generator) -> int | None:
        """Epsilon-greedy among the actions the counted model has seen at s."""
        visited = np.nonzero(self.model.totals[s])[0]
        if len(visited) == 0:
            return None
        if len(visited) == self.n_actions:
            return self.act(s, rng)
        if rng.random() < self.epsilon:
            return int(visited[rng.integers(len(visited))])
        return int(visited[np.argmax(self.q[s, visited])])

    def plan(self, rng: np.random.Generator) -> None:
        """Planning updates from the counted model, mixed with ER at rho.

        A search-control state the model knows nothing about falls back to a
        replayed (state, action) pair, so all planning updates do real work.
        """
        for _ in range(self.planning_steps):
            s = a = None
            if self.algorithm != "er" and self.rho > 0 and rng.random() < self.rho:
                s = self._draw_sc_state(rng)
                if s is not None:
                    a = self._planning_action(s, rng)
                    if a is None:
                        s = None
            if s is None:
                s, a = self.buffer.sample_pair(rng)
            s_next, r, terminal = self.model.sample(s, a, rng)
            self.q_update(s, a, r, s_next, terminal)
            self.planning_updates += 1

    def sc_histogram_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Cells drawn from the search-control distribution, for histograms."""
        if self.algorithm.startswith("hc-dyna") and len(self.queue):
            return self.queue.sample_many(n, rng)
        if self.algorithm.startswith("gibbs"):
            return np.array([gibbs_sample(self._sc_values(), rng) for _ in range(n)])
        if self.algorithm == "uniform-dyna":
            return rng.integers(0, N_CELLS, size=n)
        return self.buffer.sample_states(n, rng)


def evaluate_greedy(agent: TabularDynaAgent, env: TabularGridWorld, rng: np.random.Generator) -> float:
    """Return of one greedy episode from the start cell (capped)."""
    s = env.initial_cell()
    total = 0.0
    for _ in range(env.episode_cap):
        s, r, terminal = env.step(s, agent.greedy_action(s), rng)
        total += r
        if terminal:
            break
    return total


@dataclass
class TabularRunResult:
    algorithm: str
    lr: float
    seed: int
    steps: list
    returns: list

    def final_fraction_mean(self, frac: float = 0.2) -> float:
        k = max(1, math.ceil(len(self.returns) * frac))
        return float(np.mean(self.returns[-k:]))


def run_tabular(
    algorithm: str,
    lr: float,
    seed: int,
    total_steps: int = 6000,
    eval_every: int = 100,
    rho: float = 0.5,
    planning_steps: int = PLANNING_STEPS,
    v_star: np.ndarray | None = None,
) -> TabularRunResult:
    """One training run; evaluates one greedy episode every ``eval_every`` steps."""
    names = ("env", "explore", "plan", "hc", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    streams = {n: np.random.default_rng(c) for n, c in zip(names, children)}
    env = TabularGridWorld()
    agent = TabularDynaAgent(algorithm, lr, rho=rho, planning_steps=planning_steps, v_star=v_star)
    steps, returns = [], []
    s = env.initial_cell()
    episode_steps = 0
    for t in range(1, total_steps + 1):
        a = agent.act(s, streams["explore"])
        s_next, r, terminal = env.step(s, a, streams["env"])
        agent.observe(s, a, r, s_next, terminal)
        agent.fill_search_control(streams["hc"])
        agent.plan(streams["plan"])
        episode_steps += 1
        if terminal or episode_steps >= env.episode_cap:
            s = env.initial_cell()
            episode_steps = 0
        else:
            s = s_next
        if t % eval_every == 0:
            steps.append(t)
            returns.append(evaluate_greedy(agent, env, streams["eval"]))
    return TabularRunResult(algorithm, lr, seed, steps, returns)


# --- learning-rate sweep -------------------------------------------------------


def _sweep_cell(args):
    algorithm, lr, seed, total_steps, eval_every, rho, v_star = args
    return run_tabular(algorithm, lr, seed, total_steps, eval_every, rho, v_star=v_star)


def tabular_sweep(
    algorithms=("er", "hc-dyna", "gibbs"),
    learning_rates=LEARNING_RATES,
    seeds: int = 30,
    total_steps: int = 6000,
    eval_every: int = 100,
    rho: float = 0.5,
    out_dir: str | None = None,
    workers: int | None = None,
):
    """Run the (algorithm x lr x seed) grid and pick each algorithm's best lr.

    The score of an (algorithm, lr) cell is the mean over seeds of the mean
    return over the last 20% of evaluation episodes. Returns
    {algorithm: (best_lr, best_score, {lr: score})} and writes per-run CSVs
    plus a summary when ``out_dir`` is given.
    """
    needs_vstar = any(a.endswith("vstar") for a in algorithms)
    v_star = value_iteration() if needs_vstar else None
    jobs = [
        (alg, lr, seed, total_steps, eval_every, rho, v_star)
        for alg in algorithms
        for lr in learning_rates
        for seed in range(seeds)
    ]
    if workers is None:
        workers = int(os.environ.get("HCDYNA_WORKERS", os.cpu_count() or 1))
    if workers > 1:
        with Pool(workers) as pool:
            results = pool.map(_sweep_cell, jobs, chunksize=4)
    else:
        results = [_sweep_cell(j) for j in jobs]

    scores: dict = {alg: {} for alg in algorithms}
    for alg in algorithms:
        for lr in learning_rates:
            cell = [r for r in results if r.algorithm == alg and r.lr == lr]
            scores[alg][lr] = float(np.mean([r.final_fraction_mean() for r in cell]))
    best = {alg: max(scores[alg], key=scores[alg].get) for alg in algorithms}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for r in results:
            path = os.path.join(out_dir, f"{r.algorithm}_lr{r.lr:.5f}_seed{r.seed}.csv")
            with open(path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["step", "eval_return"])
                w.writerows(zip(r.steps, r.returns))
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["algorithm", "lr", "final20_mean", "best"])
            for alg in algorithms:
                for lr in learning_rates:
                    w.writerow([alg, lr, scores[alg][lr], int(lr == best[alg])])
    return {alg: (best[alg], scores[alg][best[alg]], scores[alg]) for alg in algorithms}


def histogram_csv(cells: np.ndarray, path) -> None:
    """Write cell occupancy counts as (cell, x, y, count) rows."""
    counts = np.bincount(cells, minlength=N_CELLS)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cell", "x", "y", "count"])
        for c in range(N_CELLS):
            x, y = cell_to_center(c)
            w.writerow([c, x, y, int(counts[c])])
