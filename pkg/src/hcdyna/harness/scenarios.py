"""Scenario scripts behind the diagnostic figures.

  - value surface: checkpoint the Q-network at chosen update counts, dump the
    value grid over the unit square plus noise-free hill-climb trajectories
    from five fixed start states;
  - negated recovery: train, flip the sign of the output layer, and let each
    algorithm recover from the same corrupted network;
  - queue snapshot: sample states from the ER buffer and the search-control
    queue at a matched step and measure their concentration near the goal.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import replace

import numpy as np

from .. import nn, search_control as sc
from ..envs.gridworld import GOAL_LOW
from .config import ExperimentConfig
from .runner import build_agent, make_streams, run_single, train_loop

SURFACE_STARTS = ((0.1, 0.1), (0.9, 0.9), (0.1, 0.9), (0.9, 0.1), (0.3, 0.4))
SURFACE_GRID = 50
TRAJECTORY_STEPS = 100

# goal square dilated by 0.1 in the L-infinity sense
DILATED_GOAL_LOW = GOAL_LOW - 0.1


def value_grid(qnet: nn.MLP, grid_size: int = SURFACE_GRID) -> np.ndarray:
    """(grid^2, 3) rows of x, y, max_a Q over the inclusive unit square."""
    axis = np.linspace(0.0, 1.0, grid_size)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    states = np.column_stack([xs.ravel(), ys.ravel()])
    values = nn.forward(qnet, states).max(axis=1)
    return np.column_stack([states, values])


def ascent_trajectories(agent, starts=SURFACE_STARTS, steps: int = TRAJECTORY_STEPS):
    """Noise-free hill climbs from the given starts under the agent's metric.

    Returns a list of (steps + 1, 3) arrays of x, y, value rows (start
    included).
    """
    cfg = replace(agent.hc_cfg, steps=steps, noise_scale=0.0)
    cov = agent.tracker.covariance()
    rng = np.random.default_rng(0)  # unused at zero noise
    out = []
    for start in starts:
        s0 = np.asarray(start, dtype=float)
        path = sc.climb_trajectory(
            lambda s: sc.value_gradient(agent.qnet, s), s0, cov, cfg, rng, agent.env.project
        )
        points = np.vstack([s0, path])
        values = nn.forward(agent.qnet, points).max(axis=1)
        out.append(np.column_stack([points, values]))
    return out


def _write_grid_csv(path, grid_rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "value"])
        w.writerows(grid_rows.tolist())


def _write_trajectories_csv(path, trajectories):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trajectory", "step", "x", "y", "value"])
        for ti, traj in enumerate(trajectories):
            for si, (x, y, v) in enumerate(traj):
                w.writerow([ti, si, x, y, v])


def scenario_value_surface(
    config: ExperimentConfig,
    seed: int = 0,
    out_dir: str = "results/surface",
    checkpoints=(0, 14_000, 20_000),
):
    """Train on the unit-square task, dumping surface and trajectories at the
    configured mini-batch update counts."""
    os.makedirs(out_dir, exist_ok=True)
    streams = make_streams(seed)
    agent, env = build_agent(config, streams)
    pending = sorted(set(checkpoints))
    written = {}

    def dump(update_count):
        tag = f"updates{update_count}"
        grid_path = os.path.join(out_dir, f"value_grid_{tag}.csv")
        traj_path = os.path.join(out_dir, f"trajectories_{tag}.csv")
        net_path = os.path.join(out_dir, f"qnet_{tag}.ckpt")
        _write_grid_csv(grid_path, value_grid(agent.qnet))
        _write_trajectories_csv(traj_path, ascent_trajectories(agent))
        nn.save_checkpoint(agent.qnet, net_path)
        written[update_count] = {"grid": grid_path, "trajectories": traj_path, "checkpoint": net_path}

    if pending and pending[0] == 0:
        dump(0)
        pending.pop(0)

    def hook(t, ag):
        while pending and ag.updates >= pending[0]:
            dump(pending.pop(0))
        return not pending

    total = config.agent_config().warmup_steps + max(checkpoints) + config.eval_every
    train_loop(agent, env, config, streams, step_hook=hook, total_steps=max(total, config.total_steps))
    return written, agent


def negate_output_layer(net: nn.MLP) -> None:
    """Flip the value surface: with a linear head this is an exact sign flip."""
    net.weights[-1] *= -1.0
    net.biases[-1] *= -1.0


def scenario_negated_recovery(
    config: ExperimentConfig,
    seed: int = 0,
    out_dir: str = "results/negated",
    recovery_steps: int = 10_000,
    algorithms=("hc-dyna", "dqn", "onpolicy-dyna"),
):
    """Train a base network, negate its output layer, then let each algorithm
    continue from the same corrupted checkpoint (shared replay contents,
    per-algorithm streams). Emits one recovery curve CSV per algorithm."""
    os.makedirs(out_dir, exist_ok=True)
    base_config = replace(config, algorithm="dqn", name=f"{config.name}-base")
    _, base_agent = run_single(base_config, seed, return_agent=True)

    negate_output_layer(base_agent.qnet)
    corrupted_path = os.path.join(out_dir, "corrupted.ckpt")
    nn.save_checkpoint(base_agent.qnet, corrupted_path)

    curves = {}
    for idx, algorithm in enumerate(algorithms):
        streams = make_streams(seed, key=idx + 1)
        cont_config = replace(
            config,
            algorithm=algorithm,
            name=f"{config.name}-{algorithm}",
            total_steps=recovery_steps,
            overrides={**config.overrides, "warmup_steps": 0},
        )
        agent, env = build_agent(cont_config, streams)
        agent.qnet = nn.load_checkpoint(corrupted_path)
        agent.target_net = agent.qnet.copy()
        agent.opt = nn.adam_init(agent.qnet, agent.cfg.learning_rate)
        agent.buffer = base_agent.buffer.copy()
        agent.tracker = base_agent.tracker  # read-only from here on is fine
        agent.queue.epsilon_a = base_agent.queue.epsilon_a
        rows = train_loop(agent, env, cont_config, streams)
        path = os.path.join(out_dir, f"recovery_{algorithm}.csv")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["algorithm", "env", "model", "seed", "env_step", "eval_return"])
            for step, ret in rows:
                w.writerow([algorithm, config.env, config.model, seed, step, ret])
        curves[algorithm] = rows
    return curves, corrupted_path


def inside_dilated_goal(states: np.ndarray) -> np.ndarray:
    return (states >= DILATED_GOAL_LOW).all(axis=1)


def scenario_queue_snapshot(
    config: ExperimentConfig,
    seed: int = 0,
    out_dir: str = "results/snapshot",
    n_samples: int = 2000,
):
    """Run the configured agent, then sample states from the ER buffer and the
    search-control queue and measure the fraction inside the dilated goal."""
    os.makedirs(out_dir, exist_ok=True)
    _, agent = run_single(config, seed, return_agent=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7_777]))
    er_states = agent.buffer.sample_states(n_samples, rng)
    sc_states = agent.queue.sample(n_samples, rng)
    for name, states in (("er_states", er_states), ("sc_states", sc_states)):
        with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "y"])
            w.writerows(states.tolist())
    fractions = {
        "er_fraction": float(inside_dilated_goal(er_states).mean()),
        "sc_fraction": float(inside_dilated_goal(sc_states).mean()),
        "n_samples": n_samples,
    }
    with open(os.path.join(out_dir, "fractions.json"), "w") as f:
        json.dump(fractions, f, indent=2)
    return fractions, agent
