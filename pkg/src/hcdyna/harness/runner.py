"""Experiment execution: seeding, the training loop, evaluation, CSV logs.

Every run is fully determined by (config, seed): the seed spawns one named
rng stream per component (network init, environment, exploration, ER
sampling, planning-state sampling, hill-climb noise, model training,
evaluation), so reruns are byte-identical and algorithm reductions that
share streams line up bitwise.

Per-seed outputs: ``<out>/<name>/<seed>.csv`` with rows
(algorithm, env, model, seed, env_step, eval_return) plus a ``.meta.json``
sidecar carrying status and wall-clock time (kept out of the CSV so the CSV
stays reproducible). ``run_experiment`` merges seeds and writes the
seed-aggregated curve (mean, stderr, effective seed count per step).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from .. import model as mdl
from ..agent import DQN_ALGORITHMS, DQNAgent, Transition
from ..ddpg import DDPGAgent
from ..envs import make_env
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

STREAM_NAMES = ("init", "env", "explore", "er", "sc", "hc", "model", "eval")

RUN_CSV_HEADER = ("algorithm", "env", "model", "seed", "env_step", "eval_return")
AGG_CSV_HEADER = ("algorithm", "env", "model", "env_step", "mean_return", "stderr", "n_seeds")


def make_streams(seed, key: int | None = None) -> dict:
    entropy = [int(seed)] if key is None else [int(seed), int(key)]
    children = np.random.SeedSequence(entropy).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(c) for name, c in zip(STREAM_NAMES, children)}


def build_agent(config: ExperimentConfig, streams: dict):
    env = make_env(config.env)
    agent_cfg = config.agent_config()
    hc_cfg = config.hc_config()
    model = mdl.make_model(config.model, env, streams["model"])
    if config.algorithm in DQN_ALGORITHMS:
        agent = DQNAgent(env, config.algorithm, model, agent_cfg, hc_cfg, streams)
    else:
        agent = DDPGAgent(env, config.algorithm, model, agent_cfg, hc_cfg, streams)
    return agent, env


def evaluate_episode(agent, env, rng: np.random.Generator) -> float:
    """One evaluation episode on a fresh copy of the task, eval rng only."""
    s = env.initial_state(rng)
    total = 0.0
    for _ in range(env.spec.episode_cap):
        a = agent.eval_action(s, rng)
        s, r, terminal = env.step(s, a, rng)
        total += r
        if terminal:
            break
    return total


@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    rows: list = field(default_factory=list)  # (env_step, eval_return)
    status: str = "ok"
    error: str = ""
    wall_ms: float = 0.0
    csv_path: str | None = None

    def returns(self) -> list:
        return [r[1] for r in self.rows]


def train_loop(
    agent,
    env,
    config: ExperimentConfig,
    streams: dict,
    on_eval=None,
    step_hook=None,
    total_steps: int | None = None,
) -> list:
    """The interaction loop shared by experiments and scenario scripts.

    Warmup steps act uniformly at random and perform no updates, no hill
    climbing, and no model training. After that each step observes one real
    transition, runs the hill-climbing pass (hill-climbing algorithms only),
    does ``planning_steps`` mini-batch updates, and finally one learned-model
    update when the model is learned. Evaluation runs every ``eval_every``
    steps on the evaluation stream. ``step_hook(t, agent)`` runs after every
    step; returning True stops the loop early.
    """
    cfg = agent.cfg
    steps = config.total_steps if total_steps is None else total_steps
    learned = isinstance(agent.model, mdl.LearnedDiffModel)
    rows = []
    s = env.initial_state(streams["env"])
    episode_steps = 0
    for t in range(1, steps + 1):
        warmup = t <= cfg.warmup_steps
        a = agent.warmup_action(s) if warmup else agent.act(s)
        s_next, r, terminal = env.step(s, a, streams["env"])
        episode_steps += 1
        agent.observe(Transition(s, a, r, s_next, terminal))
        if not warmup:
            if agent.uses_hill_climbing():
                agent.hill_climb()
            agent.plan()
            if learned:
                agent.model.train_step(agent.buffer, streams["model"])
        truncated = not terminal and episode_steps >= env.spec.episode_cap
        if terminal or truncated:
            s = env.initial_state(streams["env"])
            episode_steps = 0
        else:
            s = s_next
        if t % config.eval_every == 0:
            ret = evaluate_episode(agent, env, streams["eval"])
            rows.append((t, ret))
            if on_eval is not None:
                on_eval(t, ret)
        if step_hook is not None and step_hook(t, agent):
            break
    return rows


def run_single(
    config: ExperimentConfig,
    seed: int,
    out_dir: str | None = None,
    return_agent: bool = False,
):
    """Train one seed; returns a RunResult (and the agent when asked)."""
    start = time.perf_counter()
    streams = make_streams(seed)
    agent, env = build_agent(config, streams)
    result = RunResult(config, seed)

    writer = None
    handle = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.csv_path = os.path.join(out_dir, f"{seed}.csv")
        handle = open(result.csv_path, "w", newline="")
        writer = csv.writer(handle)
        writer.writerow(RUN_CSV_HEADER)

    def on_eval(step, ret):
        result.rows.append((step, ret))
        if writer is not None:
            writer.writerow([config.algorithm, config.env, config.model, seed, step, ret])
            handle.flush()

    try:
        train_loop(agent, env, config, streams, on_eval=on_eval)
    except FloatingPointError as e:
        result.status = "failed"
        result.error = str(e)
        logger.error("seed %d failed: %s", seed, e)
    finally:
        if handle is not None:
            handle.close()
    result.wall_ms = (time.perf_counter() - start) * 1000.0
    if out_dir is not None:
        meta = {
            "algorithm": config.algorithm,
            "env": config.env,
            "model": config.model,
            "seed": seed,
            "status": result.status,
            "error": result.error,
            "wall_ms": result.wall_ms,
        }
        with open(os.path.join(out_dir, f"{seed}.meta.json"), "w") as f:
            json.dump(meta, f, indent=2)
    if return_agent:
        return result, agent
    return result


def _worker(args):
    config, seed, out_dir = args
    return run_single(config, seed, out_dir)


def default_workers() -> int:
    return int(os.environ.get("HCDYNA_WORKERS", os.cpu_count() or 1))


def run_experiment(config: ExperimentConfig, out_root: str | None = None, workers: int | None = None):
    """Run all seeds of one experiment cell; merge and aggregate the logs."""
    out_dir = None
    if out_root is not None:
        out_dir = os.path.join(out_root, config.name)
    seeds = [config.base_seed + i for i in range(config.seeds)]
    jobs = [(config, seed, out_dir) for seed in seeds]
    if workers is None:
        workers = default_workers()
    if workers > 1 and len(jobs) > 1:
        with Pool(workers) as pool:
            results = pool.map(_worker, jobs)
    else:
        results = [_worker(j) for j in jobs]

    failed = [r.seed for r in results if r.status != "ok"]
    if failed:
        logger.warning("%s: %d/%d seeds failed: %s", config.name, len(failed), len(seeds), failed)
    if out_dir is not None:
        _write_merged(config, results, out_dir)
    return results


def _write_merged(config: ExperimentConfig, results, out_dir: str) -> None:
    with open(os.path.join(out_dir, "merged.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RUN_CSV_HEADER)
        for r in results:
            for step, ret in r.rows:
                w.writerow([config.algorithm, config.env, config.model, r.seed, step, ret])
    agg = aggregate(results)
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(AGG_CSV_HEADER)
        for row in agg:
            w.writerow([config.algorithm, config.env, config.model, *row])
    with open(os.path.join(out_dir, "experiment.meta.json"), "w") as f:
        json.dump(
            {
                "name": config.name,
                "seeds": config.seeds,
                "failed_seeds": [r.seed for r in results if r.status != "ok"],
            },
            f,
            indent=2,
        )


def aggregate(results) -> list:
    """Per eval step: (env_step, mean, stderr, n) over the successful seeds."""
    by_step: dict = {}
    for r in results:
        if r.status != "ok":
            continue
        for step, ret in r.rows:
            by_step.setdefault(step, []).append(ret)
    out = []
    for step in sorted(by_step):
        vals = np.asarray(by_step[step])
        n = len(vals)
        stderr = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        out.append((step, float(vals.mean()), stderr, n))
    return out
