"""Experiment orchestration: configs, runner, scenario scripts, CLI."""

from .config import ExperimentConfig, load_config
from .runner import (
    aggregate,
    build_agent,
    evaluate_episode,
    make_streams,
    run_experiment,
    run_single,
    train_loop,
)
from .scenarios import (
    scenario_negated_recovery,
    scenario_queue_snapshot,
    scenario_value_surface,
)

__all__ = [
    "ExperimentConfig",
    "aggregate",
    "build_agent",
    "evaluate_episode",
    "load_config",
    "make_streams",
    "run_experiment",
    "run_single",
    "scenario_negated_recovery",
    "scenario_queue_snapshot",
    "scenario_value_surface",
    "train_loop",
]
