"""Experiment configuration: flat key-value files with an [override] section.

A minimal config names only the environment, the algorithm, and seeds; every
other knob carries the standard default and can be overridden per experiment:

    [experiment]
    name = mountaincar-hc
    env = mountaincar
    algorithm = hc-dyna
    model = exact
    total_steps = 40000
    seeds = 10

    [override]
    warmup_steps = 5000
    hc_steps = 100
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from ..agent import ALGORITHMS, AgentConfig
from ..envs import ENV_TAGS
from ..errors import ConfigurationError
from ..search_control import HCConfig

MODEL_KINDS = ("exact", "learned")

# [override] keys routed into HCConfig; everything else goes to AgentConfig
_HC_KEYS = {
    "hc_steps": "steps",
    "noise_scale": "noise_scale",
    "step_size": "step_size",
    "threshold_ema": "threshold_ema",
    "jitter": "jitter",
}


@dataclass
class ExperimentConfig:
    env: str
    algorithm: str
    name: str = ""
    model: str = "exact"
    total_steps: int = 50_000
    eval_every: int = 1000
    seeds: int = 10
    base_seed: int = 0
    planning_steps: int = 1
    rho: float = 0.5
    out: str = "results"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            self.name = f"{self.env}-{self.algorithm}"
        validate(self)

    def agent_config(self) -> AgentConfig:
        cfg = AgentConfig(rho=self.rho, planning_steps=self.planning_steps)
        agent_overrides = {k: v for k, v in self.overrides.items() if k not in _HC_KEYS}
        return replace(cfg, **agent_overrides)

    def hc_config(self) -> HCConfig:
        hc_overrides = {_HC_KEYS[k]: v for k, v in self.overrides.items() if k in _HC_KEYS}
        return HCConfig(**hc_overrides)


def validate(config: ExperimentConfig) -> None:
    if config.env not in ENV_TAGS:
        raise ConfigurationError(f"unknown env {config.env!r}; known: {ENV_TAGS}")
    if config.algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {config.algorithm!r}; known: {ALGORITHMS}")
    if config.model not in MODEL_KINDS:
        raise ConfigurationError(f"model must be one of {MODEL_KINDS}, got {config.model!r}")
    if not 0.0 <= config.rho <= 1.0:
        raise ConfigurationError(f"rho must be in [0, 1], got {config.rho}")
    if config.total_steps < 1 or config.eval_every < 1 or config.seeds < 1 or config.planning_steps < 1:
        raise ConfigurationError("total_steps, eval_every, seeds, and planning_steps must be >= 1")
    agent_fields = {f.name: f.type for f in fields(AgentConfig)}
    for key in config.overrides:
        if key not in _HC_KEYS and key not in agent_fields:
            raise ConfigurationError(f"unknown override key {key!r}")
    # instantiating applies range checks in the dataclasses themselves
    config.agent_config()
    config.hc_config()


_INT_KEYS = {
    "total_steps", "eval_every", "seeds", "base_seed", "planning_steps",
    "batch_size", "target_sync_every", "warmup_steps", "buffer_capacity",
    "queue_capacity", "hc_steps",
}
_FLOAT_KEYS = {
    "rho", "learning_rate", "epsilon_train", "epsilon_eval", "gamma",
    "output_half_width", "noise_scale", "step_size", "threshold_ema", "jitter",
}


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "hidden_sizes":
        return tuple(int(x) for x in raw.split(","))
    return raw


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise ConfigurationError(f"{path}: missing [experiment] section")
    exp = {k: _coerce(k, v) for k, v in parser["experiment"].items()}
    overrides = {}
    if "override" in parser:
        overrides = {k: _coerce(k, v) for k, v in parser["override"].items()}
    try:
        return ExperimentConfig(**exp, overrides=overrides)
    except TypeError as e:
        raise ConfigurationError(f"{path}: {e}") from None
