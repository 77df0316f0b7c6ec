"""Task simulators and the tag registry used by experiment configs."""

from __future__ import annotations

from ..errors import ConfigurationError
from .base import Env, EnvSpec, EnvState
from .classic import Acrobot, CartPole, MountainCar
from .gridworld import ContinuousActionGridWorld, GridWorld
from .tabular import TabularGridWorld

_REGISTRY = {
    "gridworld": GridWorld,
    "gridworld-cont-action": ContinuousActionGridWorld,
    "tabular-gridworld": TabularGridWorld,
    "mountaincar": MountainCar,
    "cartpole": CartPole,
    "acrobot": Acrobot,
}

ENV_TAGS = tuple(_REGISTRY)


def make_env(tag: str):
    try:
        return _REGISTRY[tag]()
    except KeyError:
        raise ConfigurationError(f"unknown environment tag {tag!r}; known: {ENV_TAGS}") from None


__all__ = [
    "Acrobot",
    "CartPole",
    "ContinuousActionGridWorld",
    "Env",
    "EnvSpec",
    "EnvState",
    "ENV_TAGS",
    "GridWorld",
    "MountainCar",
    "TabularGridWorld",
    "make_env",
]
