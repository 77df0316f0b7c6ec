"""Model-based RL with hill-climbing search control, plus baselines."""

__version__ = "0.1.0"
