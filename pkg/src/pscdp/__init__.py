"""Probabilistic saturating counters: attack analysis, privacy checks, misprediction rates."""

__version__ = "0.1.0"

from .counters import CONVENTIONAL, CounterConfig, CounterState, Direction, predict, step, transition_distribution
from .errors import ConfigError, DegenerateModelError, PscError, UnreachableOutputError

__all__ = [
    "__version__",
    "CONVENTIONAL",
    "CounterConfig",
    "CounterState",
    "Direction",
    "predict",
    "step",
    "transition_distribution",
    "ConfigError",
    "DegenerateModelError",
    "PscError",
    "UnreachableOutputError",
]
