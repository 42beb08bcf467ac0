"""Two-bit saturating counters with probabilistic update and strong-state reversal.

A single parameterisation covers three designs:

* ``m = 1, p = 0`` -- the conventional deterministic counter,
* ``p = 0``         -- the probabilistic counter that only moves with probability ``m``,
* general ``(m, p)`` -- additionally, at the strong states the counter moves
  *against* the input with probability ``p``.

Analysis code works with exact :class:`~fractions.Fraction` probabilities.
Sampling (:func:`step`, :func:`sampling_table`) is the only place floats
may appear.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from fractions import Fraction

from .rational import format_fraction, unit_interval

__all__ = [
    "CounterState",
    "Direction",
    "CounterConfig",
    "CONVENTIONAL",
    "predict",
    "transition_distribution",
    "step",
    "sampling_table",
    "SAMPLING_ORDER",
]


class CounterState(enum.IntEnum):
    SN = 0
    WN = 1
    WT = 2
    ST = 3

    def mirror(self):
        return CounterState(3 - self)


class Direction(enum.Enum):
    T = "T"
    NT = "NT"

    def flip(self):
        return Direction.NT if self is Direction.T else Direction.T

    @property
    def taken(self):
        return self is Direction.T

    @classmethod
    def parse(cls, text):
        key = str(text).strip().upper()
        if key in ("T", "TAKEN", "1"):
            return cls.T
        if key in ("NT", "N", "NOT-TAKEN", "0"):
            return cls.NT
        raise ValueError(f"unknown branch direction {text!r}")


# Inverse-CDF order used by every sampler; fixed so that a given draw
# sequence reproduces the same state sequence everywhere.
SAMPLING_ORDER = (CounterState.SN, CounterState.WN, CounterState.WT, CounterState.ST)


@dataclass(frozen=True)
class CounterConfig:
    """Update probability ``m`` and strong-state reversal probability ``p``."""

    m: Fraction
    p: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", unit_interval(self.m, "m"))
        object.__setattr__(self, "p", unit_interval(self.p, "p"))

    @property
    def n(self):
        return 1 - self.m

    @property
    def q(self):
        return 1 - self.p

    def to_dict(self):
        return {"m": format_fraction(self.m), "p": format_fraction(self.p)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        return cls(data["m"], data["p"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __str__(self):
        return f"(m={self.m}, p={self.p})"


CONVENTIONAL = CounterConfig(1, 0)


def predict(state):
    """Most significant bit of the counter: taken for WT and ST."""
    return Direction.T if state >= CounterState.WT else Direction.NT


def transition_distribution(state, input, cfg):
    """Exact one-step distribution ``{next_state: probability}`` (zero entries omitted)."""
    state = CounterState(state)
    if state is CounterState.SN:
        mirrored = transition_distribution(CounterState.ST, input.flip(), cfg)
        return {s.mirror(): pr for s, pr in mirrored.items()}
    if state is CounterState.WN:
        mirrored = transition_distribution(CounterState.WT, input.flip(), cfg)
        return {s.mirror(): pr for s, pr in mirrored.items()}

    m, p = cfg.m, cfg.p
    if state is CounterState.ST:
        # probability of leaving ST for WT: m * [(1-p) P_N + p P_T]
        leave = m * p if input is Direction.T else m * (1 - p)
        dist = {CounterState.ST: 1 - leave, CounterState.WT: leave}
    else:  # WT
        target = CounterState.ST if input is Direction.T else CounterState.SN
        dist = {target: m, CounterState.WT: 1 - m}
    return {s: pr for s, pr in dist.items() if pr != 0}


def step(state, input, cfg, uniform_draw):
    """Sample the successor of ``state`` from a uniform draw in ``[0, 1)``.

    States are laid out on ``[0, 1)`` in :data:`SAMPLING_ORDER`; the draw is
    compared against the exact cumulative probabilities (a float draw is
    compared exactly against the rationals).
    """
    if not 0 <= uniform_draw < 1:
        raise ValueError(f"uniform draw must lie in [0, 1), got {uniform_draw!r}")
    dist = transition_distribution(state, input, cfg)
    cumulative = Fraction(0)
    last = None
    for candidate in SAMPLING_ORDER:
        pr = dist.get(candidate)
        if not pr:
            continue
        cumulative += pr
        last = candidate
        if uniform_draw < cumulative:
            return candidate
    return last


def sampling_table(cfg):
    """Float inverse-CDF table for simulation loops.

    ``table[state][taken]`` is a tuple of ``(upper_bound, next_state)`` pairs
    in :data:`SAMPLING_ORDER`; the last bound is forced to ``inf`` so rounding
    can never fall off the end.  Simulation only -- analysis stays exact.
    """
    table = []
    for state in CounterState:
        row = []
        for taken in (False, True):
            direction = Direction.T if taken else Direction.NT
            dist = transition_distribution(state, direction, cfg)
            entries = []
            cumulative = Fraction(0)
            for candidate in SAMPLING_ORDER:
                pr = dist.get(candidate)
                if pr:
                    cumulative += pr
                    entries.append((float(cumulative), int(candidate)))
            entries[-1] = (float("inf"), entries[-1][1])
            row.append(tuple(entries))
        table.append(tuple(row))
    return tuple(table)
