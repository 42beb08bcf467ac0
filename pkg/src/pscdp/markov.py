"""Exact Markov-chain models of saturating counters.

Two families of chains are built here:

* the 4-state *stationary* chain of a counter driven by a Bernoulli(s)
  branch, with states ordered ``ST, WT, WN, SN``;
* the 5-state *attack* chain ``ST, ST', WT, SN, S`` describing one run of
  the prime+probe cut-off attack, where ``S`` absorbs everything that has
  already reached ``SN``.

All probabilities are :class:`~fractions.Fraction`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

from . import linalg
from .counters import CounterState, Direction, transition_distribution
from .errors import ConfigError, DegenerateModelError
from .rational import format_fraction, unit_interval

__all__ = [
    "STATIONARY_ORDER",
    "ATTACK_STATES",
    "DEFAULT_TAIL_TOLERANCE",
    "C_MAX_CAP",
    "MarkovModel",
    "InputPolicy",
    "OutputDistribution",
    "StationaryResult",
    "Steadiness",
    "build_chain",
    "build_stationary_chain",
    "build_attack_chain",
    "iter_first_passage",
    "hitting_probability",
    "default_c_max",
    "first_passage_distribution",
    "stationary_distribution",
    "stationary_closed_form",
    "steadiness_check",
    "misprediction_rate_closed_form",
]

STATIONARY_ORDER = (CounterState.ST, CounterState.WT, CounterState.WN, CounterState.SN)
ATTACK_STATES = ("ST", "ST'", "WT", "SN", "S")

DEFAULT_TAIL_TOLERANCE = Fraction(1, 10**12)
C_MAX_CAP = 10_000


@dataclass(frozen=True)
class MarkovModel:
    states: tuple
    matrix: tuple
    start: int = 0
    target: int | None = None
    absorbing: int | None = None

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        matrix = tuple(tuple(Fraction(x) for x in row) for row in self.matrix)
        n = len(states)
        if len(matrix) != n or any(len(row) != n for row in matrix):
            raise ValueError(f"matrix must be {n}x{n}")
        for name, row in zip(states, matrix):
            if any(x < 0 or x > 1 for x in row):
                raise ValueError(f"row {name}: entries must lie in [0, 1]")
            if sum(row) != 1:
                raise ValueError(f"row {name} sums to {sum(row)}, not 1")
        for attr in ("start", "target", "absorbing"):
            idx = getattr(self, attr)
            if idx is not None and not 0 <= idx < n:
                raise ValueError(f"{attr} index {idx} out of range")
        if self.absorbing is not None:
            a = self.absorbing
            if matrix[a][a] != 1:
                raise ValueError(f"absorbing state {states[a]} must loop with probability 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "matrix", matrix)

    def index(self, name):
        return self.states.index(str(name))

    def row(self, name):
        return dict(zip(self.states, self.matrix[self.index(name)]))

    def rows(self):
        return [list(row) for row in self.matrix]

    def to_dict(self):
        def name(idx):
            return None if idx is None else self.states[idx]

        return {
            "states": list(self.states),
            "matrix": [[format_fraction(x) for x in row] for row in self.matrix],
            "start": name(self.start),
            "target": name(self.target),
            "absorbing": name(self.absorbing),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        states = tuple(data["states"])

        def idx(key):
            value = data.get(key)
            return None if value is None else states.index(value)

        return cls(
            states=states,
            matrix=tuple(tuple(Fraction(x) for x in row) for row in data["matrix"]),
            start=idx("start") or 0,
            target=idx("target"),
            absorbing=idx("absorbing"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class InputPolicy:
    """Statistical input of a branch: always taken, never taken, or Bernoulli(s)."""

    kind: str
    s: Fraction

    def __post_init__(self):
        if self.kind not in ("ConstantT", "ConstantNT", "Bernoulli"):
            raise ConfigError("kind", f"unknown input policy {self.kind!r}")
        object.__setattr__(self, "s", unit_interval(self.s, "s"))

    @property
    def t(self):
        return 1 - self.s

    @classmethod
    def constant(cls, direction):
        if direction is Direction.T:
            return cls("ConstantT", Fraction(1))
        return cls("ConstantNT", Fraction(0))

    @classmethod
    def bernoulli(cls, s):
        return cls("Bernoulli", s)


@dataclass(frozen=True)
class OutputDistribution:
    """``probs[c] = Pr[out = c]`` for ``c = 0..c_max``; ``tail`` is the unlisted mass."""

    probs: dict = field(default_factory=dict)
    c_max: int = 0
    tail: Fraction = Fraction(0)

    def __post_init__(self):
        if any(v < 0 for v in self.probs.values()):
            raise ValueError("negative probability")
        if self.tail < 0:
            raise ValueError("negative tail mass")
        if sum(self.probs.values()) + self.tail != 1:
            raise ValueError("probabilities and tail do not sum to 1")

    def __getitem__(self, c):
        if c < 0 or c > self.c_max:
            raise KeyError(f"c={c} outside 0..{self.c_max}")
        return self.probs.get(c, Fraction(0))

    def support(self):
        return [c for c in range(self.c_max + 1) if self.probs.get(c)]


class StationaryResult(NamedTuple):
    mu: tuple  # (a, b, c, d) over ST, WT, WN, SN
    misprediction_rate: Fraction


class Steadiness(NamedTuple):
    unique_stationary: bool
    aperiodic: bool


def _mixture(cfg, state, s):
    t = 1 - s
    out = {}
    for direction, weight in ((Direction.T, s), (Direction.NT, t)):
        if weight == 0:
            continue
        for nxt, pr in transition_distribution(state, direction, cfg).items():
            out[nxt] = out.get(nxt, Fraction(0)) + weight * pr
    return out


def build_chain(cfg, policy):
    """4-state chain (order ST, WT, WN, SN) of a counter fed by ``policy``."""
    matrix = []
    for state in STATIONARY_ORDER:
        dist = _mixture(cfg, state, policy.s)
        matrix.append(tuple(dist.get(col, Fraction(0)) for col in STATIONARY_ORDER))
    return MarkovModel(states=tuple(s.name for s in STATIONARY_ORDER), matrix=tuple(matrix))


def build_stationary_chain(cfg, s):
    return build_chain(cfg, InputPolicy.bernoulli(s))


def build_attack_chain(cfg, victim):
    """Chain over ``ST, ST', WT, SN, S`` for one cut-off attack.

    The first transition is the victim's branch; every later transition is
    an attacker probe (not taken).  ``ST'`` is ``ST`` after the victim has
    run.  ``SN`` feeds the absorbing ``S`` so that mass sitting in ``SN`` at
    step ``k`` is exactly the first-passage mass at ``k``.
    """
    if cfg.m == 0:
        raise DegenerateModelError(
            "degenerate static predictor: m = 0 means the counter never leaves ST"
        )
    ST, WT, SN = CounterState.ST, CounterState.WT, CounterState.SN
    zero = Fraction(0)
    victim_step = transition_distribution(ST, victim, cfg)
    probe_strong = transition_distribution(ST, Direction.NT, cfg)
    probe_weak = transition_distribution(WT, Direction.NT, cfg)

    matrix = (
        (zero, victim_step.get(ST, zero), victim_step.get(WT, zero), zero, zero),
        (zero, probe_strong.get(ST, zero), probe_strong.get(WT, zero), zero, zero),
        (zero, zero, probe_weak.get(WT, zero), probe_weak.get(SN, zero), zero),
        (zero, zero, zero, zero, Fraction(1)),
        (zero, zero, zero, zero, Fraction(1)),
    )
    return MarkovModel(states=ATTACK_STATES, matrix=matrix, start=0, target=3, absorbing=4)


def iter_first_passage(model) -> Iterator[tuple[int, Fraction, Fraction]]:
    """Yield ``(c, Pr[out = c], tail after c)`` for ``c = 0, 1, 2, ...`` without end.

    ``Pr[out = c]`` is the mass in the target after ``c + 1`` transitions.
    """
    if model.target is None:
        raise ValueError("model has no target state")
    rows = model.rows()
    vec = [Fraction(0)] * len(model.states)
    vec[model.start] = Fraction(1)
    remaining = Fraction(1)
    c = 0
    while True:
        vec = linalg.vecmat(vec, rows)
        prob = vec[model.target]
        remaining -= prob
        yield c, prob, remaining
        c += 1


def hitting_probability(model):
    # Pr[start ever reaches target], from the linear system on transient states.
    n = len(model.states)
    rows = model.rows()
    can_reach = {model.target}
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if i not in can_reach and any(rows[i][j] for j in can_reach):
                can_reach.add(i)
                changed = True
    if model.start not in can_reach:
        return Fraction(0)
    free = [i for i in sorted(can_reach) if i != model.target]
    if model.start == model.target:
        return Fraction(1)
    a = [[(1 if i == j else 0) - rows[i][j] for j in free] for i in free]
    b = [rows[i][model.target] for i in free]
    h = linalg.solve(a, b)
    return h[free.index(model.start)]


def default_c_max(model, tolerance=DEFAULT_TAIL_TOLERANCE, cap=C_MAX_CAP):
    """Smallest ``c`` whose tail is below ``tolerance``, capped at ``cap``.

    When the target is not reached almost surely the tail cannot fall below
    the escaping mass, and the cap is returned directly.
    """
    tolerance = Fraction(tolerance)
    if 1 - hitting_probability(model) >= tolerance:
        return cap
    for c, _, tail in iter_first_passage(model):
        if tail < tolerance or c >= cap:
            return c
    raise AssertionError("unreachable")


def first_passage_distribution(model, c_max=None):
    if c_max is None:
        c_max = default_c_max(model)
    if c_max < 0:
        raise ValueError("c_max must be nonnegative")
    probs = {}
    tail = Fraction(1)
    for c, prob, tail in iter_first_passage(model):
        probs[c] = prob
        if c >= c_max:
            break
    return OutputDistribution(probs=probs, c_max=c_max, tail=tail)


def _check_stationary_domain(cfg, s):
    if cfg.m == 0:
        raise DegenerateModelError(
            "m = 0: the counter never moves, so no unique stationary distribution exists"
        )
    if cfg.p == 1 and s in (0, 1):
        raise DegenerateModelError(
            f"p = 1 with s = {s}: two closed classes, the steady state depends on the start"
        )


def stationary_closed_form(s, p):
    """Closed-form ``(mu, r)`` as functions of ``s`` and ``p`` only."""
    s = unit_interval(s, "s")
    p = unit_interval(p, "p")
    t, q = 1 - s, 1 - p
    toward_taken = q * s + p * t  # Pr[strong state reinforces] at ST; mirror at SN
    toward_not = q * t + p * s
    denom = s * toward_taken * (1 + toward_not) + t * toward_not * (1 + toward_taken)
    if denom == 0:
        raise DegenerateModelError(f"steady state undefined at s={s}, p={p}")
    mu = (
        s * toward_taken / denom,
        s * toward_taken * toward_not / denom,
        t * toward_taken * toward_not / denom,
        t * toward_not / denom,
    )
    numer = s * t * toward_taken * (1 + toward_not) + s * t * toward_not * (1 + toward_taken)
    return mu, numer / denom


def misprediction_rate_closed_form(s, p):
    """Steady-state misprediction rate; independent of ``m``."""
    return stationary_closed_form(s, p)[1]


def stationary_distribution(cfg, s):
    """Solve ``mu M = mu`` exactly and cross-check against the closed form."""
    s = unit_interval(s, "s")
    _check_stationary_domain(cfg, s)
    rows = build_stationary_chain(cfg, s).rows()
    n = len(rows)
    # (M - I)^T mu^T = 0 with the last equation replaced by sum(mu) = 1
    system = linalg.transpose(linalg.sub(rows, linalg.identity(n)))
    system[-1] = [Fraction(1)] * n
    rhs = [Fraction(0)] * (n - 1) + [Fraction(1)]
    try:
        mu = tuple(linalg.solve(system, rhs))
    except ZeroDivisionError:
        raise DegenerateModelError(f"no unique stationary distribution for {cfg}, s={s}") from None
    t = 1 - s
    r = (mu[0] + mu[1]) * t + (mu[2] + mu[3]) * s

    mu_cf, r_cf = stationary_closed_form(s, cfg.p)
    if mu != mu_cf or r != r_cf:
        raise RuntimeError(f"linear solve disagrees with closed form at {cfg}, s={s}")
    return StationaryResult(mu=mu, misprediction_rate=r)


def steadiness_check(cfg, s):
    """Unique stationary distribution iff rank(M - I) = 3; aperiodic iff det(M + I) != 0."""
    s = unit_interval(s, "s")
    rows = build_stationary_chain(cfg, s).rows()
    eye = linalg.identity(len(rows))
    unique = linalg.rank(linalg.sub(rows, eye)) == len(rows) - 1
    aperiodic = linalg.det(linalg.add(rows, eye)) != 0
    return Steadiness(unique_stationary=unique, aperiodic=aperiodic)
