"""Prime+probe cut-off attack on a single counter: exact analysis and simulation.

The attacker primes the counter to ST, the victim executes its branch once,
and the attacker then probes with not-taken branches, counting
mispredictions until the first correct prediction.  That count ``c`` is the
attack output.

Exact results come from the absorbing attack chains in :mod:`pscdp.markov`;
:func:`simulate_attack` runs the same three phases on a sampled counter and
serves as an independent check on them.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .counters import (
    CounterState,
    Direction,
    predict,
    sampling_table,
)
from .errors import ConfigError, DegenerateModelError, UnreachableOutputError
from .markov import (
    C_MAX_CAP,
    DEFAULT_TAIL_TOLERANCE,
    OutputDistribution,
    hitting_probability,
    build_attack_chain,
    default_c_max,
    first_passage_distribution,
    iter_first_passage,
)
from .rational import as_fraction, exp_enclosure, format_fraction, to_decimal, unit_interval

__all__ = [
    "UNIFORM_PRIOR",
    "DEFAULT_PROBE_LEN",
    "AttackOutcome",
    "StrategyTable",
    "SuccessBounds",
    "DpReport",
    "Ideal",
    "Finite",
    "output_distributions",
    "optimal_strategy",
    "success_probability",
    "success_curve",
    "overall_success_rate",
    "dp_check",
    "chains_identical",
    "simulate_attack",
    "simulate_outcomes",
    "empirical_distribution",
    "total_variation",
]

UNIFORM_PRIOR = Fraction(1, 2)
DEFAULT_PROBE_LEN = 10_000


class AttackOutcome(NamedTuple):
    c: int
    exhausted: bool = False


@dataclass(frozen=True)
class StrategyTable:
    decisions: dict
    threshold_note: Fraction | None = None

    def guess(self, c):
        return self.decisions[c]


class SuccessBounds(NamedTuple):
    lower: Fraction
    upper: Fraction


@dataclass
class DpReport:
    epsilon: Fraction
    delta: Fraction
    satisfied: bool
    worst_c: int | None
    margins: dict = field(default_factory=dict)
    tail_mass: Fraction = Fraction(0)
    c_max: int = 0
    identical_chains: bool = False
    complete: bool = True

    @property
    def worst_margin(self):
        if self.worst_c is None:
            return None
        return min(self.margins[self.worst_c])

    def to_dict(self):
        worst = self.worst_margin
        return {
            "epsilon": format_fraction(self.epsilon),
            "delta": format_fraction(self.delta),
            "satisfied": self.satisfied,
            "worst_c": self.worst_c,
            "worst_margin": None if worst is None else format_fraction(worst),
            "worst_margin_decimal": None if worst is None else to_decimal(worst),
            "tail_mass": format_fraction(self.tail_mass),
            "tail_mass_decimal": to_decimal(self.tail_mass, 15),
            "c_max": self.c_max,
            "identical_chains": self.identical_chains,
            "complete": self.complete,
            "margins": {
                str(c): [format_fraction(a), format_fraction(b)]
                for c, (a, b) in sorted(self.margins.items())
            },
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


@dataclass(frozen=True)
class Ideal:
    """Prime phase that places the counter in ST directly."""


@dataclass(frozen=True)
class Finite:
    """Prime phase of ``steps`` taken branches starting from ``initial``."""

    steps: int
    initial: CounterState = CounterState.SN

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("prime steps", "must be nonnegative")
        object.__setattr__(self, "initial", CounterState(self.initial))


def _require_live(cfg):
    if cfg.m == 0:
        raise DegenerateModelError(
            "degenerate static predictor: m = 0 means the counter never leaves ST"
        )


def output_distributions(cfg, c_max=None):
    """``(Pr[out=c | v=T], Pr[out=c | v=NT])`` as two exact distributions."""
    _require_live(cfg)
    chain_t = build_attack_chain(cfg, Direction.T)
    chain_nt = build_attack_chain(cfg, Direction.NT)
    if c_max is None:
        c_max = max(default_c_max(chain_t), default_c_max(chain_nt))
    return first_passage_distribution(chain_t, c_max), first_passage_distribution(chain_nt, c_max)


def _weighted(pt, pnt, prior):
    return prior * pt, (1 - prior) * pnt


def optimal_strategy(cfg, c_max=None, prior=UNIFORM_PRIOR):
    """Guess T exactly where the T-posterior is strictly larger; ties guess NT.

    An output that neither victim can produce is not a tie in any useful
    sense (no guess there is ever scored), so it repeats the decision of the
    nearest reachable output below it, keeping threshold rules intact.
    """
    prior = unit_interval(prior, "prior")
    dist_t, dist_nt = output_distributions(cfg, c_max)
    decisions = {}
    last = Direction.NT
    for c in range(dist_t.c_max + 1):
        wt, wnt = _weighted(dist_t[c], dist_nt[c], prior)
        if wt == wnt == 0:
            decisions[c] = last
            continue
        last = decisions[c] = Direction.T if wt > wnt else Direction.NT
    note = 1 / cfg.m if cfg.p == 0 else None
    return StrategyTable(decisions=decisions, threshold_note=note)


def _posterior(pt, pnt, prior, c):
    wt, wnt = _weighted(pt, pnt, prior)
    if wt + wnt == 0:
        raise UnreachableOutputError(f"output c={c} has probability zero for both victims")
    return max(wt, wnt) / (wt + wnt)


def success_probability(cfg, c, prior=UNIFORM_PRIOR):
    """Posterior probability that the optimal guess after observing ``c`` is right."""
    if c < 0:
        raise ConfigError("c", "must be nonnegative")
    prior = unit_interval(prior, "prior")
    dist_t, dist_nt = output_distributions(cfg, c)
    return _posterior(dist_t[c], dist_nt[c], prior, c)


def success_curve(cfg, c_max=None, prior=UNIFORM_PRIOR):
    """``[(c, success probability or None when unreachable)]`` for ``c <= c_max``."""
    prior = unit_interval(prior, "prior")
    dist_t, dist_nt = output_distributions(cfg, c_max)
    curve = []
    for c in range(dist_t.c_max + 1):
        try:
            curve.append((c, _posterior(dist_t[c], dist_nt[c], prior, c)))
        except UnreachableOutputError:
            curve.append((c, None))
    return curve


def overall_success_rate(cfg, c_max=None, prior=UNIFORM_PRIOR):
    """Probability that the optimal attacker guesses right, as an interval.

    The lower end counts only outputs ``c <= c_max``; the upper end assumes
    every unlisted output is guessed correctly.
    """
    prior = unit_interval(prior, "prior")
    dist_t, dist_nt = output_distributions(cfg, c_max)
    lower = Fraction(0)
    for c in range(dist_t.c_max + 1):
        lower += max(_weighted(dist_t[c], dist_nt[c], prior))
    upper = lower + prior * dist_t.tail + (1 - prior) * dist_nt.tail
    return SuccessBounds(lower, upper)


def chains_identical(cfg):
    _require_live(cfg)
    return build_attack_chain(cfg, Direction.T).matrix == build_attack_chain(cfg, Direction.NT).matrix


def _holds(lhs, rhs_coeff, delta, eps):
    """Decide ``lhs <= e**eps * rhs_coeff + delta`` exactly; returns (holds, slack lower bound)."""
    width = Fraction(1, 10**20)
    while True:
        lo, hi = exp_enclosure(eps, width)
        slack_lo = lo * rhs_coeff + delta - lhs
        if slack_lo >= 0:
            return True, slack_lo
        if hi * rhs_coeff + delta - lhs < 0:
            return False, slack_lo
        # e**eps is irrational for rational eps > 0, so this terminates
        width /= 2**64


def dp_check(
    cfg,
    epsilon,
    delta,
    c_max=None,
    *,
    stop_on_violation=False,
    tail_tolerance=DEFAULT_TAIL_TOLERANCE,
):
    """Check both pointwise privacy inequalities for every output ``c <= c_max``.

    With ``c_max=None`` outputs are checked until both tails drop below
    ``tail_tolerance`` (capped at :data:`~pscdp.markov.C_MAX_CAP`).  A pass
    additionally needs the unchecked tail mass to be at most ``delta``,
    unless the two attack chains are identical, in which case every output
    has equal probability under both victims.
    """
    _require_live(cfg)
    eps = as_fraction(epsilon, "epsilon")
    delta = as_fraction(delta, "delta")
    if eps < 0:
        raise ConfigError("epsilon", "must be nonnegative")
    if delta < 0:
        raise ConfigError("delta", "must be nonnegative")

    chain_t = build_attack_chain(cfg, Direction.T)
    chain_nt = build_attack_chain(cfg, Direction.NT)
    identical = chain_t.matrix == chain_nt.matrix

    tolerance = Fraction(tail_tolerance)
    limit = c_max
    if limit is None:
        escaping = max(1 - hitting_probability(chain_t), 1 - hitting_probability(chain_nt))
        limit = C_MAX_CAP if escaping >= tolerance else None

    margins = {}
    all_hold = True
    worst_c, worst = None, None
    complete = True
    last_c, tail_t, tail_nt = -1, Fraction(1), Fraction(1)
    for (c, pt, tail_t), (_, pnt, tail_nt) in zip(
        iter_first_passage(chain_t), iter_first_passage(chain_nt)
    ):
        last_c = c
        ok1, slack1 = _holds(pt, pnt, delta, eps)
        ok2, slack2 = _holds(pnt, pt, delta, eps)
        margins[c] = (slack1, slack2)
        low = min(slack1, slack2)
        if worst is None or low < worst:
            worst_c, worst = c, low
        if not (ok1 and ok2):
            all_hold = False
            if stop_on_violation and not identical:
                complete = limit is not None and c >= limit
                break
        if limit is not None:
            if c >= limit:
                break
        elif (tail_t < tolerance and tail_nt < tolerance) or c >= C_MAX_CAP:
            break

    tail_mass = max(tail_t, tail_nt)
    satisfied = identical or (all_hold and tail_mass <= delta)
    return DpReport(
        epsilon=eps,
        delta=delta,
        satisfied=satisfied,
        worst_c=worst_c,
        margins=margins,
        tail_mass=tail_mass,
        c_max=last_c,
        identical_chains=identical,
        complete=complete,
    )


def _coerce_seed(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _draws(rng, block=32):
    while True:
        yield from rng.random(block).tolist()


def _run(table, state, taken, draws):
    u = next(draws)
    for bound, nxt in table[state][taken]:
        if u < bound:
            return nxt
    raise AssertionError("sampling table does not cover [0, 1)")


def simulate_attack(cfg, victim, seed, prime=Ideal(), probe_len=DEFAULT_PROBE_LEN, *, _table=None):
    """Run the three attack phases once on a sampled counter.

    Every branch execution consumes exactly one uniform draw from a
    generator seeded by ``seed`` (an int or :class:`numpy.random.SeedSequence`),
    so the outcome is a pure function of the arguments.
    """
    if probe_len < 1:
        raise ConfigError("probe_len", "must be at least 1")
    table = _table or sampling_table(cfg)
    draws = _draws(np.random.default_rng(_coerce_seed(seed)))

    if isinstance(prime, Ideal):
        state = int(CounterState.ST)
    else:
        state = int(prime.initial)
        for _ in range(prime.steps):
            state = _run(table, state, 1, draws)

    state = _run(table, state, int(victim is Direction.T), draws)

    c = 0
    for _ in range(probe_len):
        hit = predict(state) is Direction.NT
        state = _run(table, state, 0, draws)
        if hit:
            return AttackOutcome(c)
        c += 1
    return AttackOutcome(c, exhausted=True)


def simulate_outcomes(cfg, victim, trials, seed, prime=Ideal(), probe_len=DEFAULT_PROBE_LEN):
    """Count outcomes over ``trials`` independent runs.

    Trial ``i`` is seeded with ``SeedSequence(seed, spawn_key=(i,))`` -- the
    ``i``-th child of the master seed -- so any split of the trial range
    across workers sums to the same counts.
    """
    table = sampling_table(cfg)
    counts = Counter()
    for i in range(trials):
        ss = np.random.SeedSequence(seed, spawn_key=(i,))
        counts[simulate_attack(cfg, victim, ss, prime, probe_len, _table=table)] += 1
    return counts


def empirical_distribution(counts):
    """Relative frequencies ``{c: Fraction}`` plus the exhausted fraction."""
    total = sum(counts.values())
    freqs, exhausted = {}, 0
    for outcome, k in counts.items():
        if outcome.exhausted:
            exhausted += k
        else:
            freqs[outcome.c] = freqs.get(outcome.c, 0) + k
    return {c: Fraction(k, total) for c, k in sorted(freqs.items())}, Fraction(exhausted, total)


def total_variation(exact: OutputDistribution, counts):
    """TV distance between an exact distribution and observed outcome counts.

    Outputs beyond ``exact.c_max`` (and exhausted probes) are pooled into a
    single bucket compared against ``exact.tail``.
    """
    freqs, exhausted = empirical_distribution(counts)
    beyond = exhausted + sum(f for c, f in freqs.items() if c > exact.c_max)
    diff = abs(exact.tail - beyond)
    for c in range(exact.c_max + 1):
        diff += abs(exact[c] - freqs.get(c, 0))
    return diff / 2
