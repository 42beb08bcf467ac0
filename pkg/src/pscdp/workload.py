"""Branch traces from an instrumented MergeSort and from Bernoulli sources.

Each static branch gets its own counter (no table indexing, no aliasing).
A branch is *taken* when its condition, as written, evaluates true; loop
conditions contribute one outcome per evaluation, including the final false
one that leaves the loop.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .counters import CounterConfig, CounterState, sampling_table, Direction
from .errors import ConfigError, DegenerateModelError
from .markov import misprediction_rate_closed_form
from .rational import format_fraction, to_decimal, unit_interval

__all__ = [
    "BranchId",
    "BranchTrace",
    "HarnessResult",
    "DEFAULT_INITIAL_STATE",
    "TABLE2_CONFIGS",
    "generate_dataset",
    "mergesort_trace",
    "bernoulli_trace",
    "run_predictor",
    "table2",
    "trace_to_text",
    "trace_from_text",
]

DEFAULT_INITIAL_STATE = CounterState.WT

TABLE2_CONFIGS = (
    CounterConfig(1, 0),
    CounterConfig(Fraction(1, 2), Fraction(1, 2)),
    CounterConfig(Fraction(4, 5), Fraction(2, 5)),
)


class BranchId(str, enum.Enum):
    LINE10 = "Line10"  # while i != |left| and j != |right|
    LINE11 = "Line11"  # if left[i] <= right[j]
    LINE17 = "Line17"  # while i != |left|
    LINE21 = "Line21"  # while j != |right|
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True, eq=False)
class BranchTrace:
    branch_id: BranchId
    outcomes: np.ndarray  # bool, True = taken

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=bool)
        if outcomes.ndim != 1 or outcomes.size == 0:
            raise ValueError("a trace needs at least one outcome")
        outcomes.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "branch_id", BranchId(self.branch_id))

    def __len__(self):
        return int(self.outcomes.size)

    def __eq__(self, other):
        if not isinstance(other, BranchTrace):
            return NotImplemented
        return self.branch_id == other.branch_id and np.array_equal(self.outcomes, other.outcomes)

    @property
    def taken_fraction(self):
        return Fraction(int(self.outcomes.sum()), len(self))

    def directions(self):
        return [Direction.T if o else Direction.NT for o in self.outcomes.tolist()]


@dataclass(frozen=True)
class HarnessResult:
    branch_id: BranchId
    s_hat: Fraction
    p_exp: Fraction
    p_theo: Fraction | None  # None when the steady state is undefined
    trace_length: int
    cfg: CounterConfig
    mispredictions: int
    initial_state: CounterState = DEFAULT_INITIAL_STATE


def generate_dataset(kind, n, seed=None):
    """Integers to sort: ``"sorted"`` gives ``0..n-1``; ``"uniform"`` draws i.i.d. 63-bit values.

    Uniform data come from numpy's PCG64 (``default_rng(seed)``) over
    ``[0, 2**63)``, so a given seed always yields the same array.
    """
    if n < 2:
        raise ConfigError("n", f"need at least 2 integers, got {n}")
    if kind == "sorted":
        return list(range(n))
    if kind == "uniform":
        if seed is None:
            raise ConfigError("seed", "uniform data need an explicit seed")
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2**63, size=n, dtype=np.int64).tolist()
    raise ConfigError("kind", f"unknown dataset kind {kind!r}")


def mergesort_trace(data):
    """Sort a copy of ``data`` top-down and record the four branch outcome streams."""
    if len(data) < 2:
        raise ConfigError("data", "need at least 2 elements")
    lst = list(data)
    line10, line11, line17, line21 = [], [], [], []

    def sort(low, high):
        if low + 1 >= high:
            return
        mid = (high - low) // 2
        sort(low, low + mid)
        sort(low + mid, high)
        left = lst[low : low + mid]
        right = lst[low + mid : high]
        nl, nr = len(left), len(right)
        i = j = k = 0
        while True:
            cond = i != nl and j != nr
            line10.append(cond)
            if not cond:
                break
            take_left = left[i] <= right[j]
            line11.append(take_left)
            if take_left:
                lst[low + k] = left[i]
                i += 1
            else:
                lst[low + k] = right[j]
                j += 1
            k += 1
        while True:
            cond = i != nl
            line17.append(cond)
            if not cond:
                break
            lst[low + k] = left[i]
            i += 1
            k += 1
        while True:
            cond = j != nr
            line21.append(cond)
            if not cond:
                break
            lst[low + k] = right[j]
            j += 1
            k += 1

    sort(0, len(lst))
    assert all(a <= b for a, b in zip(lst, lst[1:]))
    return {
        BranchId.LINE10: BranchTrace(BranchId.LINE10, line10),
        BranchId.LINE11: BranchTrace(BranchId.LINE11, line11),
        BranchId.LINE17: BranchTrace(BranchId.LINE17, line17),
        BranchId.LINE21: BranchTrace(BranchId.LINE21, line21),
    }


def bernoulli_trace(s, n, seed):
    s = unit_interval(s, "s")
    if n < 1:
        raise ConfigError("n", "must be at least 1")
    rng = np.random.default_rng(seed)
    # exact threshold: draw integers below the denominator
    draws = rng.integers(0, s.denominator, size=n, dtype=np.int64)
    return BranchTrace(BranchId.SYNTHETIC, draws < s.numerator)


def run_predictor(trace, cfg, seed=0, initial_state=DEFAULT_INITIAL_STATE):
    """Drive one counter over ``trace`` and compare with the steady-state formula.

    Each branch consumes one uniform draw from ``default_rng(seed)``; ``seed``
    may be an int or a :class:`numpy.random.SeedSequence`.
    """
    table = sampling_table(cfg)
    state = int(CounterState(initial_state))
    outcomes = trace.outcomes.tolist()
    draws = np.random.default_rng(seed).random(len(outcomes)).tolist()
    misses = 0
    for taken, u in zip(outcomes, draws):
        if (state >= 2) != taken:
            misses += 1
        for bound, nxt in table[state][taken]:
            if u < bound:
                state = nxt
                break

    s_hat = trace.taken_fraction
    try:
        p_theo = misprediction_rate_closed_form(s_hat, cfg.p)
    except DegenerateModelError:
        p_theo = None
    return HarnessResult(
        branch_id=trace.branch_id,
        s_hat=s_hat,
        p_exp=Fraction(misses, len(outcomes)),
        p_theo=p_theo,
        trace_length=len(outcomes),
        cfg=cfg,
        mispredictions=misses,
        initial_state=CounterState(initial_state),
    )


def table2(n=100_000, seed=0, configs=TABLE2_CONFIGS, initial_state=DEFAULT_INITIAL_STATE):
    """Rows ``(data_kind, HarnessResult)`` for uniform and sorted MergeSort inputs.

    Cell ``(kind k, branch b, config i)`` draws from its own substream
    ``SeedSequence(seed, spawn_key=(k, b, i))``, so no two cells share draws.
    """
    rows = []
    branches = (BranchId.LINE10, BranchId.LINE11, BranchId.LINE17, BranchId.LINE21)
    for k, kind in enumerate(("uniform", "sorted")):
        traces = mergesort_trace(generate_dataset(kind, n, seed))
        for b, branch in enumerate(branches):
            for i, cfg in enumerate(configs):
                stream = np.random.SeedSequence(seed, spawn_key=(k, b, i))
                result = run_predictor(traces[branch], cfg, seed=stream, initial_state=initial_state)
                rows.append((kind, result))
    return rows


_RUN = re.compile(r"(\d+)(T|N)")


def trace_to_text(trace):
    """Header ``branch_id,length,s_hat`` then runs like ``12T1N`` (``N`` = not taken)."""
    o = trace.outcomes
    change = np.flatnonzero(np.diff(o.astype(np.int8))) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [o.size]))
    body = "".join(f"{e - s}{'T' if o[s] else 'N'}" for s, e in zip(starts.tolist(), ends.tolist()))
    header = f"{trace.branch_id.value},{len(trace)},{format_fraction(trace.taken_fraction)}"
    return f"{header}\n{body}\n"


def trace_from_text(text):
    header, _, body = text.strip().partition("\n")
    branch, length, s_hat = header.split(",")
    runs = _RUN.findall(body.strip())
    if "".join(f"{k}{d}" for k, d in runs) != body.strip():
        raise ValueError("malformed run-length body")
    outcomes = np.concatenate([np.full(int(k), d == "T") for k, d in runs]) if runs else np.array([])
    trace = BranchTrace(BranchId(branch), outcomes)
    if len(trace) != int(length) or trace.taken_fraction != Fraction(s_hat):
        raise ValueError("trace header does not match its body")
    return trace


def format_row(kind, result):
    """CSV cells: data, branch, s_hat, m, p, p_exp, p_theo (exact + decimal)."""
    theo = result.p_theo
    return [
        kind,
        result.branch_id.value,
        format_fraction(result.s_hat),
        to_decimal(result.s_hat, 6),
        format_fraction(result.cfg.m),
        format_fraction(result.cfg.p),
        format_fraction(result.p_exp),
        to_decimal(result.p_exp, 6),
        "" if theo is None else format_fraction(theo),
        "undefined" if theo is None else to_decimal(theo, 6),
        result.trace_length,
    ]
