"""Search for reversal probabilities ``p`` that meet an (epsilon, delta) privacy target."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from .attack import dp_check, output_distributions
from .counters import CounterConfig
from .errors import ConfigError
from .markov import DEFAULT_TAIL_TOLERANCE
from .rational import as_fraction, format_fraction, to_decimal

__all__ = [
    "SynthesisQuery",
    "SynthesisResult",
    "GridPoint",
    "ProbabilityGap",
    "synthesize_p",
    "max_probability_gap",
]


@dataclass(frozen=True)
class SynthesisQuery:
    m: Fraction
    epsilon: Fraction
    delta: Fraction
    resolution: Fraction = Fraction(1, 1000)
    c_max: int | None = None

    def __post_init__(self):
        m = as_fraction(self.m, "m")
        if not 0 < m <= 1:
            raise ConfigError("m", f"must lie in (0, 1], got {m}")
        eps = as_fraction(self.epsilon, "epsilon")
        delta = as_fraction(self.delta, "delta")
        resolution = as_fraction(self.resolution, "resolution")
        if eps < 0:
            raise ConfigError("epsilon", "must be nonnegative")
        if delta < 0:
            raise ConfigError("delta", "must be nonnegative")
        if not 0 < resolution <= 1:
            raise ConfigError("resolution", "must lie in (0, 1]")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "resolution", resolution)

    def tail_tolerance(self):
        # tail must stay well under delta, so boundaries are not decided by the cut-off
        if self.delta == 0:
            return DEFAULT_TAIL_TOLERANCE
        return min(DEFAULT_TAIL_TOLERANCE, self.delta / 10)


class GridPoint(NamedTuple):
    p: Fraction
    passed: bool
    worst_margin: Fraction | None


@dataclass
class SynthesisResult:
    query: SynthesisQuery
    feasible_intervals: list
    certified_grid: list = field(default_factory=list)
    boundary_refined: bool = False
    symmetric_about_half: bool | None = None

    def to_dict(self):
        q = self.query
        return {
            "query": {
                "m": format_fraction(q.m),
                "epsilon": format_fraction(q.epsilon),
                "delta": format_fraction(q.delta),
                "resolution": format_fraction(q.resolution),
                "c_max": q.c_max,
            },
            "feasible_intervals": [
                {
                    "p_lo": format_fraction(lo),
                    "p_hi": format_fraction(hi),
                    "p_lo_decimal": to_decimal(lo, 6),
                    "p_hi_decimal": to_decimal(hi, 6),
                }
                for lo, hi in self.feasible_intervals
            ],
            "boundary_refined": self.boundary_refined,
            "symmetric_about_half": self.symmetric_about_half,
            "grid_points": len(self.certified_grid),
            "grid_passed": sum(1 for g in self.certified_grid if g.passed),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def grid_rows(self):
        for g in self.certified_grid:
            margin = "" if g.worst_margin is None else to_decimal(g.worst_margin)
            yield format_fraction(g.p), to_decimal(g.p, 6), int(g.passed), margin


def _verdict(query, p):
    # stops at the first certified violation, so a failing margin is the one that decided it
    report = dp_check(
        CounterConfig(query.m, p),
        query.epsilon,
        query.delta,
        query.c_max,
        stop_on_violation=True,
        tail_tolerance=query.tail_tolerance(),
    )
    return report.satisfied, report.worst_margin


def _grid(resolution):
    steps = math.floor(1 / resolution)
    points = [k * resolution for k in range(steps + 1)]
    if points[-1] != 1:
        points.append(Fraction(1))
    return points


def _bisect(query, passing, failing, precision):
    """Shrink ``[passing, failing]`` (either order) and return the outermost passing point."""
    while abs(failing - passing) > precision:
        mid = (passing + failing) / 2
        if _verdict(query, mid)[0]:
            passing = mid
        else:
            failing = mid
    return passing


def synthesize_p(query, *, refine=True):
    """Scan ``p`` over a grid, group passing points into intervals, refine the edges.

    Each edge between a passing and a failing grid point is bisected down to
    ``resolution / 100``; reported endpoints are always certified passing
    values of ``p``.  Disjoint passing regions are reported separately.
    """
    grid = []
    for p in _grid(query.resolution):
        passed, margin = _verdict(query, p)
        grid.append(GridPoint(p, passed, margin))

    runs = []
    start = None
    for i, point in enumerate(grid):
        if point.passed and start is None:
            start = i
        if start is not None and (not point.passed or i == len(grid) - 1):
            end = i if point.passed else i - 1
            runs.append((start, end))
            start = None

    precision = query.resolution / 100
    intervals = []
    for lo_idx, hi_idx in runs:
        lo, hi = grid[lo_idx].p, grid[hi_idx].p
        if refine and lo_idx > 0:
            lo = _bisect(query, lo, grid[lo_idx - 1].p, precision)
        if refine and hi_idx < len(grid) - 1:
            hi = _bisect(query, hi, grid[hi_idx + 1].p, precision)
        intervals.append((lo, hi))

    verdicts = {pt.p: pt.passed for pt in grid}
    symmetric = all(verdicts.get(1 - p, ok) == ok for p, ok in verdicts.items())
    return SynthesisResult(
        query=query,
        feasible_intervals=intervals,
        certified_grid=grid,
        boundary_refined=refine and bool(runs),
        symmetric_about_half=symmetric,
    )


class ProbabilityGap(NamedTuple):
    gap: Fraction
    worst_c: int
    tail: Fraction


def max_probability_gap(cfg, c_max=None):
    """Largest ``|Pr[out=c|T] - Pr[out=c|NT]|`` over ``c <= c_max``, with the unlisted tail."""
    dist_t, dist_nt = output_distributions(cfg, c_max)
    gap, worst_c = Fraction(0), 0
    for c in range(dist_t.c_max + 1):
        d = abs(dist_t[c] - dist_nt[c])
        if d > gap:
            gap, worst_c = d, c
    return ProbabilityGap(gap, worst_c, max(dist_t.tail, dist_nt.tail))
