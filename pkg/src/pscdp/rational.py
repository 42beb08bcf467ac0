"""Exact rational parsing, rendering and the exponential enclosure."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
import numbers

from .errors import ConfigError

__all__ = [
    "as_fraction",
    "unit_interval",
    "format_fraction",
    "to_decimal",
    "exp_enclosure",
]


def as_fraction(value, name="value"):
    """Convert ``value`` to a :class:`Fraction` without losing information.

    Strings may be ``"a/b"`` or decimal literals (``"0.939"``, ``"1e-3"``);
    both are converted exactly.  Floats are converted through their shortest
    repr, so ``0.1`` becomes ``1/10`` rather than the binary approximation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if isinstance(value, numbers.Rational):
        return Fraction(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ConfigError(name, f"not a finite number: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ConfigError(name, f"cannot parse {value!r} as a rational") from None
    raise ConfigError(name, f"expected a rational number, got {type(value).__name__}")


def unit_interval(value, name):
    x = as_fraction(value, name)
    if not 0 <= x <= 1:
        raise ConfigError(name, f"must lie in [0, 1], got {x}")
    return x


def format_fraction(x):
    """Render as ``"num/den"`` (always with a denominator, for stable CSV)."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def to_decimal(x, digits=12):
    """Correctly rounded fixed-point rendering of an exact rational."""
    x = Fraction(x)
    scaled = round(x * 10**digits)  # Fraction.__round__ is exact, half-even
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 10**digits)
    if digits == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{digits}d}"


@lru_cache(maxsize=256)
def exp_enclosure(eps, width=Fraction(1, 10**20)):
    """Rational bounds ``lo <= e**eps <= hi`` with ``hi - lo < width``.

    ``eps`` must be a nonnegative rational.  The Taylor series is summed on
    ``eps / 2**k`` (small enough that the remainder bound converges quickly)
    and the enclosure is squared back up ``k`` times.
    """
    eps = as_fraction(eps, "epsilon")
    width = Fraction(width)
    if eps < 0:
        raise ConfigError("epsilon", "must be nonnegative")
    if eps == 0:
        return Fraction(1), Fraction(1)

    k = 0
    while eps / 2**k > Fraction(1, 2):
        k += 1
    x = eps / 2**k
    target = width
    while True:
        lo, hi = _taylor_enclosure(x, target)
        lo_full, hi_full = lo, hi
        for _ in range(k):
            lo_full, hi_full = lo_full * lo_full, hi_full * hi_full
        if hi_full - lo_full < width:
            return lo_full, hi_full
        target /= 2**16


def _taylor_enclosure(x, width):
    # 0 < x <= 1/2; the remainder after term n is at most term * x / (n + 2 - x) * ...,
    # bounded here by term_{n+1} * 2 since x <= 1/2.
    total = Fraction(0)
    term = Fraction(1)
    n = 0
    while True:
        total += term
        n += 1
        term = term * x / n
        remainder = 2 * term
        if remainder < width:
            return total, total + remainder
