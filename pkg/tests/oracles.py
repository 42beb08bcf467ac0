"""Independent reference computations used only by the tests.

Nothing here imports the package's transition logic: the counter is
re-encoded straight from its edge labels, and attack outputs are obtained
by enumerating sample paths.
"""

from fractions import Fraction
from functools import lru_cache

ST, WT, WN, SN = "ST", "WT", "WN", "SN"


def edge_labels(m, p, taken_prob):
    """Transition probabilities of the counter for input Pr[T] = taken_prob.

    Edge labels of the generalised probabilistic counter, with
    n = 1 - m and P_T = taken_prob, P_N = 1 - taken_prob at every state.
    """
    n = 1 - m
    pt, pn = taken_prob, 1 - taken_prob
    return {
        ST: {ST: m * ((1 - p) * pt + p * pn) + n, WT: m * ((1 - p) * pn + p * pt)},
        WT: {ST: m * pt, WT: n, SN: m * pn},
        WN: {ST: m * pt, WN: n, SN: m * pn},
        SN: {WN: m * ((1 - p) * pt + p * pn), SN: m * ((1 - p) * pn + p * pt) + n},
    }


def attack_output_probability(m, p, victim_taken, c):
    """Pr[out = c] by enumerating every state path of the cut-off attack."""
    victim = edge_labels(m, p, Fraction(int(victim_taken)))[ST]
    probe = edge_labels(m, p, Fraction(0))

    @lru_cache(maxsize=None)
    def from_state(state, misses_left):
        # probability that probing from `state` yields exactly `misses_left` more misses
        if state in (SN, WN):  # predicts NT: the probe is a hit
            return Fraction(int(misses_left == 0))
        if misses_left == 0:
            return Fraction(0)
        return sum(
            (pr * from_state(nxt, misses_left - 1) for nxt, pr in probe[state].items() if pr),
            Fraction(0),
        )

    return sum((pr * from_state(s, c) for s, pr in victim.items() if pr), Fraction(0))


def p0_output_probability(m, victim_taken, c):
    """Closed form for p = 0: a sum of one or two geometric waiting times."""
    n = 1 - m
    if victim_taken:
        return (c - 1) * m**2 * n ** (c - 2) if c >= 2 else Fraction(0)
    return c * m**2 * n ** (c - 1) if c >= 1 else Fraction(0)


def stationary_matrix_by_hand(m, p, s):
    """Stationary-chain matrix written out entry by entry, states ST, WT, WN, SN."""
    n, t, q = 1 - m, 1 - s, 1 - p
    z = Fraction(0)
    return [
        [m * (q * s + p * t) + n, m * (q * t + p * s), z, z],
        [m * s, n, z, m * t],
        [m * s, z, n, m * t],
        [z, z, m * (q * s + p * t), m * (q * t + p * s) + n],
    ]


def power_iteration_rate(m, p, s, steps=4000):
    """Float misprediction rate after iterating the chain (for smoke comparison only)."""
    mat = [[float(x) for x in row] for row in stationary_matrix_by_hand(m, p, s)]
    vec = [0.25] * 4
    for _ in range(steps):
        vec = [sum(vec[i] * mat[i][j] for i in range(4)) for j in range(4)]
    s, t = float(s), 1 - float(s)
    return (vec[0] + vec[1]) * t + (vec[2] + vec[3]) * s
