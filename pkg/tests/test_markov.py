import random
from fractions import Fraction as F

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from pscdp import linalg
from pscdp.counters import CounterConfig, Direction
from pscdp.errors import DegenerateModelError
from pscdp.markov import (
    MarkovModel,
    InputPolicy,
    build_attack_chain,
    build_chain,
    build_stationary_chain,
    default_c_max,
    first_passage_distribution,
    misprediction_rate_closed_form,
    stationary_closed_form,
    stationary_distribution,
    steadiness_check,
)

from oracles import stationary_matrix_by_hand, power_iteration_rate

T, NT = Direction.T, Direction.NT
fractions01 = st.fractions(min_value=0, max_value=1, max_denominator=50)
positive01 = st.fractions(min_value=F(1, 50), max_value=1, max_denominator=50)


# -- stationary chain --------------------------------------------------------


def test_stationary_chain_examples():
    chain = build_stationary_chain(CounterConfig(1, 0), 1)
    assert chain.row("ST") == {"ST": 1, "WT": 0, "WN": 0, "SN": 0}
    chain = build_stationary_chain(CounterConfig(F(1, 2), 0), F(1, 2))
    assert list(chain.row("WT").values()) == [F(1, 4), F(1, 2), 0, F(1, 4)]


@given(m=fractions01, p=fractions01, s=fractions01)
def test_stationary_chain_equals_written_out_matrix(m, p, s):
    chain = build_stationary_chain(CounterConfig(m, p), s)
    assert chain.rows() == stationary_matrix_by_hand(m, p, s)
    assert all(sum(row) == 1 for row in chain.matrix)


def test_constant_policies_give_deterministic_input_chains():
    cfg = CounterConfig(F(1, 3), F(1, 5))
    assert build_chain(cfg, InputPolicy.constant(T)) == build_stationary_chain(cfg, 1)
    assert build_chain(cfg, InputPolicy.constant(NT)) == build_stationary_chain(cfg, 0)


# -- attack chain ------------------------------------------------------------


def test_attack_chain_deterministic_path():
    chain = build_attack_chain(CounterConfig(1, 0), T)
    assert chain.row("ST")["ST'"] == 1
    assert chain.row("ST'")["WT"] == 1
    assert chain.row("WT")["SN"] == 1
    assert chain.row("SN")["S"] == 1
    assert chain.row("S")["S"] == 1


def test_attack_chain_victim_nt_edges():
    row = build_attack_chain(CounterConfig(F(1, 2), 0), NT).row("ST")
    assert row["ST'"] == F(1, 2) and row["WT"] == F(1, 2)


def test_attack_chains_identical_at_half_half():
    cfg = CounterConfig(F(1, 2), F(1, 2))
    assert build_attack_chain(cfg, T).matrix == build_attack_chain(cfg, NT).matrix


@given(m=positive01, p=fractions01)
def test_attack_chain_labels(m, p):
    cfg = CounterConfig(m, p)
    t_row = build_attack_chain(cfg, T).row("ST")
    nt_row = build_attack_chain(cfg, NT).row("ST")
    assert (t_row["ST'"], t_row["WT"]) == (1 - m * p, m * p)
    assert (nt_row["ST'"], nt_row["WT"]) == (1 - m + m * p, m - m * p)


def test_attack_chain_rejects_static_predictor():
    with pytest.raises(DegenerateModelError, match="static"):
        build_attack_chain(CounterConfig(0, F(1, 2)), T)


def test_model_json_roundtrip():
    chain = build_attack_chain(CounterConfig(F(4, 5), F(2, 5)), NT)
    again = MarkovModel.from_json(chain.to_json())
    assert again == chain
    assert chain.to_dict()["matrix"][0][1] == "13/25"


def test_model_validation():
    with pytest.raises(ValueError, match="sums"):
        MarkovModel(states=("a", "b"), matrix=((F(1, 2), F(1, 3)), (0, 1)))
    with pytest.raises(ValueError, match="absorbing"):
        MarkovModel(states=("a", "b"), matrix=((0, 1), (1, 0)), absorbing=1)


# -- first passage -----------------------------------------------------------


def test_first_passage_deterministic():
    cfg = CounterConfig(1, 0)
    dist_t = first_passage_distribution(build_attack_chain(cfg, T), 5)
    dist_nt = first_passage_distribution(build_attack_chain(cfg, NT), 5)
    assert dist_t.support() == [2] and dist_t[2] == 1 and dist_t.tail == 0
    assert dist_nt.support() == [1] and dist_nt[1] == 1


def test_first_passage_equal_mass_at_two():
    cfg = CounterConfig(F(1, 2), 0)
    assert first_passage_distribution(build_attack_chain(cfg, T), 10)[2] == F(1, 4)
    assert first_passage_distribution(build_attack_chain(cfg, NT), 10)[2] == F(1, 4)


@given(m=positive01, p=st.fractions(min_value=0, max_value=F(49, 50), max_denominator=50))
@settings(max_examples=40, deadline=None)
def test_first_passage_mass_and_geometric_tail(m, p):
    chain = build_attack_chain(CounterConfig(m, p), T)
    d10 = first_passage_distribution(chain, 10)
    d20 = first_passage_distribution(chain, 20)
    assert sum(d10.probs.values()) + d10.tail == 1
    assert d20.tail <= d10.tail
    assert d20.tail < d10.tail or d10.tail == 0


def test_default_c_max_rule():
    chain = build_attack_chain(CounterConfig(F(1, 2), 0), T)
    c = default_c_max(chain)
    assert first_passage_distribution(chain, c).tail < F(1, 10**12)
    assert first_passage_distribution(chain, c - 1).tail >= F(1, 10**12)
    # reversal p=1 traps ST' forever: the rule falls back to the cap
    stuck = build_attack_chain(CounterConfig(F(1, 2), 1), NT)
    assert default_c_max(stuck, cap=50) == 50


# -- stationary distribution -------------------------------------------------


def _valid_triple(rng):
    while True:
        m = F(rng.randint(1, 40), 40)
        p = F(rng.randint(0, 40), 40)
        s = F(rng.randint(0, 1000), 1000)
        if not (p == 1 and s in (0, 1)):
            return CounterConfig(m, p), s


def test_stationary_linear_solve_equals_closed_form_random():
    rng = random.Random(20240601)
    for _ in range(100):
        cfg, s = _valid_triple(rng)
        result = stationary_distribution(cfg, s)
        mu_cf, r_cf = stationary_closed_form(s, cfg.p)
        assert result.mu == mu_cf
        assert result.misprediction_rate == r_cf
        rows = build_stationary_chain(cfg, s).rows()
        assert linalg.vecmat(list(result.mu), rows) == list(result.mu)
        assert sum(result.mu) == 1


@given(m1=positive01, m2=positive01, p=fractions01, s=fractions01)
@settings(max_examples=60, deadline=None)
def test_stationary_independent_of_m(m1, m2, p, s):
    if p == 1 and s in (0, 1):
        return
    a = stationary_distribution(CounterConfig(m1, p), s)
    b = stationary_distribution(CounterConfig(m2, p), s)
    assert a == b


def test_stationary_with_sympy_nullspace():
    cfg, s = CounterConfig(F(3, 7), F(2, 9)), F(5, 11)
    mat = sympy.Matrix(stationary_matrix_by_hand(cfg.m, cfg.p, s))
    (null,) = (mat.T - sympy.eye(4)).nullspace()
    mu = [F(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in null / sum(null)]
    assert tuple(mu) == stationary_distribution(cfg, s).mu


@pytest.mark.parametrize(
    "p, s, reference",
    [
        (0, F(939, 1000), 0.068),
        (F(1, 2), F(939, 1000), 0.114),
        (F(2, 5), F(939, 1000), 0.104),
    ],
)
def test_theoretical_rates_at_measured_s(p, s, reference):
    r = stationary_distribution(CounterConfig(F(1, 2), p), s).misprediction_rate
    assert abs(float(r) - reference) <= 0.001


def test_maximum_at_half_half():
    assert misprediction_rate_closed_form(F(1, 2), F(1, 2)) == F(1, 2)


def test_closed_form_examples():
    assert misprediction_rate_closed_form(1, 0) == 0
    assert abs(float(misprediction_rate_closed_form(F(939, 1000), 0)) - 0.0677) <= 0.0005
    # p = 0, s = 1/2 via the stationary solve of the conventional counter
    assert misprediction_rate_closed_form(F(1, 2), 0) == stationary_distribution(
        CounterConfig(1, 0), F(1, 2)
    ).misprediction_rate == F(1, 2)


@pytest.mark.parametrize("s", [0, 1])
def test_closed_form_degenerate(s):
    with pytest.raises(DegenerateModelError):
        misprediction_rate_closed_form(s, 1)
    with pytest.raises(DegenerateModelError):
        stationary_distribution(CounterConfig(F(1, 2), 1), s)


def test_stationary_requires_moving_counter():
    with pytest.raises(DegenerateModelError):
        stationary_distribution(CounterConfig(0, 0), F(1, 2))


@given(
    m=st.fractions(min_value=F(1, 5), max_value=1, max_denominator=20),
    p=fractions01,
    s=st.fractions(min_value=F(1, 20), max_value=F(19, 20), max_denominator=20),
)
@settings(max_examples=25, deadline=None)
def test_closed_form_matches_power_iteration(m, p, s):
    # small m mixes slowly; the exact solve already covers it
    assert abs(float(misprediction_rate_closed_form(s, p)) - power_iteration_rate(m, p, s)) < 1e-6


# -- steadiness --------------------------------------------------------------


@pytest.mark.parametrize("s", [0, F(1, 3), 1])
def test_static_counter_not_steady(s):
    assert not steadiness_check(CounterConfig(0, F(1, 2)), s).unique_stationary


def test_steadiness_examples():
    assert steadiness_check(CounterConfig(1, 0), F(1, 2)).unique_stationary
    assert steadiness_check(CounterConfig(F(1, 2), F(1, 2)), F(1, 3)).aperiodic


def test_steadiness_p_one_boundary():
    assert not steadiness_check(CounterConfig(F(1, 2), 1), 0).unique_stationary
    assert steadiness_check(CounterConfig(F(1, 2), 1), F(1, 2)).unique_stationary


@given(m=fractions01, p=fractions01, s=fractions01)
@settings(max_examples=30, deadline=None)
def test_steadiness_against_sympy(m, p, s):
    mat = sympy.Matrix(stationary_matrix_by_hand(m, p, s))
    result = steadiness_check(CounterConfig(m, p), s)
    assert result.unique_stationary == ((mat - sympy.eye(4)).rank() == 3)
    assert result.aperiodic == ((mat + sympy.eye(4)).det() != 0)
