import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgtsim.core import DefectPattern, TestDesign
from pgtsim.decoders import (apply_tests, decode, decode_comp, decode_dd, decode_individual)
from pgtsim.designs import generate_identity
from pgtsim.oracle import (RegimeWarning, disguise_report, disguise_report_bruteforce,
                           guess_success_bound)


def or_oracle(design, pattern):
    m = design.to_dense()
    return [bool(any(m[t, i] for i in pattern.defective_set)) for t in range(design.n_tests)]


def test_empty_pattern_all_negative(three_test_design):
    y = apply_tests(three_test_design, DefectPattern(4, ()))
    assert not y.any()


def test_identity_outcomes_equal_pattern():
    p = DefectPattern(6, (0, 4, 5))
    assert apply_tests(generate_identity(6), p).tolist() == p.vector().tolist()


def test_three_test_example(three_test_design):
    p = DefectPattern(4, (1,))
    y = apply_tests(three_test_design, p)
    assert y.tolist() == [True, True, False] == or_oracle(three_test_design, p)
    assert decode_comp(three_test_design, y).declared_defective == (0, 1)
    assert decode_dd(three_test_design, y).declared_defective == (1,)
    rep = disguise_report(three_test_design, p)
    assert rep.disguised_items == (0,) and rep.g == 1 and rep.d == 1 and rep.w_k == 2
    assert disguise_report_bruteforce(three_test_design, p) == rep


def test_apply_tests_dimension_mismatch(three_test_design):
    with pytest.raises(ValueError):
        apply_tests(three_test_design, DefectPattern(5, ()))
    with pytest.raises(ValueError):
        decode_comp(three_test_design, [True, False])


def test_comp_all_negative_declares_untested_items():
    d = TestDesign.from_item_lists(2, [[0], [], [1], []])
    res = decode_comp(d, [False, False])
    assert res.declared_defective == (1, 3)


def test_dd_single_shared_test_false_negative():
    d = TestDesign.from_test_lists(2, [[0, 1]])
    p = DefectPattern(2, (0,))
    res = decode_dd(d, apply_tests(d, p))
    assert res.declared_defective == ()
    assert res.errors(p) == (0, 1)


@pytest.mark.parametrize("decoder", ["comp", "dd", "individual"])
def test_identity_design_exact_for_every_pattern(decoder):
    d = generate_identity(5)
    for bits in itertools.product((0, 1), repeat=5):
        p = DefectPattern.from_vector(bits)
        assert decode(decoder, d, apply_tests(d, p)).exact(p)


def test_individual_decoder():
    assert decode_individual(3, [0, 1, 0]).declared_defective == (1,)
    assert decode_individual(3, [0, 0, 0]).declared_defective == ()
    assert decode_individual(3, [1, 1, 1]).declared_defective == (0, 1, 2)
    with pytest.raises(ValueError):
        decode_individual(3, [1, 0])


def test_individual_requires_identity(three_test_design):
    with pytest.raises(ValueError):
        decode("individual", three_test_design, [0, 0, 0])
    with pytest.raises(ValueError):
        decode("spiv", three_test_design, [0, 0, 0])


@st.composite
def design_and_pattern(draw):
    n = draw(st.integers(1, 10))
    T = draw(st.integers(1, 10))
    tests_of_item = draw(st.lists(st.lists(st.integers(0, T - 1), max_size=4),
                                  min_size=n, max_size=n))
    design = TestDesign.from_item_lists(T, tests_of_item)
    bits = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return design, DefectPattern.from_vector(bits)


@given(design_and_pattern())
@settings(max_examples=300)
def test_decoder_and_oracle_properties(case):
    design, pattern = case
    y = apply_tests(design, pattern)
    assert y.tolist() == or_oracle(design, pattern)
    truth = set(pattern.defective_set)
    comp = set(decode_comp(design, y).declared_defective)
    dd = set(decode_dd(design, y).declared_defective)
    assert dd <= truth <= comp
    brute = disguise_report_bruteforce(design, pattern)
    assert disguise_report(design, pattern) == brute
    assert (comp == truth) == (brute.g == 0)
    assert brute.g <= brute.d <= design.n_items
    assert brute.w_k == int(y.sum())
    # adding a defective never turns a positive test negative
    for extra in range(design.n_items):
        if extra not in truth:
            bigger = DefectPattern(pattern.n_items, tuple(truth | {extra}))
            assert np.all(apply_tests(design, bigger) >= y)
            break


def test_exhaustive_comp_iff_g_zero_small(rng):
    from pgtsim.designs import generate_nctpi
    for _ in range(5):
        design = generate_nctpi(7, 5, 2, rng)
        for bits in itertools.product((0, 1), repeat=7):
            p = DefectPattern.from_vector(bits)
            exact = decode_comp(design, apply_tests(design, p)).exact(p)
            assert exact == (disguise_report_bruteforce(design, p).g == 0)


def test_disguise_single_test_convention():
    d = TestDesign.from_test_lists(2, [[0, 1]])
    rep = disguise_report_bruteforce(d, DefectPattern(2, (1,)))
    # item 1 has no OTHER defective in its only test
    assert rep.disguised_items == (0,) and rep.g == 1 and rep.d == 1


def test_disguise_two_defectives_share_test():
    d = TestDesign.from_test_lists(3, [[0, 1]])
    rep = disguise_report(d, DefectPattern(3, (0, 1)))
    # both defectives covered by each other; item 2 is in no test
    assert rep.disguised_items == (0, 1, 2) and rep.g == 1 and rep.d == 3


def test_identity_no_tested_item_disguised():
    d = generate_identity(6)
    for k in (0, 1, 3, 6):
        rep = disguise_report(d, DefectPattern(6, tuple(range(k))))
        assert rep.d == 0 and rep.w_k == k


def test_guess_success_bound_values():
    assert guess_success_bound(0.1, 0) == (1.0, 1.0)
    exact, relaxed = guess_success_bound(0.1, 10)
    assert exact == pytest.approx(0.3486784401, rel=1e-12)
    assert relaxed == pytest.approx(math.exp(-1), rel=1e-12)
    assert exact <= relaxed


@given(p=st.floats(1e-6, 0.4999), d=st.integers(0, 10**5))
def test_guess_bound_ordering(p, d):
    exact, relaxed = guess_success_bound(p, d)
    assert exact <= relaxed * (1 + 1e-12)


def test_guess_bound_rejects_large_p():
    with pytest.warns(RegimeWarning), pytest.raises(ValueError):
        guess_success_bound(0.5, 3)
    with pytest.raises(ValueError):
        guess_success_bound(0.1, -1)
