import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.leakage import (
    SupportTooLarge,
    ZeroProbability,
    all_information_leakage,
    binomial_process,
    constant_leakage,
    custom_process,
    generic_diff_bound_check,
    hypergeometric_leakage,
    hypergeometric_process,
    joint,
    posterior_success,
    prediction_advantage,
    ratio,
    table_leakage,
    total_expectation_gap,
    vector_leakage,
    vector_weight_leakage,
    weight_sufficiency,
)
from artifact.numerics import sbias

F = Fraction

TWO_POINT = custom_process([("lo", F(1, 2), F(1, 4)), ("hi", F(1, 2), F(3, 4))])
NOISY = table_leakage({"lo": [(0, F(2, 3)), (1, F(1, 3))], "hi": [(0, F(1, 3)), (1, F(2, 3))]})


def test_constant_hint_gives_no_advantage():
    proc = binomial_process(3, 1, 0, F(1, 5))
    assert prediction_advantage(proc, constant_leakage(), 0) == 0


def test_full_information_advantage():
    proc = binomial_process(3, 2, 1, F(0))
    j = joint(proc, all_information_leakage())
    for a in proc.elements:
        assert prediction_advantage(proc, all_information_leakage(), a, j) == abs(proc.p_one - proc.success(a))


def test_constant_hint_ratio_is_one():
    proc = binomial_process(3, 1, 0, F(1, 3))
    good = proc.elements[:3]
    for a in good:
        r = ratio(proc, constant_leakage(), 0, good, a)
        assert r.by_posterior == r.by_likelihood == 1


def test_two_point_hand_example():
    # Pr[H=1] = 1/2, Pr[A=hi | H=1] = 2/3, so Pr[B=1 | H=1] = 2/3·3/4 + 1/3·1/4 = 7/12
    j = joint(TWO_POINT, NOISY)
    assert j.p_hint(1) == F(1, 2)
    assert posterior_success(j, 1) == F(7, 12)
    assert prediction_advantage(TWO_POINT, NOISY, 1) == F(1, 12)
    assert ratio(TWO_POINT, NOISY, 1, ["lo", "hi"], "hi").value == F(4, 3)
    assert total_expectation_gap(TWO_POINT, NOISY) == 0


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 9), st.fractions(0, 1, max_denominator=8)), min_size=2, max_size=4),
    st.data(),
)
def test_ratio_formulations_agree(entries, data):
    total = sum(w for w, _ in entries)
    proc = custom_process([(k, F(w, total), s) for k, (w, s) in enumerate(entries)])
    table = {}
    for k in range(len(entries)):
        weights = data.draw(st.lists(st.integers(1, 5), min_size=3, max_size=3))
        table[k] = [(h, F(w, sum(weights))) for h, w in enumerate(weights)]
    leak = table_leakage(table)
    good = data.draw(st.sets(st.integers(0, len(entries) - 1), min_size=1))
    for a in good:
        r = ratio(proc, leak, 1, good, a)
        assert r.by_posterior == r.by_likelihood
    assert total_expectation_gap(proc, leak) == 0


def test_total_expectation_on_structured_leaks():
    proc = binomial_process(3, 1, 0, F(1, 5))
    for leak in (hypergeometric_leakage(3, 1, 0, 2), vector_weight_leakage(3, 1), all_information_leakage()):
        assert total_expectation_gap(proc, leak) == 0


def test_vector_leak_against_an_independent_brute_force():
    n, beta, k = 6, 2, 1
    size = beta * n
    eps = sbias(n, 0.5)
    banks = np.array(list(itertools.product((1, -1), repeat=size)))
    subsets = np.array([list(c) for c in itertools.combinations(range(size), n)])
    sums = banks[:, subsets].sum(axis=2)
    a = (sums > 0).mean(axis=1)
    ones = (banks == 1).sum(axis=1)
    pbank = ((1 + eps) / 2) ** ones * ((1 - eps) / 2) ** (size - ones)
    assert pbank.sum() == pytest.approx(1, abs=1e-12)
    coord = np.array([(1 + sbias(n, float(x))) / 2 for x in a])

    proc = hypergeometric_process(n, beta, F(1, 2))
    leak = vector_leakage(n, k)
    j = joint(proc, leak)
    assert float(proc.p_one) == pytest.approx(float(pbank @ a), abs=1e-12)
    for h in [(1,) * 6, (-1,) * 6, (1, -1, 1, -1, 1, 1), (-1, -1, 1, -1, -1, 1)]:
        up = sum(1 for x in h if x == 1)
        like = coord**up * (1 - coord) ** (n * k - up)
        post = float((pbank * like) @ a / (pbank @ like))
        assert float(posterior_success(j, h)) == pytest.approx(post, abs=1e-12)
        assert float(prediction_advantage(proc, leak, h, j)) == pytest.approx(abs(pbank @ a - post), abs=1e-12)


def test_bound_holds_on_structured_instances():
    proc = binomial_process(3, 1, 0, F(1, 5))
    leak = hypergeometric_leakage(3, 1, 0, 2)
    good = [a for a in proc.elements if abs(a) <= 5]
    for h in joint(proc, leak).hints:
        verdict = generic_diff_bound_check(proc, leak, h, good)
        assert verdict.holds and verdict.bound == verdict.main_term + verdict.tail_term


def test_bound_with_a_hint_outside_the_good_set():
    leak = table_leakage({"lo": [(0, F(1))], "hi": [(1, F(1))]})
    verdict = generic_diff_bound_check(TWO_POINT, leak, 1, ["lo"])
    assert verdict.holds and verdict.main_term == 0 and verdict.tail_term == 2 + 1


def test_weight_is_sufficient():
    assert weight_sufficiency(hypergeometric_process(3, 2, F(1, 3)), 3, 2)
    assert weight_sufficiency(binomial_process(3, 2, 0, F(1, 5)), 3, 1)


def test_support_budget():
    with pytest.raises(SupportTooLarge):
        vector_leakage(9, 2)


def test_degenerate_inputs():
    with pytest.raises(ZeroProbability):
        posterior_success(joint(TWO_POINT, NOISY), 7)
    with pytest.raises(ValueError):
        ratio(TWO_POINT, NOISY, 1, ["lo"], "hi")
    with pytest.raises(ValueError):
        custom_process([("x", F(1, 2), F(1, 2))])
    with pytest.raises(ValueError):
        hypergeometric_leakage(3, 1, 0, 3)
