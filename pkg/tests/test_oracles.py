from fractions import Fraction

import numpy as np
import pytest

from artifact import sharing
from artifact.numerics import DeltaValue, alpha_factor, binom_tail, hyp_tail, sbias, sign, weight_schedule
from artifact.oracles import (
    add_noise,
    bias_for,
    coin_oracle,
    defense_oracle,
    defense_tilde,
    ht_defense_protocol,
    ht_defense_round,
    reconstruct_delta,
    reveal_coin,
    sample_recoveries,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fair_delta_gives_unbiased_coins():
    # ms[1] is odd for m = 5 and m = 13, so no tie can occur and fair coins give δ = 1/2
    for m in (5, 13):
        assert bias_for(weight_schedule(m), 0.5, "float") == pytest.approx(0.0, abs=1e-12)
    sched = weight_schedule(5)
    draws = [coin_oracle(sched, 3, 0.5, (), rng(s)).coin for s in range(3000)]
    assert abs(np.mean(draws)) < 3 * np.sqrt(25 / 3000)


def test_last_round_probability_is_the_outcome():
    sched = weight_schedule(3)
    out = coin_oracle(sched, 3, Fraction(1, 2), (3, -2), rng(4), mode="exact")
    assert out.delta == sign(3 - 2 + out.coin)


def test_even_total_weight_biases_the_fair_coin():
    # ms[1] = 14 for m = 3; sign(0) = 1 puts the tie on the positive side, so δ = 1/2 needs ε < 0
    e = bias_for(weight_schedule(3), 0.5, "float")
    assert e < 0 and e == pytest.approx(sbias(14, 0.5))


def test_pinned_coin_reproduces_tail():
    sched = weight_schedule(3)
    a = coin_oracle(sched, 3, Fraction(1, 2), (), rng(99), mode="exact")
    b = coin_oracle(sched, 3, Fraction(1, 2), (), rng(99), mode="exact")
    assert (a.coin, a.delta) == (b.coin, b.delta)
    eps = bias_for(sched, Fraction(1, 2), "exact")
    assert a.delta == binom_tail(sched.suffix(2), eps, -a.coin)
    c, d = sharing.reconstruct(a.shares)
    assert c == a.coin and d.exact == a.delta


def test_singleton_defense_at_endpoints():
    sched = weight_schedule(3)
    assert all(defense_tilde(sched, 3, (2,), 1.0, rng(s)).payloads[2] == 1 for s in range(50))
    assert all(defense_tilde(sched, 3, (2,), 0.0, rng(s)).payloads[2] == 0 for s in range(50))


def test_zero_delta_gives_zero_noise():
    sched = weight_schedule(5)
    mat = defense_tilde(sched, 3, (1, 2, 3), Fraction(0), rng(1), mode="exact")
    assert reconstruct_delta(list(mat.payloads.values())).exact == 0


def test_noise_recomputed_from_logged_weight():
    sched = weight_schedule(5)
    noisy, w, size = add_noise(sched, 3, 3, 0.37, rng(17))
    assert size == alpha_factor(5, 3, 3).bank_size
    assert noisy == hyp_tail(size, w, 55, 1, exact=False)
    exact, w2, _ = add_noise(sched, 3, 3, Fraction(37, 100), rng(17), mode="exact")
    assert exact == hyp_tail(size, w2, 55, 1)


def test_noise_boundary_banks():
    n1 = weight_schedule(5).total
    size = alpha_factor(5, 3, 3).bank_size
    assert hyp_tail(size, size, n1, 1) == 1
    even = size if size % 2 == 0 else size - 1
    assert hyp_tail(even, 0, n1, 1) == Fraction(1, 2)  # ms[1] = 55 is odd, so no ties


def test_noise_is_unbiased():
    sched = weight_schedule(5)
    g = rng(5)
    vals = np.array([add_noise(sched, 3, 3, 0.5, g)[0] for _ in range(20000)])
    assert abs(vals.mean() - 0.5) < 3 * vals.std() / np.sqrt(len(vals))


def test_ht_defense_at_certainty():
    sched = weight_schedule(3)
    inputs, digest = ht_defense_protocol(sched, 1.0, rng(2))
    assert [x.d for x in inputs] == [1, 1]
    assert digest["coins"] == list(sched.ml)
    assert [reveal_coin(inputs[0], inputs[1], i) for i in (1, 2, 3)] == list(sched.ml)


def test_ht_round_replays_from_logged_subset():
    sched = weight_schedule(3)
    inputs, _ = ht_defense_protocol(sched, 0.4, rng(8))
    (d1, d2), digest = ht_defense_round(sched, (), inputs[0], inputs[1], rng(9))
    from artifact.oracles import _reveal_bank

    for which, d in enumerate((d1, d2)):
        bank = _reveal_bank(inputs[0], inputs[1], which)
        assert d == sign(digest["prefix"] + int(bank[digest["subsets"][which]].sum()))


def test_ht_last_round_uses_empty_subset():
    sched = weight_schedule(3)
    inputs, _ = ht_defense_protocol(sched, 0.6, rng(3))
    coins = [reveal_coin(inputs[0], inputs[1], i) for i in (1, 2)]
    (d1, d2), digest = ht_defense_round(sched, coins, inputs[0], inputs[1], rng(4))
    total = sum(coins) + reveal_coin(inputs[0], inputs[1], 3)
    assert digest["subsets"] == [[], []] and d1 == d2 == sign(total)


def test_ht_defense_bit_is_unbiased_at_half():
    sched = weight_schedule(3)
    g = rng(6)
    bits = np.array([ht_defense_protocol(sched, 0.5, g)[0][0].d for _ in range(20000)])
    assert abs(bits.mean() - 0.5) < 3 * 0.5 / np.sqrt(len(bits))


def test_defense_oracle_reconstructs_from_shares():
    sched = weight_schedule(3)
    ss = sharing.share(sharing.encode_rational(Fraction(1, 3)), 3, rng(1))
    mat = defense_oracle(sched, 3, 3, (1,), ss, rng(2), mode="exact")
    assert mat.delta == Fraction(1, 3)
    with pytest.raises(sharing.IncompleteShares):
        defense_oracle(sched, 3, 3, (1,), ss.restrict([0]), rng(2))


def test_vectorised_recoveries_follow_delta():
    for k in (1, 2, 3):
        out, obs = sample_recoveries(5, 3, k, 0.3, 50000, rng(k))
        sigma = np.sqrt(0.3 * 0.7 / len(out))
        assert abs(out.mean() - 0.3) < 3 * sigma
        assert (obs is None) == (k == 1)


def test_sbias_feeds_the_coin_law():
    sched = weight_schedule(5)
    e = bias_for(sched, Fraction(3, 10), "exact")
    assert binom_tail(sched.total, e, 0) == Fraction(3, 10)
    assert float(e.value) == pytest.approx(sbias(sched.total, 0.3))
