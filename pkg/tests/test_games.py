from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.games import (
    Game,
    HintSpec,
    StateBudgetExceeded,
    StrategyTable,
    build_states,
    eval_strategy_exact,
    eval_strategy_mc,
    greedy_strategy,
    hint_dist,
    honest_strategy,
    opt_value,
    opt_value_float,
    sample_hint,
)


def test_single_round_all_information():
    table = build_states(Game(1))
    assert opt_value(table).value == Fraction(1, 4)
    assert [s.name for s in table.states] == ["s_l1_b0_hn1", "s_l1_b0_h1", "s_l0_bn1", "s_l0_b1"]


def test_greedy_aborts_only_on_the_losing_coin():
    table = build_states(Game(1))
    assert greedy_strategy(table).probs == {(1, 0, -1): 1}


@pytest.mark.parametrize("m", [1, 2, 3])
def test_constant_hint_is_worthless(m):
    table = build_states(Game(m, Fraction(1, 5), HintSpec.constant()))
    assert opt_value(table).value == 0
    assert greedy_strategy(table).probs == {}


@pytest.mark.parametrize(
    "game",
    [Game(m, eps) for m in (1, 2, 3, 4) for eps in (Fraction(0), Fraction(1, 5), Fraction(-1, 3))]
    + [Game(3, Fraction(0), HintSpec.hypergeometric(p)) for p in (-4, 0, 6)]
    + [Game(3, Fraction(1, 7), HintSpec.vector(3)), Game(3, Fraction(0), HintSpec.defense_bits(4))],
    ids=str,
)
def test_greedy_attains_the_optimum(game):
    table = build_states(game)
    res = opt_value(table)
    assert eval_strategy_exact(table, greedy_strategy(table, res)).bias == res.value


def test_honest_strategy_has_no_bias():
    for game in (Game(3), Game(2, Fraction(1, 3), HintSpec.coin_sign())):
        table = build_states(game)
        ev = eval_strategy_exact(table, honest_strategy(game))
        assert ev.bias == 0 and ev.marginals == {}


def test_opposite_direction():
    table = build_states(Game(1))
    assert opt_value(table, direction=-1).value == Fraction(1, 4)


def test_monte_carlo_agrees_with_exact_evaluation():
    game = Game(2, Fraction(1, 5))
    table = build_states(game)
    strat = greedy_strategy(table)
    want = float(eval_strategy_exact(table, strat).bias)
    mean, err = eval_strategy_mc(game, strat, 40_000, np.random.default_rng(3))
    assert abs(mean - want) < 4 * err


def test_vector_hint_at_certainty_is_all_ones():
    # after the only coin with offset 0, a +1 coin makes the outcome certain
    game = Game(1, Fraction(0), HintSpec.vector(5))
    h = sample_hint(game, 1, 0, 1, np.random.default_rng(0))
    assert list(h) == [1] * 5
    assert hint_dist(game, 1, 0, 1) == [(5, 1)]


def test_hypergeometric_hint_from_a_full_bank():
    game = Game(2, Fraction(0), HintSpec.hypergeometric(2 * 5))  # ms[1] = 5 for m = 2
    # every draw is +1, so the draw sum is ms[2] = 1 and the hint is +1 iff 1 ≥ -c
    for c in (-4, -2, 0, 2, 4):
        assert hint_dist(game, 1, 0, c) == [(1 if c >= -1 else -1, 1)]
    with pytest.raises(ValueError):
        HintSpec.hypergeometric(3).check(2)


def test_hint_laws_are_normalised():
    for hint in (HintSpec.vector(3), HintSpec.defense_bits(4), HintSpec.hypergeometric(2), HintSpec.coin_sign()):
        game = Game(3, Fraction(1, 3), hint)
        for c in (-9, -1, 3, 9):
            assert sum(p for _, p in hint_dist(game, 1, 0, c)) == 1


@pytest.mark.parametrize("hint", [HintSpec.defense_bits(3), HintSpec.hypergeometric(-2), HintSpec.constant()])
def test_float_dp_matches_exact_dp(hint):
    game = Game(3, Fraction(1, 5), hint)
    exact = opt_value(build_states(game)).value
    fast = opt_value_float(Game(3, 0.2, hint)).value
    assert fast == pytest.approx(float(exact), abs=1e-12)


def test_float_dp_greedy_matches_exact_greedy():
    game = Game(3, Fraction(0), HintSpec.defense_bits(3))
    table = build_states(game)
    exact = greedy_strategy(table).probs
    fast = opt_value_float(Game(3, 0.0, HintSpec.defense_bits(3)))
    for s in table.nonfinal:
        assert fast.prob(*s.key) == (1.0 if s.key in exact else 0.0)


def test_float_dp_rejects_history_hints():
    with pytest.raises(ValueError):
        opt_value_float(Game(3, 0.0))


def test_json_round_trips():
    game = Game(3, Fraction(2, 7), HintSpec.hypergeometric(4))
    assert Game.from_json(game.to_json()) == game
    float_game = Game(2, 0.25, HintSpec.vector(2))
    assert Game.from_json(float_game.to_json()) == float_game
    strat = greedy_strategy(build_states(game))
    again = StrategyTable.from_json(strat.to_json())
    assert again.game == game and again.probs == strat.probs


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.fractions(-1, 1, max_denominator=6))
def test_optimum_is_a_valid_bias(m, eps):
    value = opt_value(build_states(Game(m, eps))).value
    assert 0 <= value <= Fraction(1, 2)


def test_state_budget():
    with pytest.raises(StateBudgetExceeded):
        build_states(Game(6), budget=1000)


def test_invalid_games():
    with pytest.raises(ValueError):
        Game(0)
    with pytest.raises(ValueError):
        Game(2, Fraction(3, 2))
    with pytest.raises(ValueError):
        HintSpec("noise")
    with pytest.raises(ValueError):
        HintSpec.vector(0)
    with pytest.raises(ValueError):
        StrategyTable(Game(1), {(1, 0, 1): Fraction(2)})
