import json
from fractions import Fraction

import numpy as np
import pytest

from artifact.acceptance import load_golden
from artifact.adversary import (
    ConfigurationError,
    GameDerivedAttacker,
    HonestAdversary,
    RandomAbortAdversary,
    SingleShotAdversary,
    defense_bit_count,
    estimate_bias,
    game_derived_attacker,
    simulate_vanilla,
    vanilla_mc_vectorised,
    vanilla_protocol,
)
from artifact.engine import INNER, ProtocolConfig, run_outer
from artifact.games import Game, HintSpec, build_states, greedy_strategy


def test_honest_adversary_never_aborts():
    cfg = ProtocolConfig(5, 3)
    for seed in range(10):
        tr = run_outer(cfg, HonestAdversary((1, 2)), seed)
        assert set(tr.outputs) == {1, 2, 3}


def test_single_shot_fires_once():
    adv = SingleShotAdversary((1,), INNER, "3c", 1, depth=0)
    tr = run_outer(ProtocolConfig(5, 3), adv, 2)
    assert set(tr.outputs) == {2, 3}


def test_estimates_are_deterministic_and_independent_of_jobs():
    cfg = ProtocolConfig(5, 3)
    adv = RandomAbortAdversary((1,), 0.1, seed=5)
    a = estimate_bias(cfg, adv, 24, seed=9)
    b = estimate_bias(cfg, adv, 24, seed=9)
    c = estimate_bias(cfg, adv, 24, seed=9, jobs=2)
    assert a.mean == b.mean == c.mean


def test_estimate_rejects_empty_runs():
    with pytest.raises(ValueError):
        estimate_bias(ProtocolConfig(5, 3), None, 0)


def test_vanilla_single_round():
    # one fair coin: abort on a 0 and re-toss, so Pr[1] = 1/2 + 1/4
    assert vanilla_protocol(1).bias == Fraction(1, 4)


@pytest.mark.parametrize("m", [1, 2, 3, 5, 8])
def test_vanilla_exact_and_float_agree(m):
    assert float(vanilla_protocol(m).bias) == pytest.approx(vanilla_protocol(m, exact=False).bias, abs=1e-12)


def test_vanilla_golden_value():
    golden = load_golden("vanilla_m13.json")
    assert Fraction(golden["bias"]) == vanilla_protocol(13).bias
    assert golden["bias_float"] == pytest.approx(vanilla_protocol(13, exact=False).bias, abs=1e-12)


def test_vanilla_monte_carlo_matches_dp():
    m = 5
    want = float(vanilla_protocol(m).bias)
    fast = vanilla_mc_vectorised(m, 200_000, np.random.default_rng(1))
    assert abs(fast.bias - want) < 3 * fast.stderr
    slow = simulate_vanilla(m, 4000, np.random.default_rng(2))
    assert abs(slow.bias - want) < 3 * slow.stderr + 1e-9


def test_defense_bit_count():
    assert defense_bit_count(3, (1, 2)) == 9
    assert defense_bit_count(3, (1,)) == 3
    assert defense_bit_count(4, (1, 2)) == 11


def test_attacker_rejects_mismatched_strategy():
    wrong = greedy_strategy(build_states(Game(1, Fraction(0), HintSpec.defense_bits(3))))
    with pytest.raises(ConfigurationError):
        GameDerivedAttacker((1, 2), wrong, t=3)
    with pytest.raises(ConfigurationError):
        GameDerivedAttacker((1, 2, 3), None, t=3)


def test_attacker_rejects_strategy_for_another_bias():
    strat = greedy_strategy(build_states(Game(1, Fraction(0), HintSpec.defense_bits(9))))
    adv = GameDerivedAttacker((1, 2), strat, t=3)
    with pytest.raises(ConfigurationError):
        adv._table_for(2, 0.0)
    with pytest.raises(ConfigurationError):
        adv._table_for(1, 0.3)


def test_attacker_runs_on_the_protocol():
    adv = game_derived_attacker(t=3, corrupted=(1, 2))
    report = estimate_bias(ProtocolConfig(5, 3), adv, 30, seed=3)
    assert 0 <= report.mean <= 1
    assert json.dumps(report.as_row())
