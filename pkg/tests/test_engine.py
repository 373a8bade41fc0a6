from fractions import Fraction

import numpy as np
import pytest

from artifact.adversary import Adversary, NO_ABORT, RandomAbortAdversary, ScriptedAdversary, SingleShotAdversary
from artifact.engine import HT, INNER, OUTER, AdversaryError, ProtocolConfig, outputs_agree, run_inner, run_outer
from artifact.numerics import binom_tail, sign, weight_schedule
from artifact.oracles import bias_for


def coin_sum(tr):
    return sum(e["coin"] for e in tr.events if e.get("ev") == "broadcast" and e.get("step") == "3c")


@pytest.mark.parametrize("t", [2, 3, 4, 5])
def test_honest_runs_agree(t):
    cfg = ProtocolConfig(5, t)
    for seed in range(20):
        tr = run_outer(cfg, None, seed)
        assert outputs_agree(tr) and len(tr.outputs) == t


def test_honest_output_is_sign_of_coin_sum():
    cfg = ProtocolConfig(3, 3, record=True)
    for seed in range(10):
        tr = run_outer(cfg, None, seed)
        assert set(tr.outputs.values()) == {sign(coin_sum(tr))}


def test_two_parties_run_the_ht_protocol():
    tr = run_outer(ProtocolConfig(3, 2, record=True), None, 1)
    protocols = {e.get("protocol") for e in tr.events}
    assert HT in protocols and INNER not in protocols


def test_transcripts_are_deterministic():
    cfg = ProtocolConfig(5, 3, record=True)
    adv = RandomAbortAdversary((1, 2), 0.05, seed=4)
    a = run_outer(cfg, adv.spawn(0), 7).to_jsonl()
    b = run_outer(cfg, adv.spawn(0), 7).to_jsonl()
    assert a == b


@pytest.mark.parametrize("t", [3, 4, 5])
def test_random_abort_fuzz(t):
    # the engine asserts the round and depth bounds and output agreement itself
    cfg = ProtocolConfig(5, t)
    for seed in range(60):
        adv = RandomAbortAdversary(range(1, t), 0.05, seed=seed)
        tr = run_outer(cfg, adv, seed)
        assert outputs_agree(tr, adv.corrupted)


def test_survivor_of_outer_abort_outputs_unbiased_bit():
    cfg = ProtocolConfig(3, 3)
    bits = []
    for seed in range(3000):
        adv = SingleShotAdversary((1, 2), OUTER, "defense")
        tr = run_outer(cfg, adv, seed)
        assert set(tr.outputs) == {3}
        bits.append(tr.outputs[3])
    assert abs(np.mean(bits) - 0.5) < 3 * 0.5 / np.sqrt(len(bits))


class RecordingAbort(SingleShotAdversary):
    """Single shot that also remembers the conditional probability at the abort."""

    def decide(self, point):
        d = super().decide(point)
        if d.abort:
            sched = weight_schedule(point.m)
            eps = bias_for(sched, float(point.delta), "float")
            self.seen = float(binom_tail(sched.suffix(point.round + 1), eps, -sum(point.coins)))
        return d


def test_abort_after_coin_keeps_conditional_expectation():
    cfg = ProtocolConfig(3, 3)
    gaps = []
    for seed in range(3000):
        adv = RecordingAbort((1,), INNER, "3c", 2, depth=0)
        tr = run_outer(cfg, adv, seed)
        gaps.append(tr.output_bit([2, 3]) - adv.seen)
    gaps = np.array(gaps)
    assert abs(gaps.mean()) < 3 * gaps.std() / np.sqrt(len(gaps))


def test_abort_at_step_two_keeps_half():
    cfg = ProtocolConfig(5, 3)
    bits = [run_outer(cfg, SingleShotAdversary((1,), INNER, "2", depth=0), s).output_bit([2, 3]) for s in range(3000)]
    assert abs(np.mean(bits) - 0.5) < 3 * 0.5 / np.sqrt(len(bits))


def test_even_total_weight_shifts_the_noisy_delta():
    # at m = 3 the noise step counts a tie of its 14 sampled coins as non-positive, so the
    # inner protocol starts from δ' with E[δ'] = Pr[Bin-sum of 14 coins >= 1] < 1/2
    sched = weight_schedule(3)
    eps = bias_for(sched, Fraction(1, 2), "exact")
    probe = ValueProbe((1,))
    run_outer(ProtocolConfig(3, 3, mode="exact", analysis=True), probe, 5)
    assert probe.values[0][5] == binom_tail(sched.total, eps, 1)
    assert float(probe.values[0][5]) == pytest.approx(0.2976, abs=1e-3)


def test_ht_abort_before_exchange_outputs_defense_bit():
    cfg = ProtocolConfig(3, 2, record=True)
    for seed in range(20):
        tr = run_outer(cfg, SingleShotAdversary((1,), HT, "1a", 1), seed)
        defense = [e for e in tr.events if e.get("ev") == "ht_defense" and e.get("round") == 1]
        assert defense and tr.outputs[2] in (0, 1)


class ValueProbe(Adversary):
    def __init__(self, corrupted):
        super().__init__(corrupted)
        self.values = []

    def observe(self, point):
        self.values.append((point.protocol, point.step, point.round, point.depth, point, point.view_value()))


def test_view_values_at_known_prefixes():
    probe = ValueProbe((1,))
    run_outer(ProtocolConfig(5, 3, mode="exact", analysis=True), probe, 5)
    first = probe.values[0]
    assert (first[0], first[1]) == (OUTER, "defense") and first[5] == Fraction(1, 2)
    sched = weight_schedule(5)
    for protocol, step, rnd, depth, point, value in probe.values:
        if protocol == INNER and step == "3c" and depth == 0:
            eps = bias_for(sched, point.delta, "exact")
            assert value == binom_tail(sched.suffix(rnd + 1), eps, -sum(point.coins))


def test_view_value_after_the_last_coin_is_the_outcome():
    probe = ValueProbe((1,))

    class Both(SingleShotAdversary):
        def observe(self, point):
            probe.observe(point)

    cfg = ProtocolConfig(3, 2, mode="exact", analysis=True, record=True)
    tr = run_outer(cfg, Both((1,), HT, "1b", 3), 3)
    point = [v for v in probe.values if v[1] == "1b" and v[2] == 3][0][4]
    assert point.view_value((1,)) == tr.outputs[2]


def test_replaying_a_transcript_reproduces_it():
    cfg = ProtocolConfig(5, 3, record=True)
    adv = RandomAbortAdversary((1, 2), 0.1, seed=3)
    tr = run_outer(cfg, adv.spawn(0), 11)
    replay = ScriptedAdversary.from_transcript(tr, (1, 2))
    again = run_outer(cfg, replay, 11)
    # the header names the adversary class, everything after it must match
    assert again.to_jsonl().splitlines()[1:] == tr.to_jsonl().splitlines()[1:]
    assert again.outputs == tr.outputs


def test_aborting_an_honest_party_is_rejected():
    class Rogue(Adversary):
        def decide(self, point):
            from artifact.adversary import AdversaryDecision

            return AdversaryDecision.of([3])

    with pytest.raises(AdversaryError):
        run_outer(ProtocolConfig(3, 3), Rogue((1,)), 0)


def test_inner_entry_on_known_delta():
    cfg = ProtocolConfig(3, 3, mode="exact")
    bits = [run_inner(cfg, Fraction(1, 5), None, s).output_bit([1, 2, 3]) for s in range(1500)]
    assert abs(np.mean(bits) - 0.2) < 3 * np.sqrt(0.16 / 1500)


def test_config_validation():
    for bad in ({"m": 0, "t": 3}, {"m": 3, "t": 1}, {"m": 3, "t": 3, "ell": 2}, {"m": 3, "t": 3, "mode": "x"}):
        with pytest.raises(ValueError):
            ProtocolConfig(**bad)
    assert ProtocolConfig(3, 4).quality == 4
