"""Fail-stop adversaries, the bias estimator, and the undefended re-toss baseline.

An adversary controls a fixed set of parties and may only make them stop.  It is
shown a :class:`~artifact.engine.DecisionPoint` after every delivery and
broadcast and answers with an :class:`AdversaryDecision`.  Adversaries carry
their own seeded generator and are re-spawned per trial, so a trial depends only
on ``(master seed, trial index)``.
"""

from __future__ import annotations

import copy
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from . import engine
from .engine import INNER, ProtocolConfig
from .games import DEFENSE_BITS, FloatGreedy, Game, HintSpec, StrategyTable, opt_value_float
from .numerics import binom_pmf_vector, binom_tail, sign, weight_schedule
from .oracles import _reveal_bank, bias_for, reveal_coin


class ConfigurationError(ValueError):
    """An adversary was paired with a protocol it was not built for."""


@dataclass(frozen=True)
class AdversaryDecision:
    abort: frozenset = frozenset()

    @classmethod
    def of(cls, parties: Iterable[int] = ()) -> "AdversaryDecision":
        return cls(frozenset(parties))


NO_ABORT = AdversaryDecision()


class Adversary:
    """Base class: never aborts.  Subclasses override :meth:`decide`."""

    passive = False

    def __init__(self, corrupted: Iterable[int] = (), seed: int = 0):
        self.corrupted = tuple(sorted(set(corrupted)))
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def spawn(self, trial: int) -> "Adversary":
        """A fresh copy for one trial, with a generator derived from ``(seed, trial)``."""
        twin = copy.copy(self)
        twin.rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(trial,)))
        twin.reset()
        return twin

    def reset(self) -> None:
        """Clear per-run state; called by :meth:`spawn`."""

    def observe(self, point) -> None:
        pass

    def decide(self, point) -> AdversaryDecision:
        return NO_ABORT


class HonestAdversary(Adversary):
    passive = True


class SingleShotAdversary(Adversary):
    """Abort ``parties`` (default: every alive corrupted member) at the first matching point.

    ``round`` and ``depth`` of ``None`` match anything; ``condition`` is an
    optional predicate on the decision point.
    """

    def __init__(self, corrupted, protocol: str, step: str, round: int | None = None, depth: int | None = None,
                 parties: Iterable[int] | None = None, condition: Callable | None = None, seed: int = 0):
        super().__init__(corrupted, seed)
        self.protocol = protocol
        self.step = step
        self.round = round
        self.depth = depth
        self.parties = None if parties is None else frozenset(parties)
        self.condition = condition
        self.fired = False

    def reset(self) -> None:
        self.fired = False

    def decide(self, point) -> AdversaryDecision:
        if self.fired or point.protocol != self.protocol or point.step != self.step:
            return NO_ABORT
        if self.round is not None and point.round != self.round:
            return NO_ABORT
        if self.depth is not None and point.depth != self.depth:
            return NO_ABORT
        if self.condition is not None and not self.condition(point):
            return NO_ABORT
        who = set(point.corrupted) if self.parties is None else set(point.corrupted) & self.parties
        if not who:
            return NO_ABORT
        self.fired = True
        return AdversaryDecision.of(who)


class ScriptedAdversary(Adversary):
    """Replays a list of aborts ``(protocol, step, round, depth, party)`` in order."""

    def __init__(self, corrupted, script: Iterable[tuple], seed: int = 0):
        super().__init__(corrupted, seed)
        self.script = tuple(tuple(s) for s in script)
        self.done = set()

    @classmethod
    def from_transcript(cls, tr: engine.Transcript, corrupted) -> "ScriptedAdversary":
        rows = [(e["protocol"], e["step"], e["round"], e["depth"], e["party"]) for e in tr.aborts]
        return cls(corrupted, rows)

    def reset(self) -> None:
        self.done = set()

    def decide(self, point) -> AdversaryDecision:
        here = (point.protocol, point.step, point.round, point.depth)
        who = set()
        for k, row in enumerate(self.script):
            if k not in self.done and row[:4] == here and row[4] in point.corrupted:
                who.add(row[4])
                self.done.add(k)
        return AdversaryDecision.of(who)


class RandomAbortAdversary(Adversary):
    """Each alive corrupted party aborts independently with ``rate`` at every point."""

    def __init__(self, corrupted, rate: float, seed: int = 0):
        super().__init__(corrupted, seed)
        if not 0 <= rate <= 1:
            raise ValueError("abort rate must be a probability")
        self.rate = rate

    def decide(self, point) -> AdversaryDecision:
        return AdversaryDecision.of(p for p in point.corrupted if self.rng.random() < self.rate)


# ---------------------------------------------------------------------------
# Attacker derived from a game strategy
# ---------------------------------------------------------------------------


def defense_bit_count(t: int, corrupted: Iterable[int]) -> int:
    """How many conditionally independent ``Ber(δ_i)`` bits a coalition extracts per step-3(b) delivery.

    Singletons give their bit.  A fully corrupted pair reconstructs its bundle:
    the sign of the coin sum and the signs of the two halves of each bank are
    each ``Ber(δ_i)``.  A pair with one corrupted member gives that member's
    defense bit.  Larger subsets are ignored.
    """
    corr = set(corrupted)
    honest = t - len(corr)
    k = len(corr)
    return k + 5 * math.comb(k, 2) + k * honest


def assemble_defense_bits(point, m: int) -> int:
    """Count of ones among the bits described in :func:`defense_bit_count`."""
    n1 = weight_schedule(m).total
    ones = 0
    for Z, got in point.deliveries().items():
        if len(Z) == 1:
            ones += got[Z[0]]
        elif len(Z) == 2 and len(got) == 2:
            a, b = (got[p] for p in Z)
            ones += sign(sum(reveal_coin(a, b, i) for i in range(1, m + 1)))
            for which in range(2):
                bank = _reveal_bank(a, b, which).astype(np.int64)
                ones += sign(int(bank[:n1].sum())) + sign(int(bank[n1:].sum()))
        elif len(Z) == 2:
            (p,) = got
            ones += got[p].d
    return ones


@lru_cache(maxsize=1024)
def _greedy_for(m: int, eps: float, count: int) -> FloatGreedy:
    return opt_value_float(Game(m, eps, HintSpec.defense_bits(count)))


class GameDerivedAttacker(Adversary):
    """Emulates a game player inside the top-level inner protocol.

    At step 3(b) of round ``i`` it assembles ``H_i`` from the coalition's
    defense deliveries, looks up the strategy on ``(i, S_{i-1}, H_i)`` and, if it
    says abort, stops every corrupted party.  The strategy is either a table
    for one fixed game or ``None``, in which case the greedy strategy of the
    game matching the run's revealed bias is built on demand.
    """

    def __init__(self, corrupted, strategy: StrategyTable | FloatGreedy | None = None, *, t: int = 3, seed: int = 0,
                 tolerance: float = 1e-12):
        super().__init__(corrupted, seed)
        self.t = t
        if not self.corrupted or len(self.corrupted) >= t:
            raise ConfigurationError("the coalition must be a non-empty proper subset")
        self.count = defense_bit_count(t, self.corrupted)
        self.strategy = strategy
        self.tolerance = tolerance
        if strategy is not None:
            hint = strategy.game.hint
            if hint.kind != DEFENSE_BITS or hint.param != self.count:
                raise ConfigurationError(f"strategy hint {hint} does not match {self.count} defense bits")
        self.active = None
        self.eps = None

    def reset(self) -> None:
        self.active = None
        self.eps = None

    def _table_for(self, m: int, eps: float):
        if self.strategy is None:
            return _greedy_for(m, eps, self.count)
        game = self.strategy.game
        if game.m != m or abs(float(game.eps) - eps) > self.tolerance:
            raise ConfigurationError(f"strategy built for (m={game.m}, ε={game.eps}), run has (m={m}, ε={eps})")
        return self.strategy

    def decide(self, point) -> AdversaryDecision:
        if point.protocol != INNER or point.depth != 0 or len(point.members) != self.t:
            return NO_ABORT
        if set(point.corrupted) != set(self.corrupted):
            return NO_ABORT
        m = point.m
        if point.step == "2":
            eps = bias_for(weight_schedule(m), float(point.delta), "float")
            self.eps = float(getattr(eps, "value", eps))
            self.active = self._table_for(m, self.eps)
            return NO_ABORT
        if point.step != "3b" or self.active is None:
            return NO_ABORT
        h = assemble_defense_bits(point, m)
        s = float(self.active.prob(point.round, point.prefix_sum, h))
        if s and (s >= 1 or self.rng.random() < s):
            return AdversaryDecision.of(point.corrupted)
        return NO_ABORT


def game_derived_attacker(strategy=None, *, t: int = 3, corrupted=None, seed: int = 0) -> GameDerivedAttacker:
    corrupted = tuple(range(1, t)) if corrupted is None else tuple(corrupted)
    return GameDerivedAttacker(corrupted, strategy, t=t, seed=seed)


# ---------------------------------------------------------------------------
# Bias estimation
# ---------------------------------------------------------------------------


@dataclass
class BiasReport:
    bias: float
    mean: float
    n: int
    stderr: float
    view_gain: object = None
    view_gain_stderr: float | None = None
    sites: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "bias": self.bias,
            "mean": self.mean,
            "n": self.n,
            "stderr": self.stderr,
            "view_gain": None if self.view_gain is None else str(self.view_gain),
            "view_gain_stderr": self.view_gain_stderr,
        }


def trial_seed(master: int, k: int) -> np.random.SeedSequence:
    """Seed of trial ``k``: a child of the master seed addressed by ``k`` alone."""
    return np.random.SeedSequence(master, spawn_key=(k,))


def _spawn(adversary, k: int):
    if adversary is None:
        return None
    if callable(adversary) and not isinstance(adversary, Adversary):
        return adversary(k)
    return adversary.spawn(k)


def run_trials(cfg: ProtocolConfig, adversary, indices: Iterable[int], seed: int) -> list[tuple]:
    """``(output, gain_sum, sites)`` for each trial index."""
    out = []
    for k in indices:
        adv = _spawn(adversary, k)
        tr = engine.run_outer(cfg, adv, trial_seed(seed, k))
        honest = [p for p in tr.outputs if adv is None or p not in adv.corrupted]
        gains = [g["gain"] for g in tr.gains]
        sites = [(f'{g["protocol"]}/{g["step"]}', g["gain"]) for g in tr.gains]
        out.append((tr.output_bit(honest), sum(gains) if gains else 0, sites))
    return out


def _chunk(n: int, jobs: int) -> list[range]:
    size = -(-n // jobs)
    return [range(a, min(n, a + size)) for a in range(0, n, size)]


def estimate_bias(cfg: ProtocolConfig, adversary=None, n: int = 1000, seed: int = 0, jobs: int = 1) -> BiasReport:
    """Run ``n`` independent executions and summarise the honest output.

    Trial ``k`` uses :func:`trial_seed` ``(seed, k)`` and its own adversary copy,
    so the report does not depend on ``jobs``.  With ``cfg.analysis`` (and
    ``t ≤ 3``) the telescoped view-value gain is averaged as well.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(run_trials, *zip(*[(cfg, adversary, r, seed) for r in _chunk(n, jobs)]))
            rows = [row for part in parts for row in part]
    else:
        rows = run_trials(cfg, adversary, range(n), seed)
    bits = np.array([r[0] for r in rows], dtype=float)
    mean = float(bits.mean())
    stderr = float(bits.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    report = BiasReport(abs(mean - 0.5), mean, n, stderr)
    if cfg.analysis:
        gains = [r[1] for r in rows]
        total = sum(gains, Fraction(0)) if cfg.mode == "exact" else float(sum(gains))
        report.view_gain = total / n
        g = np.array([float(x) for x in gains])
        report.view_gain_stderr = float(g.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        sites = defaultdict(lambda: [0, 0])
        for r in rows:
            for name, gain in r[2]:
                sites[name][0] += 1
                sites[name][1] += gain
        report.sites = {k: {"count": c, "mean_gain": float(s) / c} for k, (c, s) in sorted(sites.items())}
    return report


# ---------------------------------------------------------------------------
# Undefended baseline: majority of weighted rounds, aborted rounds re-tossed
# ---------------------------------------------------------------------------


@dataclass
class VanillaDP:
    m: int
    bias: object
    values: list  # values[i-1][b] = optimal value at round i before its coin, offset b (towards 1)


def _vanilla_exact(m: int) -> VanillaDP:
    """Exact DP with integer numerators over powers of two (all coins are fair)."""
    sched = weight_schedule(m)
    n1 = sched.total
    # value = num / 2**e
    num = {b: int(b >= 0) for b in range(-n1, n1 + 1)}
    e = 0
    values = [None] * m
    for i in range(m, 0, -1):
        nl = sched.coins(i)
        k = sched.suffix(i)
        prev = n1 - k
        binoms = [math.comb(nl, j) for j in range(nl + 1)]
        # tail numerators over 2**k: #{subsets with sum >= -b}
        rows = [math.comb(k, j) for j in range(k + 1)]
        upper = [0] * (k + 2)
        for j in range(k, -1, -1):
            upper[j] = upper[j + 1] + rows[j]
        common = max(e, k)
        nxt = {}
        for b in range(-prev, prev + 1, 2):
            j0 = max(0, -(-(k - b) // 2))
            a = (upper[j0] if j0 <= k else 0) << (common - k)
            acc = 0
            for j, w in enumerate(binoms):
                v = num[b + 2 * j - nl] << (common - e)
                acc += w * (a if a > v else v)
            nxt[b] = acc
        num = nxt
        e = common + nl
        values[i - 1] = {b: Fraction(x, 1 << e) for b, x in num.items()} if m <= 5 else None
    return VanillaDP(m, Fraction(num[0], 1 << e) - Fraction(1, 2), values)


def _vanilla_float(m: int) -> VanillaDP:
    from scipy import special, stats

    sched = weight_schedule(m)
    n1 = sched.total
    future = (np.arange(-n1, n1 + 1, 2) >= 0).astype(float)
    for i in range(m, 0, -1):
        nl = sched.coins(i)
        k = sched.suffix(i)
        prev = n1 - k
        bs = np.arange(-prev, prev + 1, 2)
        pc = stats.binom.pmf(np.arange(nl + 1), nl, 0.5)
        j0 = np.maximum(0, -(-(k - bs) // 2))
        retoss = np.where(j0 > k, 0.0, np.where(j0 == 0, 1.0, special.bdtrc(np.maximum(j0 - 1, 0), k, 0.5)))
        idx = np.arange(len(bs))[:, None] + np.arange(nl + 1)[None, :]
        future = (pc[None, :] * np.maximum(retoss[:, None], future[idx])).sum(axis=1)
    return VanillaDP(m, float(future[0]) - 0.5, [])


def vanilla_protocol(m: int, exact: bool = True) -> VanillaDP:
    """Optimal single-abort bias of the undefended re-toss protocol.

    ``V_{m+1}(b) = 1[b ≥ 0]`` and ``V_i(b) = E_c[max(tail(ms[i], 0, -b), V_{i+1}(b + c))]``:
    after seeing round ``i``'s coin the attacker may abort once, which re-tosses
    that round.  By symmetry the bias towards 0 is the same.
    """
    if m < 1:
        raise ValueError("m must be positive")
    return _vanilla_exact(m) if exact else _vanilla_float(m)


@lru_cache(maxsize=8)
def _vanilla_grids(m: int) -> list:
    """Per round ``(prev, grid)`` with ``grid[b, c]`` true where re-tossing beats keeping the coin."""
    from scipy import special, stats

    sched = weight_schedule(m)
    n1 = sched.total
    future = (np.arange(-n1, n1 + 1, 2) >= 0).astype(float)
    tables = [None] * m
    for i in range(m, 0, -1):
        nl = sched.coins(i)
        k = sched.suffix(i)
        prev = n1 - k
        bs = np.arange(-prev, prev + 1, 2)
        pc = stats.binom.pmf(np.arange(nl + 1), nl, 0.5)
        j0 = np.maximum(0, -(-(k - bs) // 2))
        retoss = np.where(j0 > k, 0.0, np.where(j0 == 0, 1.0, special.bdtrc(np.maximum(j0 - 1, 0), k, 0.5)))
        idx = np.arange(len(bs))[:, None] + np.arange(nl + 1)[None, :]
        honest = future[idx]
        tables[i - 1] = (prev, retoss[:, None] > honest)
        future = (pc[None, :] * np.maximum(retoss[:, None], honest)).sum(axis=1)
    return tables


def vanilla_attacker_rule(m: int) -> Callable[[int, int, int], bool]:
    """``(i, b, c) → abort?`` for the optimal single-abort attacker (float DP)."""
    tables = _vanilla_grids(m)
    sched = weight_schedule(m)

    def rule(i: int, b: int, c: int) -> bool:
        prev, grid = tables[i - 1]
        return bool(grid[(b + prev) // 2, (c + sched.coins(i)) // 2])

    return rule


def simulate_vanilla(m: int, n: int, rng: np.random.Generator, rule: Callable | None = None) -> BiasReport:
    """Monte Carlo of the re-toss protocol against a single-abort rule (default: optimal)."""
    rule = rule or vanilla_attacker_rule(m)
    sched = weight_schedule(m)
    out = np.empty(n)
    for t in range(n):
        b = 0
        used = False
        for i in range(1, m + 1):
            nl = sched.coins(i)
            c = 2 * int(rng.binomial(nl, 0.5)) - nl
            if not used and rule(i, b, c):
                used = True
                c = 2 * int(rng.binomial(nl, 0.5)) - nl
            b += c
        out[t] = sign(b)
    mean = float(out.mean())
    return BiasReport(abs(mean - 0.5), mean, n, float(out.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def vanilla_mc_vectorised(m: int, n: int, rng: np.random.Generator) -> BiasReport:
    """Same law as :func:`simulate_vanilla` with the optimal rule, vectorised over trials."""
    rule_tables = _vanilla_grids(m)
    sched = weight_schedule(m)
    b = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    for i in range(1, m + 1):
        nl = sched.coins(i)
        prev, grid = rule_tables[i - 1]
        c = 2 * rng.binomial(nl, 0.5, size=n) - nl
        hit = ~used & grid[(b + prev) // 2, (c + nl) // 2]
        redo = 2 * rng.binomial(nl, 0.5, size=n) - nl
        c = np.where(hit, redo, c)
        used |= hit
        b += c
    out = (b >= 0).astype(float)
    mean = float(out.mean())
    return BiasReport(abs(mean - 0.5), mean, n, float(out.std(ddof=1) / math.sqrt(n)))


