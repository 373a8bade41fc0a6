"""Online binomial games.

Round ``i`` of an ``m``-round game tosses ``ml[i]`` independent ``ε``-coins whose
sum ``C_i`` is added to the running offset.  Before the coins of round ``i``
are revealed the player is handed a hint ``H_i`` correlated with them and may
stop the game once.  Stopping at ``u = ⟨i, b, h⟩`` earns the difference between
the chance of a non-negative final sum before the hint (``c_u``) and after it
(``v_u``).

States are indexed by round ``i`` (the level is ``m - i + 1``).  Final states
``⟨m+1, b⟩`` carry ``c = v = 1[b ≥ 0]`` and never pay.

Everything is computed with exact rationals when ``eps`` is rational and with
floats otherwise; :func:`opt_value_float` is a vectorised variant for games too
large to enumerate.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .numerics import (
    binom_pmf_vector,
    binom_tail,
    hyp_tail,
    is_exact,
    sbias,
    sign,
    weight_schedule,
)

STATE_BUDGET = 200_000

ALL_INFO = "all_info"
VECTOR = "vector"
HYPERGEOMETRIC = "hypergeometric"
DEFENSE_BITS = "defense_bits"
CONSTANT = "constant"
COIN_SIGN = "coin_sign"
HINT_KINDS = (ALL_INFO, VECTOR, HYPERGEOMETRIC, DEFENSE_BITS, CONSTANT, COIN_SIGN)


class StateBudgetExceeded(ValueError):
    """The game has more states than exact enumeration allows."""


@dataclass(frozen=True)
class HintSpec:
    """Which hint the player sees before each round's coins.

    ``vector``: weight of ``param`` coins of bias ``sbias(ms[1], δ_i)``;
    ``hypergeometric``: one ``±1`` draw with ``Pr[+1] = hyp_tail(2·ms[1], param, ms[i+1], -S_i)``;
    ``defense_bits``: the number of ones among ``param`` independent ``Ber(δ_i)`` bits;
    ``coin_sign``: ``sign(C_i)``; ``all_info``: ``C_i`` itself; ``constant``: nothing.
    """

    kind: str = ALL_INFO
    param: int | None = None

    def __post_init__(self):
        if self.kind not in HINT_KINDS:
            raise ValueError(f"unknown hint kind {self.kind!r}")
        needs = self.kind in (VECTOR, HYPERGEOMETRIC, DEFENSE_BITS)
        if needs and self.param is None:
            raise ValueError(f"{self.kind} hints need a parameter")
        if self.kind in (VECTOR, DEFENSE_BITS) and self.param < 1:
            raise ValueError(f"{self.kind} hint length must be positive")

    @classmethod
    def all_info(cls):
        return cls(ALL_INFO)

    @classmethod
    def vector(cls, length: int):
        return cls(VECTOR, length)

    @classmethod
    def hypergeometric(cls, weight: int):
        return cls(HYPERGEOMETRIC, weight)

    @classmethod
    def defense_bits(cls, count: int):
        return cls(DEFENSE_BITS, count)

    @classmethod
    def constant(cls):
        return cls(CONSTANT)

    @classmethod
    def coin_sign(cls):
        return cls(COIN_SIGN)

    def check(self, m: int) -> None:
        if self.kind == HYPERGEOMETRIC:
            size = 2 * weight_schedule(m).total
            if abs(self.param) > size or (size + self.param) % 2:
                raise ValueError(f"bank weight {self.param} impossible for a bank of {size}")

    @property
    def depends_on_sum_only(self) -> bool:
        """True when the hint law depends on the coins only through the new offset."""
        return self.kind in (VECTOR, HYPERGEOMETRIC, DEFENSE_BITS, CONSTANT)


@dataclass(frozen=True)
class Game:
    m: int
    eps: object = Fraction(0)
    hint: HintSpec = field(default_factory=HintSpec)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("a game needs at least one round")
        if abs(self.eps) > 1:
            raise ValueError(f"bias {self.eps} outside [-1, 1]")
        self.hint.check(self.m)

    @property
    def sched(self):
        return weight_schedule(self.m)

    @property
    def exact(self) -> bool:
        return is_exact(self.eps)

    def to_json(self) -> str:
        return json.dumps({"m": self.m, "eps": str(self.eps), "hint": self.hint.kind, "param": self.hint.param}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Game":
        d = json.loads(text)
        eps = Fraction(d["eps"]) if "/" in d["eps"] or "." not in d["eps"] else float(d["eps"])
        return cls(d["m"], eps, HintSpec(d["hint"], d["param"]))


# ---------------------------------------------------------------------------
# Hint laws
# ---------------------------------------------------------------------------


def _one(game: Game):
    return Fraction(1) if game.exact else 1.0


def delta_after(game: Game, i: int, s: int):
    """``δ_i``: chance of a non-negative final sum once ``S_i = s`` is fixed."""
    return binom_tail(game.sched.suffix(i + 1), game.eps, -s)


def hint_dist(game: Game, i: int, b: int, c: int) -> list[tuple[object, object]]:
    """``[(h, Pr[H_i = h | S_{i-1} = b, C_i = c])]`` over hints of positive probability."""
    kind = game.hint.kind
    one = _one(game)
    if kind == ALL_INFO:
        return [(c, one)]
    if kind == COIN_SIGN:
        return [(sign(c), one)]
    return _sum_hint_dist(game, i, b + c)


@lru_cache(maxsize=1 << 16)
def _sum_hint_dist(game: Game, i: int, s: int) -> list[tuple[object, object]]:
    kind = game.hint.kind
    one = _one(game)
    n1 = game.sched.total
    if kind == CONSTANT:
        return [(0, one)]
    if kind == HYPERGEOMETRIC:
        q = hyp_tail(2 * n1, game.hint.param, game.sched.suffix(i + 1), -s, exact=game.exact)
        return [(h, w) for h, w in ((1, q), (-1, one - q)) if w]
    delta = delta_after(game, i, s)
    if kind == VECTOR:
        e = sbias(n1, delta, exact=game.exact)
        e = getattr(e, "value", e)
        sums, probs = binom_pmf_vector(game.hint.param, e)
        return [(w, pr) for w, pr in zip(sums, probs) if pr]
    if kind == DEFENSE_BITS:
        j = game.hint.param
        out = []
        for k in range(j + 1):
            pr = math.comb(j, k) * delta**k * (one - delta) ** (j - k)
            if pr:
                out.append((k, pr))
        return out
    raise ValueError(f"hint kind {kind!r} has no offset-only law")


def sample_hint(game: Game, i: int, b: int, c: int, rng: np.random.Generator):
    """One draw of ``H_i``; vector hints come out as full ``±1`` vectors."""
    kind = game.hint.kind
    if kind == ALL_INFO:
        return c
    if kind == COIN_SIGN:
        return sign(c)
    if kind == CONSTANT:
        return 0
    n1 = game.sched.total
    if kind == HYPERGEOMETRIC:
        q = float(hyp_tail(2 * n1, game.hint.param, game.sched.suffix(i + 1), -(b + c), exact=game.exact))
        return 1 if rng.random() < q else -1
    delta = float(delta_after(game, i, b + c))
    if kind == VECTOR:
        e = sbias(n1, delta)
        return np.where(rng.random(game.hint.param) < (1 + e) / 2, 1, -1).astype(np.int8)
    return int(rng.binomial(game.hint.param, delta))


def compress_hint(game: Game, h):
    """The enumerated symbol of a sampled hint (the weight, for vectors)."""
    if game.hint.kind == VECTOR:
        return int(np.sum(h))
    return h


# ---------------------------------------------------------------------------
# State tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GameState:
    round: int
    offset: int
    hint: object
    p: object
    c: object
    v: object
    level: int

    @property
    def key(self) -> tuple:
        return (self.round, self.offset, self.hint)

    @property
    def final(self) -> bool:
        return self.level == 0

    @property
    def gain(self):
        return self.c - self.v

    @property
    def name(self) -> str:
        def enc(x):
            return f"n{-x}" if isinstance(x, int) and x < 0 else str(x)

        if self.final:
            return f"s_l0_b{enc(self.offset)}"
        return f"s_l{self.level}_b{enc(self.offset)}_h{enc(self.hint)}"


@dataclass
class GameTable:
    game: Game
    states: list
    index: dict
    posterior: dict  # state key -> [(c, Pr[C_i = c | u])]
    hint_mass: dict  # (i, b) -> [(h, Pr[H_i = h | S_{i-1} = b])]
    offsets: dict  # i -> {b: Pr[S_{i-1} = b]} for i = 1..m+1

    def __len__(self) -> int:
        return len(self.states)

    def state(self, key) -> GameState:
        return self.states[self.index[key]]

    @property
    def nonfinal(self) -> list:
        return [s for s in self.states if not s.final]

    def transition(self, u: GameState) -> dict:
        """``p_{v|u}`` for every state ``v`` strictly after ``u`` (mass conditional on reaching ``u``)."""
        game = self.game
        m = game.m
        out = {}
        dist = defaultdict(lambda: 0)
        for c, pc in self.posterior[u.key]:
            dist[u.offset + c] += pc
        for j in range(u.round + 1, m + 2):
            if j == m + 1:
                for b, pb in dist.items():
                    if pb:
                        out[(m + 1, b, None)] = pb
                break
            for b, pb in dist.items():
                if not pb:
                    continue
                for h, ph in self.hint_mass[(j, b)]:
                    out[(j, b, h)] = pb * ph
            sums, probs = binom_pmf_vector(game.sched.coins(j), game.eps)
            nxt = defaultdict(lambda: 0)
            for b, pb in dist.items():
                if not pb:
                    continue
                for c, pc in zip(sums, probs):
                    if pc:
                        nxt[b + c] += pb * pc
            dist = nxt
        return out


def _offset_table(game: Game) -> dict:
    one = _one(game)
    table = {1: {0: one}}
    dist = {0: one}
    for i in range(1, game.m + 1):
        sums, probs = binom_pmf_vector(game.sched.coins(i), game.eps)
        nxt = defaultdict(lambda: 0 * one)
        for b, pb in dist.items():
            for c, pc in zip(sums, probs):
                if pc:
                    nxt[b + c] += pb * pc
        dist = dict(sorted(nxt.items()))
        table[i + 1] = dist
    return table


def _count_states(game: Game, offsets: dict) -> int:
    """Upper bound on the number of states, computed before any posterior."""
    sched = game.sched
    total = len(offsets[game.m + 1])
    for i in range(1, game.m + 1):
        nb = len(offsets[i])
        kind = game.hint.kind
        if kind == ALL_INFO:
            per = sched.coins(i) + 1
        elif kind == VECTOR:
            per = game.hint.param + 1
        elif kind == DEFENSE_BITS:
            per = game.hint.param + 1
        elif kind in (HYPERGEOMETRIC, COIN_SIGN):
            per = 2
        else:
            per = 1
        total += nb * per
    return total


def build_states(game: Game, budget: int = STATE_BUDGET) -> GameTable:
    """Enumerate every reachable state with ``p_u``, ``c_u``, ``v_u`` and its posterior."""
    offsets = _offset_table(game)
    if _count_states(game, offsets) > budget:
        raise StateBudgetExceeded(f"{game} needs more than {budget} states")
    sched = game.sched
    m = game.m
    states = []
    posterior = {}
    hint_mass = {}
    for i in range(1, m + 1):
        sums, probs = binom_pmf_vector(sched.coins(i), game.eps)
        for b, pb in offsets[i].items():
            if not pb:
                continue
            before = binom_tail(sched.suffix(i), game.eps, -b)
            joint = defaultdict(list)
            for c, pc in zip(sums, probs):
                if not pc:
                    continue
                for h, ph in hint_dist(game, i, b, c):
                    joint[h].append((c, pc * ph))
            masses = []
            for h in sorted(joint, key=lambda x: (x is None, x)):
                pairs = joint[h]
                mass = sum(w for _, w in pairs)
                if not mass:
                    continue
                post = [(c, w / mass) for c, w in pairs]
                after = sum(pc * delta_after(game, i, b + c) for c, pc in post)
                masses.append((h, mass))
                posterior[(i, b, h)] = post
                states.append(GameState(i, b, h, pb * mass, before, after, m - i + 1))
            hint_mass[(i, b)] = masses
    one = _one(game)
    for b, pb in offsets[m + 1].items():
        if pb:
            out = one if b >= 0 else 0 * one
            states.append(GameState(m + 1, b, None, pb, out, out, 0))
    index = {s.key: k for k, s in enumerate(states)}
    return GameTable(game, states, index, posterior, hint_mass, offsets)


# ---------------------------------------------------------------------------
# Optimal value and strategies
# ---------------------------------------------------------------------------


@dataclass
class OptResult:
    value: object
    opt: dict  # state key -> opt(u)
    cont: dict  # state key -> expected opt of the successors
    expected: dict  # (i, b) -> E_h[opt(i, b, h)]


def opt_value(table: GameTable, direction: int = 1) -> OptResult:
    """Backward induction ``opt(u) = max(gain(u), E[opt(successor)])``; bias is ``E[opt(1, 0, H_1)]``.

    ``direction = 1`` rewards pushing the outcome towards 1 (``gain = c - v``);
    ``-1`` towards 0.
    """
    game = table.game
    zero = 0 * _one(game)
    m = game.m
    expected = {(m + 1, b): zero for b in table.offsets[m + 1]}
    opt = {}
    cont = {}
    for i in range(m, 0, -1):
        for b in table.offsets[i]:
            if (i, b) not in table.hint_mass:
                continue
            acc = zero
            for h, ph in table.hint_mass[(i, b)]:
                u = table.state((i, b, h))
                k = sum(pc * expected[(i + 1, b + c)] for c, pc in table.posterior[u.key])
                g = direction * u.gain
                o = g if g > k else k
                opt[u.key] = o
                cont[u.key] = k
                acc += ph * o
            expected[(i, b)] = acc
    return OptResult(expected[(1, 0)], opt, cont, expected)


@dataclass
class StrategyTable:
    """Stateless rule ``(i, b, h) → abort probability``; absent keys never abort."""

    game: Game
    probs: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, p in self.probs.items():
            if not 0 <= p <= 1:
                raise ValueError(f"abort probability {p} at {k} outside [0, 1]")

    def prob(self, i: int, b: int, h):
        return self.probs.get((i, b, h), 0)

    def to_json(self) -> str:
        rows = [[i, b, h, str(p)] for (i, b, h), p in sorted(self.probs.items(), key=lambda kv: kv[0])]
        return json.dumps({"game": json.loads(self.game.to_json()), "probs": rows}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StrategyTable":
        d = json.loads(text)
        game = Game.from_json(json.dumps(d["game"]))
        conv = Fraction if game.exact else float
        return cls(game, {(i, b, h): conv(p) for i, b, h, p in d["probs"]})


def honest_strategy(game: Game) -> StrategyTable:
    return StrategyTable(game, {})


def greedy_strategy(table: GameTable, result: OptResult | None = None, direction: int = 1) -> StrategyTable:
    """Abort exactly where the immediate gain is positive and at least the continuation.

    Zero-gain ties are resolved towards continuing, so a game without profitable
    states is played honestly.
    """
    result = result or opt_value(table, direction)
    one = _one(table.game)
    probs = {}
    for u in table.nonfinal:
        g = direction * u.gain
        if g > 0 and g >= result.cont[u.key]:
            probs[u.key] = one
    return StrategyTable(table.game, probs)


@dataclass
class Evaluation:
    bias: object
    marginals: dict  # state key -> Pr[abort at that state]


def eval_strategy_exact(table: GameTable, strategy: StrategyTable, direction: int = 1) -> Evaluation:
    """Forward pass over offsets: abort marginals ``a_v`` and ``Σ a_v · gain(v)``."""
    game = table.game
    if strategy.game.m != game.m:
        raise ValueError("strategy built for a different game")
    zero = 0 * _one(game)
    alive = {0: _one(game)}
    marginals = {}
    bias = zero
    for i in range(1, game.m + 1):
        nxt = defaultdict(lambda: zero)
        for b, pb in alive.items():
            if not pb:
                continue
            for h, ph in table.hint_mass[(i, b)]:
                u = table.state((i, b, h))
                s = strategy.prob(i, b, h)
                mass = pb * ph
                a = mass * s
                if a:
                    marginals[u.key] = a
                    bias += a * direction * u.gain
                rest = mass - a
                if rest:
                    for c, pc in table.posterior[u.key]:
                        nxt[b + c] += rest * pc
        alive = nxt
    return Evaluation(bias, marginals)


def eval_strategy_mc(game: Game, strategy: StrategyTable, n: int, rng: np.random.Generator, direction: int = 1):
    """Monte Carlo bias: mean of ``O_abort - O_honest`` over ``n`` plays; returns ``(mean, stderr)``."""
    if n < 1:
        raise ValueError("need at least one play")
    sched = game.sched
    p = (1 + float(getattr(game.eps, "value", game.eps))) / 2
    gains = np.zeros(n)
    b = np.zeros(n, dtype=np.int64)
    stopped = np.zeros(n, dtype=bool)
    abort_out = np.zeros(n)
    for i in range(1, game.m + 1):
        nl = sched.coins(i)
        c = 2 * rng.binomial(nl, p, size=n) - nl
        h = np.empty(n, dtype=object)
        for j in range(n):
            if not stopped[j]:
                h[j] = compress_hint(game, sample_hint(game, i, int(b[j]), int(c[j]), rng))
        for j in range(n):
            if stopped[j]:
                continue
            s = float(strategy.prob(i, int(b[j]), h[j]))
            if s and rng.random() < s:
                stopped[j] = True
                k = sched.suffix(i)
                fresh = 2 * rng.binomial(k, p) - k
                abort_out[j] = 1.0 if b[j] + fresh >= 0 else 0.0
        b = b + c
    honest_out = (b >= 0).astype(float)
    gains[stopped] = abort_out[stopped] - honest_out[stopped]
    gains *= direction
    return float(gains.mean()), float(gains.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


# ---------------------------------------------------------------------------
# Vectorised float dynamic programme (large m, offset-only hints)
# ---------------------------------------------------------------------------


def _tail_vector(n: int, p: float, ks: np.ndarray) -> np.ndarray:
    """``binom_tail(n, ε, k)`` for an array of thresholds ``k``, with ``p = (1+ε)/2``."""
    j0 = np.maximum(0, -((-(n + ks)) // 2))
    out = np.where(j0 > n, 0.0, 1.0)
    mid = (j0 >= 1) & (j0 <= n)
    if np.any(mid):
        if p <= 0.0:
            out[mid] = 0.0
        elif p >= 1.0:
            out[mid] = 1.0
        else:
            out[mid] = special.bdtrc(j0[mid] - 1, n, p)
    return out


@dataclass
class FloatGreedy:
    """Greedy decisions of a float game, stored per round as a boolean ``[b, h]`` grid."""

    game: Game
    value: float
    lows: list  # lows[i-1] = smallest offset at round i
    hints: list  # hint symbols (columns)
    abort: list  # abort[i-1][b_index, h_index]

    def prob(self, i: int, b: int, h) -> float:
        grid = self.abort[i - 1]
        r = (b - self.lows[i - 1]) // 2
        if not 0 <= r < grid.shape[0]:
            return 0.0
        try:
            col = self.hints.index(h)
        except ValueError:
            return 0.0
        return 1.0 if grid[r, col] else 0.0


def opt_value_float(game: Game, direction: int = 1) -> FloatGreedy:
    """Float ``opt`` recursion and greedy grid for hints that depend on the offset only."""
    kind = game.hint.kind
    if kind not in (DEFENSE_BITS, HYPERGEOMETRIC, CONSTANT):
        raise ValueError(f"vectorised DP does not cover {kind} hints")
    sched = game.sched
    m = game.m
    n1 = sched.total
    eps = float(getattr(game.eps, "value", game.eps))
    p = (1 + eps) / 2
    if kind == DEFENSE_BITS:
        hints = list(range(game.hint.param + 1))
    elif kind == HYPERGEOMETRIC:
        hints = [-1, 1]
    else:
        hints = [0]
    future = None  # E_h[opt] at round i+1, indexed by offset
    lows = [0] * m
    grids = [None] * m
    for i in range(m, 0, -1):
        prev = n1 - sched.suffix(i)
        bs = np.arange(-prev, prev + 1, 2)
        nl = sched.coins(i)
        cs = np.arange(-nl, nl + 1, 2)
        pc = stats.binom.pmf(np.arange(nl + 1), nl, p)
        ss = np.arange(-prev - nl, prev + nl + 1, 2)
        delta = _tail_vector(sched.suffix(i + 1), p, -ss)
        if kind == DEFENSE_BITS:
            like = stats.binom.pmf(np.asarray(hints)[:, None], game.hint.param, delta[None, :])
        elif kind == HYPERGEOMETRIC:
            k = sched.suffix(i + 1)
            up = np.array([float(hyp_tail(2 * n1, game.hint.param, k, -int(s), exact=False)) for s in ss])
            like = np.vstack([1 - up, up])
        else:
            like = np.ones((1, len(ss)))
        # band[b, s] = Pr[C_i = s - b]
        band = np.zeros((len(bs), len(ss)))
        idx = np.arange(len(bs))[:, None] + np.arange(len(cs))[None, :]
        band[np.arange(len(bs))[:, None], idx] = pc[None, :]
        mass = like @ band.T  # [h, b]
        safe = np.where(mass > 0, mass, 1.0)
        after = (like * delta[None, :]) @ band.T / safe
        fut = np.zeros(len(ss)) if future is None else future
        cont = (like * fut[None, :]) @ band.T / safe
        before = _tail_vector(sched.suffix(i), p, -bs)
        gain = direction * (before[None, :] - after)
        opt = np.maximum(gain, cont)
        grids[i - 1] = ((gain > 0) & (gain >= cont) & (mass > 0)).T
        lows[i - 1] = -prev
        future = (mass * opt).sum(axis=0)
    return FloatGreedy(game, float(future[0]), lows, hints, grids)
