"""Independent brute-force oracles for small online binomial games.

Nothing here calls into :mod:`artifact.games` beyond reading the game
description.  Coin laws come from ``math.comb`` and hint laws are recomputed
from first principles, so agreement with the dynamic program is evidence.

Two routes are provided:

* :func:`history_value` walks every history of coin sums and hints and takes
  the best stopping decision at each node.  The player may use the whole
  history, so this bounds the best stateless strategy from above.
* :func:`enumerate_stateless` lists every deterministic stateless strategy
  restricted to positive-gain states and scores each one by a tree walk.
  Restricting to positive gains loses nothing: working backwards from the last
  round, dropping an abort whose gain is not positive leaves a continuation
  whose aborts all pay a positive amount, which is worth at least zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .games import ALL_INFO, HYPERGEOMETRIC, Game

ENUMERATION_LIMIT = 16


class UnsupportedGame(ValueError):
    """The brute-force oracle only covers all-information and hypergeometric hints."""


@dataclass(frozen=True)
class _Rules:
    coins: tuple  # coins per round, 1-based via index i-1
    eps: Fraction
    kind: str
    bank: int  # hypergeometric bank weight
    bank_size: int

    @property
    def m(self) -> int:
        return len(self.coins)

    def remaining(self, i: int) -> int:
        """Coins tossed in rounds ``i..m``."""
        return sum(self.coins[i - 1 :])


def _rules(game: Game) -> _Rules:
    if game.hint.kind not in (ALL_INFO, HYPERGEOMETRIC):
        raise UnsupportedGame(game.hint.kind)
    if not isinstance(game.eps, (int, Fraction)):
        raise UnsupportedGame("brute force needs a rational bias")
    m = game.m
    coins = tuple((m + 1 - i) ** 2 for i in range(1, m + 1))
    bank = game.hint.param if game.hint.kind == HYPERGEOMETRIC else 0
    return _Rules(coins, Fraction(game.eps), game.hint.kind, bank, 2 * sum(coins))


@lru_cache(maxsize=None)
def _coin_law(n: int, eps: Fraction) -> tuple:
    """``((sum, prob), ...)`` for ``n`` fair-ish ``±1`` coins with ``Pr[+1] = (1 + ε)/2``."""
    up = (1 + eps) / 2
    out = []
    for ones in range(n + 1):
        pr = math.comb(n, ones) * up**ones * (1 - up) ** (n - ones)
        if pr:
            out.append((2 * ones - n, pr))
    return tuple(out)


def _nonneg(n: int, eps: Fraction, offset: int) -> Fraction:
    """``Pr[offset + (sum of n coins) ≥ 0]``."""
    return sum((pr for s, pr in _coin_law(n, eps) if offset + s >= 0), Fraction(0))


@lru_cache(maxsize=None)
def _subset_nonneg(size: int, weight: int, draw: int, need: int) -> Fraction:
    """Chance a uniform ``draw``-subset of a ``±1`` vector has ``need + (subset weight) ≥ 0``."""
    plus = (size + weight) // 2
    minus = size - plus
    good = 0
    for j in range(draw + 1):
        if j <= plus and draw - j <= minus and need + 2 * j - draw >= 0:
            good += math.comb(plus, j) * math.comb(minus, draw - j)
    return Fraction(good, math.comb(size, draw))


def _hint_law(rules: _Rules, i: int, offset: int, coin: int) -> tuple:
    """``((h, Pr[h | offset, coin]), ...)`` for the hint handed out before round ``i``'s coins."""
    if rules.kind == ALL_INFO:
        return ((coin, Fraction(1)),)
    q = _subset_nonneg(rules.bank_size, rules.bank, rules.remaining(i + 1), offset + coin)
    return tuple((h, w) for h, w in ((1, q), (-1, 1 - q)) if w)


def _node(rules: _Rules, i: int, b: int):
    """Split round ``i`` at offset ``b`` by hint: ``{h: (Pr[h], [(c, Pr[c | h])])}``."""
    joint: dict = {}
    for c, pc in _coin_law(rules.coins[i - 1], rules.eps):
        for h, ph in _hint_law(rules, i, b, c):
            joint.setdefault(h, []).append((c, pc * ph))
    out = {}
    for h, pairs in joint.items():
        mass = sum(w for _, w in pairs)
        out[h] = (mass, [(c, w / mass) for c, w in pairs])
    return out


def _gain(rules: _Rules, i: int, b: int, post) -> Fraction:
    before = _nonneg(rules.remaining(i), rules.eps, b)
    after = sum(pc * _nonneg(rules.remaining(i + 1), rules.eps, b + c) for c, pc in post)
    return before - after


def history_value(game: Game) -> Fraction:
    """Best expected gain over all history-dependent single-stop rules, by exhaustive tree walk."""
    rules = _rules(game)

    def walk(i: int, b: int, history: tuple) -> Fraction:
        if i > rules.m:
            return Fraction(0)
        total = Fraction(0)
        for h, (ph, post) in _node(rules, i, b).items():
            stop = _gain(rules, i, b, post)
            go = sum(pc * walk(i + 1, b + c, history + ((h, c),)) for c, pc in post)
            total += ph * max(stop, go)
        return total

    return walk(1, 0, ())


def stateless_states(game: Game) -> list:
    """Every reachable non-final ``(i, b, h)`` with its stopping gain, in round order."""
    rules = _rules(game)
    out = []
    frontier = {0}
    for i in range(1, rules.m + 1):
        nxt = set()
        for b in sorted(frontier):
            for h, (_, post) in sorted(_node(rules, i, b).items()):
                out.append(((i, b, h), _gain(rules, i, b, post)))
                nxt.update(b + c for c, _ in post)
        frontier = nxt
    return out


def stateless_value(game: Game, aborts: frozenset) -> Fraction:
    """Expected gain of the deterministic stateless rule that stops exactly at ``aborts``."""
    rules = _rules(game)

    @lru_cache(maxsize=None)
    def walk(i: int, b: int) -> Fraction:
        if i > rules.m:
            return Fraction(0)
        total = Fraction(0)
        for h, (ph, post) in _node(rules, i, b).items():
            if (i, b, h) in aborts:
                total += ph * _gain(rules, i, b, post)
            else:
                total += ph * sum(pc * walk(i + 1, b + c) for c, pc in post)
        return total

    return walk(1, 0)


@dataclass
class Enumeration:
    best: Fraction
    argmax: frozenset
    candidates: int  # positive-gain states
    strategies: int  # strategies scored


def enumerate_stateless(game: Game, limit: int = ENUMERATION_LIMIT) -> Enumeration:
    """Score all ``2^k`` deterministic stateless rules over the ``k`` positive-gain states."""
    positive = [key for key, g in stateless_states(game) if g > 0]
    if len(positive) > limit:
        raise ValueError(f"{len(positive)} positive-gain states exceed the enumeration limit {limit}")
    best, arg, count = Fraction(0), frozenset(), 0
    for r in range(len(positive) + 1):
        for combo in itertools.combinations(positive, r):
            chosen = frozenset(combo)
            val = stateless_value(game, chosen)
            count += 1
            if val > best:
                best, arg = val, chosen
    return Enumeration(best, arg, len(positive), count)
