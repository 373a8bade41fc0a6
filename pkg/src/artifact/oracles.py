"""Trusted functionalities of the hybrid model: Coin, Defense and the two-party helpers.

Each function is a pure function of its inputs and the random generator it is
handed.  The engine decides *when* a call is materialised; delivery order and
aborts are the engine's business, not the oracle's.

Two numeric modes are supported.  ``"float"`` shares probabilities in the
64-fraction-bit encoding and computes with floats.  ``"exact"`` keeps every
probability rational, shares the exact encoding and represents coin biases by
:class:`~artifact.numerics.EpsBias`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import sharing
from .numerics import (
    DeltaValue,
    WeightSchedule,
    alpha_factor,
    binom_tail,
    hyp_tail,
    sbias,
    sign,
    tp,
)

MODES = ("float", "exact")


def coin_width(m: int) -> int:
    """Two's-complement width for a round coin in ``[-m², m²]``."""
    return tp(m * m) + 1


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"numeric mode must be one of {MODES}, got {mode!r}")


def bias_for(sched: WeightSchedule, delta, mode: str):
    """Coin bias ``sbias(ms[1], δ)`` in the representation of ``mode``."""
    d = DeltaValue.of(delta).exact if not isinstance(delta, float) else delta
    if mode == "exact":
        return sbias(sched.total, d, exact=True)
    return sbias(sched.total, float(d))


def _prob_one(eps) -> float:
    value = getattr(eps, "value", eps)
    return (1.0 + float(value)) / 2.0


def _as_prob(delta, mode: str):
    """Protocol-side probability: exact rational or float."""
    if isinstance(delta, DeltaValue):
        return delta.exact if mode == "exact" else float(delta.exact)
    return Fraction(delta) if mode == "exact" else float(delta)


def bernoulli(rng: np.random.Generator, prob) -> int:
    """One draw of Ber(prob) over {0, 1}; exact comparison for rationals."""
    u = rng.random()
    if isinstance(prob, Fraction):
        return int(Fraction(u) < prob)
    return int(u < prob)


def encode_prob(delta, mode: str) -> sharing.EncodedValue:
    return sharing.encode_rational(delta) if mode == "exact" else sharing.encode_delta(delta)


# ---------------------------------------------------------------------------
# Coin
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoinOutput:
    shares: sharing.ShareSet
    coin: int
    delta: object  # δ_i in the mode's number type (never shown to parties)


def coin_oracle(
    sched: WeightSchedule,
    r: int,
    delta,
    coins: Sequence[int],
    rng: np.random.Generator,
    *,
    mode: str = "float",
    eps=None,
) -> CoinOutput:
    """Draw round ``i = len(coins)+1``'s coin and the conditional output probability.

    ``eps`` may be passed when the caller already holds ``sbias(ms[1], δ)``;
    it must be the value this function would compute.
    """
    _check_mode(mode)
    i = len(coins) + 1
    if i > sched.m:
        raise ValueError(f"round {i} beyond m={sched.m}")
    if eps is None:
        eps = bias_for(sched, delta, mode)
    n = sched.coins(i)
    c = 2 * int(rng.binomial(n, _prob_one(eps))) - n
    total = sum(coins) + c
    delta_i = binom_tail(sched.suffix(i + 1), eps, -total)
    shares = sharing.share_pair(c, delta_i, r, rng, width=coin_width(sched.m), exact=(mode == "exact"))
    return CoinOutput(shares, c, delta_i)


# ---------------------------------------------------------------------------
# Defense material
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HTInput:
    """One party's input bundle for the two-party protocol.

    ``coin_shares[i-1]`` is this party's share word of round ``i``'s coin;
    ``bank_shares`` are this party's shares of both banks; ``d`` its defense bit.
    """

    coin_shares: tuple[int, ...]
    bank_shares: tuple[int, int]
    d: int
    coin_width: int
    bank_len: int


@dataclass(frozen=True)
class DeltaShare:
    """One XOR share of a noisy probability handed to a party of a large subset."""

    word: int
    kind: str
    width: int
    layout: object = None


def reconstruct_delta(parts: Sequence[DeltaShare]) -> DeltaValue:
    first = parts[0]
    ss = sharing.ShareSet(first.kind, first.width, tuple(p.word for p in parts), first.layout)
    return sharing.reconstruct(ss)


@dataclass
class DefenseMaterial:
    subset: tuple[int, ...]
    payloads: dict
    digest: dict = field(default_factory=dict)
    delta: object = None  # the δ this call defended (hidden from parties)


def add_noise(sched: WeightSchedule, ell: int, k: int, delta, rng: np.random.Generator, *, mode: str = "float"):
    """Noisy version of δ: the chance a uniform ``ms[1]``-subset of an ε-bank has positive sum.

    The bank enters only through its weight, so the weight is drawn directly
    from its binomial law.  Returns ``(δ', weight, bank_size)``.
    """
    _check_mode(mode)
    if not 3 <= k <= ell:
        raise ValueError(f"noise needs 3 <= k <= ell, got k={k}, ell={ell}")
    size = alpha_factor(sched.m, ell, k).bank_size
    eps = bias_for(sched, delta, mode)
    w = 2 * int(rng.binomial(size, _prob_one(eps))) - size
    noisy = hyp_tail(size, w, sched.total, 1, exact=(mode == "exact"))
    return noisy, w, size


def _sample_bank(rng: np.random.Generator, size: int, p: float) -> np.ndarray:
    return np.where(rng.random(size) < p, 1, -1).astype(np.int8)


def _subset_sum(rng: np.random.Generator, bank: np.ndarray, k: int) -> tuple[int, np.ndarray]:
    idx = np.sort(rng.choice(len(bank), size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    return int(bank[idx].sum()), idx


def ht_defense_protocol(sched: WeightSchedule, delta, rng: np.random.Generator, *, mode: str = "float"):
    """Inputs for the two-party protocol, plus a digest of the drawn randomness."""
    _check_mode(mode)
    eps = bias_for(sched, delta, mode)
    p = _prob_one(eps)
    n1 = sched.total
    banks = [_sample_bank(rng, 2 * n1, p) for _ in range(2)]
    d = []
    sums = []
    for bank in banks:
        s, _ = _subset_sum(rng, bank, n1)
        sums.append(s)
        d.append(sign(s))
    coins = [2 * int(rng.binomial(n, p)) - n for n in sched.ml]
    width = coin_width(sched.m)
    coin_sets = [sharing.share(sharing.encode_signed(c, width), 2, rng) for c in coins]
    bank_sets = [sharing.share(sharing.encode_plusminus(b), 2, rng) for b in banks]
    inputs = tuple(
        HTInput(
            coin_shares=tuple(cs.shares[z] for cs in coin_sets),
            bank_shares=(bank_sets[0].shares[z], bank_sets[1].shares[z]),
            d=d[z],
            coin_width=width,
            bank_len=2 * n1,
        )
        for z in range(2)
    )
    digest = {
        "bank_weights": [int(b.sum()) for b in banks],
        "subset_sums": sums,
        "coins": coins,
    }
    return inputs, digest


def _reveal_bank(x: HTInput, y: HTInput, which: int) -> np.ndarray:
    word = x.bank_shares[which] ^ y.bank_shares[which]
    return sharing.decode(sharing.EncodedValue("bits", x.bank_len, word))


def reveal_coin(x: HTInput, y: HTInput, i: int) -> int:
    word = x.coin_shares[i - 1] ^ y.coin_shares[i - 1]
    return sharing.decode(sharing.EncodedValue("signed", x.coin_width, word))


def ht_defense_round(
    sched: WeightSchedule,
    coins: Sequence[int],
    first: HTInput,
    second: HTInput,
    rng: np.random.Generator,
):
    """Fresh defense bits for round ``i = len(coins)+1`` of the two-party protocol.

    Returns ``((d¹, d²), digest)``; the digest lists the sampled subsets.
    """
    i = len(coins) + 1
    if i > sched.m:
        raise ValueError(f"round {i} beyond m={sched.m}")
    if None in (first, second):
        raise sharing.IncompleteShares("both bundles are needed")
    prefix = sum(coins) + reveal_coin(first, second, i)
    k = sched.suffix(i + 1)
    out = []
    subsets = []
    for which in range(2):
        bank = _reveal_bank(first, second, which)
        s, idx = _subset_sum(rng, bank, k)
        out.append(sign(prefix + s))
        subsets.append(idx.tolist())
    return tuple(out), {"subsets": subsets, "prefix": prefix}


def defense_tilde(
    sched: WeightSchedule,
    ell: int,
    subset: Sequence[int],
    delta,
    rng: np.random.Generator,
    *,
    mode: str = "float",
) -> DefenseMaterial:
    """Recovery material for the parties of ``subset`` defending δ."""
    _check_mode(mode)
    Z = tuple(subset)
    if not Z:
        raise ValueError("defense needs a non-empty subset")
    prob = _as_prob(delta, mode)
    if len(Z) == 1:
        bit = bernoulli(rng, prob)
        return DefenseMaterial(Z, {Z[0]: bit}, {"bit": bit}, prob)
    if len(Z) == 2:
        inputs, digest = ht_defense_protocol(sched, prob, rng, mode=mode)
        return DefenseMaterial(Z, {Z[0]: inputs[0], Z[1]: inputs[1]}, digest, prob)
    noisy, w, size = add_noise(sched, ell, len(Z), prob, rng, mode=mode)
    ss = sharing.share(encode_prob(noisy, mode), len(Z), rng)
    payloads = {z: DeltaShare(ss.shares[j], ss.kind, ss.width, ss.layout) for j, z in enumerate(Z)}
    return DefenseMaterial(Z, payloads, {"bank_weight": w, "bank_size": size}, prob)


def defense_oracle(
    sched: WeightSchedule,
    r: int,
    ell: int,
    subset: Sequence[int],
    delta_shares: Sequence,
    rng: np.random.Generator,
    *,
    mode: str = "float",
) -> DefenseMaterial:
    """Reconstruct δ from the parties' shares and delegate to :func:`defense_tilde`."""
    if isinstance(delta_shares, sharing.ShareSet):
        value = sharing.reconstruct(delta_shares)
    elif any(s is None for s in delta_shares):
        raise sharing.IncompleteShares("every party must supply its share of δ")
    else:
        value = reconstruct_delta(delta_shares)
    if isinstance(value, tuple):  # a (coin, δ) bundle from the Coin oracle
        value = value[1]
    return defense_tilde(sched, ell, subset, value, rng, mode=mode)


# ---------------------------------------------------------------------------
# Vectorised recovery sampling (used by the recovery-expectation checks)
# ---------------------------------------------------------------------------


def sample_recoveries(m: int, ell: int, k: int, delta: float, n: int, rng: np.random.Generator):
    """``n`` independent defense calls for a ``k``-subset, each followed by an honest recovery.

    Returns ``(outputs, observation)`` where ``observation`` is one bit of the
    material held by a proper sub-coalition (``None`` for singletons): the
    corrupted party's defense bit for pairs, and the low bit of one share for
    larger subsets.  The draws follow the same laws as :func:`defense_tilde`
    followed by the honest recovery protocol, vectorised over trials.
    """
    from .numerics import weight_schedule

    sched = weight_schedule(m)
    n1 = sched.total
    if k == 1:
        return (rng.random(n) < delta).astype(np.int8), None
    if k == 2:
        p = _prob_one(sbias(n1, delta))
        w1 = 2 * rng.binomial(2 * n1, p, size=n) - 2 * n1
        good = (2 * n1 + w1) // 2
        picked = rng.hypergeometric(good, 2 * n1 - good, n1)
        d1 = (2 * picked - n1 >= 0).astype(np.int8)
        total = 2 * rng.binomial(n1, p, size=n) - n1
        return (total >= 0).astype(np.int8), d1
    size = alpha_factor(m, ell, k).bank_size
    p = _prob_one(sbias(n1, delta))
    w = 2 * rng.binomial(size, p, size=n) - size
    outputs = np.empty(n, dtype=np.int8)
    observation = np.empty(n, dtype=np.int8)
    for weight in np.unique(w):
        sel = np.flatnonzero(w == weight)
        noisy = hyp_tail(size, int(weight), n1, 1, exact=False)
        noisy = float(DeltaValue.of(noisy).truncated())
        q = _prob_one(sbias(n1, noisy))
        total = 2 * rng.binomial(n1, q, size=len(sel)) - n1
        outputs[sel] = total >= 0
        word = sharing.encode_delta(noisy)
        for j in sel:
            observation[j] = sharing.share(word, k, rng).shares[0] & 1
    return outputs, observation
