"""Round-by-round execution of the outer protocol, the r-party inner protocol and
the two-party protocol, with fail-stop aborts and recursive recovery.

Randomness
    Every execution owns a root :class:`numpy.random.SeedSequence`.  Eager draws
    (coins, sharing of public values) use the root stream in program order.
    Every defense call gets its own child stream keyed by a call counter, so its
    material is the same whether it is drawn when delivered, when a survivor
    needs it, or never.  Honest runs therefore never pay for recovery material
    nobody reads.

Adversaries
    Any object with ``corrupted`` (party ids), ``decide(point)`` returning an
    object with an ``abort`` set, and optionally ``observe(point)``.  ``None``
    means no corruption.  Decision points occur after each oracle delivery and
    each broadcast; corrupted parties always receive before honest ones.

View values
    :meth:`DecisionPoint.view_value` returns the expected output of the honest
    continuation given everything the corrupted parties have seen, with or
    without a set of parties aborting at this point.  It is available for
    ``t ≤ 3``; exact mode makes the numbers rational.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from . import sharing
from .numerics import (
    FIXED_ONE,
    DeltaValue,
    alpha_factor,
    binom_pmf,
    binom_pmf_vector,
    binom_tail,
    hyp_tail,
    sign,
    weight_schedule,
)
from .oracles import (
    HTInput,
    _as_prob,
    bernoulli,
    bias_for,
    coin_oracle,
    coin_width,
    defense_tilde,
    encode_prob,
    ht_defense_round,
    reconstruct_delta,
    reveal_coin,
)

OUTER, INNER, HT = "outer", "inner", "ht"


class EngineInvariantError(RuntimeError):
    """The execution reached a state the protocol rules out."""


class AdversaryError(ValueError):
    """The adversary asked for something the fail-stop model forbids."""


@dataclass(frozen=True)
class ProtocolConfig:
    m: int
    t: int
    ell: int | None = None
    mode: str = "float"
    seed: int = 0
    record: bool = False
    analysis: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.t < 2:
            raise ValueError("t must be at least 2")
        if self.ell is not None and self.ell < self.t:
            raise ValueError("ell must be at least t")
        if self.mode not in ("float", "exact"):
            raise ValueError(f"unknown numeric mode {self.mode!r}")

    @property
    def quality(self) -> int:
        return self.ell if self.ell is not None else self.t


@dataclass
class Transcript:
    header: dict
    events: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    rounds: int = 0
    max_depth: int = 0
    gains: list = field(default_factory=list)

    @property
    def aborts(self) -> list:
        return [e for e in self.events if e["ev"] == "abort"]

    def output_bit(self, honest: Iterable[int]) -> int:
        bits = {self.outputs[p] for p in honest if p in self.outputs}
        if len(bits) != 1:
            raise EngineInvariantError(f"honest outputs disagree or are missing: {self.outputs}")
        return bits.pop()

    def to_jsonl(self) -> str:
        lines = [json.dumps({"ev": "header", **self.header}, sort_keys=True)]
        for e in self.events:
            lines.append(json.dumps(_jsonable(e), sort_keys=True))
        lines.append(json.dumps({"ev": "outputs", "outputs": {str(k): v for k, v in sorted(self.outputs.items())}}, sort_keys=True))
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, DeltaValue):
        return str(obj.exact)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, HTInput):
        return {"d": obj.d}
    if isinstance(obj, _Deferred):
        return _jsonable(obj.resolve())
    return obj


class _Deferred:
    """A transcript field filled in when the transcript is serialised."""

    def __init__(self, fn: Callable[[], object]):
        self._fn = fn

    def resolve(self):
        return self._fn()


def _subsets(members: tuple[int, ...], proper: bool) -> list[tuple[int, ...]]:
    top = len(members) - 1 if proper else len(members)
    return [c for k in range(1, top + 1) for c in itertools.combinations(members, k)]


# ---------------------------------------------------------------------------
# Lazy oracle calls
# ---------------------------------------------------------------------------


class DefenseBatch:
    """One batched Defense invocation: a δ and the subsets it is defended for."""

    __slots__ = ("ex", "prob", "subsets", "key", "_mat", "label")

    def __init__(self, ex: "Execution", prob, subsets, label: str):
        self.ex = ex
        self.prob = prob
        self.subsets = subsets
        self.key = ex._next_key()
        self._mat = {}
        self.label = label

    def material(self, Z: tuple[int, ...]):
        mat = self._mat.get(Z)
        if mat is None:
            if Z not in self.subsets:
                raise EngineInvariantError(f"no defense material for subset {Z} in {self.label}")
            mask = sum(1 << (p - 1) for p in Z)
            rng = self.ex._stream(self.key, mask)
            mat = defense_tilde(self.ex.sched, self.ex.ell, Z, self.prob, rng, mode=self.ex.mode)
            self._mat[Z] = mat
        return mat

    def payload(self, Z: tuple[int, ...], party: int):
        return self.material(Z).payloads[party]

    def digest(self) -> dict:
        return {"-".join(map(str, Z)): self.material(Z).digest for Z in self.subsets}


class HTRoundCall:
    """One lazily drawn round of fresh two-party defense bits."""

    __slots__ = ("ex", "coins", "pair", "inputs", "key", "_bits", "_digest")

    def __init__(self, ex: "Execution", coins: tuple[int, ...], pair, inputs):
        self.ex = ex
        self.coins = coins
        self.pair = pair
        self.inputs = inputs
        self.key = ex._next_key()
        self._bits = None
        self._digest = None

    def bits(self) -> dict[int, int]:
        if self._bits is None:
            rng = self.ex._stream(self.key, 0)
            d, self._digest = ht_defense_round(self.ex.sched, self.coins, self.inputs[0], self.inputs[1], rng)
            self._bits = {self.pair[0]: d[0], self.pair[1]: d[1]}
        return self._bits

    @property
    def prefix(self) -> int:
        return sum(self.coins) + reveal_coin(self.inputs[0], self.inputs[1], len(self.coins) + 1)

    def digest(self) -> dict:
        self.bits()
        return {"d": [self._bits[p] for p in self.pair], **self._digest}


# ---------------------------------------------------------------------------
# Decision points
# ---------------------------------------------------------------------------


@dataclass
class DecisionPoint:
    """What the adversary may act on at one sanctioned decision point."""

    protocol: str
    step: str
    round: int
    depth: int
    members: tuple[int, ...]
    corrupted: tuple[int, ...]
    m: int = 0
    coins: tuple[int, ...] = ()
    delta: object = None
    batch: DefenseBatch | None = None
    ht_call: HTRoundCall | None = None
    ht_inputs: dict | None = None
    shares_seen: dict | None = None
    _value: Callable | None = field(default=None, repr=False)

    @property
    def prefix_sum(self) -> int:
        return sum(self.coins)

    def deliveries(self) -> dict:
        """Payloads handed to corrupted parties at this point, keyed by subset."""
        out = {}
        if self.batch is not None:
            corr = set(self.corrupted)
            for Z in self.batch.subsets:
                mine = [p for p in Z if p in corr]
                if mine:
                    mat = self.batch.material(Z)
                    out[Z] = {p: mat.payloads[p] for p in mine}
        elif self.ht_call is not None:
            bits = self.ht_call.bits()
            out[self.ht_call.pair] = {p: bits[p] for p in self.corrupted}
        return out

    def view_value(self, aborting: Iterable[int] = ()):
        """Expected honest output given the corrupted view, if ``aborting`` abort now."""
        if self._value is None:
            raise ValueError("view values are only available for t ≤ 3")
        return self._value(frozenset(aborting))


def honest_value(point: DecisionPoint, aborting: Iterable[int] = ()):
    """val of the transcript prefix ending at ``point`` (with ``aborting`` removed or applied)."""
    return point.view_value(aborting)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


class Execution:
    def __init__(self, cfg: ProtocolConfig, adversary=None, seed=None):
        self.cfg = cfg
        self.sched = weight_schedule(cfg.m)
        self.mode = cfg.mode
        self.exact = cfg.mode == "exact"
        self.ell = cfg.quality
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(cfg.seed if seed is None else seed)
        self._entropy = ss.entropy
        self._spawn = tuple(ss.spawn_key)
        self.rng = np.random.default_rng(ss)
        self._keys = itertools.count()
        self.adv = adversary
        self.corrupted = frozenset(getattr(adversary, "corrupted", ())) if adversary is not None else frozenset()
        if len(self.corrupted) >= cfg.t:
            raise AdversaryError("the adversary must leave at least one honest party")
        if not self.corrupted <= set(range(1, cfg.t + 1)):
            raise AdversaryError("corrupted ids must be parties 1..t")
        self.passive = adversary is None or not self.corrupted or getattr(adversary, "passive", False)
        self.alive = set(range(1, cfg.t + 1))
        self.width = coin_width(cfg.m)
        self.analysis = cfg.analysis and cfg.t <= 3
        seed_repr = int(cfg.seed) if seed is None else repr(seed if not isinstance(seed, np.random.SeedSequence) else (ss.entropy, ss.spawn_key))
        self.tr = Transcript({"config": asdict(cfg), "seed": seed_repr, "adversary": type(adversary).__name__ if adversary else "none"})
        self.half = DeltaValue(Fraction(1, 2))

    # -- plumbing ---------------------------------------------------------

    def _next_key(self) -> int:
        return next(self._keys)

    def _stream(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self._entropy, spawn_key=self._spawn + (1,) + key))

    def _tick(self, depth: int) -> None:
        self.tr.rounds += 1
        if depth > self.tr.max_depth:
            self.tr.max_depth = depth

    def _event(self, **kw) -> None:
        if self.cfg.record:
            self.tr.events.append(kw)

    def _output(self, party: int, bit: int, depth: int) -> None:
        if party in self.tr.outputs:
            raise EngineInvariantError(f"party {party} output twice")
        self.tr.outputs[party] = int(bit)
        self._event(ev="output", party=party, bit=int(bit), depth=depth)

    def _num(self, x):
        return Fraction(x) if self.exact else float(x)

    def _pair_prob(self, shares: sharing.ShareSet):
        """δ_i out of reconstructed (c_i, δ_i) shares, in the protocol's number type."""
        if self.exact:
            return _as_prob(sharing.reconstruct(shares)[1], self.mode)
        word = 0
        for w in shares.shares:
            word ^= w
        return float(word >> self.width) / FIXED_ONE

    def _wire(self, x):
        """The value a probability takes after a trip through the sharing layer."""
        if self.exact:
            return Fraction(x)
        return float(DeltaValue.of(float(x)).truncated())

    def _decide(self, protocol, step, rnd, depth, members, value=None, **info) -> frozenset:
        if self.passive:
            return frozenset()
        corr = tuple(p for p in members if p in self.corrupted and p in self.alive)
        if not corr:
            return frozenset()
        point = DecisionPoint(protocol, step, rnd, depth, members, corr, self.cfg.m, _value=value if self.analysis else None, **info)
        observe = getattr(self.adv, "observe", None)
        if observe is not None:
            observe(point)
        decision = self.adv.decide(point)
        abort = frozenset(getattr(decision, "abort", decision) or ())
        if not abort:
            return abort
        if not abort <= set(corr):
            raise AdversaryError(f"cannot abort {sorted(abort - set(corr))}: not alive corrupted members")
        if self.analysis:
            gain = point.view_value(abort) - point.view_value()
            self.tr.gains.append({"protocol": protocol, "step": step, "round": rnd, "depth": depth, "gain": gain})
        for p in sorted(abort):
            self.alive.discard(p)
            self.tr.events.append({"ev": "abort", "party": p, "protocol": protocol, "step": step, "round": rnd, "depth": depth})
        return abort

    # -- protocols --------------------------------------------------------

    def run(self) -> Transcript:
        members = tuple(range(1, self.cfg.t + 1))
        self._outer(members, 0)
        return self._finish()

    def _finish(self) -> Transcript:
        missing = [p for p in self.alive if p not in self.tr.outputs]
        if missing:
            raise EngineInvariantError(f"alive parties without output: {missing}")
        honest = [p for p in self.alive if p not in self.corrupted]
        self.tr.output_bit(honest)
        bound = 5 * self.cfg.t * (self.cfg.m + 1)
        if self.tr.rounds > bound:
            raise EngineInvariantError(f"{self.tr.rounds} rounds exceed the bound {bound}")
        if self.tr.max_depth > self.cfg.t - 1:
            raise EngineInvariantError("recursion deeper than t-1")
        return self.tr

    def _outer(self, members: tuple[int, ...], depth: int) -> None:
        self._tick(depth)
        ss = sharing.share(encode_prob(self.half, self.mode), len(members), self.rng)
        delta = sharing.reconstruct(ss)
        batch = DefenseBatch(self, _as_prob(delta, self.mode), _subsets(members, proper=False), "outer")
        self._event(ev="defense", protocol=OUTER, step="defense", round=0, depth=depth, members=members,
                    digest=_Deferred(batch.digest) if self.cfg.record else None)
        value = self._outer_values(members) if self.analysis else None
        abort = self._decide(OUTER, "defense", 0, depth, members, value=value, batch=batch)
        if abort:
            survivors = tuple(p for p in members if p in self.alive)
            self._event(ev="recover", protocol=OUTER, depth=depth, survivors=survivors)
            if len(survivors) == 1:
                self._output(survivors[0], bernoulli(self.rng, 0.5), depth)
            else:
                self._outer(survivors, depth + 1)
            return
        self._inner(members, batch, depth)

    def run_inner(self, delta) -> Transcript:
        """Start directly at the t-party inner protocol on a known δ (no outer step).

        Step-1 aborts then recover from material defending δ itself.
        """
        members = tuple(range(1, self.cfg.t + 1))
        if len(members) < 3:
            raise ValueError("the inner protocol needs at least three parties")
        prob = _as_prob(DeltaValue.of(delta), self.mode)
        batch = DefenseBatch(self, prob, _subsets(members, proper=False), "given")
        self._inner(members, batch, 0, prob)
        return self._finish()

    def _inner(self, members: tuple[int, ...], batch_in: DefenseBatch, depth: int, given=None) -> None:
        r = len(members)
        if r == 2:
            mat = batch_in.material(members)
            self._ht(members, mat.payloads, batch_in.prob, depth)
            return
        m = self.cfg.m
        mode = self.mode
        # step 1: defend the (still hidden) δ of this level for every proper subset
        self._tick(depth)
        if given is None:
            prob = _as_prob(reconstruct_delta([batch_in.payload(members, p) for p in members]), mode)
        else:
            prob = given
        b1 = DefenseBatch(self, prob, _subsets(members, proper=True), f"inner-{depth}-1")
        self._event(ev="defense", protocol=INNER, step="1", round=0, depth=depth, members=members,
                    digest=_Deferred(b1.digest) if self.cfg.record else None)
        abort = self._decide(INNER, "1", 0, depth, members, batch=b1,
                             value=self._step1_values(members, batch_in, b1) if self.analysis else None)
        if abort:
            return self._recover(members, batch_in, depth)
        # step 2: reveal δ
        self._tick(depth)
        self._event(ev="broadcast", protocol=INNER, step="2", round=0, depth=depth, delta=prob)
        abort = self._decide(INNER, "2", 0, depth, members, delta=prob,
                             value=self._reveal_values(members, prob, b1) if self.analysis else None)
        if abort:
            return self._recover(members, b1, depth)
        eps = bias_for(self.sched, prob, mode)
        last = b1
        coins: list[int] = []
        mask = (1 << self.width) - 1
        for i in range(1, m + 1):
            # 3(a): shares of (c_i, δ_i)
            self._tick(depth)
            out = coin_oracle(self.sched, r, prob, coins, self.rng, mode=mode, eps=eps)
            self._event(ev="coin", protocol=INNER, step="3a", round=i, depth=depth)
            abort = self._decide(INNER, "3a", i, depth, members, coins=tuple(coins), delta=prob,
                                 value=self._coin_values(members, eps, coins, last, i) if self.analysis else None)
            if abort:
                return self._recover(members, last, depth)
            # 3(b): defend δ_i
            self._tick(depth)
            bi = DefenseBatch(self, self._pair_prob(out.shares), _subsets(members, proper=True), f"inner-{depth}-3b-{i}")
            self._event(ev="defense", protocol=INNER, step="3b", round=i, depth=depth, members=members,
                        digest=_Deferred(bi.digest) if self.cfg.record else None)
            abort = self._decide(INNER, "3b", i, depth, members, coins=tuple(coins), delta=prob, batch=bi,
                                 value=self._defend_values(members, eps, coins, last, bi, i) if self.analysis else None)
            if abort:
                return self._recover(members, last, depth)
            last = bi
            # 3(c): reveal c_i
            self._tick(depth)
            word = 0
            for w in out.shares.shares:
                word ^= w & mask
            c = sharing.decode(sharing.EncodedValue("signed", self.width, word))
            self._event(ev="broadcast", protocol=INNER, step="3c", round=i, depth=depth, coin=c)
            abort = self._decide(INNER, "3c", i, depth, members, coins=tuple(coins) + (c,), delta=prob,
                                 value=self._reveal_coin_values(members, eps, coins, c, bi, i) if self.analysis else None)
            if abort:
                return self._recover(members, last, depth)
            coins.append(c)
        bit = sign(sum(coins))
        for p in members:
            if p in self.alive:
                self._output(p, bit, depth)

    def _recover(self, members, batch: DefenseBatch, depth: int) -> None:
        survivors = tuple(p for p in members if p in self.alive)
        self._event(ev="recover", protocol=INNER, depth=depth, survivors=survivors, material=batch.label)
        if len(survivors) == 1:
            p = survivors[0]
            self._output(p, batch.payload((p,), p), depth)
        elif len(survivors) == 2:
            self._ht(survivors, batch.material(survivors).payloads, batch.prob, depth + 1)
        else:
            self._inner(survivors, batch, depth + 1)

    def _ht(self, pair: tuple[int, ...], payloads: dict, prob_h, depth: int) -> None:
        x, y = pair
        inputs = (payloads[x], payloads[y])
        coins: list[int] = []
        current: HTRoundCall | None = None
        history: list[HTRoundCall] = []

        def d_of(p: int) -> int:
            return payloads[p].d if current is None else current.bits()[p]

        for i in range(1, self.cfg.m + 1):
            self._tick(depth)
            call = HTRoundCall(self, tuple(coins), pair, inputs)
            self._event(ev="ht_defense", protocol=HT, step="1a", round=i, depth=depth,
                        digest=_Deferred(call.digest) if self.cfg.record else None)
            abort = self._decide(HT, "1a", i, depth, pair, coins=tuple(coins), ht_call=call, ht_inputs=payloads,
                                 value=self._ht_round_values(pair, payloads, prob_h, history, call, i) if self.analysis else None)
            if abort:
                return self._ht_finish(pair, d_of, depth)
            current = call
            history.append(call)
            self._tick(depth)
            c = reveal_coin(inputs[0], inputs[1], i)
            self._event(ev="broadcast", protocol=HT, step="1b", round=i, depth=depth, coin=c)
            abort = self._decide(HT, "1b", i, depth, pair, coins=tuple(coins) + (c,), ht_inputs=payloads,
                                 value=self._ht_exchange_values(prob_h, sum(coins) + c, i) if self.analysis else None)
            if abort:
                return self._ht_finish(pair, d_of, depth)
            coins.append(c)
        bit = sign(sum(coins))
        for p in pair:
            if p in self.alive:
                self._output(p, bit, depth)

    def _ht_finish(self, pair, d_of, depth) -> None:
        for p in pair:
            if p in self.alive:
                self._event(ev="recover", protocol=HT, depth=depth, survivors=(p,))
                self._output(p, d_of(p), depth)

    # -- view values (t ≤ 3) ---------------------------------------------

    def _fresh(self, prob):
        """Honest value of a protocol started from δ: by construction of sbias, δ."""
        return binom_tail(self.sched.total, bias_for(self.sched, prob, self.mode), 0)

    def _recovery_value(self, survivors, batch: DefenseBatch):
        if len(survivors) == 1:
            return self._num(batch.prob)
        if len(survivors) == 2:
            return self._fresh(batch.prob)
        raise ValueError("view values cover recoveries by at most two parties")

    def _noise_value(self, k: int):
        """Expected δ' of a fresh outer step with k ≥ 3 parties."""
        n1 = self.sched.total
        size = alpha_factor(self.cfg.m, self.ell, k).bank_size
        eps = bias_for(self.sched, self._num(Fraction(1, 2)), self.mode)
        sums, probs = binom_pmf_vector(size, eps)
        return sum(pr * self._wire(hyp_tail(size, w, n1, 1, exact=self.exact)) for w, pr in zip(sums, probs) if pr)

    def _outer_values(self, members):
        def fresh_outer(group):
            if len(group) == 1:
                return self._num(Fraction(1, 2))
            if len(group) == 2:
                return self._fresh(self._num(Fraction(1, 2)))
            return self._noise_value(len(group))

        def value(aborting):
            group = tuple(p for p in members if p not in aborting)
            return fresh_outer(group)

        return value

    def _posterior_mean(self, candidates):
        """``Σ w·x / Σ w`` over ``(weight, x)`` pairs; weights may be logs in float mode."""
        if self.exact:
            num = sum(w * x for w, x in candidates)
            den = sum(w for w, _ in candidates)
            return num / den
        logs = [lw for lw, _ in candidates]
        top = max(logs)
        ws = [math.exp(lw - top) for lw in logs]
        return sum(w * x for w, (_, x) in zip(ws, candidates)) / sum(ws)

    def _weight(self, factors):
        if self.exact:
            out = Fraction(1)
            for f in factors:
                out *= f
            return out
        total = 0.0
        for f in factors:
            if f <= 0:
                return -math.inf
            total += math.log(f)
        return total

    def _batch_likelihood(self, batch: DefenseBatch, corr, prob) -> list:
        """Factors of Pr[corrupted deliveries of ``batch`` | the defended value is ``prob``]."""
        factors = []
        n1 = self.sched.total
        for Z in batch.subsets:
            mine = [p for p in Z if p in corr]
            if not mine:
                continue
            mat = batch.material(Z)
            if len(Z) == 1:
                factors.append(prob if mat.payloads[Z[0]] else 1 - prob)
                continue
            if len(Z) > 2:
                if len(mine) == len(Z):
                    raise ValueError("fully corrupted noisy subsets are outside the view-value model")
                continue  # a proper subset of XOR shares is independent of δ'
            eps = bias_for(self.sched, prob, self.mode)
            if len(mine) == 2:
                a, b = (mat.payloads[p] for p in Z)
                pr = (1 + self._num(getattr(eps, "value", eps))) / 2
                for i in range(1, self.cfg.m + 1):
                    factors.append(binom_pmf(self.sched.coins(i), eps, reveal_coin(a, b, i)))
                for which in range(2):
                    word = a.bank_shares[which] ^ b.bank_shares[which]
                    ones = bin(word).count("1")
                    zeros = a.bank_len - ones
                    factors.append(pr**ones * (1 - pr) ** zeros)
            else:
                marg = binom_tail(n1, eps, 0)
                factors.append(marg if mat.payloads[mine[0]].d else 1 - marg)
        return factors

    def _step1_values(self, members, batch_in: DefenseBatch, b1: DefenseBatch):
        corr = tuple(p for p in members if p in self.corrupted and p in self.alive)

        def value(aborting):
            if aborting:
                return self._recovery_value(tuple(p for p in members if p not in aborting), batch_in)
            n1 = self.sched.total
            size = alpha_factor(self.cfg.m, self.ell, len(members)).bank_size
            eps = bias_for(self.sched, batch_in.prob, self.mode)
            sums, probs = binom_pmf_vector(size, eps)
            cands = []
            for w, pr in zip(sums, probs):
                if not pr:
                    continue
                x = self._wire(hyp_tail(size, w, n1, 1, exact=self.exact))
                cands.append((self._weight([pr] + self._batch_likelihood(b1, corr, x)), self._fresh(x)))
            return self._posterior_mean(cands)

        return value

    def _reveal_values(self, members, prob, b1):
        def value(aborting):
            if aborting:
                return self._recovery_value(tuple(p for p in members if p not in aborting), b1)
            return self._fresh(prob)

        return value

    def _coin_values(self, members, eps, coins, last, i):
        prefix = sum(coins)

        def value(aborting):
            if aborting:
                return self._recovery_value(tuple(p for p in members if p not in aborting), last)
            return binom_tail(self.sched.suffix(i), eps, -prefix)

        return value

    def _defend_values(self, members, eps, coins, last, bi, i):
        corr = tuple(p for p in members if p in self.corrupted and p in self.alive)
        prefix = sum(coins)

        def value(aborting):
            if aborting:
                return self._recovery_value(tuple(p for p in members if p not in aborting), last)
            sums, probs = binom_pmf_vector(self.sched.coins(i), eps)
            cands = []
            for c, pr in zip(sums, probs):
                if not pr:
                    continue
                x = self._wire(binom_tail(self.sched.suffix(i + 1), eps, -prefix - c))
                cands.append((self._weight([pr] + self._batch_likelihood(bi, corr, x)), x))
            return self._posterior_mean(cands)

        return value

    def _reveal_coin_values(self, members, eps, coins, c, bi, i):
        total = sum(coins) + c

        def value(aborting):
            if aborting:
                return self._recovery_value(tuple(p for p in members if p not in aborting), bi)
            return binom_tail(self.sched.suffix(i + 1), eps, -total)

        return value

    def _ht_round_values(self, pair, payloads, prob_h, history, call, i):
        corr = [p for p in pair if p in self.corrupted and p in self.alive]
        prefix = sum(call.coins)

        def value(aborting):
            eps = bias_for(self.sched, prob_h, self.mode)
            if aborting:
                return binom_tail(self.sched.suffix(i), eps, -prefix)
            if len(corr) != 1:
                raise ValueError("view values cover a two-party run with one corrupted party")
            z = corr[0]
            n1 = self.sched.total
            size = 2 * n1
            observed = [(n1, 0, payloads[z].d)]
            for past in history:
                observed.append((self.sched.suffix(len(past.coins) + 2), -past.prefix, past.bits()[z]))
            d_now = call.bits()[z]
            k_now = self.sched.suffix(i + 1)
            bank_w, bank_p = binom_pmf_vector(size, eps)
            coin_c, coin_p = binom_pmf_vector(self.sched.coins(i), eps)
            cands = []
            for w, pw in zip(bank_w, bank_p):
                if not pw:
                    continue
                hist = [pw]
                for k, thr, d in observed:
                    q = hyp_tail(size, w, k, thr, exact=self.exact)
                    hist.append(q if d else 1 - q)
                for c, pc in zip(coin_c, coin_p):
                    if not pc:
                        continue
                    q = hyp_tail(size, w, k_now, -prefix - c, exact=self.exact)
                    x = binom_tail(k_now, eps, -prefix - c)
                    cands.append((self._weight(hist + [pc, q if d_now else 1 - q]), x))
            return self._posterior_mean(cands)

        return value

    def _ht_exchange_values(self, prob_h, total, i):
        def value(aborting):
            eps = bias_for(self.sched, prob_h, self.mode)
            return binom_tail(self.sched.suffix(i + 1), eps, -total)

        return value


def run_outer(cfg: ProtocolConfig, adversary=None, seed=None) -> Transcript:
    """Execute the outer protocol once and return its transcript."""
    return Execution(cfg, adversary, seed).run()


def run_inner(cfg: ProtocolConfig, delta, adversary=None, seed=None) -> Transcript:
    """Execute the t-party inner protocol once on a known δ."""
    return Execution(cfg, adversary, seed).run_inner(delta)


def outputs_agree(tr: Transcript, corrupted: Iterable[int] = ()) -> bool:
    bad = set(corrupted)
    bits = {b for p, b in tr.outputs.items() if p not in bad}
    return len(bits) == 1
