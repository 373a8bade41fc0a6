"""Two-step Boolean processes ``(A, B)`` and leakage functions of ``A``, computed exactly.

A process is a finite first-step law ``Pr[A = a]`` together with the success
probability ``Pr[B = 1 | A = a]``.  A leakage is a randomised function of
``a`` given as the exact law ``Pr[H = h | A = a]``.  Everything here is an
exact enumeration, so the supports must stay small.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable

from .numerics import binom_pmf_vector, binom_tail, hyp_pmf, hyp_tail, sbias, weight_schedule

SUPPORT_BUDGET = 1 << 16


class SupportTooLarge(ValueError):
    """The exact enumeration would exceed the support budget."""


class ZeroProbability(ValueError):
    """A conditioning event has probability zero."""


@dataclass(frozen=True)
class TwoStepProcess:
    """``support`` is a tuple of ``(a, Pr[A = a], Pr[B = 1 | A = a])`` with distinct ``a``."""

    kind: str
    support: tuple
    params: tuple = ()

    def __post_init__(self):
        total = sum(p for _, p, _ in self.support)
        if total != 1:
            raise ValueError(f"first-step law sums to {total}")
        for a, p, s in self.support:
            if p < 0 or not 0 <= s <= 1:
                raise ValueError(f"bad entry at {a}")

    @property
    def elements(self) -> list:
        return [a for a, _, _ in self.support]

    def prob(self, a) -> Fraction:
        return self._lookup()[a][0]

    def success(self, a) -> Fraction:
        return self._lookup()[a][1]

    def _lookup(self) -> dict:
        return {a: (p, s) for a, p, s in self.support}

    @property
    def p_one(self) -> Fraction:
        return sum((p * s for _, p, s in self.support), Fraction(0))


def binomial_process(m: int, i: int, b: int, eps) -> TwoStepProcess:
    """``A = C_i``; ``B = sign(b + A + C_{i+1} + … + C_m)`` for independent ``C_j ~ Bin(ml[j], ε)``."""
    sched = weight_schedule(m)
    eps = Fraction(eps)
    sums, probs = binom_pmf_vector(sched.coins(i), eps)
    rest = sched.suffix(i + 1)
    support = tuple((c, p, binom_tail(rest, eps, -b - c)) for c, p in zip(sums, probs) if p)
    return TwoStepProcess("binomial", support, (m, i, b, eps))


def hypergeometric_process(n: int, beta: int, delta) -> TwoStepProcess:
    """Bank ``v ~ Ber(ε)^{βn}`` with ``ε = sbias(n, δ)``; ``A = hyp_tail(βn, w(v), n, 1)``; ``B ~ Ber(A)``.

    Banks enter through their weight only; equal values of ``A`` are merged.
    """
    size = beta * n
    eps = sbias(n, Fraction(delta), exact=True).value
    sums, probs = binom_pmf_vector(size, eps)
    merged = defaultdict(lambda: Fraction(0))
    for w, p in zip(sums, probs):
        if p:
            merged[hyp_tail(size, w, n, 1)] += p
    support = tuple((a, p, a) for a, p in sorted(merged.items()))
    return TwoStepProcess("hypergeometric", support, (n, beta, Fraction(delta), eps))


def custom_process(entries: Iterable[tuple]) -> TwoStepProcess:
    return TwoStepProcess("custom", tuple((a, Fraction(p), Fraction(s)) for a, p, s in entries))


# ---------------------------------------------------------------------------
# Leakage functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeakageSpec:
    """``law(process, a)`` returns ``[(h, Pr[H = h | A = a])]``."""

    kind: str
    law: Callable = field(compare=False, repr=False)
    params: tuple = ()


def constant_leakage() -> LeakageSpec:
    return LeakageSpec("constant", lambda proc, a: [(0, Fraction(1))])


def all_information_leakage() -> LeakageSpec:
    return LeakageSpec("all_information", lambda proc, a: [(a, Fraction(1))])


def _vector_bias(proc: TwoStepProcess, a, n: int) -> Fraction:
    return Fraction(sbias(n, proc.success(a), exact=True).value)


def vector_leakage(n: int, k: int) -> LeakageSpec:
    """Full ``±1`` vectors of length ``k·n`` with per-coordinate bias ``sbias(n, Pr[B=1 | A=a])``."""
    length = k * n
    if 2**length > SUPPORT_BUDGET:
        raise SupportTooLarge(f"2^{length} leak vectors")

    def law(proc, a):
        e = _vector_bias(proc, a, n)
        p = (1 + e) / 2
        out = []
        for vec in itertools.product((1, -1), repeat=length):
            ones = sum(1 for x in vec if x == 1)
            pr = p**ones * (1 - p) ** (length - ones)
            if pr:
                out.append((vec, pr))
        return out

    return LeakageSpec("vector", law, (n, k))


def vector_weight_leakage(n: int, k: int) -> LeakageSpec:
    """The weight of a :func:`vector_leakage` output, without enumerating vectors."""
    length = k * n

    def law(proc, a):
        e = _vector_bias(proc, a, n)
        sums, probs = binom_pmf_vector(length, e)
        return [(w, p) for w, p in zip(sums, probs) if p]

    return LeakageSpec("vector_weight", law, (n, k))


def hypergeometric_leakage(m: int, i: int, b: int, p: int) -> LeakageSpec:
    """``H = b + a + X`` with ``X ~ Hyp(2·ms[1], p, ms[i+1])``."""
    sched = weight_schedule(m)
    size = 2 * sched.total
    k = sched.suffix(i + 1)
    if abs(p) > size or (size + p) % 2:
        raise ValueError(f"bank weight {p} impossible for a bank of {size}")

    def law(proc, a):
        out = []
        for x in range(-k, k + 1, 2):
            pr = hyp_pmf(size, p, k, x)
            if pr:
                out.append((b + a + x, pr))
        return out

    return LeakageSpec("hypergeometric", law, (m, i, b, p))


def table_leakage(table: dict) -> LeakageSpec:
    """A leakage given as ``{a: [(h, prob)]}``."""
    return LeakageSpec("table", lambda proc, a: [(h, Fraction(q)) for h, q in table[a]])


# ---------------------------------------------------------------------------
# Exact quantities
# ---------------------------------------------------------------------------


@dataclass
class Joint:
    """``Pr[A = a, H = h]`` for every pair of positive probability."""

    proc: TwoStepProcess
    mass: dict  # (a, h) -> probability
    by_hint: dict  # h -> [(a, probability)]

    def p_hint(self, h) -> Fraction:
        return sum((p for _, p in self.by_hint.get(h, ())), Fraction(0))

    @property
    def hints(self) -> list:
        return list(self.by_hint)


def joint(proc: TwoStepProcess, leak: LeakageSpec) -> Joint:
    mass = {}
    by_hint = defaultdict(list)
    count = 0
    for a, pa, _ in proc.support:
        if not pa:
            continue
        for h, ph in leak.law(proc, a):
            count += 1
            if count > SUPPORT_BUDGET * 16:
                raise SupportTooLarge("joint support too large")
            pr = pa * ph
            if pr:
                mass[(a, h)] = mass.get((a, h), Fraction(0)) + pr
    for (a, h), pr in mass.items():
        by_hint[h].append((a, pr))
    return Joint(proc, mass, dict(by_hint))


def posterior_success(j: Joint, h) -> Fraction:
    """``Pr[B = 1 | H = h]``."""
    total = j.p_hint(h)
    if not total:
        raise ZeroProbability(f"hint {h!r} has probability zero")
    return sum((p * j.proc.success(a) for a, p in j.by_hint[h]), Fraction(0)) / total


def prediction_advantage(proc: TwoStepProcess, leak: LeakageSpec, h, j: Joint | None = None) -> Fraction:
    """``|Pr[B = 1] − Pr[B = 1 | H = h]|``."""
    j = j or joint(proc, leak)
    return abs(proc.p_one - posterior_success(j, h))


@dataclass(frozen=True)
class RatioValue:
    by_posterior: Fraction  # Pr[A=a | H=h, A∈G] / Pr[A=a | A∈G]
    by_likelihood: Fraction  # Pr[H=h | A=a] / Pr[H=h | A∈G]

    @property
    def value(self) -> Fraction:
        if self.by_posterior != self.by_likelihood:
            raise ArithmeticError(f"ratio formulations disagree: {self.by_posterior} vs {self.by_likelihood}")
        return self.by_posterior


def ratio(proc: TwoStepProcess, leak: LeakageSpec, h, good: Iterable[Hashable], a, j: Joint | None = None) -> RatioValue:
    """Both formulations of the ratio at ``a ∈ G``, computed independently."""
    j = j or joint(proc, leak)
    good = set(good)
    if a not in good:
        raise ValueError("a must lie in the good set")
    p_good = sum((proc.prob(x) for x in good), Fraction(0))
    if not p_good:
        raise ZeroProbability("the good set has probability zero")
    # posterior route
    ah = dict(j.by_hint.get(h, ()))
    p_good_h = sum((ah.get(x, Fraction(0)) for x in good), Fraction(0))
    if not p_good_h:
        raise ZeroProbability("Pr[H = h, A ∈ G] = 0")
    post = ah.get(a, Fraction(0)) / p_good_h
    prior = proc.prob(a) / p_good
    by_posterior = post / prior
    # likelihood route
    law = dict()
    for hh, q in leak.law(proc, a):
        law[hh] = law.get(hh, Fraction(0)) + q
    lik = law.get(h, Fraction(0))
    lik_good = Fraction(0)
    for x in good:
        for hh, q in leak.law(proc, x):
            if hh == h:
                lik_good += proc.prob(x) * q
    lik_good /= p_good
    return RatioValue(by_posterior, lik / lik_good)


@dataclass
class BoundVerdict:
    holds: bool
    advantage: Fraction
    bound: Fraction
    main_term: Fraction
    tail_term: Fraction


def generic_diff_bound_check(proc: TwoStepProcess, leak: LeakageSpec, h, good: Iterable[Hashable]) -> BoundVerdict:
    """``PA(h) ≤ E_{a|A∈G}[|Pr[B=1] − Pr[B=1|A=a]|·|1 − ratio(a)|] + 2(Pr[A∉G] + Pr[A∉G | H=h])``."""
    j = joint(proc, leak)
    good = set(good) & set(proc.elements)
    adv = prediction_advantage(proc, leak, h, j)
    p_good = sum((proc.prob(x) for x in good), Fraction(0))
    base = proc.p_one
    main = Fraction(0)
    ah = dict(j.by_hint[h])
    # if no good element can produce h the ratio is undefined, but then
    # Pr[A ∉ G | H = h] = 1 and the tail term alone is 2
    if p_good and any(ah.get(x) for x in good):
        for a in good:
            r = ratio(proc, leak, h, good, a, j).value
            main += proc.prob(a) / p_good * abs(base - proc.success(a)) * abs(1 - r)
    ph = j.p_hint(h)
    out_h = 1 - sum((ah.get(x, Fraction(0)) for x in good), Fraction(0)) / ph
    tail = 2 * ((1 - p_good) + out_h)
    bound = main + tail
    return BoundVerdict(adv <= bound, adv, bound, main, tail)


def total_expectation_gap(proc: TwoStepProcess, leak: LeakageSpec) -> Fraction:
    """``Σ_h Pr[H=h]·Pr[B=1 | H=h] − Pr[B=1]``; zero for a correct implementation."""
    j = joint(proc, leak)
    return sum((j.p_hint(h) * posterior_success(j, h) for h in j.hints), Fraction(0)) - proc.p_one


def weight_sufficiency(proc: TwoStepProcess, n: int, k: int) -> bool:
    """Posterior of ``B`` given a full vector leak depends on the vector only through its weight."""
    j = joint(proc, vector_leakage(n, k))
    seen = {}
    for h in j.hints:
        w = sum(h)
        post = posterior_success(j, h)
        if seen.setdefault(w, post) != post:
            return False
    weights = joint(proc, vector_weight_leakage(n, k))
    return all(posterior_success(weights, w) == post for w, post in seen.items())
