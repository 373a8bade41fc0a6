"""Distributions, weights and scalar helpers shared by the protocol and the analysis.

Two numeric backends live side by side.  Passing a :class:`~fractions.Fraction`
(or an exact :class:`EpsBias`) selects exact rational arithmetic; passing a
``float`` selects the fast floating path used by Monte Carlo code.

Coin sums are always over ``n`` independent ``±1`` coins, so a sum ``k`` is
reachable only when ``k ≡ n (mod 2)`` and ``|k| ≤ n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import special

Real = Union[Fraction, float, int]

FIXED_ONE = 1 << 64


# ---------------------------------------------------------------------------
# Schedules and small helpers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSchedule:
    """Per-round coin counts ``ml[i] = (m+1-i)^2`` and their suffix sums.

    The tuples are stored 0-based; :meth:`coins` and :meth:`suffix` take the
    1-based round index used throughout the protocol, with ``suffix(m+1) = 0``.
    """

    m: int
    ml: tuple[int, ...]
    ms: tuple[int, ...]

    @property
    def parity_ok(self) -> bool:
        return self.ms[0] % 2 == 1

    @property
    def total(self) -> int:
        return self.ms[0]

    def coins(self, i: int) -> int:
        if not 1 <= i <= self.m:
            raise ValueError(f"round {i} outside 1..{self.m}")
        return self.ml[i - 1]

    def suffix(self, i: int) -> int:
        if i == self.m + 1:
            return 0
        if not 1 <= i <= self.m:
            raise ValueError(f"round {i} outside 1..{self.m + 1}")
        return self.ms[i - 1]


@lru_cache(maxsize=None)
def weight_schedule(m: int) -> WeightSchedule:
    if m < 1:
        raise ValueError("m must be a positive integer")
    ml = tuple((m + 1 - i) ** 2 for i in range(1, m + 1))
    ms = []
    acc = 0
    for c in reversed(ml):
        acc += c
        ms.append(acc)
    return WeightSchedule(m, ml, tuple(reversed(ms)))


def sign(x: int) -> int:
    """1 on non-negative input, 0 otherwise."""
    return 1 if x >= 0 else 0


def tp(ell: int) -> int:
    """Bit width ``ceil(log2 ell) + 1``."""
    if ell < 1:
        raise ValueError("tp is defined for positive integers")
    return (ell - 1).bit_length() + 1


def normal_cdf(x: float) -> float:
    """Standard normal CDF.  Kept as a helper; no protocol step consumes it."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Probabilities and biases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaValue:
    """A probability with its 64-fraction-bit wire encoding.

    ``fixed64`` ranges over ``[0, 2**64]`` so that ``δ = 1`` is representable
    with the promised rounding error; the sharing layer gives it 65 bits.
    """

    exact: Fraction

    def __post_init__(self):
        if not 0 <= self.exact <= 1:
            raise ValueError(f"probability {self.exact} outside [0, 1]")

    @classmethod
    def of(cls, x: "Real | DeltaValue") -> "DeltaValue":
        if isinstance(x, DeltaValue):
            return x
        return cls(Fraction(x))

    @classmethod
    def from_fixed64(cls, word: int) -> "DeltaValue":
        return cls(Fraction(word, FIXED_ONE))

    @property
    def fixed64(self) -> int:
        return round(self.exact * FIXED_ONE)

    def truncated(self) -> "DeltaValue":
        return DeltaValue.from_fixed64(self.fixed64)

    def __float__(self) -> float:
        return float(self.exact)


@dataclass(frozen=True)
class EpsBias:
    """A coin bias in ``[-1, 1]``.

    When produced by :func:`sbias` in exact mode it also remembers its defining
    equation ``binom_tail(n, ε, 0) = delta``.  The bias solving that equation is
    in general irrational; ``value`` is a rational approximant, and
    :func:`binom_tail` answers the defining query with ``delta`` itself so that
    identities that hold by construction stay exact.
    """

    value: Real
    n: int | None = None
    delta: Real | None = None

    def __post_init__(self):
        if abs(self.value) > 1:
            raise ValueError(f"bias {self.value} outside [-1, 1]")


def _unwrap(eps) -> Real:
    if isinstance(eps, EpsBias):
        return eps.value
    if abs(eps) > 1:
        raise ValueError(f"bias {eps} outside [-1, 1]")
    return eps


def is_exact(x) -> bool:
    if isinstance(x, EpsBias):
        x = x.value
    if isinstance(x, DeltaValue):
        return True
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


@lru_cache(maxsize=4096)
def _exact_pmf(n: int, eps: Fraction) -> tuple[Fraction, ...]:
    """pmf indexed by the number of +1 coins, built by repeated convolution."""
    p = (1 + eps) / 2
    q = 1 - p
    row = [Fraction(1)]
    for _ in range(n):
        nxt = [Fraction(0)] * (len(row) + 1)
        for j, w in enumerate(row):
            if w:
                nxt[j] += w * q
                nxt[j + 1] += w * p
        row = nxt
    return tuple(row)


@lru_cache(maxsize=4096)
def _exact_upper(n: int, eps: Fraction) -> tuple[Fraction, ...]:
    """``upper[j] = Pr[#(+1) ≥ j]`` for j = 0..n+1."""
    pmf = _exact_pmf(n, eps)
    acc = Fraction(0)
    out = [Fraction(0)] * (n + 2)
    for j in range(n, -1, -1):
        acc += pmf[j]
        out[j] = acc
    return tuple(out)


def _float_pmf(n: int, p: float, j: int) -> float:
    if p <= 0.0:
        return 1.0 if j == 0 else 0.0
    if p >= 1.0:
        return 1.0 if j == n else 0.0
    logc = math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
    return math.exp(logc + j * math.log(p) + (n - j) * math.log1p(-p))


def binom_pmf(n: int, eps, k: int) -> Real:
    """``Pr[Σ_{j≤n} x_j = k]`` for i.i.d. ``±1`` coins of bias ``eps``."""
    if n < 0:
        raise ValueError("coin count must be non-negative")
    e = _unwrap(eps)
    exact = is_exact(e)
    zero = Fraction(0) if exact else 0.0
    if (n + k) % 2 or abs(k) > n:
        return zero
    j = (n + k) // 2
    if exact:
        return _exact_pmf(n, Fraction(e))[j]
    return _float_pmf(n, (1.0 + float(e)) / 2.0, j)


def binom_pmf_vector(n: int, eps) -> tuple[list[int], list[Real]]:
    """All reachable sums of ``n`` coins (ascending) with their probabilities."""
    e = _unwrap(eps)
    sums = list(range(-n, n + 1, 2))
    if is_exact(e):
        return sums, list(_exact_pmf(n, Fraction(e)))
    p = (1.0 + float(e)) / 2.0
    if 0.0 < p < 1.0:
        from scipy import stats

        probs = stats.binom.pmf(np.arange(n + 1), n, p).tolist()
    else:
        probs = [_float_pmf(n, p, j) for j in range(n + 1)]
    return sums, probs


def binom_tail(n: int, eps, k: int) -> Real:
    """``Pr[Σ_{j≤n} x_j ≥ k]``; equals 1 for ``k ≤ -n`` and 0 for ``k > n``."""
    if n < 0:
        raise ValueError("coin count must be non-negative")
    if isinstance(eps, EpsBias) and eps.n == n and k == 0 and eps.delta is not None:
        return eps.delta
    e = _unwrap(eps)
    exact = is_exact(e)
    # smallest number of +1 coins j with 2j - n >= k
    j0 = max(0, -(-(n + k) // 2))
    if exact:
        if j0 > n:
            return Fraction(0)
        return _exact_upper(n, Fraction(e))[j0]
    if j0 > n:
        return 0.0
    if j0 == 0:
        return 1.0
    p = (1.0 + float(e)) / 2.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    return float(special.bdtrc(j0 - 1, n, p))


@lru_cache(maxsize=1 << 16)
def _sbias_float(n: int, d: float) -> float:
    if d <= 0.0:
        return -1.0
    if d >= 1.0:
        return 1.0
    if n % 2 == 1 and d == 0.5:
        return 0.0
    j0 = (n + 1) // 2  # tail at k = 0 needs at least ceil(n/2) ones
    lo, hi = -1.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val = float(special.bdtrc(j0 - 1, n, 0.5 * (1.0 + mid))) if j0 > 0 else 1.0
        if val < d:
            lo = mid
        else:
            hi = mid
    # pick whichever end point has the smaller residual
    def resid(x):
        return abs(float(special.bdtrc(j0 - 1, n, 0.5 * (1.0 + x))) - d)

    return lo if resid(lo) <= resid(hi) else hi


def sbias(n: int, delta, *, exact: bool = False):
    """The bias ``ε`` with ``binom_tail(n, ε, 0) = delta``.

    Found by bisection on ``ε ∈ [-1, 1]`` (the tail is strictly increasing in
    ``ε``).  Returns a ``float`` by default; with ``exact=True`` returns an
    :class:`EpsBias` whose rational approximant is the bisection result.
    """
    if n < 1:
        raise ValueError("sbias needs at least one coin")
    d = delta.exact if isinstance(delta, DeltaValue) else delta
    e = _sbias_float(n, float(d))
    if not exact:
        return e
    if d <= 0:
        return EpsBias(Fraction(-1), n, Fraction(0))
    if d >= 1:
        return EpsBias(Fraction(1), n, Fraction(1))
    return EpsBias(Fraction(e), n, Fraction(d))


# ---------------------------------------------------------------------------
# Hypergeometric
# ---------------------------------------------------------------------------


def _hyp_check(N: int, p: int, ell: int) -> None:
    if not 0 <= ell <= N:
        raise ValueError(f"sample size {ell} outside 0..{N}")
    if abs(p) > N or (N + p) % 2:
        raise ValueError(f"weight {p} incompatible with population {N}")


def hyp_pmf(N: int, p: int, ell: int, k: int, *, exact: bool = True) -> Real:
    """Weight distribution of a uniform ``ell``-subset of a ``±1`` vector of weight ``p``."""
    _hyp_check(N, p, ell)
    zero = Fraction(0) if exact else 0.0
    if (ell + k) % 2 or abs(k) > ell:
        return zero
    pos = (N + p) // 2
    j = (ell + k) // 2
    if j > pos or ell - j > N - pos:
        return zero
    if exact:
        return Fraction(math.comb(pos, j) * math.comb(N - pos, ell - j), math.comb(N, ell))
    return _hyp_float_pmf(N, pos, ell, j)


def _lcomb(a: int, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def _hyp_float_pmf(N: int, pos: int, ell: int, j: int) -> float:
    return math.exp(_lcomb(pos, j) + _lcomb(N - pos, ell - j) - _lcomb(N, ell))


@lru_cache(maxsize=1 << 15)
def _hyp_tail_exact(N: int, p: int, ell: int, k: int) -> Fraction:
    pos = (N + p) // 2
    lo = max(math.ceil((ell + k) / 2), 0, ell - (N - pos))
    hi = min(ell, pos)
    num = sum(math.comb(pos, j) * math.comb(N - pos, ell - j) for j in range(lo, hi + 1))
    return Fraction(num, math.comb(N, ell))


@lru_cache(maxsize=1 << 15)
def _hyp_tail_float(N: int, p: int, ell: int, k: int) -> float:
    pos = (N + p) // 2
    lo = max(math.ceil((ell + k) / 2), 0, ell - (N - pos))
    hi = min(ell, pos)
    if lo > hi:
        return 0.0
    if lo <= max(0, ell - (N - pos)):
        return 1.0
    from scipy import stats

    # Pr[#positives in sample >= lo]
    return float(stats.hypergeom.sf(lo - 1, N, pos, ell))


def hyp_tail(N: int, p: int, ell: int, k: int, *, exact: bool = True) -> Real:
    """``Pr[w(v_I) ≥ k]`` for a uniform ``ell``-subset ``I``."""
    _hyp_check(N, p, ell)
    if exact:
        return _hyp_tail_exact(N, p, ell, k)
    return _hyp_tail_float(N, p, ell, k)


# ---------------------------------------------------------------------------
# Noise-bank sizing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaFactor:
    m: int
    ell: int
    k: int
    exponent: Fraction
    value: float
    bank_size: int


def _iroot_ceil(x: int, r: int) -> int:
    """Smallest integer y ≥ 0 with y**r ≥ x."""
    if x <= 0:
        return 0
    # integer Newton iteration from above for floor(x^(1/r))
    y = 1 << (x.bit_length() // r + 1)
    while True:
        z = ((r - 1) * y + x // y ** (r - 1)) // r
        if z >= y:
            break
        y = z
    return y if y**r >= x else y + 1


def alpha_factor(m: int, ell: int, k: int) -> AlphaFactor:
    """Noise-bank multiplier for a ``k``-party defense call at quality ``ell``."""
    if m < 1 or ell < 3 or not 2 <= k <= ell:
        raise ValueError(f"alpha factor undefined for m={m}, ell={ell}, k={k}")
    two = Fraction(2)
    exponent = (two ** (ell - 3) / (two ** (ell - 2) - 1)) * ((two ** (k - 2) - 1) / two ** (k - 3))
    ms1 = weight_schedule(m).total
    # ceil(m^(a/b) * ms1) computed exactly as an integer b-th root
    a, b = exponent.numerator, exponent.denominator
    scaled = _iroot_ceil(m**a * ms1**b, b)
    return AlphaFactor(m, ell, k, exponent, float(m) ** float(exponent), max(scaled, ms1))
