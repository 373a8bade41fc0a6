"""t-out-of-t XOR sharing of fixed-width bit strings.

Values are first encoded into an :class:`EncodedValue` (an integer holding the
bits plus a kind tag that knows how to decode them) and then split into ``t``
words whose XOR is the encoding.  Any ``t-1`` of the words are uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .numerics import FIXED_ONE, DeltaValue

DELTA64_WIDTH = 65  # one integer bit so that δ = 1 (word 2**64) fits


class IncompleteShares(ValueError):
    """Raised when reconstruction is attempted without every share."""


@dataclass(frozen=True)
class EncodedValue:
    """Bits of a value and how to read them back.

    ``kind`` is one of ``bit``, ``signed``, ``delta64``, ``rational``, ``bits``
    (a ``±1`` vector stored as 1/0) or ``bundle``.  ``layout`` carries the
    sub-encodings of a bundle, or the limb width of a rational.
    """

    kind: str
    width: int
    bits: int
    layout: Any = None

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.width:
            raise ValueError(f"{self.bits} does not fit in {self.width} bits")


def encode_bit(b: int) -> EncodedValue:
    if b not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    return EncodedValue("bit", 1, b)


def encode_signed(x: int, width: int) -> EncodedValue:
    lim = 1 << (width - 1)
    if not -lim <= x < lim:
        raise ValueError(f"{x} does not fit a signed {width}-bit word")
    return EncodedValue("signed", width, x & ((1 << width) - 1))


def encode_delta(delta) -> EncodedValue:
    """Round-to-nearest 64-fraction-bit encoding of a probability."""
    if isinstance(delta, float):
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"probability {delta} outside [0, 1]")
        # scaling by a power of two is exact, so this rounds exactly like the rational path
        return EncodedValue("delta64", DELTA64_WIDTH, round(delta * FIXED_ONE))
    return EncodedValue("delta64", DELTA64_WIDTH, DeltaValue.of(delta).fixed64)


def encode_rational(delta) -> EncodedValue:
    """Exact encoding of a rational probability as a (numerator, denominator) pair.

    Used by the exact analysis mode, where truncating δ would break identities
    that the protocol satisfies by construction.
    """
    q = DeltaValue.of(delta).exact
    limb = max(64, -(-max(q.numerator.bit_length(), q.denominator.bit_length()) // 64) * 64)
    return EncodedValue("rational", 2 * limb, (q.numerator << limb) | q.denominator, limb)


def encode_plusminus(vec) -> EncodedValue:
    """A ``±1`` vector as bits (+1 → 1, −1 → 0), first coordinate in the lowest bit."""
    arr = np.asarray(vec)
    bits = (arr > 0).astype(np.uint8)
    word = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
    return EncodedValue("bits", len(arr), word)


def bundle(*parts: EncodedValue) -> EncodedValue:
    word = 0
    offset = 0
    for p in parts:
        word |= p.bits << offset
        offset += p.width
    return EncodedValue("bundle", offset, word, tuple((p.kind, p.width, p.layout) for p in parts))


def decode(ev: EncodedValue):
    """Inverse of the encoders: returns an int, a DeltaValue, a ±1 array or a tuple."""
    k = ev.kind
    if k == "bit":
        return ev.bits
    if k == "signed":
        top = 1 << (ev.width - 1)
        return ev.bits - (1 << ev.width) if ev.bits & top else ev.bits
    if k == "delta64":
        return DeltaValue.from_fixed64(ev.bits)
    if k == "rational":
        limb = ev.layout
        return DeltaValue(Fraction(ev.bits >> limb, ev.bits & ((1 << limb) - 1)))
    if k == "bits":
        raw = ev.bits.to_bytes((ev.width + 7) // 8, "little")
        flags = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[: ev.width]
        return flags.astype(np.int8) * 2 - 1
    if k == "bundle":
        out = []
        offset = 0
        for kind, width, layout in ev.layout:
            sub = (ev.bits >> offset) & ((1 << width) - 1)
            out.append(decode(EncodedValue(kind, width, sub, layout)))
            offset += width
        return tuple(out)
    raise ValueError(f"unknown encoding kind {k!r}")


@dataclass(frozen=True)
class ShareSet:
    """``t`` words whose XOR is an encoded value; ``None`` marks a missing share."""

    kind: str
    width: int
    shares: tuple
    layout: Any = None

    @property
    def t(self) -> int:
        return len(self.shares)

    def __xor__(self, other: "ShareSet") -> "ShareSet":
        if (self.kind, self.width, self.t) != (other.kind, other.width, other.t):
            raise ValueError("share sets have different shapes")
        return ShareSet(self.kind, self.width, tuple(a ^ b for a, b in zip(self.shares, other.shares)), self.layout)

    def restrict(self, keep: Sequence[int]) -> "ShareSet":
        """Blank out every share whose index is not in ``keep``."""
        ks = set(keep)
        return ShareSet(self.kind, self.width, tuple(s if i in ks else None for i, s in enumerate(self.shares)), self.layout)


def random_word(rng: np.random.Generator, width: int) -> int:
    """A uniform ``width``-bit integer built from raw 64-bit generator outputs."""
    raw = rng.bit_generator.random_raw
    word = 0
    for j in range(0, width, 64):
        word |= int(raw()) << j
    return word & ((1 << width) - 1)


def share(value: EncodedValue, t: int, rng: np.random.Generator) -> ShareSet:
    if t < 1:
        raise ValueError("need at least one share")
    words = [random_word(rng, value.width) for _ in range(t - 1)]
    last = value.bits
    for w in words:
        last ^= w
    words.append(last)
    return ShareSet(value.kind, value.width, tuple(words), value.layout)


def combine(s: ShareSet) -> EncodedValue:
    """XOR all shares back into the encoded value."""
    word = 0
    for i, w in enumerate(s.shares):
        if w is None:
            raise IncompleteShares(f"share {i} of {s.t} is missing")
        word ^= w
    return EncodedValue(s.kind, s.width, word, s.layout)


def reconstruct(s: ShareSet):
    return decode(combine(s))


def share_pair(c: int, delta, t: int, rng: np.random.Generator, *, width: int, exact: bool = False) -> ShareSet:
    """Shares of the concatenated encoding of a signed coin and a probability."""
    enc = encode_rational(delta) if exact else encode_delta(delta)
    return share(bundle(encode_signed(c, width), enc), t, rng)
