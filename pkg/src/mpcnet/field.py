"""Prime-field arithmetic.

The default modulus is the Mersenne prime 2**61 - 1.  A :class:`PrimeField`
can be built for any prime (tests use 101 so that distributions can be
enumerated exhaustively).  Elements are always kept in canonical form
``0 <= v < p``.

Hot protocol loops work on plain ``int`` values and reduce with ``% p``;
:class:`FieldElement` is the typed wrapper used at API boundaries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MERSENNE_61 = (1 << 61) - 1
SMALL_PRIME = 101


def _is_probable_prime(n: int) -> bool:
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    # deterministic for n < 3.3e24
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class NonInvertibleError(ZeroDivisionError):
    pass


class PrimeField:
    """Arithmetic modulo a prime ``p`` on canonical ints."""

    __slots__ = ("p", "bits", "_mersenne")

    def __init__(self, p: int = MERSENNE_61):
        if p >= 1 << 64:
            raise ValueError("modulus must fit in 64 bits")
        if not _is_probable_prime(p):
            raise ValueError(f"modulus {p} is not prime")
        self.p = p
        self.bits = p.bit_length()
        self._mersenne = (p + 1) & p == 0

    def __repr__(self):
        return f"PrimeField({self.p})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self):
        return hash(self.p)

    def reduce(self, x: int) -> int:
        """Canonical representative of an arbitrary (possibly wide) integer."""
        if self._mersenne and 0 <= x:
            k = self.bits
            p = self.p
            # 2**k == 1 mod p: fold high bits onto low bits
            while x > p:
                x = (x & p) + (x >> k)
            return 0 if x == p else x
        return x % self.p

    def add(self, a: int, b: int) -> int:
        s = a + b
        return s - self.p if s >= self.p else s

    def sub(self, a: int, b: int) -> int:
        d = a - b
        return d + self.p if d < 0 else d

    def neg(self, a: int) -> int:
        return self.p - a if a else 0

    def mul(self, a: int, b: int) -> int:
        return self.reduce(a * b)

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise NonInvertibleError("non-invertible: zero has no inverse")
        return pow(a, self.p - 2, self.p)

    def signed(self, a: int) -> int:
        """Decode a canonical element as a signed integer in (-p/2, p/2]."""
        return a - self.p if a > self.p // 2 else a

    def encode(self, v: int) -> int:
        return v % self.p

    def elem(self, v: int) -> "FieldElement":
        return FieldElement(v % self.p, self)


DEFAULT_FIELD = PrimeField(MERSENNE_61)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField = DEFAULT_FIELD

    def __post_init__(self):
        if not 0 <= self.value < self.field.p:
            raise ValueError(f"{self.value} is not canonical mod {self.field.p}")

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ValueError("field mismatch")
            return other.value
        if isinstance(other, int):
            return other % self.field.p
        return NotImplemented

    def __add__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.field.add(self.value, b), self.field)

    __radd__ = __add__

    def __sub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.field.sub(self.value, b), self.field)

    def __rsub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.field.sub(b, self.value), self.field)

    def __mul__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.field.mul(self.value, b), self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(self.field.neg(self.value), self.field)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def __truediv__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return self * FieldElement(self.field.inv(b), self.field)

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"F({self.value})"

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.value)


def field_add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b


def field_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def field_inv(a: FieldElement) -> FieldElement:
    return a.inverse()


def pack_elements(values) -> bytes:
    """Serialize field elements as consecutive 8-byte little-endian words."""
    values = list(values)
    return struct.pack(f"<{len(values)}Q", *values)


def unpack_elements(data: bytes) -> list[int]:
    if len(data) % 8:
        raise ValueError("payload length is not a multiple of 8")
    return list(struct.unpack(f"<{len(data) // 8}Q", data))
