"""Composite sub-protocols built from primitive gates.

Truncation is exact: the value is masked with a random integer whose low
``m`` bits are individual preprocessed bits, the masked value is opened,
and the borrow out of the low part is recovered with a bitwise comparison
between the public low bits and the secret mask bits.

The ``op_*`` helpers append macro gates to a :class:`CircuitBuilder`; the
``lower_*`` functions are the expansions used by :func:`circuit.expand`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .circuit import CircuitBuilder
from .field import DEFAULT_FIELD, PrimeField

STAT_SECURITY = 40
EXPONENT_WINDOW = 16


def stat_param(k: int, field: PrimeField) -> int:
    """Statistical masking slack for a ``k``-bit value; ``x + r`` must not wrap."""
    kappa = min(STAT_SECURITY, field.bits - k - 2)
    if kappa < 1:
        raise ValueError(f"{k}-bit values do not fit a {field.bits}-bit field with masking slack")
    return kappa


# -- lowerings ---------------------------------------------------------------

def bit_lt_public(b: CircuitBuilder, c, r_bits, out=None):
    """Secret bit ``[c < r]`` for public ``c`` and secret bits of ``r`` (LSB first)."""
    m = len(r_bits)
    a = [b.pbit(i, c) for i in range(m)]
    d = []
    for ai, ri in zip(a, r_bits):
        prod = b.mul(ai, ri)
        d.append(b.lin(0, [(1, ai), (1, ri), (-2, prod)]))
    # f[i] = OR of d[i..m-1]: first differing bit scanning from the top
    f = [None] * m
    f[m - 1] = d[m - 1]
    for i in range(m - 2, -1, -1):
        g = b.mul(f[i + 1], d[i])
        f[i] = b.lin(0, [(1, f[i + 1]), (1, d[i]), (-1, g)])
    terms = []
    for i in range(m):
        w = b.lin(1, [(-1, a[0])]) if i == 0 else b.lin(0, [(1, a[i - 1]), (-1, a[i])])
        terms.append((1, b.mul(f[i], w)))
    return b.lin(0, terms, out=out)


def lower_trunc(b: CircuitBuilder, x, k: int, m: int, field: PrimeField = DEFAULT_FIELD, out=None):
    if m <= 0:
        return b.lin(0, [(1, x)], out=out)
    if m >= k:
        raise ValueError("trunc needs 0 < m < k")
    kappa = stat_param(k, field)
    p = field.p
    lo = [b.rbit() for _ in range(m)]
    hi = b.rint(k + kappa - m)
    masked = b.lin(0, [(1, x)] + [(1 << i, r) for i, r in enumerate(lo)] + [(1 << m, hi)])
    c = b.open(masked)
    cm = b.pmod(m, c)
    borrow = bit_lt_public(b, cm, lo)
    inv = pow(1 << m, p - 2, p)
    terms = [(inv, x), (p - inv, cm)]
    terms += [((inv << i) % p, r) for i, r in enumerate(lo)]
    terms.append(((p - inv) * (1 << m) % p, borrow))
    return b.lin(0, terms, out=out)


def lower_lt_pow2(b: CircuitBuilder, x, k: int, field: PrimeField = DEFAULT_FIELD, out=None):
    top = lower_trunc(b, x, k, k - 1, field)
    return b.lin(1, [(-1, top)], out=out)


def lower_compare(b: CircuitBuilder, x, y, l: int, field: PrimeField = DEFAULT_FIELD, out=None):
    shifted = b.lin(1 << l, [(1, x), (-1, y)])
    ge = lower_trunc(b, shifted, l + 1, l, field)
    return b.lin(1, [(-1, ge)], out=out)


def lower_or(b: CircuitBuilder, x, y, out=None):
    prod = b.mul(x, y)
    return b.lin(0, [(1, x), (1, y), (-1, prod)], out=out)


def lower_xor(b: CircuitBuilder, x, y, out=None):
    prod = b.mul(x, y)
    return b.lin(0, [(1, x), (1, y), (-2, prod)], out=out)


def lower_flmul(b: CircuitBuilder, x, y, l: int, field: PrimeField = DEFAULT_FIELD, outs=None):
    v1, p1, z1, s1 = x
    v2, p2, z2, s2 = y
    ov, op_, oz, os_ = outs if outs else (None, None, None, None)
    v = b.mul(v1, v2)
    v = lower_trunc(b, v, 2 * l, l - 1, field)
    small = lower_lt_pow2(b, v, l + 1, field)
    bv = b.mul(small, v)
    v = lower_trunc(b, b.lin(0, [(1, v), (1, bv)]), l + 1, 1, field, out=ov)
    z = lower_or(b, z1, z2, out=oz)
    s = lower_xor(b, s1, s2, out=os_)
    e = b.lin(l, [(1, p1), (1, p2), (-1, small)])
    nonzero = b.lin(1, [(-1, z)])
    e = b.mul(e, nonzero, out=op_)
    return v, e, z, s


# -- builder-level operations -------------------------------------------------

@dataclass(frozen=True)
class SharedFloat:
    """Wire names of a secret float ``(1-2s)(1-z) v 2**p``."""

    v: str
    p: str
    z: str
    s: str

    def wires(self):
        return (self.v, self.p, self.z, self.s)


def op_or(b: CircuitBuilder, x, y, out=None):
    return lower_or(b, x, y, out=out)


def op_xor(b: CircuitBuilder, x, y, out=None):
    return lower_xor(b, x, y, out=out)


def op_trunc(b: CircuitBuilder, x, k: int, m: int, out=None):
    return b.trunc(k, m, x, out=out)


def op_lt_pow2(b: CircuitBuilder, x, k: int, out=None):
    return b.ltp(k, x, out=out)


def op_compare(b: CircuitBuilder, x, y, out=None):
    return b.cmp(x, y, out=out)


def flmul(b: CircuitBuilder, x: SharedFloat, y: SharedFloat, l: int) -> SharedFloat:
    return SharedFloat(*b.flmul(l, x.wires(), y.wires()))


# -- clear-text float encoding -------------------------------------------------

def encode_float(value, l: int, field: PrimeField = DEFAULT_FIELD):
    """Normalized ``(v, p, z, s)`` with ``2**(l-1) <= v < 2**l``, truncating extra bits."""
    q = Fraction(value)
    if q == 0:
        return 0, 0, 1, 0
    s = 1 if q < 0 else 0
    q = abs(q)
    e = 0
    while q >= (1 << l):
        q /= 2
        e += 1
    while q < (1 << (l - 1)):
        q *= 2
        e -= 1
    if abs(e) >= 1 << (EXPONENT_WINDOW - 1):
        raise OverflowError("exponent outside the representable window")
    return int(q), e % field.p, 0, s


def decode_float(v: int, p: int, z: int, s: int, field: PrimeField = DEFAULT_FIELD) -> Fraction:
    if z:
        return Fraction(0)
    e = field.signed(p)
    mag = Fraction(v) * (Fraction(2) ** e)
    return -mag if s else mag
