"""Shared fixtures: random circuit generation and small-field enumeration."""

import random

import numpy as np

from mpcnet.circuit import CircuitBuilder
from mpcnet.field import MERSENNE_61
from mpcnet.gadgets import decode_float


def random_circuit(seed: int, n: int, n_mul: int, modulus: int = MERSENNE_61, opens: bool = True):
    """Random arithmetic circuit with exactly ``n_mul`` secret multiplications.

    Operands lean towards recently created wires so depth varies with size.
    Returns ``(circuit, inputs)``.
    """
    rng = random.Random(seed)
    b = CircuitBuilder(bits=32, modulus=modulus)
    n_in = rng.randint(n, 2 * n + 2)
    secret = [b.inp(i % n) for i in range(n_in)]
    public = [b.const(rng.randrange(modulus))]
    inputs = {}
    for i in range(n_in):
        inputs.setdefault(i % n, []).append(rng.randrange(modulus))

    def pick(pool):
        k = min(len(pool) - 1, int(rng.expovariate(1 / 6)))
        return pool[len(pool) - 1 - k] if rng.random() < 0.8 else rng.choice(pool)

    muls = 0
    while muls < n_mul:
        r = rng.random()
        if r < 0.45:
            secret.append(b.mul(pick(secret), pick(secret)))
            muls += 1
        elif r < 0.55:
            secret.append(b.mul(pick(secret), pick(public)))
        elif r < 0.65:
            secret.append(b.add(pick(secret), pick(secret)))
        elif r < 0.72:
            secret.append(b.addc(rng.randrange(modulus), pick(secret)))
        elif r < 0.80:
            secret.append(b.smul(rng.randrange(modulus), pick(secret)))
        elif r < 0.92:
            terms = [(rng.randrange(modulus), pick(secret)) for _ in range(rng.randint(1, 3))]
            terms.append((rng.randrange(modulus), pick(public)))
            secret.append(b.lin(rng.randrange(modulus), terms))
        elif r < 0.96 and opens:
            public.append(b.open(pick(secret)))
        else:
            public.append(b.add(pick(public), pick(public)))
    outs = secret[-3:] + rng.sample(secret, min(2, len(secret))) + [public[-1]]
    for w in outs:
        b.output(w)
    return b.build(), inputs


def float_oracle(x, y, l):
    """Product rounded toward zero to an l-bit mantissa, via exact rationals."""
    vx, vy = decode_float(*x), decode_float(*y)
    prod = vx * vy
    if prod == 0:
        return 0, 0, 1, (x[3] ^ y[3])
    s = 1 if prod < 0 else 0
    mag = abs(prod)
    e = 0
    while mag >= 2 ** l:
        mag /= 2
        e += 1
    while mag < 2 ** (l - 1):
        mag *= 2
        e -= 1
    return int(mag), e, 0, s


class EnumeratingRng:
    """Stand-in for a numpy generator that replays a fixed sequence of draws."""

    def __init__(self, values):
        self.values = list(values)
        self.pos = 0

    def integers(self, low, high, size=None, dtype=None):
        count = 1 if size is None else int(np.prod(size))
        out = self.values[self.pos:self.pos + count]
        self.pos += count
        return np.array(out, dtype=np.uint64)
