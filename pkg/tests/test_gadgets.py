import itertools
import random
from fractions import Fraction

import pytest

from mpcnet.circuit import CircuitBuilder, cost, eval_plaintext
from mpcnet.engine import evaluate, run_session
from mpcnet.field import DEFAULT_FIELD, PrimeField
from mpcnet.gadgets import (
    SharedFloat, decode_float, encode_float, flmul, op_compare, op_lt_pow2, op_or, op_trunc,
    op_xor, stat_param,
)
from mpcnet.preprocessing import Dealer, ResourceError

from helpers import float_oracle

P = DEFAULT_FIELD.p


def run(builder, inputs, n=3, seed=0):
    c = builder.build()
    r = evaluate(c, inputs, n=n, seed=seed)
    assert r.ok, r.abort
    assert r.outputs == eval_plaintext(c, inputs)
    used = r.stats
    rep = cost(c)
    assert used["triples_consumed"] == rep.triples_required
    assert used["bits_consumed"] == rep.bits_required
    return r.outputs


@pytest.mark.parametrize("gate,table", [(op_or, {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1}),
                                        (op_xor, {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0})])
def test_boolean_gates_truth_table(gate, table):
    b = CircuitBuilder()
    pairs = list(table)
    for x, y in pairs:
        b.output(gate(b, b.inp(0), b.inp(1)))
    out = run(b, {0: [x for x, _ in pairs], 1: [y for _, y in pairs]})
    assert out == [table[p] for p in pairs]
    assert cost(b.build()).mul_gates == 4


@pytest.mark.parametrize("x,k,m,expected", [(24576, 16, 7, 192), (100, 16, 7, 0), (128, 16, 7, 1),
                                            (0, 8, 3, 0), (255, 8, 1, 127)])
def test_trunc_examples(x, k, m, expected):
    b = CircuitBuilder()
    b.output(op_trunc(b, b.inp(0), k, m))
    assert run(b, {0: [x]}) == [expected]


def test_trunc_random_against_floor_division():
    rng = random.Random(5)
    b = CircuitBuilder()
    cases = []
    for _ in range(1000):
        k = rng.randint(2, 20)
        m = rng.randint(1, k - 1)
        x = rng.randrange(1 << k)
        cases.append((x, m))
        b.output(op_trunc(b, b.inp(0), k, m))
    out = run(b, {0: [x for x, _ in cases]}, n=2, seed=1)
    assert out == [x >> m for x, m in cases]


@pytest.mark.parametrize("x,k,expected", [(24576, 16, 1), (32768, 16, 0), (0, 16, 1), (65535, 16, 0)])
def test_lt_pow2(x, k, expected):
    b = CircuitBuilder()
    b.output(op_lt_pow2(b, b.inp(0), k))
    assert run(b, {0: [x]}) == [expected]


def test_compare_examples():
    b = CircuitBuilder(bits=8)
    b.output(op_compare(b, b.inp(0), b.inp(1)))
    b.output(op_compare(b, b.inp(0), b.inp(1)))
    assert run(b, {0: [5, 7], 1: [9, 7]}) == [1, 0]


def test_compare_exhaustive_four_bits():
    b = CircuitBuilder(bits=4)
    pairs = list(itertools.product(range(16), repeat=2))
    for _ in pairs:
        b.output(op_compare(b, b.inp(0), b.inp(1)))
    out = run(b, {0: [x for x, _ in pairs], 1: [y for _, y in pairs]}, n=2, seed=4)
    assert out == [1 if x < y else 0 for x, y in pairs]


def test_compare_random_32_bit():
    rng = random.Random(9)
    b = CircuitBuilder(bits=32)
    pairs = [(rng.getrandbits(32), rng.getrandbits(32)) for _ in range(200)]
    pairs += [(v, v) for v in (0, 2 ** 32 - 1)] + [(0, 2 ** 32 - 1), (2 ** 32 - 1, 0)]
    for _ in pairs:
        b.output(op_compare(b, b.inp(0), b.inp(1)))
    out = run(b, {0: [x for x, _ in pairs], 1: [y for _, y in pairs]}, n=3, seed=2)
    assert out == [int(x < y) for x, y in pairs]


def _float_inputs(b, l):
    x = SharedFloat(*(b.inp(0) for _ in range(4)))
    y = SharedFloat(*(b.inp(1) for _ in range(4)))
    return flmul(b, x, y, l)


def test_flmul_worked_example():
    l = 8
    x = encode_float(Fraction(3, 2), l)
    y = encode_float(2, l)
    assert x == (192, (-7) % P, 0, 0) and y == (128, (-6) % P, 0, 0)
    b = CircuitBuilder()
    for w in _float_inputs(b, l).wires():
        b.output(w)
    v, p, zz, s = run(b, {0: list(x), 1: list(y)})
    assert (v, DEFAULT_FIELD.signed(p), zz, s) == (192, -6, 0, 0)
    assert decode_float(v, p, zz, s) == 3


@pytest.mark.parametrize("x,y", [(0, Fraction(5, 4)), (Fraction(-3, 8), 0), (0, 0)])
def test_flmul_zero(x, y):
    l = 8
    b = CircuitBuilder()
    for w in _float_inputs(b, l).wires():
        b.output(w)
    out = run(b, {0: list(encode_float(x, l)), 1: list(encode_float(y, l))})
    assert out[0] == 0 and out[1] == 0 and out[2] == 1


def test_flmul_signs():
    l = 8
    b = CircuitBuilder()
    for w in _float_inputs(b, l).wires():
        b.output(w)
    cases = [(1.5, -2.0), (-1.5, -2.0), (-0.75, 3.0)]
    for x, y in cases:
        fx, fy = encode_float(x, l), encode_float(y, l)
        out = run(b, {0: list(fx), 1: list(fy)}, seed=3)
        assert decode_float(*out) == Fraction(x) * Fraction(y)
        assert out[3] == (1 if x * y < 0 else 0)


def test_flmul_random_matches_oracle_and_stays_normalized():
    l = 8
    rng = random.Random(21)
    b = CircuitBuilder()
    cases = []
    xs, ys = [], []
    for _ in range(60):
        x = (rng.randint(128, 255), rng.randint(-20, 20) % P, 0, rng.randint(0, 1))
        y = (rng.randint(128, 255), rng.randint(-20, 20) % P, 0, rng.randint(0, 1))
        cases.append((x, y))
        xs += list(x)
        ys += list(y)
        for w in _float_inputs(b, l).wires():
            b.output(w)
    out = run(b, {0: xs, 1: ys}, seed=8)
    for k, (x, y) in enumerate(cases):
        v, p, z, s = out[4 * k:4 * k + 4]
        assert 128 <= v < 256 and z == 0
        ov, op, oz, os_ = float_oracle(x, y, l)
        assert (v, DEFAULT_FIELD.signed(p), z, s) == (ov, op, oz, os_)


def test_encode_decode_roundtrip():
    for value in (Fraction(3, 2), -2, Fraction(1, 1024), 255, 12345):
        enc = encode_float(value, 16)
        assert 2 ** 15 <= enc[0] < 2 ** 16
        assert decode_float(*enc) == Fraction(value)
    assert encode_float(0, 8) == (0, 0, 1, 0)


def test_truncation_needs_field_headroom():
    with pytest.raises(ValueError):
        stat_param(60, DEFAULT_FIELD)
    assert stat_param(16, DEFAULT_FIELD) == 40
    assert stat_param(16, PrimeField(2 ** 31 - 1)) == 13


def test_missing_bits_is_a_resource_error():
    b = CircuitBuilder()
    b.output(op_trunc(b, b.inp(0), 16, 7))
    c = b.build()
    rep = cost(c)
    bundle = Dealer(2, seed=0).bundle(rep.triples_required, 1, rep.singles_required, rep.bits_required - 1)
    with pytest.raises(ResourceError):
        run_session(c, {0: [5]}, bundle)
