"""Arithmetic circuit IR, text format, expression compiler and cost model.

Text format, one instruction per line, ``#`` starts a comment::

    bits 32                      # comparison bit-width for ``cmp``
    in <party> <w>               # private input of <party>
    const <c> <w>                # public constant
    add <a> <b> <w>
    addc <c> <a> <w>
    smul <c> <a> <w>
    mul <a> <b> <w>
    lin <c0> <c1> <a1> ... <w>   # w = c0 + sum c_j * a_j
    out <w>

Macro gates, lowered by :func:`expand` before costing or execution::

    cmp <a> <b> <w>              # w = 1 if a < b  (a, b < 2**bits)
    trunc <k> <m> <a> <w>        # w = a >> m      (a < 2**k)
    ltp <k> <a> <w>              # w = 1 if a < 2**(k-1)
    flmul <l> v1 p1 z1 s1 v2 p2 z2 s2 v p z s

Lowered circuits also use ``rbit``, ``rint``, ``open``, ``pbit`` and
``pmod`` (see :mod:`mpcnet.gadgets`).  Every wire is either *secret*
(authenticated shares) or *public* (same clear value at every party); the
kind is inferred statically.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import DEFAULT_FIELD, PrimeField

DEFAULT_BITS = 32

# op -> (number of params, number of inputs or None for variadic, number of outputs)
PRIMITIVE_OPS = {
    "in": (1, 0, 1),
    "const": (1, 0, 1),
    "add": (0, 2, 1),
    "addc": (1, 1, 1),
    "smul": (1, 1, 1),
    "mul": (0, 2, 1),
    "lin": (None, None, 1),
    "out": (0, 1, 0),
    "rbit": (0, 0, 1),
    "rint": (1, 0, 1),
    "open": (0, 1, 1),
    "pbit": (1, 1, 1),
    "pmod": (1, 1, 1),
}
MACRO_OPS = {
    "cmp": (0, 2, 1),
    "trunc": (2, 1, 1),
    "ltp": (1, 1, 1),
    "flmul": (1, 8, 4),
}
ALL_OPS = {**PRIMITIVE_OPS, **MACRO_OPS}

_WIRE_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


class CircuitError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Gate:
    op: str
    ins: tuple = ()
    outs: tuple = ()
    params: tuple = ()
    line: int | None = dc_field(default=None, compare=False)

    @property
    def out(self):
        return self.outs[0] if self.outs else None


@dataclass(frozen=True)
class Circuit:
    gates: tuple
    bits: int = DEFAULT_BITS
    modulus: int = DEFAULT_FIELD.p

    @property
    def inputs(self) -> list:
        return [g for g in self.gates if g.op == "in"]

    @property
    def outputs(self) -> list:
        return [g.ins[0] for g in self.gates if g.op == "out"]

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    @property
    def is_primitive(self) -> bool:
        return all(g.op in PRIMITIVE_OPS for g in self.gates)

    def inputs_per_party(self) -> dict:
        counts: dict = {}
        for g in self.inputs:
            counts[g.params[0]] = counts.get(g.params[0], 0) + 1
        return counts

    def digest(self) -> bytes:
        return hashlib.sha3_256(emit_circuit(self).encode()).digest()


@dataclass(frozen=True)
class CostReport:
    mul_gates: int
    triples_required: int
    depth: int
    masks_required: dict
    bits_required: int
    singles_required: int
    opens: int
    rounds: int


# -- validation / ordering -------------------------------------------------

def _check_arity(op, ins, outs, params, line):
    np_, ni, no = ALL_OPS[op]
    if op == "lin":
        if len(params) != len(ins) + 1 or not ins:
            raise CircuitError("lin needs c0 followed by coefficient/wire pairs", line)
    else:
        if len(params) != np_ or len(ins) != ni:
            raise CircuitError(f"{op}: wrong number of operands", line)
    if len(outs) != no:
        raise CircuitError(f"{op}: wrong number of outputs", line)


def wire_kinds(gates) -> dict:
    """Map each wire to ``"s"`` (secret) or ``"p"`` (public)."""
    kind = {}
    for g in gates:
        ks = [kind[w] for w in g.ins]
        op = g.op
        if op in ("in", "rbit", "rint"):
            k = "s"
        elif op == "const":
            k = "p"
        elif op == "open":
            if ks[0] != "s":
                raise CircuitError("open of a public wire", g.line)
            k = "p"
        elif op in ("pbit", "pmod"):
            if ks[0] != "p":
                raise CircuitError(f"{op} needs a public wire", g.line)
            k = "p"
        elif op == "out":
            continue
        else:
            k = "s" if "s" in ks else "p"
        for w in g.outs:
            kind[w] = k
    return kind


def _toposort(gates) -> list:
    producer = {}
    for idx, g in enumerate(gates):
        for w in g.outs:
            if w in producer:
                raise CircuitError(f"wire {w!r} redefined", g.line)
            producer[w] = idx
    for g in gates:
        for w in g.ins:
            if w not in producer:
                raise CircuitError(f"dangling wire {w!r}", g.line)
    # stable Kahn: keep the written order whenever it is already valid
    deps = [sorted({producer[w] for w in g.ins}) for g in gates]
    users = [[] for _ in gates]
    pending = [len(d) for d in deps]
    for idx, d in enumerate(deps):
        for j in d:
            users[j].append(idx)
    import heapq
    ready = [i for i, c in enumerate(pending) if c == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for u in users[i]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(ready, u)
    if len(order) != len(gates):
        stuck = min(i for i, c in enumerate(pending) if c > 0)
        raise CircuitError("cycle through wire(s) " + ", ".join(gates[stuck].outs), gates[stuck].line)
    return [gates[i] for i in order]


def make_circuit(gates, bits: int = DEFAULT_BITS, modulus: int = DEFAULT_FIELD.p) -> Circuit:
    gates = list(gates)
    for g in gates:
        if g.op not in ALL_OPS:
            raise CircuitError(f"unknown opcode {g.op!r}", g.line)
        _check_arity(g.op, g.ins, g.outs, g.params, g.line)
    ordered = _toposort(gates)
    wire_kinds(ordered)
    return Circuit(tuple(ordered), bits, modulus)


# -- text format -----------------------------------------------------------

def _int(tok, line):
    try:
        return int(tok, 10)
    except ValueError:
        raise CircuitError(f"expected a decimal constant, got {tok!r}", line) from None


def _wire(tok, line):
    if not _WIRE_RE.match(tok):
        raise CircuitError(f"bad wire name {tok!r}", line)
    return tok


def parse_circuit(text: str, modulus: int = DEFAULT_FIELD.p) -> Circuit:
    gates = []
    bits = DEFAULT_BITS
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        op, *toks = body.split()
        if op == "bits":
            if len(toks) != 1:
                raise CircuitError("bits takes one value", lineno)
            bits = _int(toks[0], lineno)
            continue
        if op not in ALL_OPS:
            raise CircuitError(f"unknown opcode {op!r}", lineno)
        if op == "lin":
            if len(toks) < 4 or len(toks) % 2:
                raise CircuitError("lin needs c0, pairs, and an output", lineno)
            params = [_int(toks[0], lineno)]
            ins = []
            for k in range(1, len(toks) - 1, 2):
                params.append(_int(toks[k], lineno))
                ins.append(_wire(toks[k + 1], lineno))
            gate = Gate(op, tuple(ins), (_wire(toks[-1], lineno),), tuple(params), lineno)
        else:
            np_, ni, no = ALL_OPS[op]
            if len(toks) != np_ + ni + no:
                raise CircuitError(f"{op} takes {np_ + ni + no} operands, got {len(toks)}", lineno)
            params = tuple(_int(t, lineno) for t in toks[:np_])
            ins = tuple(_wire(t, lineno) for t in toks[np_:np_ + ni])
            outs = tuple(_wire(t, lineno) for t in toks[np_ + ni:])
            gate = Gate(op, ins, outs, params, lineno)
        gates.append(gate)
    try:
        return make_circuit(gates, bits, modulus)
    except CircuitError:
        raise


def emit_circuit(c: Circuit) -> str:
    lines = [f"bits {c.bits}"]
    for g in c.gates:
        if g.op == "lin":
            terms = " ".join(f"{k} {w}" for k, w in zip(g.params[1:], g.ins))
            lines.append(f"lin {g.params[0]} {terms} {g.outs[0]}")
        else:
            toks = [str(v) for v in g.params] + list(g.ins) + list(g.outs)
            lines.append(" ".join([g.op] + toks))
    return "\n".join(lines) + "\n"


# -- builder ---------------------------------------------------------------

class CircuitBuilder:
    """Append-only gate list with fresh wire names."""

    def __init__(self, bits: int = DEFAULT_BITS, modulus: int = DEFAULT_FIELD.p, prefix: str = "_w"):
        self.gates: list = []
        self.bits = bits
        self.modulus = modulus
        self._prefix = prefix
        self._next = 0

    def fresh(self) -> str:
        self._next += 1
        return f"{self._prefix}{self._next}"

    def emit(self, op, ins=(), params=(), out=None) -> str:
        out = out or self.fresh()
        self.gates.append(Gate(op, tuple(ins), (out,), tuple(params)))
        return out

    def inp(self, party: int, out=None):
        return self.emit("in", params=(party,), out=out)

    def const(self, c: int, out=None):
        return self.emit("const", params=(c,), out=out)

    def add(self, a, b, out=None):
        return self.emit("add", (a, b), out=out)

    def sub(self, a, b, out=None):
        return self.lin(0, [(1, a), (-1, b)], out=out)

    def addc(self, c: int, a, out=None):
        return self.emit("addc", (a,), (c,), out=out)

    def smul(self, c: int, a, out=None):
        return self.emit("smul", (a,), (c,), out=out)

    def mul(self, a, b, out=None):
        return self.emit("mul", (a, b), out=out)

    def lin(self, c0: int, terms, out=None):
        terms = list(terms)
        return self.emit("lin", [w for _, w in terms], [c0] + [k for k, _ in terms], out=out)

    def rbit(self, out=None):
        return self.emit("rbit", out=out)

    def rint(self, nbits: int, out=None):
        return self.emit("rint", params=(nbits,), out=out)

    def open(self, a, out=None):
        return self.emit("open", (a,), out=out)

    def pbit(self, i: int, a, out=None):
        return self.emit("pbit", (a,), (i,), out=out)

    def pmod(self, m: int, a, out=None):
        return self.emit("pmod", (a,), (m,), out=out)

    def cmp(self, a, b, out=None):
        return self.emit("cmp", (a, b), out=out)

    def trunc(self, k: int, m: int, a, out=None):
        return self.emit("trunc", (a,), (k, m), out=out)

    def ltp(self, k: int, a, out=None):
        return self.emit("ltp", (a,), (k,), out=out)

    def flmul(self, l: int, x, y, outs=None):
        outs = tuple(outs) if outs else tuple(self.fresh() for _ in range(4))
        self.gates.append(Gate("flmul", tuple(x) + tuple(y), outs, (l,)))
        return outs

    def output(self, a):
        self.gates.append(Gate("out", (a,)))

    def build(self) -> Circuit:
        return make_circuit(self.gates, self.bits, self.modulus)


# -- lowering and cost -----------------------------------------------------

def expand(c: Circuit) -> Circuit:
    """Lower macro gates into primitive gates."""
    if c.is_primitive:
        return c
    from . import gadgets

    b = CircuitBuilder(c.bits, c.modulus, prefix="_g")
    taken = {w for g in c.gates for w in g.outs}
    while f"{b._prefix}{b._next + 1}" in taken:
        b._prefix += "_"
    field = PrimeField(c.modulus)
    for g in c.gates:
        if g.op in PRIMITIVE_OPS:
            b.gates.append(g)
        elif g.op == "cmp":
            gadgets.lower_compare(b, g.ins[0], g.ins[1], c.bits, field, out=g.outs[0])
        elif g.op == "trunc":
            gadgets.lower_trunc(b, g.ins[0], g.params[0], g.params[1], field, out=g.outs[0])
        elif g.op == "ltp":
            gadgets.lower_lt_pow2(b, g.ins[0], g.params[0], field, out=g.outs[0])
        elif g.op == "flmul":
            gadgets.lower_flmul(b, g.ins[:4], g.ins[4:], g.params[0], field, outs=g.outs)
    return make_circuit(b.gates, c.bits, c.modulus)


def levels(c: Circuit, kinds: dict | None = None) -> dict:
    """Communication level of every wire: secret multiplications and opens add one."""
    kinds = kinds if kinds is not None else wire_kinds(c.gates)
    level = {}
    for g in c.gates:
        if g.op == "out":
            continue
        base = max((level[w] for w in g.ins), default=0)
        interactive = (g.op == "mul" and kinds[g.ins[0]] == "s" and kinds[g.ins[1]] == "s") or g.op == "open"
        level[g.outs[0]] = base + 1 if interactive else base
    return level


def cost(c: Circuit) -> CostReport:
    c = expand(c)
    kinds = wire_kinds(c.gates)
    return primitive_cost(c, kinds, levels(c, kinds))


def primitive_cost(c: Circuit, kinds: dict, lv: dict) -> CostReport:
    """Cost of an already expanded circuit whose wire kinds and levels are known."""
    depth = {}
    muls = opens = bits = 0
    mul_levels = set()
    for g in c.gates:
        if g.op == "out":
            continue
        d = max((depth[w] for w in g.ins), default=0)
        if g.op == "mul" and kinds[g.ins[0]] == "s" and kinds[g.ins[1]] == "s":
            muls += 1
            d += 1
            mul_levels.add(lv[g.out])
        elif g.op == "open":
            opens += 1
            mul_levels.add(lv[g.out])
        elif g.op == "rbit":
            bits += 1
        elif g.op == "rint":
            bits += g.params[0]
        depth[g.out] = d
    return CostReport(
        mul_gates=muls,
        triples_required=2 * muls,
        depth=max(depth.values(), default=0),
        masks_required=c.inputs_per_party(),
        bits_required=bits,
        singles_required=muls + 1,
        opens=opens,
        rounds=len(mul_levels),
    )


# -- plaintext evaluation ----------------------------------------------------

class MissingInput(KeyError):
    pass


def _flmul_plain(l, x, y, p):
    v1, p1, z1, s1 = x
    v2, p2, z2, s2 = y
    v = (v1 * v2) >> (l - 1)
    b = 1 if v < (1 << l) else 0
    v = (v + b * v) >> 1
    z = z1 + z2 - z1 * z2
    s = s1 + s2 - 2 * s1 * s2
    e = (p1 + p2 + l - b) * (1 - z) % p
    return v % p, e, z % p, s % p


def eval_plaintext(c: Circuit, inputs: dict, rng: np.random.Generator | None = None) -> list:
    """Evaluate in the clear.  ``inputs`` maps party -> list of values in input-gate order."""
    p = c.modulus
    rng = rng if rng is not None else np.random.default_rng(0)
    cursor: dict = {}
    val: dict = {}
    outs = []
    for g in c.gates:
        op = g.op
        a = [val[w] for w in g.ins]
        if op == "in":
            party = g.params[0]
            k = cursor.get(party, 0)
            try:
                r = inputs[party][k] % p
            except (KeyError, IndexError):
                raise MissingInput(f"missing input #{k} of party {party}") from None
            cursor[party] = k + 1
        elif op == "const":
            r = g.params[0] % p
        elif op == "add":
            r = (a[0] + a[1]) % p
        elif op == "addc":
            r = (a[0] + g.params[0]) % p
        elif op == "smul":
            r = a[0] * g.params[0] % p
        elif op == "mul":
            r = a[0] * a[1] % p
        elif op == "lin":
            r = (g.params[0] + sum(k * x for k, x in zip(g.params[1:], a))) % p
        elif op == "out":
            outs.append(a[0])
            continue
        elif op == "rbit":
            r = int(rng.integers(0, 2))
        elif op == "rint":
            r = sum(int(rng.integers(0, 2)) << i for i in range(g.params[0]))
        elif op == "open":
            r = a[0]
        elif op == "pbit":
            r = (a[0] >> g.params[0]) & 1
        elif op == "pmod":
            r = a[0] % (1 << g.params[0])
        elif op == "cmp":
            r = 1 if a[0] < a[1] else 0
        elif op == "trunc":
            r = a[0] >> g.params[1]
        elif op == "ltp":
            r = 1 if a[0] < (1 << (g.params[0] - 1)) else 0
        elif op == "flmul":
            for w, v in zip(g.outs, _flmul_plain(g.params[0], a[:4], a[4:], p)):
                val[w] = v
            continue
        else:  # pragma: no cover - rejected at construction
            raise CircuitError(f"unknown opcode {op!r}", g.line)
        val[g.outs[0]] = r
    return outs


# -- expression compiler -----------------------------------------------------

class BitTypeError(TypeError):
    pass


class Expr:
    is_bit = False

    def __add__(self, other):
        return BinOp("+", self, lift(other))

    def __radd__(self, other):
        return BinOp("+", lift(other), self)

    def __sub__(self, other):
        return BinOp("-", self, lift(other))

    def __rsub__(self, other):
        return BinOp("-", lift(other), self)

    def __mul__(self, other):
        return BinOp("*", self, lift(other))

    def __rmul__(self, other):
        return BinOp("*", lift(other), self)


@dataclass(frozen=True, eq=False)
class Var(Expr):
    party: int
    name: str
    bit: bool = False

    @property
    def is_bit(self):
        return self.bit


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: int

    @property
    def is_bit(self):
        return self.value in (0, 1)


@dataclass(frozen=True, eq=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=False)
class BoolOp(Expr):
    op: str
    args: tuple

    is_bit = True


def lift(x) -> Expr:
    return x if isinstance(x, Expr) else Const(int(x))


def _boolean(op, *args):
    args = tuple(lift(a) for a in args)
    for a in args:
        if not a.is_bit:
            raise BitTypeError(f"{op} applied to a non-bit operand {a!r}")
    return BoolOp(op, args)


def OR(a, b):
    return _boolean("OR", a, b)


def AND(a, b):
    return _boolean("AND", a, b)


def XOR(a, b):
    return _boolean("XOR", a, b)


def NOT(a):
    return _boolean("NOT", a)


def compile_expr(*exprs, modulus: int = DEFAULT_FIELD.p, bits: int = DEFAULT_BITS) -> Circuit:
    """Compile expression trees to one circuit with an output per expression.

    Boolean operators are lowered to field arithmetic on 0/1 values:
    ``OR = a+b-ab``, ``AND = ab``, ``NOT = 1-a``, ``XOR = a+b-2ab``.
    """
    b = CircuitBuilder(bits, modulus, prefix="e")
    memo: dict = {}
    var_wires: dict = {}

    # inputs first, in order of first appearance, so party input order is stable
    def collect(e):
        if isinstance(e, Var):
            if id(e) not in var_wires:
                var_wires[id(e)] = b.inp(e.party, out=e.name if _WIRE_RE.match(e.name) else None)
        elif isinstance(e, BinOp):
            collect(e.left)
            collect(e.right)
        elif isinstance(e, BoolOp):
            for a in e.args:
                collect(a)

    def go(e) -> str:
        key = id(e)
        if key in memo:
            return memo[key]
        if isinstance(e, Var):
            w = var_wires[key]
        elif isinstance(e, Const):
            w = b.const(e.value)
        elif isinstance(e, BinOp):
            x, y = go(e.left), go(e.right)
            if e.op == "+":
                w = b.add(x, y)
            elif e.op == "-":
                w = b.sub(x, y)
            elif e.op == "*":
                w = b.mul(x, y)
            else:
                raise ValueError(f"unknown operator {e.op}")
        elif isinstance(e, BoolOp):
            args = [go(a) for a in e.args]
            if e.op == "NOT":
                w = b.lin(1, [(-1, args[0])])
            else:
                prod = b.mul(args[0], args[1])
                if e.op == "AND":
                    w = prod
                elif e.op == "OR":
                    w = b.lin(0, [(1, args[0]), (1, args[1]), (-1, prod)])
                else:
                    w = b.lin(0, [(1, args[0]), (1, args[1]), (-2, prod)])
        else:
            raise TypeError(f"not an expression: {e!r}")
        memo[key] = w
        return w

    for e in exprs:
        collect(lift(e))
    for e in exprs:
        b.output(go(lift(e)))
    return b.build()
