"""Sealed-bid second-price (Vickrey) auction as a comparison tournament.

Each party inputs one bid.  Bids are merged pairwise up a binary tree;
every node carries ``(max, second, argmax)``.  Comparisons are strict, so
on equal bids the lower index wins.
"""

from __future__ import annotations

from .circuit import Circuit, CircuitBuilder
from .field import DEFAULT_FIELD


def _merge(b: CircuitBuilder, left, right):
    (m1, s1, i1), (m2, s2, i2) = left, right
    c = b.cmp(m1, m2)                                   # right strictly larger
    mx = b.lin(0, [(1, m1), (1, b.mul(c, b.sub(m2, m1)))])
    idx = b.lin(0, [(1, i1), (1, b.mul(c, b.sub(i2, i1)))])
    loser = b.lin(0, [(1, m1), (1, m2), (-1, mx)])
    if s1 is None and s2 is None:
        return mx, loser, idx
    if s1 is None or s2 is None:
        ws = s2 if s1 is None else s1
        ws = b.mul(c, ws) if s1 is None else b.lin(0, [(1, s1), (-1, b.mul(c, s1))])
    else:
        ws = b.lin(0, [(1, s1), (1, b.mul(c, b.sub(s2, s1)))])
    d = b.cmp(loser, ws)
    second = b.lin(0, [(1, loser), (1, b.mul(d, b.sub(ws, loser)))])
    return mx, second, idx


def vickrey_circuit(n_bidders: int, bits: int = 32, modulus: int = DEFAULT_FIELD.p) -> Circuit:
    """Outputs ``[winner, price]``; party ``i`` supplies bid ``i``."""
    if n_bidders < 2:
        raise ValueError("an auction needs at least two bidders")
    b = CircuitBuilder(bits=bits, modulus=modulus)
    nodes = [(b.inp(i, out=f"bid{i}"), None, b.const(i)) for i in range(n_bidders)]
    while len(nodes) > 1:
        nxt = [_merge(b, nodes[k], nodes[k + 1]) for k in range(0, len(nodes) - 1, 2)]
        if len(nodes) % 2:
            nxt.append(nodes[-1])
        nodes = nxt
    _, price, winner = nodes[0]
    b.output(winner)
    b.output(price)
    return b.build()


def vickrey_plain(bids) -> tuple[int, int]:
    """Winner (lowest index among the highest bids) and the second-highest bid."""
    bids = list(bids)
    top = max(bids)
    winner = bids.index(top)
    rest = bids[:winner] + bids[winner + 1:]
    return winner, max(rest)
