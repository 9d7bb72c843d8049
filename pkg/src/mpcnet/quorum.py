"""Commit-reveal randomness and computation-node selection.

Each node commits to a 32-byte seed, all commitments are published, then
seeds are revealed.  The combined value ``P`` is the sum of the revealed
seeds (read as little-endian integers) modulo the field prime.  Every node
derives the quorum locally from ``P``; no selection message is broadcast.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .field import DEFAULT_FIELD

SEED_BYTES = 32


class QuorumError(ValueError):
    pass


class VerificationFailure(Exception):
    """A reveal did not match its commitment."""

    def __init__(self, nodes):
        self.nodes = sorted(nodes)
        super().__init__(f"reveal does not match commitment for node(s) {self.nodes}")


def seed_bytes(s) -> bytes:
    if isinstance(s, int):
        return s.to_bytes(SEED_BYTES, "little")
    if len(s) != SEED_BYTES:
        raise QuorumError(f"seed must be {SEED_BYTES} bytes")
    return bytes(s)


def commit_seed(s) -> bytes:
    return hashlib.sha3_256(seed_bytes(s)).digest()


@dataclass
class Ticket:
    node: int
    stake: object
    commitment: bytes
    revealed: bytes | None = None


@dataclass(frozen=True)
class QuorumResult:
    P: int
    selected: tuple
    prover: int | None = None


def make_tickets(seeds: dict, stake=0) -> list:
    return [Ticket(node, stake, commit_seed(s)) for node, s in sorted(seeds.items())]


def drf_round(tickets, reveals: dict, modulus: int = DEFAULT_FIELD.p) -> int:
    """Combined randomness; raises :class:`VerificationFailure` naming bad revealers."""
    bad = []
    total = 0
    for t in tickets:
        if t.node not in reveals:
            bad.append(t.node)
            continue
        raw = seed_bytes(reveals[t.node])
        if hashlib.sha3_256(raw).digest() != t.commitment:
            bad.append(t.node)
            continue
        t.revealed = raw
        total += int.from_bytes(raw, "little")
    if bad:
        raise VerificationFailure(bad)
    return total % modulus


def honest_tickets(tickets, reveals: dict) -> list:
    """Tickets whose reveal matches; used to exclude forgers and retry."""
    return [t for t in tickets if t.node in reveals
            and hashlib.sha3_256(seed_bytes(reveals[t.node])).digest() == t.commitment]


class _Stream:
    """Deterministic integer stream: SHA3-256(P || counter)."""

    def __init__(self, P: int):
        self.base = P.to_bytes(32, "little")
        self.counter = 0

    def below(self, bound: int) -> int:
        # rejection sampling on 64-bit words keeps the draw unbiased
        limit = (1 << 64) - (1 << 64) % bound
        while True:
            block = hashlib.sha3_256(self.base + self.counter.to_bytes(8, "little")).digest()
            self.counter += 1
            for k in range(0, 32, 8):
                v = int.from_bytes(block[k:k + 8], "little")
                if v < limit:
                    return v % bound

    def unit(self) -> float:
        return self.below(1 << 53) / float(1 << 53)


def select_quorum(P: int, eligible, q: int, must_include=(), weights: dict | None = None) -> QuorumResult:
    eligible = list(eligible)
    must = list(dict.fromkeys(must_include))
    if q > len(eligible):
        raise QuorumError(f"quorum size {q} exceeds {len(eligible)} eligible nodes")
    if not set(must) <= set(eligible):
        raise QuorumError("must-include nodes are not all eligible")
    if len(must) > q:
        raise QuorumError("more must-include nodes than quorum seats")
    rest = [e for e in eligible if e not in must]
    need = q - len(must)
    stream = _Stream(P)
    if weights is None:
        # partial Fisher-Yates: first `need` slots are a uniform sample
        for i in range(need):
            j = i + stream.below(len(rest) - i)
            rest[i], rest[j] = rest[j], rest[i]
        chosen = rest[:need]
    else:
        chosen = []
        pool = list(rest)
        for _ in range(need):
            w = [max(0.0, float(weights.get(e, 1.0))) for e in pool]
            total = sum(w)
            if total <= 0:
                k = stream.below(len(pool))
            else:
                x = stream.unit() * total
                k = 0
                acc = w[0]
                while acc <= x and k < len(pool) - 1:
                    k += 1
                    acc += w[k]
            chosen.append(pool.pop(k))
    return QuorumResult(P, tuple(must + chosen))


def lottery_step(candidates, P: int) -> tuple:
    candidates = list(candidates)
    if len(candidates) < 2:
        raise QuorumError("lottery needs at least two candidates")
    k = P % len(candidates)
    return candidates[k], candidates[:k] + candidates[k + 1:]


def knows_selected(node, result: QuorumResult) -> bool:
    """What a node learns locally: whether it is in the quorum."""
    return node in result.selected
