"""Additive secret sharing with information-theoretic MACs.

A value ``x`` is held as ``n`` tuples ``(x_i, m_i)`` with ``sum x_i = x`` and
``sum m_i = alpha * x`` where ``alpha = sum alpha_i`` is the global MAC key.
All operations here are local: no party needs to talk to anyone else.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .field import DEFAULT_FIELD, PrimeField
from .rng import field_elements


class SharingError(ValueError):
    pass


@dataclass(frozen=True)
class MacKeyShare:
    party: int
    alpha_i: int


@dataclass(frozen=True)
class AuthShare:
    value_share: int
    mac_share: int
    owner: int


class Origin(Enum):
    OPENED = "opened"
    CONSTANT = "broadcast-constant"


@dataclass(frozen=True)
class PublicValue:
    value: int
    origin: Origin = Origin.CONSTANT


def share(secret: int, n: int, rng: np.random.Generator,
          field: PrimeField = DEFAULT_FIELD) -> list[int]:
    """Split ``secret`` into ``n`` uniformly random parts summing to it."""
    if n < 2:
        raise SharingError("need at least two parties")
    p = field.p
    parts = field_elements(rng, p, n - 1)
    parts.append((secret - sum(parts)) % p)
    return parts


def reconstruct(parts, n: int | None = None, field: PrimeField = DEFAULT_FIELD) -> int:
    parts = list(parts)
    if n is not None and len(parts) != n:
        raise SharingError(f"insufficient shares: got {len(parts)} of {n}")
    if any(v is None for v in parts):
        raise SharingError("insufficient shares: a part is missing")
    return sum(parts) % field.p


def auth_share(secret: int, alpha: int, n: int, rng: np.random.Generator,
               field: PrimeField = DEFAULT_FIELD) -> list[AuthShare]:
    """Dealer-side authenticated sharing of ``secret`` under key ``alpha``."""
    xs = share(secret, n, rng, field)
    ms = share(alpha * secret % field.p, n, rng, field)
    return [AuthShare(x, m, i) for i, (x, m) in enumerate(zip(xs, ms))]


def add_shares(a: AuthShare, b: AuthShare, field: PrimeField = DEFAULT_FIELD) -> AuthShare:
    if a.owner != b.owner:
        raise SharingError("shares belong to different parties")
    p = field.p
    return AuthShare((a.value_share + b.value_share) % p, (a.mac_share + b.mac_share) % p, a.owner)


def add_public(a: AuthShare, c: PublicValue, key: MacKeyShare, leader: int = 0,
               field: PrimeField = DEFAULT_FIELD) -> AuthShare:
    """Add a public constant: only ``leader`` shifts its value share, everyone shifts the MAC."""
    if key.party != a.owner:
        raise SharingError("MAC key share belongs to another party")
    p = field.p
    x = a.value_share + c.value if a.owner == leader else a.value_share
    return AuthShare(x % p, (a.mac_share + c.value * key.alpha_i) % p, a.owner)


def scalar_mul(a: AuthShare, k: PublicValue, field: PrimeField = DEFAULT_FIELD) -> AuthShare:
    p = field.p
    return AuthShare(a.value_share * k.value % p, a.mac_share * k.value % p, a.owner)


def mac_holds(shares, alpha: int, field: PrimeField = DEFAULT_FIELD) -> bool:
    """Dealer-view check that ``sum m_i == alpha * sum x_i``."""
    p = field.p
    x = sum(s.value_share for s in shares) % p
    m = sum(s.mac_share for s in shares) % p
    return m == alpha * x % p
