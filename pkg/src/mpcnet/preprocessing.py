"""Dealer-emulated offline phase.

A trusted dealer produces the same material the encrypted offline phase
would: per-party MAC key shares, Beaver triples, input masks, single random
values and random bits, all authenticated under one fresh key per session.

The dealer's clear view (``alpha`` and the secrets it shared) lives on the
:class:`Dealer` object only.  Parties receive a :class:`PartyPreproc`
slice, which holds nothing but their own shares.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import DEFAULT_FIELD, PrimeField
from .rng import derive_rng
from .sharing import MacKeyShare

MAGIC = b"ARPAPRE1"


class ResourceError(RuntimeError):
    """Preprocessed material ran out."""


class PreprocCorrupt(ValueError):
    """Bundle file is malformed or bound to another session."""


def session_id_for(seed: int) -> bytes:
    return hashlib.sha3_256(b"session" + seed.to_bytes(16, "little", signed=True)).digest()[:16]


def _share_matrix(secrets, n: int, rng: np.random.Generator, p: int) -> np.ndarray:
    """Row ``k`` holds ``n`` additive shares of ``secrets[k]``."""
    count = len(secrets)
    out = np.empty((count, n), dtype=np.uint64)
    if count == 0:
        return out
    rand = rng.integers(0, p, size=(count, n - 1), dtype=np.uint64)
    out[:, : n - 1] = rand
    acc = np.zeros(count, dtype=np.uint64)
    pp = np.uint64(p)
    for j in range(n - 1):
        acc = (acc + rand[:, j]) % pp
    sec = np.array(secrets, dtype=np.uint64) % pp
    out[:, n - 1] = (sec + pp - acc) % pp
    return out


def _auth_columns(values, alpha: int, n: int, rng, p: int):
    """Per-party lists of ``(x_i, m_i)`` for each value."""
    xs = _share_matrix(values, n, rng, p)
    ms = _share_matrix([alpha * v % p for v in values], n, rng, p)
    return [list(zip(xs[:, i].tolist(), ms[:, i].tolist())) for i in range(n)]


@dataclass
class PartyPreproc:
    """One party's consuming view of the preprocessed material."""

    party: int
    alpha_i: int
    triples: list = dc_field(default_factory=list)       # (a, ma, b, mb, c, mc)
    masks: dict = dc_field(default_factory=dict)         # owner -> [(r, mr)]
    own_mask_values: list = dc_field(default_factory=list)
    singles: list = dc_field(default_factory=list)       # (t, mt)
    bits: list = dc_field(default_factory=list)          # (b, mb)
    used: dict = dc_field(default_factory=lambda: {"triples": 0, "singles": 0, "bits": 0})
    used_masks: dict = dc_field(default_factory=dict)

    def take_triples(self, count: int) -> list:
        return self._take("triples", self.triples, count)

    def take_singles(self, count: int) -> list:
        return self._take("singles", self.singles, count)

    def take_bits(self, count: int) -> list:
        return self._take("bits", self.bits, count)

    def _take(self, kind, pool, count):
        start = self.used[kind]
        if start + count > len(pool):
            raise ResourceError(f"party {self.party}: {kind} exhausted "
                                f"(need {count}, {len(pool) - start} left)")
        self.used[kind] = start + count
        return pool[start:start + count]

    def take_mask(self, owner: int):
        k = self.used_masks.get(owner, 0)
        pool = self.masks.get(owner, [])
        if k >= len(pool):
            raise ResourceError(f"party {self.party}: masks of party {owner} exhausted")
        self.used_masks[owner] = k + 1
        if owner == self.party:
            return pool[k], self.own_mask_values[k]
        return pool[k], None

    def remaining(self, kind: str) -> int:
        return len(getattr(self, kind)) - self.used[kind]


@dataclass
class PreprocBundle:
    session_id: bytes
    n: int
    field: PrimeField
    parties: list                      # PartyPreproc per party

    @property
    def counts(self) -> dict:
        p0 = self.parties[0]
        return {
            "triples": len(p0.triples),
            "masks": len(p0.masks.get(0, [])),
            "singles": len(p0.singles),
            "bits": len(p0.bits),
        }

    def consumed(self) -> dict:
        p0 = self.parties[0]
        return {"triples": p0.used["triples"], "singles": p0.used["singles"],
                "bits": p0.used["bits"], "masks": dict(p0.used_masks)}


class Dealer:
    """Trusted-dealer stand-in for the offline phase.

    ``alpha`` and every generated secret are kept in ``view`` for test
    harnesses; nothing in :mod:`mpcnet.engine` reads it.
    """

    def __init__(self, n: int, seed: int, field: PrimeField = DEFAULT_FIELD):
        if n < 2:
            raise ValueError("need at least two parties")
        self.n = n
        self.field = field
        self.seed = seed
        self.rng = derive_rng(seed, "dealer")
        self.key_shares = dealer_init(n, self.rng, field)
        self.alpha = sum(k.alpha_i for k in self.key_shares) % field.p
        self.view = {"triples": [], "masks": {}, "singles": [], "bits": []}

    def triples(self, count: int):
        out = gen_triples(count, self.n, self.alpha, self.rng, self.field)
        self.view["triples"].extend(out[1])
        return out[0]

    def masks(self, count: int, owner: int):
        per_party, values = gen_masks(count, self.n, self.alpha, self.rng, self.field)
        self.view["masks"].setdefault(owner, []).extend(values)
        return per_party, values

    def singles(self, count: int):
        per_party, values = gen_masks(count, self.n, self.alpha, self.rng, self.field)
        self.view["singles"].extend(values)
        return per_party

    def bits(self, count: int):
        per_party, values = gen_bits(count, self.n, self.alpha, self.rng, self.field)
        self.view["bits"].extend(values)
        return per_party

    def bundle(self, triples: int, masks: int, singles: int, bits: int,
               session_id: bytes | None = None) -> PreprocBundle:
        """Material for one session; ``masks`` is per input-providing party."""
        sid = session_id if session_id is not None else session_id_for(self.seed)
        parties = [PartyPreproc(i, self.key_shares[i].alpha_i) for i in range(self.n)]
        for i, rows in enumerate(self.triples(triples)):
            parties[i].triples = rows
        for owner in range(self.n):
            per_party, values = self.masks(masks, owner)
            for i, rows in enumerate(per_party):
                parties[i].masks[owner] = rows
            parties[owner].own_mask_values = values
        for i, rows in enumerate(self.singles(singles)):
            parties[i].singles = rows
        for i, rows in enumerate(self.bits(bits)):
            parties[i].bits = rows
        return PreprocBundle(sid, self.n, self.field, parties)


def dealer_init(n: int, rng: np.random.Generator, field: PrimeField = DEFAULT_FIELD) -> list[MacKeyShare]:
    if n < 2:
        raise ValueError("need at least two parties")
    shares = rng.integers(0, field.p, size=n, dtype=np.uint64).tolist()
    return [MacKeyShare(i, a) for i, a in enumerate(shares)]


def gen_triples(count: int, n: int, alpha: int, rng, field: PrimeField = DEFAULT_FIELD):
    """Returns ``(per_party_rows, clear_triples)``; rows are ``(a, ma, b, mb, c, mc)``."""
    if count < 1:
        return [[] for _ in range(n)], []
    p = field.p
    a = rng.integers(0, p, size=count, dtype=np.uint64).tolist()
    b = rng.integers(0, p, size=count, dtype=np.uint64).tolist()
    c = [x * y % p for x, y in zip(a, b)]
    ca = _auth_columns(a, alpha, n, rng, p)
    cb = _auth_columns(b, alpha, n, rng, p)
    cc = _auth_columns(c, alpha, n, rng, p)
    rows = [[sa + sb + sc for sa, sb, sc in zip(ca[i], cb[i], cc[i])] for i in range(n)]
    return rows, list(zip(a, b, c))


def gen_masks(count: int, n: int, alpha: int, rng, field: PrimeField = DEFAULT_FIELD):
    """Returns ``(per_party_rows, clear_values)``; rows are ``(r, mr)``."""
    if count < 1:
        return [[] for _ in range(n)], []
    r = rng.integers(0, field.p, size=count, dtype=np.uint64).tolist()
    return _auth_columns(r, alpha, n, rng, field.p), r


def gen_bits(count: int, n: int, alpha: int, rng, field: PrimeField = DEFAULT_FIELD):
    if count < 1:
        return [[] for _ in range(n)], []
    bits = rng.integers(0, 2, size=count, dtype=np.uint64).tolist()
    return _auth_columns(bits, alpha, n, rng, field.p), bits


# -- binary bundle file ---------------------------------------------------

_HEADER = struct.Struct("<8sIQQQQQ16s")


def write_bundle(bundle: PreprocBundle, path) -> None:
    c = bundle.counts
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, bundle.n, bundle.field.p, c["triples"], c["masks"],
                              c["singles"], c["bits"], bundle.session_id))
        for pp in bundle.parties:
            fh.write(struct.pack("<Q", pp.alpha_i))
        for kind, width in (("triples", 6), ("masks", 2), ("singles", 2), ("bits", 2)):
            for pp in bundle.parties:
                if kind == "masks":
                    rows = [row for owner in range(bundle.n) for row in pp.masks[owner]]
                    rows += [(v, 0) for v in pp.own_mask_values]
                else:
                    rows = getattr(pp, kind)
                flat = [v for row in rows for v in row]
                fh.write(struct.pack(f"<{len(flat)}Q", *flat))


def read_bundle(path) -> PreprocBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise PreprocCorrupt("truncated header")
    magic, n, modulus, nt, nm, ns, nb, sid = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise PreprocCorrupt("bad magic")
    field = PrimeField(modulus)
    pos = _HEADER.size

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(data):
            raise PreprocCorrupt("truncated body")
        vals = list(struct.unpack_from(f"<{count}Q", data, pos))
        pos = end
        return vals

    alphas = take(n)
    parties = [PartyPreproc(i, alphas[i]) for i in range(n)]

    def rows(flat, width):
        return [tuple(flat[k:k + width]) for k in range(0, len(flat), width)]

    for pp in parties:
        pp.triples = rows(take(6 * nt), 6)
    for pp in parties:
        flat = rows(take(2 * (nm * n + nm)), 2)
        for owner in range(n):
            pp.masks[owner] = flat[owner * nm:(owner + 1) * nm]
        pp.own_mask_values = [v for v, _ in flat[n * nm:]]
    for pp in parties:
        pp.singles = rows(take(2 * ns), 2)
    for pp in parties:
        pp.bits = rows(take(2 * nb), 2)
    if pos != len(data):
        raise PreprocCorrupt("trailing bytes")
    return PreprocBundle(sid, n, field, parties)
