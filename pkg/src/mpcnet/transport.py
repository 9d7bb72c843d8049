"""Deterministic synchronous message fabric.

Parties hand the fabric one outbox per round; the fabric applies the
adversary's transforms to corrupted senders, records every envelope in a
hash-chained transcript and hands back a :class:`Delivery`.  Broadcast is
reliable: every receiver sees the same payload.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field as dc_field

from .field import pack_elements, unpack_elements

BROADCAST = None
GENESIS = hashlib.sha3_256(b"mpcnet-transcript-genesis").digest()

# message types carrying shares of a value being opened
OPEN_TYPES = frozenset({"sac-t", "sac-open", "sac-check", "mul-eps", "mul-delta", "open", "open-e", "pin"})

BEHAVIORS = ("honest", "tamper-open", "tamper-mac", "wrong-epsilon", "wrong-delta",
             "tamper-output", "abort-at", "corrupt-triple")


class TransportTimeout(Exception):
    def __init__(self, party: int, round_no: int):
        self.party = party
        self.round = round_no
        super().__init__(f"party {party} silent at round {round_no}")


class AdversarySpecError(ValueError):
    pass


@dataclass(frozen=True)
class Behavior:
    kind: str
    offset: int = 1
    target: int | None = None


@dataclass
class AdversarySpec:
    behaviors: dict = dc_field(default_factory=dict)     # party -> [Behavior]

    @property
    def corrupted(self) -> list:
        return sorted(p for p, bs in self.behaviors.items() if any(b.kind != "honest" for b in bs))

    def of(self, party: int, kind: str) -> list:
        return [b for b in self.behaviors.get(party, ()) if b.kind == kind]

    def validate(self, n: int) -> None:
        for party in self.behaviors:
            if not 0 <= party < n:
                raise AdversarySpecError(f"party {party} is not in the session")
        if len(self.corrupted) > n - 1:
            raise AdversarySpecError("at most n-1 parties may be corrupted")

    @classmethod
    def honest(cls) -> "AdversarySpec":
        return cls({})

    @classmethod
    def parse(cls, text: str | None) -> "AdversarySpec":
        """Parse ``"2:tamper-open:+1@5;4:abort-at:10"``."""
        spec: dict = {}
        if not text:
            return cls(spec)
        for item in filter(None, (s.strip() for s in text.split(";"))):
            m = re.fullmatch(r"(\d+):([a-z-]+)(?::([+-]?\d+))?(?:@(\d+))?", item)
            if not m:
                raise AdversarySpecError(f"cannot parse adversary item {item!r}")
            party, kind, arg, target = m.groups()
            if kind not in BEHAVIORS:
                raise AdversarySpecError(f"unknown behavior {kind!r}")
            target = int(target) if target is not None else None
            if kind == "abort-at":
                if arg is None:
                    raise AdversarySpecError("abort-at needs a round number")
                b = Behavior(kind, 0, int(arg))
            elif kind == "corrupt-triple" and arg is not None and arg[0] not in "+-":
                b = Behavior(kind, 1, int(arg))
            else:
                b = Behavior(kind, int(arg) if arg is not None else 1, target)
            if kind == "corrupt-triple" and b.target is None:
                b = Behavior(kind, b.offset, 0)
            spec.setdefault(int(party), []).append(b)
        return cls(spec)

    def render(self) -> str:
        items = []
        for party in sorted(self.behaviors):
            for b in self.behaviors[party]:
                if b.kind == "abort-at":
                    items.append(f"{party}:abort-at:{b.target}")
                elif b.kind == "honest":
                    items.append(f"{party}:honest")
                else:
                    s = f"{party}:{b.kind}:{b.offset:+d}"
                    if b.target is not None:
                        s += f"@{b.target}"
                    items.append(s)
        return ";".join(items)


class Envelope:
    __slots__ = ("round", "sender", "receiver", "msg_type", "payload", "_ints")

    def __init__(self, round_no, sender, receiver, msg_type, payload: bytes):
        self.round = round_no
        self.sender = sender
        self.receiver = receiver
        self.msg_type = msg_type
        self.payload = payload
        self._ints = None

    @property
    def ints(self) -> list:
        if self._ints is None:
            self._ints = unpack_elements(self.payload)
        return self._ints

    def sort_key(self):
        return (self.round, self.sender, -1 if self.receiver is None else self.receiver, self.msg_type)

    def __repr__(self):
        to = "*" if self.receiver is None else self.receiver
        return f"Envelope(r{self.round} {self.sender}->{to} {self.msg_type} {len(self.payload)}B)"


def _entry_bytes(env: Envelope) -> bytes:
    receiver = 0xFFFFFFFF if env.receiver is None else env.receiver
    head = struct.pack("<QII", env.round, env.sender, receiver)
    return head + env.msg_type.encode() + b"\x00" + env.payload


class Transcript:
    """Append-only, hash-chained record of every envelope."""

    def __init__(self, keep: bool = True):
        self.keep = keep
        self.entries: list = []
        self.head = GENESIS
        self.count = 0

    def record(self, env: Envelope) -> bytes:
        self.head = hashlib.sha3_256(self.head + _entry_bytes(env)).digest()
        self.count += 1
        if self.keep:
            self.entries.append(env)
        return self.head

    def lines(self):
        for env in self.entries:
            to = "*" if env.receiver is None else str(env.receiver)
            yield f"round {env.round} {env.sender} {to} {env.msg_type} {env.payload.hex()}"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")
            fh.write(f"head {self.head.hex()}\n")


def parse_transcript_line(line: str) -> Envelope:
    parts = line.split()
    if len(parts) not in (5, 6) or parts[0] != "round":
        raise ValueError(f"bad transcript line: {line!r}")
    payload = bytes.fromhex(parts[5]) if len(parts) == 6 else b""
    receiver = None if parts[3] == "*" else int(parts[3])
    return Envelope(int(parts[1]), int(parts[2]), receiver, parts[4], payload)


def replay_head(lines) -> bytes:
    """Recompute the chain head from transcript lines (``head`` lines ignored)."""
    t = Transcript(keep=False)
    for line in lines:
        line = line.strip()
        if not line or line.startswith("head "):
            continue
        t.record(parse_transcript_line(line))
    return t.head


def verify_transcript(path) -> bool:
    with open(path) as fh:
        lines = fh.read().splitlines()
    stated = [ln for ln in lines if ln.startswith("head ")]
    if len(stated) != 1:
        return False
    return replay_head(lines).hex() == stated[0].split()[1]


class Delivery:
    """Everything delivered in one round.

    Opening a broadcast value means summing the shares of every sender; the
    sum is the same at every receiver, so it is computed once per round.
    """

    def __init__(self, envelopes, p: int):
        self.p = p
        self.broadcasts: dict = {}        # msg_type -> {sender: Envelope}
        self.direct: dict = {}            # receiver -> [Envelope]
        for env in envelopes:
            if env.receiver is None:
                self.broadcasts.setdefault(env.msg_type, {})[env.sender] = env
            else:
                self.direct.setdefault(env.receiver, []).append(env)
        self._sums: dict = {}

    def shares(self, msg_type: str) -> dict:
        return {s: e.ints for s, e in sorted(self.broadcasts.get(msg_type, {}).items())}

    def opened(self, msg_type: str) -> list:
        if msg_type not in self._sums:
            vectors = [e.ints for _, e in sorted(self.broadcasts.get(msg_type, {}).items())]
            p = self.p
            self._sums[msg_type] = [sum(col) % p for col in zip(*vectors)] if vectors else []
        return self._sums[msg_type]

    def payload(self, msg_type: str, sender: int) -> bytes:
        return self.broadcasts[msg_type][sender].payload

    def inbox(self, receiver: int) -> list:
        return self.direct.get(receiver, [])


class Transport:
    """Synchronous round fabric with adversary hooks."""

    def __init__(self, n: int, p: int, adversary: AdversarySpec | None = None,
                 timeout_rounds: int = 1, transcript: Transcript | None = None):
        self.n = n
        self.p = p
        self.adversary = adversary or AdversarySpec.honest()
        self.adversary.validate(n)
        self.timeout_rounds = max(1, timeout_rounds)
        self.transcript = transcript if transcript is not None else Transcript()
        self.round = 0
        self.envelopes = 0
        self.messages = 0                  # point-to-point deliveries
        self.elements: dict = {}           # msg_type -> field elements delivered
        self._active = {party for party, bs in self.adversary.behaviors.items()
                        if any(b.kind in ("tamper-open", "wrong-epsilon", "wrong-delta") for b in bs)}
        self._silent_from = {
            party: min(b.target for b in bs)
            for party in range(n)
            if (bs := self.adversary.of(party, "abort-at"))
        }

    def is_silent(self, party: int, round_no: int | None = None) -> bool:
        r = self.round + 1 if round_no is None else round_no
        start = self._silent_from.get(party)
        return start is not None and r >= start

    def _transform(self, party: int, msg_type: str, payload: bytes) -> bytes:
        mods = []
        for b in self.adversary.behaviors.get(party, ()):
            if b.target is not None and b.target != self.round:
                continue
            if b.kind == "tamper-open" and msg_type in OPEN_TYPES:
                mods.append(b.offset)
            elif b.kind == "wrong-epsilon" and msg_type == "mul-eps":
                mods.append(b.offset)
            elif b.kind == "wrong-delta" and msg_type == "mul-delta":
                mods.append(b.offset)
        if not mods or not payload:
            return payload
        shift = sum(mods)
        p = self.p
        vals = unpack_elements(payload)
        return pack_elements((v + shift) % p for v in vals)

    def round_exchange(self, outboxes: dict, expected=None) -> Delivery:
        """Deliver one round.  ``outboxes`` maps sender -> [(receiver|None, type, payload)]."""
        self.round += 1
        r = self.round
        expected = set(outboxes) if expected is None else set(expected)
        for party in sorted(expected):
            if self.is_silent(party, r):
                raise TransportTimeout(party, r + self.timeout_rounds - 1)
        envelopes = []
        for sender in sorted(outboxes):
            if self.is_silent(sender, r):
                continue
            for receiver, msg_type, payload in outboxes[sender]:
                if isinstance(payload, (list, tuple)):
                    payload = pack_elements(payload)
                if sender in self._active:
                    payload = self._transform(sender, msg_type, payload)
                envelopes.append(Envelope(r, sender, receiver, msg_type, payload))
        envelopes.sort(key=Envelope.sort_key)
        n = self.n
        for env in envelopes:
            self.transcript.record(env)
            fanout = n - 1 if env.receiver is None else 1
            self.envelopes += 1
            self.messages += fanout
            self.elements[env.msg_type] = self.elements.get(env.msg_type, 0) + fanout * (len(env.payload) // 8)
        return Delivery(envelopes, self.p)
