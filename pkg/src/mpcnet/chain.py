"""Mock contract layer: task escrow, proof verification, staking and backing.

Amounts are :class:`fractions.Fraction` so that conservation checks are
exact.  The ledger is event-sourced: every balance change is an event
with a sequence number, and :meth:`Ledger.export` renders them as
``event <seq> <type> key=value ...`` lines.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field as dc_field
from enum import Enum
from fractions import Fraction

from .crypto import verify_signature
from .engine import ComputationProof
from .field import DEFAULT_FIELD


class ChainError(RuntimeError):
    pass


class TransitionError(ChainError):
    pass


# -- proof verification ----------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""
    party: int | None = None

    def __bool__(self):
        return self.accepted


def verify_proof(proof: ComputationProof, roster: dict, modulus: int = DEFAULT_FIELD.p) -> Verdict:
    """n signature checks plus n additions; nothing depends on circuit size."""
    n = len(roster)
    if len(proof.sigmas) != n or len(proof.signatures) != n:
        return Verdict(False, "malformed")
    total = 0
    for i in range(n):
        if not verify_signature(roster[i], proof.message_for(i), proof.signatures[i]):
            return Verdict(False, "bad-signature", i)
        total += proof.sigmas[i]
    if total % modulus:
        return Verdict(False, "mac-sum-nonzero")
    return Verdict(True)


def dump_roster(roster: dict) -> str:
    return "".join(f"party {i} {roster[i].hex()}\n" for i in sorted(roster))


def load_roster(text: str) -> dict:
    roster = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3 or parts[0] != "party":
            raise ValueError(f"bad roster line {line!r}")
        roster[int(parts[1])] = bytes.fromhex(parts[2])
    return roster


# -- staking and collusion analytics ------------------------------------------------

def _nonneg(*values) -> None:
    for v in values:
        if v < 0:
            raise ValueError("stake inputs must be non-negative")


def computation_stake(resource_estimate, n: int) -> Fraction:
    _nonneg(resource_estimate)
    return Fraction(resource_estimate) * (n - 1)


def stake_required(computation_stake_value, intel_value_stake, multiplier) -> Fraction:
    _nonneg(computation_stake_value, intel_value_stake, multiplier)
    return max(Fraction(computation_stake_value), Fraction(intel_value_stake)) * Fraction(multiplier)


def stake_sufficient(stake, resource_estimate, n: int, intel_value_stake, multiplier) -> bool:
    """Both rules: the max-formula amount, and strictly above the abort bound."""
    comp = computation_stake(resource_estimate, n)
    stake = Fraction(stake)
    return stake >= stake_required(comp, intel_value_stake, multiplier) and stake > comp


def coordinated_chance(fraction, quorum_size: int) -> float:
    """Chance that every member of a quorum drawn from a large pool is colluding."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be within [0, 1]")
    if quorum_size < 0:
        raise ValueError("quorum size must be non-negative")
    return float(fraction) ** quorum_size


TABLE_FRACTIONS = (0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.98, 0.99)


def econ_table(quorum_size: int = 100, fractions=TABLE_FRACTIONS) -> list:
    return [(f, quorum_size, coordinated_chance(f, quorum_size)) for f in fractions]


def format_econ_table(rows) -> str:
    lines = ["coordinated%  quorum  chance"]
    for f, q, c in rows:
        lines.append(f"{f * 100:>11.0f}%  {q:>6}  {c * 100:.2f}%")
    return "\n".join(lines) + "\n"


# -- ledger ----------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    fields: tuple

    def line(self) -> str:
        rest = " ".join(f"{k}={v}" for k, v in self.fields)
        return f"event {self.seq} {self.kind} {rest}".rstrip()


class Ledger:
    def __init__(self):
        self.balances: dict = {}
        self.events: list = []
        self.minted = Fraction(0)

    def balance(self, account) -> Fraction:
        return self.balances.get(account, Fraction(0))

    def total(self) -> Fraction:
        return sum(self.balances.values(), Fraction(0))

    def emit(self, kind: str, **fields) -> Event:
        ev = Event(len(self.events), kind, tuple(fields.items()))
        self.events.append(ev)
        return ev

    def mint(self, account, amount) -> None:
        amount = Fraction(amount)
        self.balances[account] = self.balance(account) + amount
        self.minted += amount
        self.emit("mint", account=account, amount=amount)

    def transfer(self, src, dst, amount, memo: str = "") -> None:
        amount = Fraction(amount)
        if amount < 0:
            raise ChainError("negative transfer")
        if self.balance(src) < amount:
            raise ChainError(f"{src} cannot cover {amount}")
        if amount == 0:
            return
        self.balances[src] = self.balance(src) - amount
        self.balances[dst] = self.balance(dst) + amount
        self.emit("transfer", src=src, dst=dst, amount=amount, memo=memo or "-")

    def export(self) -> str:
        return "".join(ev.line() + "\n" for ev in self.events)


# -- credit ------------------------------------------------------------------------

@dataclass
class CreditRecord:
    node: int
    completed: int = 0
    aborts: int = 0
    slashes: int = 0

    @property
    def weight(self) -> float:
        denom = self.completed + 2 * self.aborts + 5 * self.slashes
        if denom == 0:
            return 1.0
        return min(1.0, max(0.0, self.completed / denom))


# -- tasks -------------------------------------------------------------------------

class TaskState(Enum):
    CREATED = "Created"
    FUNDED = "Funded"
    BIDDING = "Bidding"
    QUORUM_SELECTED = "QuorumSelected"
    COMPUTING = "Computing"
    VERIFIED = "Verified"
    FAILED = "Failed"
    SETTLED = "Settled"


_NEXT = {
    TaskState.CREATED: {TaskState.FUNDED},
    TaskState.FUNDED: {TaskState.BIDDING},
    TaskState.BIDDING: {TaskState.QUORUM_SELECTED, TaskState.FAILED},
    TaskState.QUORUM_SELECTED: {TaskState.COMPUTING, TaskState.FAILED},
    TaskState.COMPUTING: {TaskState.VERIFIED, TaskState.FAILED},
    TaskState.VERIFIED: {TaskState.SETTLED},
    TaskState.FAILED: {TaskState.SETTLED},
    TaskState.SETTLED: set(),
}


def node_account(node) -> str:
    return f"node:{node}"


@dataclass
class Task:
    task_id: str
    function_ref: str
    consumer: str
    fee: Fraction
    deposit: Fraction
    state: TaskState = TaskState.CREATED
    bidders: list = dc_field(default_factory=list)
    participants: list = dc_field(default_factory=list)
    blame: int | None = None
    spent_cost: Fraction = Fraction(0)
    reason: str = ""

    @property
    def escrow(self) -> str:
        return f"escrow:{self.task_id}"

    @property
    def retry_pool(self) -> str:
        return f"retry:{self.task_id}"


class Contract:
    """Event-sourced mock of the task contract."""

    def __init__(self, ledger: Ledger | None = None, modulus: int = DEFAULT_FIELD.p):
        self.ledger = ledger or Ledger()
        self.modulus = modulus
        self.tasks: dict = {}
        self.credits: dict = {}

    def credit(self, node) -> CreditRecord:
        return self.credits.setdefault(node, CreditRecord(node))

    def weights(self, nodes) -> dict:
        return {n: self.credit(n).weight for n in nodes}

    def _move(self, task: Task, to: TaskState) -> None:
        if to not in _NEXT[task.state]:
            raise TransitionError(f"task {task.task_id}: {task.state.value} -> {to.value} not allowed")
        task.state = to
        self.ledger.emit("state", task=task.task_id, state=to.value)

    def task(self, task_id) -> Task:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise ChainError(f"unknown task {task_id}") from None

    def create_task(self, task_id: str, function_ref: str, consumer: str, fee, deposit) -> Task:
        if task_id in self.tasks:
            raise ChainError(f"task {task_id} exists")
        t = Task(task_id, function_ref, consumer, Fraction(fee), Fraction(deposit))
        self.tasks[task_id] = t
        self.ledger.emit("create", task=task_id, function=function_ref, fee=t.fee, deposit=t.deposit)
        return t

    def fund(self, task_id) -> None:
        t = self.task(task_id)
        self.ledger.transfer(t.consumer, t.escrow, t.fee, "fee")
        self._move(t, TaskState.FUNDED)

    def open_bidding(self, task_id) -> None:
        self._move(self.task(task_id), TaskState.BIDDING)

    def bid(self, task_id, node) -> None:
        t = self.task(task_id)
        if t.state is not TaskState.BIDDING:
            raise TransitionError("bidding is closed")
        if node in t.bidders:
            raise ChainError(f"node {node} already bid")
        self.ledger.transfer(node_account(node), t.escrow, t.deposit, "deposit")
        t.bidders.append(node)

    def select(self, task_id, quorum) -> None:
        t = self.task(task_id)
        quorum = list(quorum)
        if not set(quorum) <= set(t.bidders):
            raise ChainError("quorum members must have bid")
        for node in t.bidders:
            if node not in quorum:
                self.ledger.transfer(t.escrow, node_account(node), t.deposit, "refund")
        t.participants = quorum
        self._move(t, TaskState.QUORUM_SELECTED)

    def start(self, task_id) -> None:
        self._move(self.task(task_id), TaskState.COMPUTING)

    def submit_proof(self, task_id, proof: ComputationProof, roster: dict) -> Verdict:
        t = self.task(task_id)
        verdict = verify_proof(proof, roster, self.modulus)
        self.ledger.emit("proof", task=task_id, accepted=verdict.accepted, reason=verdict.reason or "-")
        if verdict:
            self._move(t, TaskState.VERIFIED)
        else:
            t.blame = None if verdict.party is None else t.participants[verdict.party]
            t.reason = verdict.reason
            self._move(t, TaskState.FAILED)
        return verdict

    def report_abort(self, task_id, blame_index: int | None, spent_cost, reason: str = "abort-attack") -> None:
        """``blame_index`` indexes the participant list (session party id)."""
        t = self.task(task_id)
        t.blame = None if blame_index is None else t.participants[blame_index]
        t.spent_cost = Fraction(spent_cost)
        t.reason = reason
        self._move(t, TaskState.FAILED)

    def settle(self, task_id) -> dict:
        """Pay out and return the per-account balance deltas."""
        t = self.task(task_id)
        if t.state is TaskState.SETTLED:
            raise ChainError(f"task {task_id} already settled")
        before = dict(self.ledger.balances)
        led = self.ledger
        if t.state is TaskState.VERIFIED:
            share = t.fee / len(t.participants)
            for node in t.participants:
                led.transfer(t.escrow, node_account(node), t.deposit, "deposit-return")
                led.transfer(t.escrow, node_account(node), share, "fee-share")
                self.credit(node).completed += 1
        elif t.state is TaskState.FAILED:
            others = [p for p in t.participants if p != t.blame]
            for node in others:
                led.transfer(t.escrow, node_account(node), t.deposit, "deposit-return")
            if t.blame is None:
                led.transfer(t.escrow, t.consumer, t.fee, "fee-refund")
            else:
                # the blamed deposit compensates spent work, the rest subsidises a retry
                comp = min(t.spent_cost, t.deposit / max(1, len(others))) if others else Fraction(0)
                for node in others:
                    led.transfer(t.escrow, node_account(node), comp, "compensation")
                led.transfer(t.escrow, t.retry_pool, t.deposit - comp * len(others), "retry-subsidy")
                led.transfer(t.escrow, t.retry_pool, t.fee, "retry-fee")
                rec = self.credit(t.blame)
                rec.slashes += 1
                if t.reason == "abort-attack":
                    rec.aborts += 1
        else:
            raise TransitionError(f"task {task_id} is {t.state.value}, cannot settle")
        self._move(t, TaskState.SETTLED)
        after = self.ledger.balances
        keys = set(before) | set(after)
        return {k: after.get(k, Fraction(0)) - before.get(k, Fraction(0))
                for k in sorted(keys) if after.get(k, Fraction(0)) != before.get(k, Fraction(0))}

    def lottery_settle(self, prover, validators, block_valid: bool, reward, deposit, treasury="treasury") -> None:
        led = self.ledger
        led.transfer(node_account(prover), "escrow:lottery", deposit, "prover-deposit")
        if block_valid:
            led.transfer("escrow:lottery", node_account(prover), deposit, "deposit-return")
            led.transfer(treasury, node_account(prover), reward, "block-reward")
            self.credit(prover).completed += 1
        else:
            share = Fraction(deposit) / len(validators)
            for v in validators:
                led.transfer("escrow:lottery", node_account(v), share, "forfeit")
            self.credit(prover).slashes += 1


# -- additive backing ------------------------------------------------------------

BACKING_MARKUP = Fraction(1, 5)


def marked_up_price(base_price) -> Fraction:
    return Fraction(base_price) * (1 + BACKING_MARKUP)


@dataclass
class Dataset:
    name: str
    backers: list = dc_field(default_factory=list)

    @property
    def account(self) -> str:
        return f"dataset:{self.name}"


class BackingBook:
    """The nth backer pays n; revenue splits evenly; a position resells at n+1."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.datasets: dict = {}

    def register(self, name: str) -> Dataset:
        if name in self.datasets:
            raise ChainError(f"dataset {name} exists")
        self.datasets[name] = Dataset(name)
        self.ledger.emit("dataset", name=name)
        return self.datasets[name]

    def dataset(self, name) -> Dataset:
        try:
            return self.datasets[name]
        except KeyError:
            raise ChainError(f"unknown dataset {name}") from None

    def next_price(self, name) -> int:
        return len(self.dataset(name).backers) + 1

    def back(self, name, backer) -> int:
        ds = self.dataset(name)
        price = len(ds.backers) + 1
        self.ledger.transfer(backer, ds.account, price, "back")
        ds.backers.append(backer)
        return price

    def sell_position(self, name, seller, buyer) -> int:
        ds = self.dataset(name)
        if seller not in ds.backers:
            raise ChainError(f"{seller} holds no position in {name}")
        price = len(ds.backers) + 1
        self.ledger.transfer(buyer, seller, price, "position-sale")
        ds.backers[ds.backers.index(seller)] = buyer
        return price

    def distribute(self, name, revenue, payer) -> dict:
        ds = self.dataset(name)
        if not ds.backers:
            raise ChainError(f"{name} has no backers")
        share = Fraction(revenue) / len(ds.backers)
        out = {}
        for b in ds.backers:
            self.ledger.transfer(payer, b, share, "backing-revenue")
            out[b] = out.get(b, Fraction(0)) + share
        return out

    def sale(self, name, base_price, buyer, seller) -> Fraction:
        """A consumer buys at the marked-up price; the markup goes to the backers."""
        ds = self.dataset(name)
        total = marked_up_price(base_price)
        self.ledger.transfer(buyer, seller, Fraction(base_price), "dataset-sale")
        self.ledger.transfer(buyer, ds.account, total - Fraction(base_price), "backing-markup")
        if ds.backers:
            self.distribute(name, total - Fraction(base_price), ds.account)
        return total


def abs_back(book: BackingBook, dataset, backer) -> int:
    return book.back(dataset, backer)


def abs_sell_position(book: BackingBook, dataset, backer, buyer) -> int:
    return book.sell_position(dataset, backer, buyer)


def abs_distribute(book: BackingBook, dataset, revenue, payer) -> dict:
    return book.distribute(dataset, revenue, payer)


# -- MAC record store -----------------------------------------------------------

class StoreError(ChainError):
    pass


@dataclass(frozen=True)
class MacRecord:
    session_id: bytes
    party: int
    sigma: int
    signature: bytes

    def content(self) -> bytes:
        return self.body(self.session_id, self.party, self.sigma)

    @staticmethod
    def body(session_id: bytes, party: int, sigma: int) -> bytes:
        return b"mpcnet-mac-record" + session_id + struct.pack("<IQ", party, sigma)

    @classmethod
    def signed(cls, key, session_id: bytes, party: int, sigma: int) -> "MacRecord":
        return cls(session_id, party, sigma, key.sign(cls.body(session_id, party, sigma)))

    @property
    def key(self) -> bytes:
        return hashlib.sha3_256(self.content()).digest()


class MacStore:
    """Content-addressed record store standing in for the DHT."""

    def __init__(self, roster: dict):
        self.roster = roster
        self._data: dict = {}

    def _signed_ok(self, rec: MacRecord) -> bool:
        pub = self.roster.get(rec.party)
        return pub is not None and bool(rec.signature) and verify_signature(pub, rec.content(), rec.signature)

    def store_mac(self, rec: MacRecord) -> bytes:
        if not self._signed_ok(rec):
            raise StoreError("forged-record")
        key = rec.key
        if key in self._data and self._data[key] != rec:
            raise StoreError("record is immutable")
        self._data[key] = rec
        return key

    def fetch_mac(self, key: bytes) -> MacRecord:
        if key not in self._data:
            raise StoreError("key absent")
        rec = self._data[key]
        if rec.key != key:
            raise StoreError("content hash mismatch")
        if not self._signed_ok(rec):
            raise StoreError("forged-record")
        return rec
