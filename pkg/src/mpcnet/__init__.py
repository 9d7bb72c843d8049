"""Dishonest-majority MPC engine with a simulated network and settlement chain."""

from .field import DEFAULT_FIELD, MERSENNE_61, FieldElement, PrimeField
from .circuit import Circuit, CircuitBuilder, cost, parse_circuit, eval_plaintext
from .engine import Session, SessionResult, run_session, evaluate
from .preprocessing import Dealer, PreprocBundle, read_bundle, write_bundle
from .transport import AdversarySpec

__all__ = [
    "DEFAULT_FIELD", "MERSENNE_61", "FieldElement", "PrimeField",
    "Circuit", "CircuitBuilder", "cost", "parse_circuit", "eval_plaintext",
    "Session", "SessionResult", "run_session", "evaluate",
    "Dealer", "PreprocBundle", "read_bundle", "write_bundle", "AdversarySpec",
]
