"""Command-line entry point.

Exit codes: 0 success, 1 protocol abort or rejected proof, 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

from .auction import vickrey_circuit, vickrey_plain
from .chain import dump_roster, econ_table, format_econ_table, load_roster, verify_proof
from .circuit import CircuitError, cost, parse_circuit
from .engine import ComputationProof, Session, bundle_for
from .field import PrimeField, MERSENNE_61
from .preprocessing import Dealer, ResourceError, read_bundle, write_bundle
from .quorum import commit_seed, drf_round, make_tickets, select_quorum
from .rng import derive_rng
from .transport import AdversarySpec, AdversarySpecError

EXIT_OK, EXIT_ABORT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _report(pairs, stream) -> None:
    for key, value in pairs:
        stream.write(f"{key}: {value}\n")


def parse_inputs(text: str, p: int) -> dict:
    inputs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "party":
            raise UsageError(f"inputs line {lineno}: expected 'party <id> <value>'")
        try:
            inputs.setdefault(int(parts[1]), []).append(int(parts[2]) % p)
        except ValueError:
            raise UsageError(f"inputs line {lineno}: not an integer") from None
    return inputs


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


# -- subcommands -----------------------------------------------------------------

def cmd_gen_preproc(args, out) -> int:
    if args.parties < 2:
        raise UsageError("--parties must be at least 2")
    field = PrimeField(args.modulus)
    dealer = Dealer(args.parties, args.seed, field)
    singles = args.singles if args.singles is not None else args.triples // 2 + 1
    bundle = dealer.bundle(args.triples, args.masks, singles, args.bits)
    write_bundle(bundle, args.out)
    _report([("parties", args.parties), ("triples", args.triples), ("masks_per_party", args.masks),
             ("singles", singles), ("bits", args.bits), ("session", bundle.session_id.hex()),
             ("file", args.out)], out)
    return EXIT_OK


def _session_report(result, extra=()):
    st = result.stats
    pairs = [("status", "ok" if result.ok else "abort")]
    if result.ok:
        pairs += [(f"output[{k}]", v) for k, v in enumerate(result.outputs)]
    else:
        a = result.abort
        pairs += [("blame", a.blame), ("party", "-" if a.party is None else a.party),
                  ("step", a.step), ("round", a.round)]
    pairs += list(extra)
    pairs += [("parties", st["parties"]), ("mul_gates", st["mul_gates"]),
              ("triples_consumed", st["triples_consumed"]), ("bits_consumed", st["bits_consumed"]),
              ("rounds", st["rounds"]), ("messages", st["messages"]),
              ("expected_messages", st["expected_messages"]),
              ("online_seconds", f"{st['online_seconds']:.3f}"),
              ("transcript_head", st["transcript_head"])]
    return pairs


def cmd_run(args, out) -> int:
    bundle = read_bundle(args.preproc)
    circuit = parse_circuit(_read(args.circuit), bundle.field.p)
    inputs = parse_inputs(_read(args.inputs), bundle.field.p)
    adversary = AdversarySpec.parse(args.adversary)
    session = Session(circuit, bundle, seed=args.seed, adversary=adversary,
                      timeout_rounds=args.timeout, mac_check_every=args.mac_check_every,
                      keep_transcript=args.transcript is not None)
    result = session.run(inputs)
    if args.transcript:
        result.transcript.dump(args.transcript)
    if args.roster:
        Path(args.roster).write_text(dump_roster(result.roster))
    if result.ok:
        if args.out:
            Path(args.out).write_text("".join(f"{v}\n" for v in result.outputs))
        if args.proof:
            Path(args.proof).write_text(result.proof.dumps())
    _report(_session_report(result), out)
    return EXIT_OK if result.ok else EXIT_ABORT


def cmd_demo_auction(args, out) -> int:
    if args.bidders < 2:
        raise UsageError("--bidders must be at least 2")
    if args.bids:
        bids = [int(b) for b in args.bids.split(",")]
        if len(bids) != args.bidders:
            raise UsageError("--bids must list one bid per bidder")
    else:
        rng = random.Random(args.seed)
        bids = [rng.getrandbits(args.bits) for _ in range(args.bidders)]
    if any(not 0 <= b < (1 << args.bits) for b in bids):
        raise UsageError(f"bids must be {args.bits}-bit non-negative integers")
    circuit = vickrey_circuit(args.bidders, args.bits)
    t0 = time.perf_counter()
    bundle, _ = bundle_for(circuit, args.bidders, args.seed)
    offline = time.perf_counter() - t0
    result = Session(circuit, bundle, seed=args.seed, adversary=AdversarySpec.parse(args.adversary),
                     keep_transcript=False).run({i: [b] for i, b in enumerate(bids)})
    extra = []
    if result.ok:
        winner, price = result.outputs
        ow, op = vickrey_plain(bids)
        extra = [("winner", winner), ("price", price), ("oracle_match", winner == ow and price == op)]
    extra.append(("offline_seconds", f"{offline:.3f}"))
    _report(_session_report(result, extra), out)
    return EXIT_OK if result.ok else EXIT_ABORT


def cmd_verify(args, out) -> int:
    try:
        proof = ComputationProof.loads(_read(args.proof))
        roster = load_roster(_read(args.roster))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    verdict = verify_proof(proof, roster, args.modulus)
    if verdict:
        out.write("accept\n")
        return EXIT_OK
    who = "" if verdict.party is None else f" party {verdict.party}"
    out.write(f"reject: {verdict.reason}{who}\n")
    return EXIT_ABORT


def cmd_drf(args, out) -> int:
    if args.nodes < 1:
        raise UsageError("--nodes must be positive")
    q = args.quorum if args.quorum is not None else min(3, args.nodes)
    seeds = {i: derive_rng(args.seed, "drf", i).bytes(32) for i in range(args.nodes)}
    tickets = make_tickets(seeds)
    P = drf_round(tickets, seeds)
    must = [int(x) for x in args.must_include.split(",")] if args.must_include else []
    try:
        result = select_quorum(P, range(args.nodes), q, must)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pairs = [(f"commit[{t.node}]", t.commitment.hex()) for t in tickets]
    pairs += [("P", P), ("quorum", " ".join(map(str, result.selected)))]
    _report(pairs, out)
    return EXIT_OK


def cmd_econ_table(args, out) -> int:
    out.write(format_econ_table(econ_table(args.quorum)))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpcnet", description="Dishonest-majority MPC engine and tooling.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-preproc", help="generate a dealer preprocessing bundle")
    g.add_argument("--parties", type=int, required=True, help="number of parties")
    g.add_argument("--triples", type=int, required=True, help="Beaver triples (two per multiplication)")
    g.add_argument("--bits", type=int, default=0, help="random shared bits")
    g.add_argument("--masks", type=int, default=16, help="input masks per party")
    g.add_argument("--singles", type=int, default=None, help="random single values (default triples/2+1)")
    g.add_argument("--modulus", type=int, default=MERSENNE_61, help="field prime")
    g.add_argument("--seed", type=int, default=0, help="dealer seed")
    g.add_argument("--out", required=True, help="bundle file to write")
    g.set_defaults(func=cmd_gen_preproc)

    r = sub.add_parser("run", help="evaluate a circuit")
    r.add_argument("--circuit", required=True, help="circuit text file")
    r.add_argument("--preproc", required=True, help="bundle from gen-preproc")
    r.add_argument("--inputs", required=True, help="lines 'party <id> <value>'")
    r.add_argument("--seed", type=int, default=0, help="session seed")
    r.add_argument("--adversary", default=None, help="e.g. '2:tamper-open:+1;4:abort-at:10'")
    r.add_argument("--timeout", type=int, default=1, help="rounds of silence before abort")
    r.add_argument("--mac-check-every", type=int, default=None, help="extra MAC check every K levels")
    r.add_argument("--out", default=None, help="write outputs, one per line")
    r.add_argument("--proof", default=None, help="write the computation proof")
    r.add_argument("--roster", default=None, help="write party public keys")
    r.add_argument("--transcript", default=None, help="write the transcript")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("demo-auction", help="second-price auction demo")
    a.add_argument("--bidders", type=int, default=100, help="number of bidders (one party each)")
    a.add_argument("--bits", type=int, default=32, help="bid bit width")
    a.add_argument("--seed", type=int, default=0, help="seed for bids and session")
    a.add_argument("--bids", default=None, help="comma-separated bids instead of random ones")
    a.add_argument("--adversary", default=None, help="adversary spec")
    a.set_defaults(func=cmd_demo_auction)

    v = sub.add_parser("verify", help="verify a computation proof")
    v.add_argument("--proof", required=True, help="proof file")
    v.add_argument("--roster", required=True, help="roster file")
    v.add_argument("--modulus", type=int, default=MERSENNE_61, help="field prime")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("drf", help="commit-reveal randomness and quorum selection")
    d.add_argument("--nodes", type=int, required=True, help="number of nodes")
    d.add_argument("--seed", type=int, default=0, help="seed for node secrets")
    d.add_argument("--quorum", type=int, default=None, help="quorum size (default 3)")
    d.add_argument("--must-include", default=None, help="comma-separated node ids always selected")
    d.set_defaults(func=cmd_drf)

    e = sub.add_parser("econ-table", help="coordinated-attack probability table")
    e.add_argument("--quorum", type=int, default=100, help="quorum size")
    e.set_defaults(func=cmd_econ_table)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (UsageError, CircuitError, ResourceError, AdversarySpecError, ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
