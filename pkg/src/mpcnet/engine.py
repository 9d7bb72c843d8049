"""Online phase of the SPDZ-style protocol.

A :class:`Session` drives ``n`` :class:`Party` objects in lock-step
synchronous rounds over a :class:`~mpcnet.transport.Transport`.  Parties
never touch each other's state; everything they learn arrives in a
:class:`~mpcnet.transport.Delivery`.

Round schedule of a session:

1. sacrifice: every triple used for a multiplication is checked against a
   second triple (open ``t``; open ``rho = t*a - f``, ``sigma = b - g``;
   open ``t*c - h - sigma*f - rho*g - sigma*rho`` which must be zero);
2. inputs: masks are partially opened to their owner, who broadcasts
   ``x - r``;
3. one round per communication level: open ``x - a``/``y - b`` for every
   multiplication on that level and every ``open`` gate;
4. output: commit to output shares, commit to and open a random ``e``, MAC-check the
   opened values with coefficients ``e**j``, open the output commitments,
   open the MAC key and check the outputs, then sign the proof.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field as dc_field
from enum import Enum

from .circuit import Circuit, CostReport, cost, expand, levels, primitive_cost, wire_kinds
from .crypto import Commitment, SigningKey, check_opening, sha3, split_opening, NONCE_BYTES
from .field import PrimeField, pack_elements, unpack_elements
from .preprocessing import PartyPreproc, PreprocBundle, ResourceError
from .rng import derive_rng
from .transport import AdversarySpec, Delivery, Transcript, Transport, TransportTimeout

LEADER = 0
COMPILE_AFTER = 16    # executions of a local block before it is compiled


class Phase(Enum):
    INIT = "Init"
    RUNNING = "Running"
    CHECKING = "Checking"
    DONE = "Done"
    ABORTED = "Aborted"


class ProtocolAbort(Exception):
    def __init__(self, blame: str, party: int | None = None, step: str = "", round_no: int | None = None):
        self.blame = blame
        self.party = party
        self.step = step
        self.round = round_no
        who = f" (party {party})" if party is not None else ""
        super().__init__(f"{blame}{who} during {step}")


@dataclass(frozen=True)
class Abort:
    blame: str
    party: int | None
    step: str
    round: int | None


@dataclass
class ComputationProof:
    session_id: bytes
    results: list
    sigmas: list
    commitments: list
    signatures: list

    @staticmethod
    def message(session_id: bytes, results, party: int, sigma: int) -> bytes:
        return (b"mpcnet-proof" + session_id + struct.pack("<I", len(results))
                + pack_elements(results) + struct.pack("<IQ", party, sigma))

    def message_for(self, party: int) -> bytes:
        return self.message(self.session_id, self.results, party, self.sigmas[party])

    def dumps(self) -> str:
        lines = [f"session {self.session_id.hex()}"]
        lines += [f"result {k} {v}" for k, v in enumerate(self.results)]
        lines += [f"sigma {i} {s}" for i, s in enumerate(self.sigmas)]
        lines += [f"commit {i} {c.hex()}" for i, c in enumerate(self.commitments)]
        lines += [f"sig {i} {s.hex()}" for i, s in enumerate(self.signatures)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ComputationProof":
        sid = None
        results, sigmas, commits, sigs = {}, {}, {}, {}
        for raw in text.splitlines():
            parts = raw.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "session":
                sid = bytes.fromhex(parts[1])
            elif tag == "result":
                results[int(parts[1])] = int(parts[2])
            elif tag == "sigma":
                sigmas[int(parts[1])] = int(parts[2])
            elif tag == "commit":
                commits[int(parts[1])] = bytes.fromhex(parts[2])
            elif tag == "sig":
                sigs[int(parts[1])] = bytes.fromhex(parts[2])
            else:
                raise ValueError(f"unknown proof line {raw!r}")
        if sid is None:
            raise ValueError("proof has no session line")

        def ordered(d):
            return [d[k] for k in range(len(d))]

        return cls(sid, ordered(results), ordered(sigmas), ordered(commits), ordered(sigs))


@dataclass
class SessionResult:
    session_id: bytes
    outputs: list | None
    proof: ComputationProof | None
    transcript: Transcript
    stats: dict
    roster: dict
    abort: Abort | None = None

    @property
    def ok(self) -> bool:
        return self.abort is None


# -- compiled program ----------------------------------------------------------

# local instruction codes
LIN_S, LIN_P, MUL_SP, MUL_PP, ADD_SS, ADD_SP, ADD_PP, ADDC_S, ADDC_P, SMUL_S, SMUL_P, \
    CONST, RBIT, RINT, PBIT, PMOD = range(16)


def _term(k: int, ref: str, p: int) -> str:
    if k == 1:
        return f"+{ref}"
    if k == p - 1:
        return f"-{ref}"
    if k > p // 2:
        return f"-{p - k}*{ref}"
    return f"+{k}*{ref}"


def _sum_expr(terms, arr: str, p: int, const: int = 0) -> str:
    parts = [_term(k, f"{arr}[{w}]", p) for k, w in terms if k]
    if const:
        c = const - p if const > p // 2 else const
        parts.append(f"{c:+d}")
    expr = "".join(parts) or "0"
    return expr[1:] if expr.startswith("+") else expr


class LocalBlock:
    """Local gates of one level, compiled to straight-line Python per role.

    The leader variant applies public constants to the value share; other
    parties only fold them into the MAC share.
    """

    def __init__(self, instrs, p: int):
        self.instrs = list(instrs)
        self.p = p
        self.bits = sum(1 if i[0] == RBIT else i[2] if i[0] == RINT else 0 for i in self.instrs)
        self.runs = 0
        self._fns: dict = {}

    def fn(self, leader: bool):
        if leader not in self._fns:
            self._fns[leader] = self._compile(leader)
        return self._fns[leader]

    def _compile(self, leader: bool):
        p = self.p
        out = ["def block(X, M, p, alpha, B):"]
        bit = 0
        for ins in self.instrs:
            code, o = ins[0], ins[1]
            if code == LIN_S:
                _, o, sec, pub, c0 = ins
                xs = _sum_expr(sec, "X", p)
                ms = _sum_expr(sec, "M", p)
                pubs = _sum_expr(pub, "X", p, c0) if (pub or c0) else None
                if pubs is None:
                    out.append(f" X[{o}]=({xs})%p; M[{o}]=({ms})%p")
                else:
                    out.append(f" t=({pubs})")
                    if leader:
                        out.append(f" X[{o}]=({xs}+t)%p; M[{o}]=({ms}+t*alpha)%p")
                    else:
                        out.append(f" X[{o}]=({xs})%p; M[{o}]=({ms}+t*alpha)%p")
            elif code == LIN_P:
                out.append(f" X[{o}]=({_sum_expr(ins[2], 'X', p, ins[3])})%p")
            elif code == MUL_SP:
                out.append(f" v=X[{ins[3]}]; X[{o}]=X[{ins[2]}]*v%p; M[{o}]=M[{ins[2]}]*v%p")
            elif code == MUL_PP:
                out.append(f" X[{o}]=X[{ins[2]}]*X[{ins[3]}]%p")
            elif code == ADD_SS:
                out.append(f" X[{o}]=(X[{ins[2]}]+X[{ins[3]}])%p; M[{o}]=(M[{ins[2]}]+M[{ins[3]}])%p")
            elif code == ADD_SP:
                a, c = ins[2], ins[3]
                xv = f"(X[{a}]+X[{c}])%p" if leader else f"X[{a}]"
                out.append(f" X[{o}]={xv}; M[{o}]=(M[{a}]+X[{c}]*alpha)%p")
            elif code == ADD_PP:
                out.append(f" X[{o}]=(X[{ins[2]}]+X[{ins[3]}])%p")
            elif code == ADDC_S:
                a, c = ins[2], ins[3]
                xv = f"(X[{a}]+{c})%p" if leader else f"X[{a}]"
                out.append(f" X[{o}]={xv}; M[{o}]=(M[{a}]+{c}*alpha)%p")
            elif code == ADDC_P:
                out.append(f" X[{o}]=(X[{ins[2]}]+{ins[3]})%p")
            elif code == SMUL_S:
                out.append(f" X[{o}]=X[{ins[2]}]*{ins[3]}%p; M[{o}]=M[{ins[2]}]*{ins[3]}%p")
            elif code == SMUL_P:
                out.append(f" X[{o}]=X[{ins[2]}]*{ins[3]}%p")
            elif code == CONST:
                out.append(f" X[{o}]={ins[2]}")
            elif code == RBIT:
                out.append(f" X[{o}],M[{o}]=B[{bit}]")
                bit += 1
            elif code == RINT:
                k = ins[2]
                out.append(f" X[{o}],M[{o}]=_pack_bits(B,{bit},{k},p)")
                bit += k
            elif code == PBIT:
                out.append(f" X[{o}]=(X[{ins[2]}]>>{ins[3]})&1")
            elif code == PMOD:
                out.append(f" X[{o}]=X[{ins[2]}]&{ins[3]}")
            else:  # pragma: no cover
                raise ValueError(f"bad instruction {ins!r}")
        if len(out) == 1:
            out.append(" pass")
        scope = {"_pack_bits": _pack_bits}
        exec(compile("\n".join(out), "<local-block>", "exec"), scope)
        return scope["block"]


def _pack_bits(B, start: int, k: int, p: int):
    x = m = 0
    for i in range(k):
        b, mb = B[start + i]
        x += b << i
        m += mb << i
    return x % p, m % p


@dataclass
class Program:
    n_wires: int
    inputs: list                 # (wire, provider)
    locals_by_level: dict        # level -> LocalBlock
    muls_by_level: dict          # level -> [(out, a, b)]
    opens_by_level: dict         # level -> [(out, a)]
    outputs: list                # (wire, is_secret)
    max_level: int
    n_muls: int
    cost: CostReport


def compile_program(circuit: Circuit) -> Program:
    c = expand(circuit)
    p = c.modulus
    kinds = wire_kinds(c.gates)
    lv = levels(c, kinds)
    ids: dict = {}

    def wid(w):
        if w not in ids:
            ids[w] = len(ids)
        return ids[w]

    inputs, outputs = [], []
    locals_by_level: dict = {}
    muls_by_level: dict = {}
    opens_by_level: dict = {}
    n_muls = 0
    for g in c.gates:
        op = g.op
        if op == "out":
            outputs.append((wid(g.ins[0]), kinds[g.ins[0]] == "s"))
            continue
        out = wid(g.outs[0])
        level = lv[g.outs[0]]
        ins = [wid(w) for w in g.ins]
        ks = [kinds[w] for w in g.ins]
        instr = None
        if op == "in":
            inputs.append((out, g.params[0]))
        elif op == "mul":
            if ks == ["s", "s"]:
                muls_by_level.setdefault(level, []).append((out, ins[0], ins[1]))
                n_muls += 1
            elif ks == ["p", "p"]:
                instr = (MUL_PP, out, ins[0], ins[1])
            elif ks[0] == "s":
                instr = (MUL_SP, out, ins[0], ins[1])
            else:
                instr = (MUL_SP, out, ins[1], ins[0])
        elif op == "open":
            opens_by_level.setdefault(level, []).append((out, ins[0]))
        elif op == "lin":
            c0 = g.params[0] % p
            sec = tuple((k % p, w) for k, w, kk in zip(g.params[1:], ins, ks) if kk == "s")
            pub = tuple((k % p, w) for k, w, kk in zip(g.params[1:], ins, ks) if kk == "p")
            instr = (LIN_S, out, sec, pub, c0) if sec else (LIN_P, out, pub, c0)
        elif op == "add":
            if ks == ["s", "s"]:
                instr = (ADD_SS, out, ins[0], ins[1])
            elif ks == ["p", "p"]:
                instr = (ADD_PP, out, ins[0], ins[1])
            elif ks[0] == "s":
                instr = (ADD_SP, out, ins[0], ins[1])
            else:
                instr = (ADD_SP, out, ins[1], ins[0])
        elif op == "addc":
            instr = ((ADDC_S if ks[0] == "s" else ADDC_P), out, ins[0], g.params[0] % p)
        elif op == "smul":
            instr = ((SMUL_S if ks[0] == "s" else SMUL_P), out, ins[0], g.params[0] % p)
        elif op == "const":
            instr = (CONST, out, g.params[0] % p)
        elif op == "rbit":
            instr = (RBIT, out)
        elif op == "rint":
            instr = (RINT, out, g.params[0])
        elif op == "pbit":
            instr = (PBIT, out, ins[0], g.params[0])
        elif op == "pmod":
            instr = (PMOD, out, ins[0], (1 << g.params[0]) - 1)
        else:  # pragma: no cover - expand() leaves only primitives
            raise ValueError(f"cannot execute {op}")
        if instr is not None:
            locals_by_level.setdefault(level, []).append(instr)
    max_level = max([0] + list(locals_by_level) + list(muls_by_level) + list(opens_by_level))
    blocks = {lv_: LocalBlock(instrs, p) for lv_, instrs in locals_by_level.items()}
    return Program(len(ids), inputs, blocks, muls_by_level, opens_by_level,
                   outputs, max_level, n_muls, primitive_cost(c, kinds, lv))


# -- party ---------------------------------------------------------------------

class Party:
    """One protocol participant.  Holds only its own shares and keys."""

    def __init__(self, pid: int, n: int, field: PrimeField, preproc: PartyPreproc,
                 key: SigningKey, seed: int, adversary: AdversarySpec):
        self.id = pid
        self.n = n
        self.p = field.p
        self.preproc = preproc
        self.alpha = preproc.alpha_i
        self.key = key
        self.rng = derive_rng(seed, "party", pid)
        self.leader = pid == LEADER
        self.mac_offset = sum(b.offset for b in adversary.of(pid, "tamper-mac"))
        self.output_offset = sum(b.offset for b in adversary.of(pid, "tamper-output"))
        self.phase = Phase.INIT
        self.X: list = []
        self.M: list = []
        self.inputs: list = []
        self.opened_vals: list = []    # chunks of public opened values
        self.opened_macs: list = []    # matching chunks of this party's MAC shares
        self.mult_triples: list = []
        self._mul_ptr = 0
        self._pending: dict = {}

    # bookkeeping
    def alloc(self, n_wires: int) -> None:
        self.X = [0] * n_wires
        self.M = [0] * n_wires

    def log_opened(self, values, macs) -> None:
        self.opened_vals.append(values)
        self.opened_macs.append(macs)

    def opened_count(self) -> int:
        return sum(len(v) for v in self.opened_vals)

    def nonce(self) -> bytes:
        return self.rng.bytes(NONCE_BYTES)

    # -- sacrifice
    def sacrifice_begin(self, count: int) -> list:
        rows = self.preproc.take_triples(2 * count)
        self.mult_triples = rows[0::2]
        self._pending["checked"] = rows[1::2]
        self._pending["t"] = self.preproc.take_singles(count)
        return [t for t, _ in self._pending["t"]]

    def sacrifice_mask(self, t_open: list) -> list:
        p = self.p
        ts = self._pending["t"]
        self.log_opened(t_open, [mt for _, mt in ts])
        rho, rho_m, sig, sig_m = [], [], [], []
        for t, (a, ma, b, mb, _, _), (f, mf, g, mg, _, _) in zip(t_open, self.mult_triples, self._pending["checked"]):
            rho.append((t * a - f) % p)
            rho_m.append((t * ma - mf) % p)
            sig.append((b - g) % p)
            sig_m.append((mb - mg) % p)
        self._pending["rs_macs"] = rho_m + sig_m
        return rho + sig

    def sacrifice_check(self, rs_open: list, t_open: list) -> list:
        p = self.p
        k = len(t_open)
        self.log_opened(rs_open, self._pending.pop("rs_macs"))
        alpha = self.alpha
        lead = self.leader
        vals, macs = [], []
        for j, ((a, ma, b, mb, c, mc), (f, mf, g, mg, h, mh)) in enumerate(zip(self.mult_triples, self._pending["checked"])):
            t = t_open[j]
            rho = rs_open[j]
            sig = rs_open[k + j]
            sr = sig * rho
            v = t * c - h - sig * f - rho * g
            if lead:
                v -= sr
            vals.append(v % p)
            macs.append((t * mc - mh - sig * mf - rho * mg - sr * alpha) % p)
        self._pending["chk_macs"] = macs
        return vals

    def sacrifice_end(self, chk_open: list) -> bool:
        self.log_opened(chk_open, self._pending.pop("chk_macs"))
        self._pending.pop("checked", None)
        self._pending.pop("t", None)
        return not any(chk_open)

    # -- inputs
    def input_masks(self, program: Program) -> dict:
        """Take one mask per input gate; return shares to send, keyed by provider."""
        out: dict = {}
        self._pending["masks"] = []
        for wire, provider in program.inputs:
            (r, mr), clear = self.preproc.take_mask(provider)
            self._pending["masks"].append((wire, provider, r, mr, clear))
            if provider != self.id:
                out.setdefault(provider, []).append(r)
        return out

    def input_epsilons(self, received: dict) -> tuple[list, bool]:
        """Sum partially opened masks; returns (epsilons to broadcast, masks consistent)."""
        p = self.p
        mine = [m for m in self._pending["masks"] if m[1] == self.id]
        idx = 0
        eps = []
        consistent = True
        for k, (wire, provider, r, mr, clear) in enumerate(mine):
            total = r
            for sender in sorted(received):
                total += received[sender][k]
            total %= p
            if total != clear:
                consistent = False
            x = self.inputs[idx] % p
            idx += 1
            eps.append((x - clear) % p)
        return eps, consistent

    def input_finish(self, eps_by_provider: dict) -> None:
        p = self.p
        cursor: dict = {}
        X, M = self.X, self.M
        alpha = self.alpha
        for wire, provider, r, mr, _ in self._pending.pop("masks"):
            k = cursor.get(provider, 0)
            cursor[provider] = k + 1
            e = eps_by_provider[provider][k]
            X[wire] = (r + e) % p if self.leader else r
            M[wire] = (mr + e * alpha) % p

    # -- local evaluation
    def run_block(self, block: "LocalBlock") -> None:
        bits = self.preproc.take_bits(block.bits) if block.bits else ()
        block.runs += 1
        # compiling costs far more than one interpreted pass; only pay it for hot blocks
        if block.runs > COMPILE_AFTER:
            block.fn(self.leader)(self.X, self.M, self.p, self.alpha, bits)
        else:
            self._interpret(block.instrs, bits)

    def run_local(self, instrs) -> None:
        """Interpreted evaluation of local instructions (reference for the compiled path)."""
        count = sum(1 if i[0] == RBIT else i[2] if i[0] == RINT else 0 for i in instrs)
        self._interpret(instrs, self.preproc.take_bits(count) if count else ())

    def _interpret(self, instrs, bits) -> None:
        X, M, p, alpha, lead = self.X, self.M, self.p, self.alpha, self.leader
        nb = 0
        for ins in instrs:
            code = ins[0]
            o = ins[1]
            if code == LIN_S:
                _, o, sec, pub, c0 = ins
                x = 0
                m = 0
                for k, w in sec:
                    x += k * X[w]
                    m += k * M[w]
                pubv = c0
                for k, w in pub:
                    pubv += k * X[w]
                if lead:
                    x += pubv
                X[o] = x % p
                M[o] = (m + pubv * alpha) % p
            elif code == MUL_SP:
                v = X[ins[3]]
                X[o] = X[ins[2]] * v % p
                M[o] = M[ins[2]] * v % p
            elif code == LIN_P:
                v = ins[3]
                for k, w in ins[2]:
                    v += k * X[w]
                X[o] = v % p
            elif code == PBIT:
                X[o] = (X[ins[2]] >> ins[3]) & 1
            elif code == RBIT:
                X[o], M[o] = bits[nb]
                nb += 1
            elif code == RINT:
                rows = bits[nb:nb + ins[2]]
                nb += ins[2]
                x = m = 0
                for i, (b, mb) in enumerate(rows):
                    x += b << i
                    m += mb << i
                X[o] = x % p
                M[o] = m % p
            elif code == PMOD:
                X[o] = X[ins[2]] & ins[3]
            elif code == ADD_SS:
                X[o] = (X[ins[2]] + X[ins[3]]) % p
                M[o] = (M[ins[2]] + M[ins[3]]) % p
            elif code == ADD_SP:
                v = X[ins[3]]
                X[o] = (X[ins[2]] + v) % p if lead else X[ins[2]]
                M[o] = (M[ins[2]] + v * alpha) % p
            elif code == ADD_PP:
                X[o] = (X[ins[2]] + X[ins[3]]) % p
            elif code == ADDC_S:
                c = ins[3]
                X[o] = (X[ins[2]] + c) % p if lead else X[ins[2]]
                M[o] = (M[ins[2]] + c * alpha) % p
            elif code == ADDC_P:
                X[o] = (X[ins[2]] + ins[3]) % p
            elif code == SMUL_S:
                X[o] = X[ins[2]] * ins[3] % p
                M[o] = M[ins[2]] * ins[3] % p
            elif code == SMUL_P:
                X[o] = X[ins[2]] * ins[3] % p
            elif code == MUL_PP:
                X[o] = X[ins[2]] * X[ins[3]] % p
            elif code == CONST:
                X[o] = ins[2]
            else:  # pragma: no cover
                raise ValueError(f"bad instruction {ins!r}")

    # -- one communication level
    def layer_shares(self, muls, opens) -> tuple[list, list, list]:
        p = self.p
        X, M = self.X, self.M
        start = self._mul_ptr
        trip = self.mult_triples[start:start + len(muls)]
        eps, eps_m, dl, dl_m = [], [], [], []
        for (out, a, b), (ta, tma, tb, tmb, _, _) in zip(muls, trip):
            eps.append((X[a] - ta) % p)
            eps_m.append((M[a] - tma) % p)
            dl.append((X[b] - tb) % p)
            dl_m.append((M[b] - tmb) % p)
        self._pending["layer_macs"] = (eps_m, dl_m, [M[a] for _, a in opens])
        return eps, dl, [X[a] for _, a in opens]

    def layer_finish(self, muls, opens, eps: list, dl: list, opened: list) -> None:
        p = self.p
        X, M = self.X, self.M
        eps_m, dl_m, op_m = self._pending.pop("layer_macs")
        if muls:
            self.log_opened(eps, eps_m)
            self.log_opened(dl, dl_m)
        if opens:
            self.log_opened(opened, op_m)
        alpha = self.alpha
        lead = self.leader
        start = self._mul_ptr
        self._mul_ptr = start + len(muls)
        for j, (out, _, _) in enumerate(muls):
            a, ma, b, mb, c, mc = self.mult_triples[start + j]
            e = eps[j]
            d = dl[j]
            ed = e * d
            v = c + e * b + d * a
            if lead:
                v += ed
            X[out] = v % p
            M[out] = (mc + e * mb + d * ma + ed * alpha) % p
        for (out, _), v in zip(opens, opened):
            X[out] = v

    # -- MAC checking
    def combined_mac(self, coeffs) -> tuple[int, int]:
        """``(a, gamma_i)`` for the public combination of everything opened so far."""
        p = self.p
        a = 0
        g = 0
        pos = 0
        for vals, macs in zip(self.opened_vals, self.opened_macs):
            cs = coeffs[pos:pos + len(vals)]
            pos += len(vals)
            a += sum(map(int.__mul__, cs, vals))
            g += sum(map(int.__mul__, cs, macs))
        return a % p, g % p

    def sigma(self, coeffs) -> int:
        a, g = self.combined_mac(coeffs)
        return (g - self.alpha * a + self.mac_offset) % self.p

    def clear_log(self) -> None:
        self.opened_vals = []
        self.opened_macs = []


# -- session -------------------------------------------------------------------

def _seed_coefficients(seed_value: int, count: int, p: int) -> list:
    base = seed_value.to_bytes(8, "little")
    return [int.from_bytes(hashlib.sha3_256(base + j.to_bytes(8, "little")).digest(), "little") % p
            for j in range(count)]


def _power_coefficients(e: int, count: int, p: int) -> list:
    out = []
    acc = 1
    for _ in range(count):
        acc = acc * e % p
        out.append(acc)
    return out


def analytic_message_count(program: Program, n: int, periodic_checks: int = 0) -> int:
    """Point-to-point deliveries an all-honest session sends."""
    pair = n * (n - 1)
    total = 0
    if program.n_muls:
        total += 3 * pair
    providers = {prov for _, prov in program.inputs}
    # each non-provider sends one partial-opening message per provider,
    # then every provider broadcasts its epsilons
    total += 2 * len(providers) * (n - 1)
    for level in range(1, program.max_level + 1):
        kinds = bool(program.muls_by_level.get(level)) * 2 + bool(program.opens_by_level.get(level))
        total += kinds * pair
    total += 4 * pair * periodic_checks
    total += 7 * pair
    return total


class Session:
    """One MPC evaluation of a circuit by all parties of a bundle."""

    def __init__(self, circuit: Circuit, bundle: PreprocBundle, *, seed: int = 0,
                 adversary: AdversarySpec | None = None, timeout_rounds: int = 1,
                 mac_check_every: int | None = None, keep_transcript: bool = True,
                 program: Program | None = None):
        self.field = bundle.field
        if circuit.modulus != self.field.p:
            raise ValueError("circuit and preprocessing use different moduli")
        self.bundle = bundle
        self.n = bundle.n
        self.session_id = bundle.session_id
        self.seed = seed
        self.adversary = adversary or AdversarySpec.honest()
        self.adversary.validate(self.n)
        self.program = program or compile_program(circuit)
        self.mac_check_every = mac_check_every
        self._check_resources()
        self.transcript = Transcript(keep=keep_transcript)
        self.transport = Transport(self.n, self.field.p, self.adversary, timeout_rounds, self.transcript)
        self.keys = [SigningKey.derive(seed, i) for i in range(self.n)]
        self.roster = {i: k.public_bytes() for i, k in enumerate(self.keys)}
        self._corrupt_triples()
        self.parties = [Party(i, self.n, self.field, bundle.parties[i], self.keys[i], seed, self.adversary)
                        for i in range(self.n)]
        self.step = "init"
        self.periodic_checks = 0

    def _check_resources(self) -> None:
        c = self.program.cost
        pp = self.bundle.parties[0]
        need = {"triples": c.triples_required, "singles": c.singles_required, "bits": c.bits_required}
        for kind, amount in need.items():
            if pp.remaining(kind) < amount:
                raise ResourceError(f"bundle has {pp.remaining(kind)} {kind}, circuit needs {amount}")
        for owner, amount in c.masks_required.items():
            left = len(pp.masks.get(owner, [])) - pp.used_masks.get(owner, 0)
            if left < amount:
                raise ResourceError(f"bundle has {left} masks for party {owner}, circuit needs {amount}")

    def _corrupt_triples(self) -> None:
        p = self.field.p
        for party, bs in self.adversary.behaviors.items():
            pp = self.bundle.parties[party]
            for b in bs:
                if b.kind != "corrupt-triple":
                    continue
                rows = list(pp.triples)
                a, ma, bb, mb, c, mc = rows[b.target]
                rows[b.target] = (a, ma, bb, mb, (c + b.offset) % p, mc)
                pp.triples = rows

    # -- round helpers
    def _exchange(self, outboxes: dict, expected=None) -> Delivery:
        try:
            return self.transport.round_exchange(outboxes, expected)
        except TransportTimeout as exc:
            raise ProtocolAbort("abort-attack", exc.party, self.step, exc.round) from None

    def _broadcast(self, msg_type: str, payloads: dict) -> Delivery:
        return self._exchange({i: [(None, msg_type, v)] for i, v in payloads.items()})

    def _abort(self, blame, party=None):
        return ProtocolAbort(blame, party, self.step, self.transport.round)

    # -- phases
    def _sacrifice(self) -> None:
        k = self.program.n_muls
        if not k:
            return
        self.step = "sacrifice"
        d = self._broadcast("sac-t", {pt.id: pt.sacrifice_begin(k) for pt in self.parties})
        t_open = d.opened("sac-t")
        d = self._broadcast("sac-open", {pt.id: pt.sacrifice_mask(t_open) for pt in self.parties})
        rs = d.opened("sac-open")
        d = self._broadcast("sac-check", {pt.id: pt.sacrifice_check(rs, t_open) for pt in self.parties})
        chk = d.opened("sac-check")
        results = [pt.sacrifice_end(chk) for pt in self.parties]
        if not all(results):
            raise self._abort("preprocessing-corrupt")

    def _inputs(self, inputs: dict) -> None:
        prog = self.program
        if not prog.inputs:
            return
        self.step = "input"
        for pt in self.parties:
            pt.inputs = list(inputs.get(pt.id, []))
        need = {}
        for _, prov in prog.inputs:
            need[prov] = need.get(prov, 0) + 1
        for prov, count in need.items():
            if len(inputs.get(prov, [])) < count:
                raise ValueError(f"party {prov} needs {count} inputs")
        outboxes = {}
        for pt in self.parties:
            shares = pt.input_masks(prog)
            outboxes[pt.id] = [(prov, "pin", vals) for prov, vals in sorted(shares.items())]
        senders = {i for i in outboxes if outboxes[i]}
        d = self._exchange({i: outboxes[i] for i in senders}, senders)
        eps_out = {}
        for prov in sorted(need):
            pt = self.parties[prov]
            received = {env.sender: env.ints for env in d.inbox(prov)}
            eps, consistent = pt.input_epsilons(received)
            if not consistent:
                raise self._abort("input-mask-mismatch", prov)
            eps_out[prov] = eps
        d = self._broadcast("eps", eps_out)
        eps_by_provider = {prov: unpack_elements(d.payload("eps", prov)) for prov in need}
        for pt in self.parties:
            pt.input_finish(eps_by_provider)

    def _layers(self) -> None:
        prog = self.program
        self.step = "evaluate"
        for pt in self.parties:
            if 0 in prog.locals_by_level:
                pt.run_block(prog.locals_by_level[0])
        for level in range(1, prog.max_level + 1):
            muls = prog.muls_by_level.get(level, [])
            opens = prog.opens_by_level.get(level, [])
            if muls or opens:
                outboxes = {}
                for pt in self.parties:
                    eps, dl, op = pt.layer_shares(muls, opens)
                    box = []
                    if muls:
                        box.append((None, "mul-eps", eps))
                        box.append((None, "mul-delta", dl))
                    if opens:
                        box.append((None, "open", op))
                    outboxes[pt.id] = box
                d = self._exchange(outboxes)
                e, dl, op = d.opened("mul-eps"), d.opened("mul-delta"), d.opened("open")
                for pt in self.parties:
                    pt.layer_finish(muls, opens, e, dl, op)
            block = prog.locals_by_level.get(level)
            if block is not None:
                for pt in self.parties:
                    pt.run_block(block)
            if self.mac_check_every and level % self.mac_check_every == 0:
                self.mac_check()
                for pt in self.parties:
                    pt.clear_log()
                self.periodic_checks += 1
                self.step = "evaluate"

    def _commit_round(self, msg_type: str, values: dict) -> tuple[dict, Delivery]:
        commits = {i: Commitment.make(v, self.parties[i].nonce()) for i, v in values.items()}
        d = self._broadcast(msg_type, {i: c.digest for i, c in commits.items()})
        digests = {i: d.payload(msg_type, i) for i in values}
        return commits, digests

    def _open_commitments(self, msg_type: str, commits: dict, digests: dict) -> dict:
        d = self._broadcast(msg_type, {i: c.opening() for i, c in commits.items()})
        opened = {}
        for i in sorted(commits):
            opening = d.payload(msg_type, i)
            if not check_opening(digests[i], opening):
                raise self._abort("bad-commitment", i)
            opened[i], _ = split_opening(opening)
        return opened

    def _sigma_round(self, coeffs) -> tuple[list, list]:
        sigmas = {pt.id: pt.sigma(coeffs) for pt in self.parties}
        commits, digests = self._commit_round("commit-sigma", {i: pack_elements([s]) for i, s in sigmas.items()})
        opened = self._open_commitments("open-sigma", commits, digests)
        values = [unpack_elements(opened[i])[0] for i in range(self.n)]
        if sum(values) % self.field.p != 0:
            raise self._abort("mac-check-failed")
        return values, [digests[i] for i in range(self.n)]

    def mac_check(self, coefficients=None) -> list:
        """Check every value opened so far; returns the opened sigmas.

        Without ``coefficients`` the parties commit-reveal seeds and expand
        their sum with SHA3 into one coefficient per opened value.
        """
        self.step = "mac-check"
        p = self.field.p
        for pt in self.parties:
            pt.phase = Phase.CHECKING
        if coefficients is None:
            seeds = {pt.id: pack_elements([int(pt.rng.integers(0, p))]) for pt in self.parties}
            commits, digests = self._commit_round("mc-seed-commit", seeds)
            opened = self._open_commitments("mc-seed-open", commits, digests)
            s = sum(unpack_elements(opened[i])[0] for i in range(self.n)) % p
            coeffs = _seed_coefficients(s, self.parties[0].opened_count(), p)
        else:
            coeffs = [c % p for c in coefficients]
        sigmas, _ = self._sigma_round(coeffs)
        for pt in self.parties:
            pt.phase = Phase.RUNNING
        return sigmas

    def _output(self) -> tuple[list, ComputationProof]:
        prog = self.program
        p = self.field.p
        n = self.n
        self.step = "output"
        for pt in self.parties:
            pt.phase = Phase.CHECKING
        secret_outs = [w for w, s in prog.outputs if s]
        shares = {}
        for pt in self.parties:
            ys = [pt.X[w] for w in secret_outs]
            if pt.output_offset and ys:
                ys[0] = (ys[0] + pt.output_offset) % p
            shares[pt.id] = (ys, [pt.M[w] for w in secret_outs])
        commits_y, digests_y = self._commit_round(
            "commit-y", {i: pack_elements(ys + ms) for i, (ys, ms) in shares.items()})

        # e is committed before it is opened so a rushing party cannot pick it
        e_rows = {pt.id: pt.preproc.take_singles(1)[0] for pt in self.parties}
        commits_e, digests_e = self._commit_round("commit-e", {i: pack_elements([row[0]]) for i, row in e_rows.items()})
        opened_e = self._open_commitments("open-e", commits_e, digests_e)
        e = sum(unpack_elements(opened_e[i])[0] for i in range(n)) % p
        t_count = self.parties[0].opened_count()
        coeffs = _power_coefficients(e, t_count + len(secret_outs), p)
        sigmas, sigma_digests = self._sigma_round(coeffs[:t_count])

        opened_y = self._open_commitments("open-y", commits_y, digests_y)
        k = len(secret_outs)
        y_rows = {i: unpack_elements(opened_y[i]) for i in range(n)}
        ys = [sum(y_rows[i][j] for i in range(n)) % p for j in range(k)]

        d = self._broadcast("open-alpha", {pt.id: [pt.alpha] for pt in self.parties})
        alpha = sum(unpack_elements(d.payload("open-alpha", i))[0] for i in range(n)) % p
        for j in range(k):
            if alpha * ys[j] % p != sum(y_rows[i][k + j] for i in range(n)) % p:
                raise self._abort("mac-check-failed")

        out_coeffs = coeffs[t_count:]
        results = []
        secret_iter = iter(ys)
        for w, is_secret in prog.outputs:
            results.append(next(secret_iter) if is_secret else self.parties[0].X[w])
        proof_sigmas = []
        for pt in self.parties:
            own = y_rows[pt.id]
            extra = sum(r * (own[k + j] - pt.alpha * ys[j]) for j, r in enumerate(out_coeffs))
            proof_sigmas.append((sigmas[pt.id] + extra) % p)
        sigs = [pt.key.sign(ComputationProof.message(self.session_id, results, pt.id, proof_sigmas[pt.id]))
                for pt in self.parties]
        return results, ComputationProof(self.session_id, results, proof_sigmas, sigma_digests, sigs)

    def run(self, inputs: dict) -> SessionResult:
        started = time.perf_counter()
        for pt in self.parties:
            pt.alloc(self.program.n_wires)
            pt.phase = Phase.RUNNING
        outputs = proof = abort = None
        try:
            self._sacrifice()
            self._inputs(inputs)
            self._layers()
            outputs, proof = self._output()
            for pt in self.parties:
                pt.phase = Phase.DONE
        except ProtocolAbort as exc:
            abort = Abort(exc.blame, exc.party, exc.step, exc.round)
            for pt in self.parties:
                pt.phase = Phase.ABORTED
        except ResourceError:
            for pt in self.parties:
                pt.phase = Phase.ABORTED
            raise
        elapsed = time.perf_counter() - started
        used = self.bundle.consumed()
        stats = {
            "parties": self.n,
            "mul_gates": self.program.n_muls,
            "triples_consumed": used["triples"],
            "singles_consumed": used["singles"],
            "bits_consumed": used["bits"],
            "masks_consumed": sum(used["masks"].values()),
            "rounds": self.transport.round,
            "envelopes": self.transport.envelopes,
            "messages": self.transport.messages,
            "elements": dict(self.transport.elements),
            "expected_messages": analytic_message_count(self.program, self.n, self.periodic_checks),
            "opened_values": self.parties[0].opened_count(),
            "online_seconds": elapsed,
            "transcript_head": self.transcript.head.hex(),
            "cost": self.program.cost,
        }
        return SessionResult(self.session_id, outputs, proof, self.transcript, stats, self.roster, abort)


def run_session(circuit: Circuit, inputs: dict, bundle: PreprocBundle, *, seed: int = 0,
                adversary: AdversarySpec | str | None = None, timeout_rounds: int = 1,
                mac_check_every: int | None = None, keep_transcript: bool = True,
                program: Program | None = None) -> SessionResult:
    if isinstance(adversary, str) or adversary is None:
        adversary = AdversarySpec.parse(adversary)
    session = Session(circuit, bundle, seed=seed, adversary=adversary, timeout_rounds=timeout_rounds,
                      mac_check_every=mac_check_every, keep_transcript=keep_transcript, program=program)
    return session.run(inputs)


def bundle_for(circuit: Circuit, n: int, seed: int, field: PrimeField | None = None, slack: int = 0,
               report: CostReport | None = None):
    """Dealer-generated bundle sized exactly for ``circuit`` (plus ``slack`` of each kind)."""
    from .preprocessing import Dealer

    field = field or PrimeField(circuit.modulus)
    c = report or cost(circuit)
    dealer = Dealer(n, seed, field)
    masks = max(c.masks_required.values(), default=0) + slack
    bundle = dealer.bundle(c.triples_required + 2 * slack, masks, c.singles_required + slack,
                           c.bits_required + slack)
    return bundle, dealer


def evaluate(circuit: Circuit, inputs: dict, n: int, seed: int = 0, **kwargs) -> SessionResult:
    """Generate preprocessing and run one session; convenience for tests and demos."""
    program = kwargs.pop("program", None) or compile_program(circuit)
    bundle, _ = bundle_for(circuit, n, seed, report=program.cost)
    return run_session(circuit, inputs, bundle, seed=seed, program=program, **kwargs)
