"""Emulated booth and main contracts.

Each mutation runs every check before touching state, so a rejected call
leaves the ledger exactly as it was. Accepted calls append an :class:`Event`
whose payload is enough to replay the call on a fresh ledger.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

from . import codec
from .group import GroupElement, GroupParams, encode_items
from .protocol import (
    PHASE_RECOVERY,
    PHASE_SIGNIN,
    PHASE_VOTE,
    Ballot,
    BoothRoster,
    BoothTally,
    ElectionResult,
    MpcKeySet,
    ProtocolError,
    RecoveryShare,
    VoteEncoding,
    absent_set_hash,
    aggregate,
    derive_mpc_keys,
    make_encoding,
    recovery_base,
    tally_booth,
)
from .sigma import (
    DLEQ_TAG,
    SCHNORR_TAG,
    VOTE_TAG,
    ProofContext,
    ProofRejected,
    SchnorrProof,
    dleq_input,
    schnorr_input,
    verify_dleq,
    verify_schnorr,
    verify_vote,
    vote_input,
)

log = logging.getLogger(__name__)


class Phase(str, Enum):
    SETUP = "Setup"
    REGISTRATION = "Registration"
    SIGNIN = "SignIn"
    PREVOTING = "PreVoting"
    VOTING = "Voting"
    RECOVERY = "Recovery"
    TALLY = "Tally"
    CLOSED = "Closed"
    ABORTED = "Aborted"


TERMINAL = (Phase.CLOSED, Phase.ABORTED)

# Forward chain position; Recovery and Tally share a rank since either may follow Voting.
PHASE_RANK = {
    Phase.SETUP: 0,
    Phase.REGISTRATION: 1,
    Phase.SIGNIN: 2,
    Phase.PREVOTING: 3,
    Phase.VOTING: 4,
    Phase.RECOVERY: 5,
    Phase.TALLY: 6,
    Phase.CLOSED: 7,
    Phase.ABORTED: 7,
}

_ADVANCE = {
    Phase.SETUP: Phase.REGISTRATION,
    Phase.REGISTRATION: Phase.SIGNIN,
    Phase.SIGNIN: Phase.PREVOTING,
    Phase.PREVOTING: Phase.VOTING,
}


class LedgerError(Exception):
    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass
class LogicalClock:
    tick: int = 0

    def advance(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("clock cannot run backwards")
        self.tick += n
        return self.tick

    def set(self, tick: int) -> None:
        if tick < self.tick:
            raise ValueError(f"clock cannot move from {self.tick} back to {tick}")
        self.tick = tick


@dataclass
class Event:
    seq: int
    tick: int
    target: Union[int, str]  # booth id, or "main"
    op: str
    caller: bytes
    payload: Any
    canonical: bytes
    block_hash: bytes = b""

    def body(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "target": self.target,
            "op": self.op,
            "caller": self.caller.hex(),
            "payload": self.payload,
            "canonical": self.canonical.hex(),
        }

    def to_dict(self) -> dict:
        return {**self.body(), "block_hash": self.block_hash.hex()}


@dataclass
class BoothState:
    booth_id: int
    k: int
    phase_ticks: int
    phase: Phase = Phase.SETUP
    eligible: set = field(default_factory=set)
    roster: BoothRoster = field(default_factory=BoothRoster)
    mpc: Optional[MpcKeySet] = None
    encoding: Optional[VoteEncoding] = None
    ballots: Dict[bytes, Ballot] = field(default_factory=dict)
    absent: Optional[frozenset] = None
    shares: Dict[bytes, RecoveryShare] = field(default_factory=dict)
    tally: Optional[BoothTally] = None
    deadline: Optional[int] = None
    abort_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "booth_id": self.booth_id,
            "k": self.k,
            "phase_ticks": self.phase_ticks,
            "phase": self.phase.value,
            "eligible": sorted(a.hex() for a in self.eligible),
            "roster": [[a.hex(), X.hex()] for a, X in self.roster.entries],
            "mpc": codec.enc_mpc(self.mpc, self.encoding) if self.mpc is not None else None,
            "ballots": {a.hex(): codec.enc_ballot(b) for a, b in sorted(self.ballots.items())},
            "absent": sorted(self.absent) if self.absent is not None else None,
            "shares": {a.hex(): codec.enc_share(s) for a, s in sorted(self.shares.items())},
            "tally": codec.enc_tally(self.tally) if self.tally is not None else None,
            "deadline": self.deadline,
            "abort_reason": self.abort_reason,
        }

    def counted_ballots(self) -> List[Ballot]:
        return [self.ballots[a] for a, _ in self.roster.entries if a in self.ballots]


@dataclass
class MainState:
    election_id: bytes
    booths: List[int] = field(default_factory=list)
    results: Dict[int, Optional[BoothTally]] = field(default_factory=dict)  # None = aborted
    result: Optional[ElectionResult] = None

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id.hex(),
            "booths": list(self.booths),
            "results": {
                str(b): codec.enc_tally(t) if t is not None else "aborted" for b, t in sorted(self.results.items())
            },
            "result": codec.enc_result(self.result) if self.result is not None else None,
        }


GENESIS_HASH = bytes(32)


def chain_hash(prev: bytes, event: Event) -> bytes:
    return hashlib.sha256(encode_items(b"sbl/block/v1", [prev, codec.canonical_json(event.body())])).digest()


def _event_bytes(op: str, payload: Any) -> bytes:
    return encode_items(b"sbl/event/" + op.encode(), [codec.canonical_json(payload)])


class Ledger:
    """One main contract plus its booth contracts, sharing a logical clock."""

    def __init__(self, params: GroupParams, election_id: bytes, authority: bytes, candidates: Sequence[str]) -> None:
        self.params = params
        self.election_id = election_id
        self.authority = authority
        self.candidates = list(candidates)
        self.clock = LogicalClock()
        self.booths: Dict[int, BoothState] = {}
        self.main = MainState(election_id)
        self.events: List[Event] = []
        self.booth_count = 0

    @property
    def k(self) -> int:
        return len(self.candidates)

    # -- helpers -----------------------------------------------------------

    def _emit(self, target: Union[int, str], op: str, caller: bytes, payload: Any, canonical: Optional[bytes] = None) -> Event:
        ev = Event(
            len(self.events),
            self.clock.tick,
            target,
            op,
            caller,
            payload,
            canonical if canonical is not None else _event_bytes(op, payload),
        )
        ev.block_hash = chain_hash(self.events[-1].block_hash if self.events else GENESIS_HASH, ev)
        self.events.append(ev)
        return ev

    def _booth(self, booth_id: int) -> BoothState:
        booth = self.booths.get(booth_id)
        if booth is None:
            raise LedgerError("unknown-booth", f"booth {booth_id} is not deployed")
        return booth

    def _require_authority(self, caller: bytes) -> None:
        if caller != self.authority:
            raise LedgerError("not-authority", "caller is not the election authority")

    @staticmethod
    def _require_phase(booth: BoothState, *phases: Phase) -> None:
        if booth.phase not in phases:
            raise LedgerError(
                "wrong-phase", f"booth {booth.booth_id} is in {booth.phase.value}, needs {'/'.join(p.value for p in phases)}"
            )

    def _ctx(self, booth_id: int, voter: bytes, phase: bytes) -> ProofContext:
        return ProofContext(self.election_id, booth_id, voter, phase)

    def _set_phase(self, booth: BoothState, phase: Phase) -> None:
        log.debug("booth %d: %s -> %s at tick %d", booth.booth_id, booth.phase.value, phase.value, self.clock.tick)
        booth.phase = phase

    # -- authority-driven lifecycle ---------------------------------------

    def open_election(self, caller: bytes, booth_count: int) -> Event:
        """Genesis event binding the election header to the chain."""
        self._require_authority(caller)
        if self.events:
            raise LedgerError("wrong-phase", "election already opened")
        if booth_count < 1:
            raise LedgerError("bad-arguments", "need at least one booth")
        self.booth_count = booth_count
        return self._emit("main", "open", caller, self.header_payload())

    def header_payload(self) -> dict:
        return {
            "election_id": self.election_id.hex(),
            "authority": self.authority.hex(),
            "candidates": list(self.candidates),
            "booth_count": self.booth_count,
            "group": self.params.to_dict(),
        }

    def deploy_booth(self, caller: bytes, booth_id: int, phase_ticks: int) -> Event:
        self._require_authority(caller)
        if not self.events:
            raise LedgerError("wrong-phase", "election not opened")
        if len(self.booths) >= self.booth_count:
            raise LedgerError("bad-arguments", f"all {self.booth_count} booths already deployed")
        if booth_id in self.booths:
            raise LedgerError("duplicate-booth", f"booth {booth_id} already deployed")
        if self.main.result is not None:
            raise LedgerError("wrong-phase", "election already aggregated")
        if phase_ticks < 1:
            raise LedgerError("bad-arguments", "phase_ticks must be positive")
        self.booths[booth_id] = BoothState(booth_id, self.k, phase_ticks)
        self.main.booths.append(booth_id)
        return self._emit("main", "deploy", caller, {"booth_id": booth_id, "phase_ticks": phase_ticks})

    def advance_phase(self, caller: bytes, booth_id: int, to: Phase) -> Event:
        self._require_authority(caller)
        booth = self._booth(booth_id)
        to = Phase(to)
        if _ADVANCE.get(booth.phase) != to:
            raise LedgerError("illegal-transition", f"{booth.phase.value} -> {to.value}")
        if booth.phase == Phase.SIGNIN:
            if self.clock.tick < booth.deadline:
                raise LedgerError("deadline-not-reached", f"sign-in open until tick {booth.deadline}")
            if len(booth.roster) == 0:
                raise LedgerError("illegal-transition", "no voter signed in")
        if booth.phase == Phase.PREVOTING and booth.mpc is None:
            raise LedgerError("illegal-transition", "MPC keys not yet published")
        if to in (Phase.SIGNIN, Phase.VOTING):
            booth.deadline = self.clock.tick + booth.phase_ticks
        self._set_phase(booth, to)
        return self._emit(booth_id, "advance", caller, {"to": to.value})

    def authority_abort(self, caller: bytes, booth_id: int, reason: str) -> Event:
        self._require_authority(caller)
        booth = self._booth(booth_id)
        if booth.phase in TERMINAL:
            raise LedgerError("illegal-transition", f"booth {booth_id} already {booth.phase.value}")
        booth.abort_reason = reason
        self._set_phase(booth, Phase.ABORTED)
        return self._emit(booth_id, "abort", caller, {"reason": reason})

    def register(self, caller: bytes, booth_id: int, addresses: Sequence[bytes]) -> Event:
        self._require_authority(caller)
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.REGISTRATION)
        booth.eligible.update(addresses)
        return self._emit(booth_id, "register", caller, {"addresses": [a.hex() for a in addresses]})

    # -- voter submissions -------------------------------------------------

    def sign_in(self, caller: bytes, booth_id: int, X: GroupElement, proof: SchnorrProof) -> Event:
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.SIGNIN)
        if caller not in booth.eligible:
            raise LedgerError("not-eligible", "address not registered for this booth")
        if booth.roster.index_of(caller) is not None:
            raise LedgerError("duplicate-signin", "address already signed in")
        if X == self.params.identity:
            raise LedgerError("bad-proof", "identity is not an acceptable ephemeral key")
        ctx = self._ctx(booth_id, caller, PHASE_SIGNIN)
        try:
            verify_schnorr(self.params, ctx, X, proof)
        except ProofRejected as exc:
            raise LedgerError("bad-proof", exc.reason) from exc
        booth.roster.entries.append((caller, X))
        payload = {"X": X.hex(), "proof": codec.enc_schnorr(proof)}
        canonical = encode_items(SCHNORR_TAG, schnorr_input(ctx, X, proof.a))
        return self._emit(booth_id, "sign_in", caller, payload, canonical)

    def publish_mpc(self, caller: bytes, booth_id: int, keys: MpcKeySet, encoding: VoteEncoding) -> Event:
        self._require_authority(caller)
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.PREVOTING)
        if booth.mpc is not None:
            raise LedgerError("already-published", "MPC keys already stored")
        if tuple(keys.keys) != derive_mpc_keys(self.params, booth.roster).keys:
            raise LedgerError("mpc-mismatch", "submitted keys differ from the roster's derivation")
        try:
            expected = make_encoding(len(booth.roster), booth.k, self.params.q_bits)
        except ProtocolError as exc:
            raise LedgerError("encoding-mismatch", str(exc)) from exc
        if encoding != expected:
            raise LedgerError("encoding-mismatch", f"expected k={expected.k}, m={expected.m}")
        booth.mpc, booth.encoding = keys, encoding
        return self._emit(booth_id, "publish_mpc", caller, codec.enc_mpc(keys, encoding))

    def submit_ballot(self, caller: bytes, booth_id: int, ballot: Ballot) -> Event:
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.VOTING)
        i = booth.roster.index_of(caller)
        if i is None or ballot.voter != caller:
            raise LedgerError("not-signed-in", "sender is not on the roster")
        if caller in booth.ballots:
            raise LedgerError("double-vote", "a ballot from this address is already stored")
        X, Y = booth.roster.key(i), booth.mpc.keys[i - 1]
        ctx = self._ctx(booth_id, caller, PHASE_VOTE)
        try:
            verify_vote(self.params, ctx, X, Y, ballot.B, ballot.proof, booth.encoding.exponents)
        except ProofRejected as exc:
            raise LedgerError("bad-proof", exc.reason) from exc
        booth.ballots[caller] = ballot
        canonical = encode_items(
            VOTE_TAG,
            vote_input(ctx, X, Y, ballot.B, [b.a1 for b in ballot.proof.branches], [b.a2 for b in ballot.proof.branches]),
        )
        return self._emit(booth_id, "ballot", caller, codec.enc_ballot(ballot), canonical)

    def close_voting(self, caller: bytes, booth_id: int) -> Event:
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.VOTING)
        if self.clock.tick < booth.deadline:
            raise LedgerError("deadline-not-reached", f"voting open until tick {booth.deadline}")
        absent = frozenset(i for i, (a, _) in enumerate(booth.roster.entries, start=1) if a not in booth.ballots)
        if not absent:
            self._set_phase(booth, Phase.TALLY)
        elif len(absent) == len(booth.roster):
            booth.abort_reason = "no-ballots"
            self._set_phase(booth, Phase.ABORTED)
        else:
            booth.absent = absent
            booth.deadline = self.clock.tick + booth.phase_ticks
            self._set_phase(booth, Phase.RECOVERY)
        return self._emit(booth_id, "close_voting", caller, {})

    def submit_recovery(self, caller: bytes, booth_id: int, share: RecoveryShare) -> Event:
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.RECOVERY)
        i = booth.roster.index_of(caller)
        if i is None or caller not in booth.ballots or i in booth.absent or share.voter != caller:
            raise LedgerError("not-a-voter", "only voters who cast a ballot contribute recovery data")
        if caller in booth.shares:
            raise LedgerError("duplicate-share", "recovery share already stored")
        if share.absent_hash != absent_set_hash(booth.absent):
            raise LedgerError("absent-set-mismatch", "share was computed for a different absent set")
        h = recovery_base(self.params, booth.roster, booth.absent, i)
        ctx = self._ctx(booth_id, caller, PHASE_RECOVERY)
        X = booth.roster.key(i)
        if h == self.params.identity:
            if share.R != self.params.identity or share.proof is not None:
                raise LedgerError("bad-proof", "identity recovery base requires R = 1 and no proof")
            canonical = encode_items(b"sbl/event/recovery", [share.R.to_bytes(), share.absent_hash])
        else:
            if share.proof is None:
                raise LedgerError("bad-proof", "missing recovery proof")
            try:
                verify_dleq(self.params, ctx, X, h, share.R, share.proof)
            except ProofRejected as exc:
                raise LedgerError("bad-proof", exc.reason) from exc
            canonical = encode_items(DLEQ_TAG, dleq_input(ctx, X, h, share.R, share.proof.a1, share.proof.a2))
        booth.shares[caller] = share
        return self._emit(booth_id, "recovery", caller, codec.enc_share(share), canonical)

    def finalize(self, caller: bytes, booth_id: int, claimed: Optional[BoothTally]) -> Event:
        booth = self._booth(booth_id)
        self._require_phase(booth, Phase.TALLY, Phase.RECOVERY)
        payload = codec.enc_tally(claimed) if claimed is not None else None
        if booth.phase == Phase.RECOVERY:
            voters = [a for a in booth.ballots]
            missing = [a for a in voters if a not in booth.shares]
            if missing:
                if self.clock.tick < booth.deadline:
                    raise LedgerError("deadline-not-reached", f"recovery open until tick {booth.deadline}")
                booth.abort_reason = "recovery-incomplete"
                self._set_phase(booth, Phase.ABORTED)
                return self._emit(booth_id, "finalize", caller, payload)
        if claimed is None:
            raise LedgerError("tally-mismatch", "no tally claimed")
        ballots = booth.counted_ballots()
        T = tally_booth(self.params, ballots, booth.shares.values())
        enc = booth.encoding
        ok = (
            claimed.booth_id == booth_id
            and claimed.V == len(ballots)
            and len(claimed.counts) == enc.k
            and sum(claimed.counts) == claimed.V
            and all(c < (1 << enc.m) for c in claimed.counts)
            and enc.pack(claimed.counts) == claimed.S
            and claimed.T == T
            and self.params.generator.pow_public(claimed.S) == T
        )
        if not ok:
            raise LedgerError("tally-mismatch", "claimed counts do not reproduce the tally element")
        if booth.phase == Phase.RECOVERY:
            self._set_phase(booth, Phase.TALLY)
        booth.tally = claimed
        self._set_phase(booth, Phase.CLOSED)
        return self._emit(booth_id, "finalize", caller, payload)

    # -- main contract -----------------------------------------------------

    def accept_result(self, caller: bytes, booth_id: int, result: Optional[BoothTally]) -> Event:
        self._require_authority(caller)
        if booth_id not in self.main.booths:
            raise LedgerError("unknown-booth", f"booth {booth_id} not registered")
        if booth_id in self.main.results:
            raise LedgerError("already-reported", f"booth {booth_id} already reported")
        booth = self.booths[booth_id]
        self._require_phase(booth, *TERMINAL)
        expected = booth.tally if booth.phase == Phase.CLOSED else None
        if result != expected:
            raise LedgerError("result-mismatch", "reported result differs from the booth's finalized state")
        self.main.results[booth_id] = result
        if len(self.main.results) == self.booth_count:
            self.main.result = aggregate(
                (t for t in self.main.results.values() if t is not None),
                [b for b, t in self.main.results.items() if t is None],
                self.k,
            )
        payload = {"booth_id": booth_id, "result": codec.enc_tally(result) if result is not None else "aborted"}
        return self._emit("main", "accept_result", caller, payload)

    # -- replay and inspection ---------------------------------------------

    def apply(self, tick: int, target: Union[int, str], op: str, caller: bytes, payload: Any) -> Event:
        """Re-execute a recorded operation at ``tick``."""
        before = self.clock.tick
        try:
            self.clock.set(tick)
        except ValueError as exc:
            raise LedgerError("clock-regression", str(exc)) from exc
        try:
            return self._dispatch(target, op, caller, payload)
        except Exception:
            self.clock.tick = before
            raise

    def _dispatch(self, target: Union[int, str], op: str, caller: bytes, payload: Any) -> Event:
        p = self.params
        if op == "open":
            return self.open_election(caller, _field(payload, "booth_count"))
        if op == "deploy":
            return self.deploy_booth(caller, _field(payload, "booth_id"), _field(payload, "phase_ticks"))
        if op == "accept_result":
            raw = _field(payload, "result")
            result = None if raw == "aborted" else codec.dec_tally(p, raw)
            return self.accept_result(caller, _field(payload, "booth_id"), result)
        if not isinstance(target, int) or isinstance(target, bool):
            raise LedgerError("unknown-booth", f"operation {op!r} needs a booth target")
        if op == "advance":
            try:
                to = Phase(_field(payload, "to"))
            except ValueError as exc:
                raise LedgerError("illegal-transition", str(exc)) from exc
            return self.advance_phase(caller, target, to)
        if op == "abort":
            return self.authority_abort(caller, target, str(_field(payload, "reason")))
        if op == "register":
            return self.register(caller, target, [codec.dec_address(a) for a in _field(payload, "addresses")])
        if op == "sign_in":
            return self.sign_in(
                caller, target, codec.dec_elem(p, _field(payload, "X"), "X"), codec.dec_schnorr(p, _field(payload, "proof"))
            )
        if op == "publish_mpc":
            keys, encoding = codec.dec_mpc(p, payload)
            return self.publish_mpc(caller, target, keys, encoding)
        if op == "ballot":
            return self.submit_ballot(caller, target, codec.dec_ballot(p, payload))
        if op == "close_voting":
            return self.close_voting(caller, target)
        if op == "recovery":
            return self.submit_recovery(caller, target, codec.dec_share(p, payload))
        if op == "finalize":
            return self.finalize(caller, target, None if payload is None else codec.dec_tally(p, payload))
        raise LedgerError("unknown-operation", op)

    def snapshot(self) -> bytes:
        """Canonical bytes of the full ledger state, event log included."""
        return codec.canonical_json(
            {
                "tick": self.clock.tick,
                "booths": [self.booths[b].to_dict() for b in sorted(self.booths)],
                "main": self.main.to_dict(),
                "events": [e.to_dict() for e in self.events],
            }
        )

    @property
    def all_terminal(self) -> bool:
        return bool(self.booths) and all(b.phase in TERMINAL for b in self.booths.values())


def _field(payload: Any, key: str) -> Any:
    if not isinstance(payload, dict) or key not in payload:
        raise LedgerError("malformed-event", f"payload lacks {key!r}")
    return payload[key]
