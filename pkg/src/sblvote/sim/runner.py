"""End-to-end election driver: authority and voter agents against one ledger."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import random
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..group import GroupParams, named_params
from ..ledger import Ledger, LedgerError, Phase
from ..protocol import (
    Ballot,
    ProtocolError,
    VoterKeyMaterial,
    cast_ballot,
    decode_tally,
    derive_mpc_keys,
    keygen,
    make_booth_tally,
    make_encoding,
    make_recovery_share,
    tally_booth,
)
from ..sigma import ProofContext, prove_vote
from ..transcript import audit_bytes, export
from . import tamper
from .scenario import AttackOutcome, BoothOutcome, RunResult, ScenarioConfig

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


def voter_address(seed: int, i: int) -> bytes:
    return hashlib.sha256(f"sbl/voter/{seed}/{i}".encode()).digest()[:20]


def authority_address(election_id: str) -> bytes:
    return hashlib.sha256(f"sbl/authority/{election_id}".encode()).digest()[:20]


class Metrics:
    def __init__(self) -> None:
        self.seconds: Dict[str, float] = defaultdict(float)
        self.ops: Dict[str, int] = defaultdict(int)

    @contextmanager
    def timed(self, phase: str, ops: int = 1):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[phase] += time.perf_counter() - t0
            self.ops[phase] += ops


@dataclass
class Voter:
    index: int
    address: bytes
    booth: int
    vote: Optional[int]  # None = abstains
    signs_in: bool
    key: Optional[VoterKeyMaterial] = None
    stalls_recovery: bool = False


@dataclass
class Election:
    config: ScenarioConfig
    params: GroupParams
    ledger: Ledger
    authority: bytes
    voters: List[Voter]
    rng: random.Random
    metrics: Metrics = field(default_factory=Metrics)
    outcomes: List[AttackOutcome] = field(default_factory=list)

    def attacks(self, kind: str) -> List[int]:
        return [a.booth for a in self.config.attacks if a.type == kind]

    def ctx(self, booth: int, voter: bytes) -> ProofContext:
        return ProofContext(self.ledger.election_id, booth, voter, b"")

    def booth_voters(self, booth: int) -> List[Voter]:
        return [v for v in self.voters if v.booth == booth]

    def expect_reject(self, attack: str, booth: int, code: str, submit) -> None:
        outcome = AttackOutcome(attack=attack, booth=booth, expect="ledger-reject", code=code)
        before = len(self.ledger.events)
        try:
            submit()
        except LedgerError as exc:
            outcome.observed = exc.code
        outcome.satisfied = outcome.observed == code and len(self.ledger.events) == before
        log.info("attack %s on booth %d: ledger said %s", attack, booth, outcome.observed)
        self.outcomes.append(outcome)


def _plan_voters(config: ScenarioConfig, behaviour: random.Random) -> List[Voter]:
    voters = []
    for i in range(config.voters):
        signs_in = behaviour.random() < config.signin_rate
        if isinstance(config.votes, list):
            vote = config.votes[i]
        else:
            vote = behaviour.randint(1, config.candidates)
        if vote is not None and behaviour.random() < config.abstain_rate:
            vote = None
        # round-robin group assignment by registration order
        voters.append(Voter(i, voter_address(config.seed, i), i % config.booths + 1, vote, signs_in))
    return voters


def _arrange_stall(e: Election, booth: int) -> bool:
    """Make one voter abstain and another withhold its recovery share."""
    members = e.booth_voters(booth)
    if len(members) < 2:
        return False
    staller, absentee = members[0], members[-1]
    staller.signs_in = absentee.signs_in = True
    staller.vote = staller.vote or 1
    staller.stalls_recovery = True
    absentee.vote = None
    return True


def _forged_ballot(e: Election, voter: Voter, Y) -> Ballot:
    """Ballot for exponent 3, proven against an encoding list the booth never allowed."""
    enc = e.ledger.booths[voter.booth].encoding
    bogus = list(enc.exponents)
    bogus[0] = 3 if 3 not in bogus else (1 << (enc.k * enc.m)) + 1
    B, proof = prove_vote(e.params, e.ctx(voter.booth, voter.address).with_phase(b"vote"), voter.key.x, Y, 1, bogus, e.rng)
    return Ballot(voter.address, B, proof)


def run_election(config: ScenarioConfig, audit: bool = False) -> Tuple[RunResult, bytes, List[AttackOutcome]]:
    started = time.perf_counter()
    params = named_params(config.group)
    behaviour = random.Random(f"{config.seed}/behaviour")
    authority = authority_address(config.election_id)
    candidates = [f"candidate-{j}" for j in range(1, config.candidates + 1)]
    ledger = Ledger(params, config.election_id.encode(), authority, candidates)
    e = Election(config, params, ledger, authority, _plan_voters(config, behaviour), random.Random(f"{config.seed}/crypto"))
    m = e.metrics
    booth_ids = list(range(1, config.booths + 1))
    clock = ledger.clock

    for b in e.attacks("stall-recovery"):
        if not _arrange_stall(e, b):
            e.outcomes.append(
                AttackOutcome(attack="stall-recovery", booth=b, expect="booth-aborted", code="too-few-voters")
            )

    # Registration
    ledger.open_election(authority, config.booths)
    for b in booth_ids:
        ledger.deploy_booth(authority, b, config.phase_ticks)
        ledger.advance_phase(authority, b, Phase.REGISTRATION)
        ledger.register(authority, b, [v.address for v in e.booth_voters(b)])
    clock.advance()

    # SignIn
    for b in booth_ids:
        ledger.advance_phase(authority, b, Phase.SIGNIN)
    for b in e.attacks("wrong-phase"):
        v = e.booth_voters(b)[0]
        ballot = Ballot(v.address, params.generator, prove_vote(
            params, e.ctx(b, v.address).with_phase(b"vote"), params.scalar(1), params.generator, 1, [1], e.rng
        )[1])
        e.expect_reject("wrong-phase", b, "wrong-phase", lambda: ledger.submit_ballot(v.address, b, ballot))
    clock.advance()
    for v in e.voters:
        if not v.signs_in:
            continue
        with m.timed("signin_prove"):
            v.key = keygen(params, e.ctx(v.booth, v.address), e.rng)
        with m.timed("signin_verify"):
            ledger.sign_in(v.address, v.booth, v.key.X, v.key.proof)
    clock.advance(config.phase_ticks)

    # PreVoting: authority derives MPC keys off-chain, ledger recomputes them
    live = []
    for b in booth_ids:
        booth = ledger.booths[b]
        if len(booth.roster) == 0:
            ledger.authority_abort(authority, b, "no-signins")
            continue
        ledger.advance_phase(authority, b, Phase.PREVOTING)
        with m.timed("mpc_derive"):
            keys = derive_mpc_keys(params, booth.roster)
        try:
            encoding = make_encoding(len(booth.roster), config.candidates, params.q_bits)
        except ProtocolError as exc:
            raise ScenarioError(exc.code, str(exc)) from exc
        if b in e.attacks("bad-mpc-keys"):
            bad = list(keys.keys)
            bad[0] = bad[0] * params.generator
            e.expect_reject(
                "bad-mpc-keys", b, "mpc-mismatch", lambda: ledger.publish_mpc(authority, b, type(keys)(tuple(bad)), encoding)
            )
        with m.timed("mpc_verify"):
            ledger.publish_mpc(authority, b, keys, encoding)
        ledger.advance_phase(authority, b, Phase.VOTING)
        live.append(b)
    clock.advance()

    # Voting
    forged = set(e.attacks("forged-ballot"))
    doubled = set(e.attacks("double-vote"))
    for v in e.voters:
        if v.booth not in live or v.key is None:
            continue
        booth = ledger.booths[v.booth]
        i = booth.roster.index_of(v.address)
        Y = booth.mpc.keys[i - 1]
        if v.booth in forged and v.vote is not None:
            forged.discard(v.booth)
            bad = _forged_ballot(e, v, Y)
            e.expect_reject("forged-ballot", v.booth, "bad-proof", lambda: ledger.submit_ballot(v.address, v.booth, bad))
        if v.vote is None:
            continue
        with m.timed("ballot_prove"):
            ballot = cast_ballot(params, e.ctx(v.booth, v.address), v.key, Y, v.vote, booth.encoding, e.rng)
        with m.timed("ballot_verify"):
            ledger.submit_ballot(v.address, v.booth, ballot)
        if v.booth in doubled:
            doubled.discard(v.booth)
            again = cast_ballot(params, e.ctx(v.booth, v.address), v.key, Y, v.vote % config.candidates + 1, booth.encoding, e.rng)
            e.expect_reject("double-vote", v.booth, "double-vote", lambda: ledger.submit_ballot(v.address, v.booth, again))
    clock.advance(config.phase_ticks)
    for b in live:
        ledger.close_voting(authority, b)

    # Fault recovery
    recovering = [b for b in live if ledger.booths[b].phase == Phase.RECOVERY]
    if recovering:
        clock.advance()
    for b in recovering:
        booth = ledger.booths[b]
        for v in e.booth_voters(b):
            if v.address not in booth.ballots or v.stalls_recovery:
                continue
            with m.timed("recovery_prove"):
                share = make_recovery_share(params, e.ctx(b, v.address), v.key, booth.roster, booth.absent, e.rng)
            with m.timed("recovery_verify"):
                ledger.submit_recovery(v.address, b, share)
    if recovering:
        clock.advance(config.phase_ticks)

    # Tally: decode off-chain from public ledger data, then have the ledger check the claim
    for b in live:
        booth = ledger.booths[b]
        if booth.phase == Phase.ABORTED:
            continue
        missing = booth.phase == Phase.RECOVERY and any(a not in booth.shares for a in booth.ballots)
        claimed = None
        if not missing:
            with m.timed("tally_decode"):
                ballots = booth.counted_ballots()
                T = tally_booth(params, ballots, booth.shares.values())
                counts = decode_tally(params, T, len(ballots), booth.encoding)
                claimed = make_booth_tally(params, b, counts, booth.encoding)
        with m.timed("tally_verify"):
            ledger.finalize(authority, b, claimed)
    for b in booth_ids:
        booth = ledger.booths[b]
        ledger.accept_result(authority, b, booth.tally if booth.phase == Phase.CLOSED else None)

    for b in e.attacks("stall-recovery"):
        if any(o.attack == "stall-recovery" and o.booth == b for o in e.outcomes):
            continue
        booth = ledger.booths[b]
        e.outcomes.append(
            AttackOutcome(
                attack="stall-recovery",
                booth=b,
                expect="booth-aborted",
                code="recovery-incomplete",
                observed=booth.abort_reason,
                satisfied=booth.phase == Phase.ABORTED and booth.abort_reason == "recovery-incomplete",
            )
        )

    with m.timed("export"):
        transcript = export(ledger)

    if e.attacks("tamper-transcript"):
        altered = tamper.shift_ballot(transcript, e.rng) or tamper.alter_aggregate(transcript, e.rng)
        transcript = altered
        audit = True

    report = None
    if audit:
        with m.timed("audit"):
            report = audit_bytes(transcript)
        for b in e.attacks("tamper-transcript"):
            first = report.first_failure or {}
            e.outcomes.append(
                AttackOutcome(
                    attack="tamper-transcript",
                    booth=b,
                    expect="audit-invalid",
                    code="invalid",
                    observed=f"{report.verdict}:{first.get('check')}",
                    satisfied=not report.valid,
                )
            )

    result = _summarize(e)
    result.timings = {k: round(v, 6) for k, v in m.seconds.items()}
    result.timings["total"] = round(time.perf_counter() - started, 6)
    result.counters = dict(m.ops)
    if report is not None:
        result.counters["audit_valid"] = int(report.valid)
    return result, transcript, e.outcomes


def _summarize(e: Election) -> RunResult:
    ledger = e.ledger
    k = e.config.candidates
    expected = [0] * k
    booths = []
    for b, booth in sorted(ledger.booths.items()):
        if booth.phase == Phase.CLOSED:
            for v in e.booth_voters(b):
                if v.address in booth.ballots:
                    expected[v.vote - 1] += 1
        booths.append(
            BoothOutcome(
                booth_id=b,
                status=booth.phase.value,
                voters=len(e.booth_voters(b)),
                signed_in=len(booth.roster),
                ballots=len(booth.ballots),
                counts=list(booth.tally.counts) if booth.tally is not None else None,
                abort_reason=booth.abort_reason,
            )
        )
    agg = ledger.main.result
    totals = list(agg.totals)
    return RunResult(
        booths=booths,
        totals=totals,
        partial=agg.partial,
        expected=expected,
        match=totals == expected,
        attacks=list(e.outcomes),
    )


def run(config: ScenarioConfig, audit: bool = False) -> Tuple[RunResult, bytes]:
    result, transcript, _ = run_election(config, audit=audit)
    return result, transcript


BENCH_PHASES = (
    ("signin_prove", "proofs"),
    ("signin_verify", "verifications"),
    ("mpc_derive", "derivations"),
    ("mpc_verify", "verifications"),
    ("ballot_prove", "proofs"),
    ("ballot_verify", "verifications"),
    ("recovery_prove", "proofs"),
    ("recovery_verify", "verifications"),
    ("tally_decode", "decodes"),
    ("tally_verify", "verifications"),
    ("export", "exports"),
    ("audit", "audits"),
)


def bench(config: ScenarioConfig, audit: bool = True) -> Tuple[List[dict], RunResult]:
    result, _, _ = run_election(config, audit=audit)
    rows = []
    for phase, unit in BENCH_PHASES:
        if phase not in result.timings:
            continue
        seconds = result.timings[phase]
        ops = result.counters.get(phase, 0)
        rows.append(
            {
                "phase": phase,
                "seconds": round(seconds, 6),
                "ops": ops,
                "unit": unit,
                "ops_per_sec": round(ops / seconds, 3) if seconds > 0 else 0.0,
            }
        )
    rows.append({"phase": "total", "seconds": result.timings["total"], "ops": 1, "unit": "runs", "ops_per_sec": 0.0})
    return rows, result


def rows_to_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["phase", "seconds", "ops", "unit", "ops_per_sec"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
