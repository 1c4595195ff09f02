"""Election transcript files and the replaying auditor.

A transcript is canonical JSON (sorted keys, no whitespace). Importing one
re-encodes it and insists on byte equality, so any representational change,
not just a semantic one, is caught before the audit starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from . import codec
from .codec import CodecError
from .group import GroupError, GroupParams, validate_params
from .ledger import GENESIS_HASH, Event, Ledger, LedgerError, Phase, chain_hash
from .protocol import ElectionResult, ProtocolError

FORMAT_VERSION = "sbl-transcript/1"

CHECKS = (
    "phase_legality",
    "signin_proofs",
    "mpc_recomputation",
    "ballot_proofs",
    "recovery_proofs",
    "tally_equations",
    "aggregation_sum",
    "chain_integrity",
)

_OP_CHECK = {
    "sign_in": "signin_proofs",
    "publish_mpc": "mpc_recomputation",
    "ballot": "ballot_proofs",
    "recovery": "recovery_proofs",
    "finalize": "tally_equations",
    "accept_result": "aggregation_sum",
}

_PROOF_CODES = {
    "sign_in": {"bad-proof"},
    "publish_mpc": {"mpc-mismatch", "encoding-mismatch"},
    "ballot": {"bad-proof"},
    "recovery": {"bad-proof", "absent-set-mismatch"},
    "finalize": {"tally-mismatch"},
    "accept_result": {"result-mismatch"},
}


class TranscriptError(ValueError):
    def __init__(self, code: str, message: str, offset: Optional[int] = None, event: Optional[int] = None) -> None:
        where = f" at byte {offset}" if offset is not None else ""
        where += f" in event {event}" if event is not None else ""
        super().__init__(f"{code}{where}: {message}")
        self.code = code
        self.offset = offset
        self.event = event


@dataclass
class ElectionTranscript:
    params: GroupParams
    election_id: bytes
    authority: bytes
    candidates: List[str]
    booth_count: int
    events: List[Event]
    booth_results: Dict[int, Any]  # booth id -> BoothTally | None (aborted)
    result: ElectionResult
    raw: dict = field(repr=False)

    def to_bytes(self) -> bytes:
        return codec.canonical_json(self.raw)


# -- export ----------------------------------------------------------------


def export(ledger: Ledger) -> bytes:
    if not ledger.all_terminal or ledger.main.result is None:
        raise TranscriptError("non-terminal", "every booth must be closed or aborted and the result aggregated")
    doc = {
        "header": {
            "format_version": FORMAT_VERSION,
            "election_id": ledger.election_id.hex(),
            "group": ledger.params.to_dict(),
            "booth_count": ledger.booth_count,
            "candidates": list(ledger.candidates),
            "authority": ledger.authority.hex(),
        },
        "events": [e.to_dict() for e in ledger.events],
        "result": {
            "booths": {
                str(b): codec.enc_tally(t) if t is not None else "aborted" for b, t in sorted(ledger.main.results.items())
            },
            "aggregate": codec.enc_result(ledger.main.result),
        },
    }
    return codec.canonical_json(doc)


# -- import ----------------------------------------------------------------


def _payload_checker(params: GroupParams, op: str) -> Optional[Callable[[Any], Any]]:
    """Decoder that membership-checks every element in an op's payload."""
    table = {
        "sign_in": lambda d: (codec.dec_elem(params, codec._get(d, "X"), "X"), codec.dec_schnorr(params, codec._get(d, "proof"))),
        "publish_mpc": lambda d: codec.dec_mpc(params, d),
        "ballot": lambda d: codec.dec_ballot(params, d),
        "recovery": lambda d: codec.dec_share(params, d),
        "finalize": lambda d: None if d is None else codec.dec_tally(params, d),
        "accept_result": lambda d: None
        if codec._get(d, "result") == "aborted"
        else codec.dec_tally(params, codec._get(d, "result")),
    }
    return table.get(op)


def _event_from_dict(params: GroupParams, i: int, d: Any) -> Event:
    try:
        seq, tick, target, op = (codec._get(d, k) for k in ("seq", "tick", "target", "op"))
        for name, v in (("seq", seq), ("tick", tick)):
            codec._int(v, name)
        if not isinstance(op, str):
            raise CodecError("malformed-json", "op must be a string")
        if not (target == "main" or (isinstance(target, int) and not isinstance(target, bool))):
            raise CodecError("malformed-json", "target must be a booth id or 'main'")
        caller = codec.dec_address(codec._get(d, "caller"))
        canonical = codec._bytes(codec._get(d, "canonical"), "canonical")
        block_hash = codec._bytes(codec._get(d, "block_hash"), "block_hash")
        payload = codec._get(d, "payload")
        checker = _payload_checker(params, op)
        if checker is not None:
            checker(payload)
    except CodecError as exc:
        raise TranscriptError(exc.code, str(exc), event=i) from exc
    return Event(seq, tick, target, op, caller, payload, canonical, block_hash)


def import_transcript(data: bytes) -> ElectionTranscript:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TranscriptError("malformed-json", "not UTF-8", offset=exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        ran_out = exc.pos >= len(text.rstrip()) or exc.msg.startswith("Unterminated string")
        code = "truncated" if ran_out else "malformed-json"
        raise TranscriptError(code, exc.msg, offset=exc.pos) from exc
    try:
        header = codec._get(doc, "header")
        if codec._get(header, "format_version") != FORMAT_VERSION:
            raise TranscriptError("bad-version", f"expected {FORMAT_VERSION!r}")
        try:
            params = validate_params(GroupParams.from_dict(codec._get(header, "group")))
        except GroupError as exc:
            raise TranscriptError("malformed-json", f"group parameters: {exc}") from exc
        election_id = codec._bytes(codec._get(header, "election_id"), "election_id")
        authority = codec.dec_address(codec._get(header, "authority"))
        candidates = codec._get(header, "candidates")
        if not isinstance(candidates, list) or not all(isinstance(c, str) for c in candidates) or not candidates:
            raise TranscriptError("malformed-json", "candidates must be a nonempty list of names")
        booth_count = codec._int(codec._get(header, "booth_count"), "booth_count")
        raw_events = codec._get(doc, "events")
        if not isinstance(raw_events, list):
            raise TranscriptError("malformed-json", "events must be a list")
        events = [_event_from_dict(params, i, e) for i, e in enumerate(raw_events)]
        result_block = codec._get(doc, "result")
        booths_raw = codec._get(result_block, "booths")
        if not isinstance(booths_raw, dict):
            raise TranscriptError("malformed-json", "result.booths must be an object")
        booth_results = {}
        for key, value in booths_raw.items():
            if not key.isdigit():
                raise TranscriptError("malformed-json", f"bad booth key {key!r}")
            booth_results[int(key)] = None if value == "aborted" else codec.dec_tally(params, value)
        result = codec.dec_result(codec._get(result_block, "aggregate"))
    except CodecError as exc:
        raise TranscriptError(exc.code, str(exc)) from exc
    transcript = ElectionTranscript(
        params, election_id, authority, candidates, booth_count, events, booth_results, result, doc
    )
    if transcript.to_bytes() != data:
        raise TranscriptError("malformed-json", "file is not in canonical encoding")
    return transcript


# -- audit -----------------------------------------------------------------


@dataclass
class CheckOutcome:
    checked: int = 0
    failed: int = 0

    @property
    def passed(self) -> bool:
        return self.failed == 0


@dataclass
class AuditReport:
    checks: Dict[str, CheckOutcome] = field(default_factory=lambda: {c: CheckOutcome() for c in CHECKS})
    first_failure: Optional[dict] = None

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def verdict(self) -> str:
        return "valid" if self.valid else "invalid"

    def ok(self, check: str) -> None:
        self.checks[check].checked += 1

    def fail(self, check: str, reason: str, event: Optional[int] = None, **where: Any) -> None:
        outcome = self.checks[check]
        outcome.checked += 1
        outcome.failed += 1
        if self.first_failure is None:
            self.first_failure = {"check": check, "reason": reason, "event": event, **where}

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "checks": {
                name: {"status": "pass" if c.passed else "fail", "checked": c.checked, "failed": c.failed}
                for name, c in self.checks.items()
            },
            "first_failure": self.first_failure,
        }


def _classify(op: str, code: str) -> str:
    if code in _PROOF_CODES.get(op, ()) or code == "non-member-element":
        return _OP_CHECK[op]
    return "phase_legality"


def audit(transcript: ElectionTranscript) -> AuditReport:
    """Replay every event on a fresh ledger and compare what it reproduces."""
    report = AuditReport()
    ledger = Ledger(transcript.params, transcript.election_id, transcript.authority, transcript.candidates)
    last = (-1, -1)
    for i, ev in enumerate(transcript.events):
        where = {"op": ev.op, "target": ev.target}
        if ev.seq != i or (ev.tick, ev.seq) <= last:
            report.fail("phase_legality", "event-order", i, **where)
        last = (ev.tick, ev.seq)
        try:
            replayed = ledger.apply(ev.tick, ev.target, ev.op, ev.caller, ev.payload)
        except (LedgerError, CodecError) as exc:
            check = _classify(ev.op, exc.code) if ev.op in _OP_CHECK else "phase_legality"
            report.fail(check, exc.code, i, **where)
            continue
        except (ProtocolError, TypeError, ValueError) as exc:
            report.fail("phase_legality", f"malformed-event: {exc}", i, **where)
            continue
        check = _OP_CHECK.get(ev.op, "phase_legality")
        if replayed.body() != ev.body():
            report.fail(check, "event-mismatch", i, **where)
        else:
            report.ok(check)

    # after replay, so semantic failures come first; each link is checked against
    # its recorded predecessor, so one bad link is reported once
    prev = GENESIS_HASH
    for i, ev in enumerate(transcript.events):
        if chain_hash(prev, ev) != ev.block_hash:
            report.fail("chain_integrity", "block-hash", i, op=ev.op, target=ev.target)
        else:
            report.ok("chain_integrity")
        prev = ev.block_hash

    if not transcript.events or transcript.events[0].op != "open":
        report.fail("phase_legality", "missing-genesis", 0)
    if ledger.booth_count != transcript.booth_count or len(ledger.booths) != transcript.booth_count:
        report.fail("phase_legality", "booth-count")
    for b in ledger.booths.values():
        if b.phase not in (Phase.CLOSED, Phase.ABORTED):
            report.fail("phase_legality", "non-terminal-booth", booth=b.booth_id)
        else:
            report.ok("phase_legality")

    g = transcript.params.generator
    for booth_id, claimed in sorted(transcript.booth_results.items()):
        booth = ledger.booths.get(booth_id)
        if booth is None:
            report.fail("tally_equations", "unknown-booth", booth=booth_id)
            continue
        if claimed is None:
            if booth.phase != Phase.ABORTED:
                report.fail("tally_equations", "aborted-flag-mismatch", booth=booth_id)
            else:
                report.ok("tally_equations")
            continue
        enc = booth.encoding
        consistent = (
            booth.tally == claimed
            and enc is not None
            and enc.pack(claimed.counts) == claimed.S
            and g.pow_public(claimed.S) == claimed.T
        )
        if consistent:
            report.ok("tally_equations")
        else:
            report.fail("tally_equations", "result-block-tally", booth=booth_id)
    if set(transcript.booth_results) != set(ledger.booths):
        report.fail("tally_equations", "result-block-booths")

    recorded = transcript.result
    k = len(transcript.candidates)
    summed = [0] * k
    for t in transcript.booth_results.values():
        if t is not None and len(t.counts) == k:
            for j, c in enumerate(t.counts):
                summed[j] += c
    if ledger.main.result != recorded or list(recorded.totals) != summed:
        report.fail("aggregation_sum", "aggregate-mismatch")
    else:
        report.ok("aggregation_sum")
    if transcript.raw["result"]["aggregate"].get("partial") != recorded.partial:
        report.fail("aggregation_sum", "partial-flag")
    return report


def audit_bytes(data: bytes) -> AuditReport:
    """Audit raw transcript bytes; import failures become an invalid report."""
    try:
        transcript = import_transcript(data)
    except TranscriptError as exc:
        report = AuditReport()
        check = "phase_legality"
        if exc.event is not None:
            try:
                op = json.loads(data)["events"][exc.event]["op"]
                check = _OP_CHECK.get(op, check)
            except (ValueError, KeyError, IndexError, TypeError):
                pass
        report.fail(check, f"import:{exc.code}", exc.event, offset=exc.offset, message=str(exc))
        return report
    return audit(transcript)
