"""Post-hoc transcript manipulations the auditor must catch.

Each function takes canonical transcript bytes and returns altered canonical
bytes (or None when the transcript has nothing to tamper with). Edits are
semantic, so the result still parses; the auditor, not the importer, has to
notice.
"""

from __future__ import annotations

import json
import random
from typing import Callable, Dict, Optional

from ..codec import canonical_json
from ..group import GroupParams


def _load(data: bytes) -> dict:
    return json.loads(data)


def _params(doc: dict) -> GroupParams:
    return GroupParams.from_dict(doc["header"]["group"])


def _events(doc: dict, op: str) -> list:
    return [e for e in doc["events"] if e["op"] == op]


def shift_ballot(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Multiply one ballot's blinded vote by g (stays a group member)."""
    doc = _load(data)
    ballots = _events(doc, "ballot")
    if not ballots:
        return None
    ev = rng.choice(ballots)
    p = _params(doc)
    B = p.element_from_bytes(bytes.fromhex(ev["payload"]["B"]))
    ev["payload"]["B"] = (B * p.generator).hex()
    return canonical_json(doc)


def duplicate_ballot(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Replay a stored ballot event right after itself (double vote)."""
    doc = _load(data)
    ballots = _events(doc, "ballot")
    if not ballots:
        return None
    ev = rng.choice(ballots)
    i = doc["events"].index(ev)
    doc["events"].insert(i + 1, dict(ev))
    for seq, e in enumerate(doc["events"]):
        e["seq"] = seq
    return canonical_json(doc)


def forge_proof(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Swap the response of one branch of a ballot proof for a random scalar."""
    doc = _load(data)
    ballots = _events(doc, "ballot")
    if not ballots:
        return None
    ev = rng.choice(ballots)
    p = _params(doc)
    branch = rng.choice(ev["payload"]["proof"])
    old = int(branch["z"], 16)
    new = old
    while new == old:
        new = rng.randrange(p.q)
    branch["z"] = p.scalar(new).hex()
    return canonical_json(doc)


def wrong_phase_event(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Move a ballot event in front of its booth's first sign-in."""
    doc = _load(data)
    ballots = _events(doc, "ballot")
    if not ballots:
        return None
    ev = rng.choice(ballots)
    events = doc["events"]
    first_signin = next(i for i, e in enumerate(events) if e["op"] == "sign_in" and e["target"] == ev["target"])
    events.remove(ev)
    ev = dict(ev, tick=events[first_signin]["tick"])
    events.insert(first_signin, ev)
    for seq, e in enumerate(events):
        e["seq"] = seq
    return canonical_json(doc)


def alter_tally(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Replace a closed booth's counts in the result block by another vector with the same sum."""
    doc = _load(data)
    closed = [(b, t) for b, t in doc["result"]["booths"].items() if t != "aborted"]
    candidates = [(b, t) for b, t in closed if len(t["counts"]) >= 2 and sum(t["counts"]) > 0]
    if not candidates:
        return None
    _, t = rng.choice(candidates)
    counts = t["counts"]
    src = next(j for j, c in enumerate(counts) if c > 0)
    dst = (src + 1) % len(counts)
    counts[src] -= 1
    counts[dst] += 1
    return canonical_json(doc)


def alter_roster_order(data: bytes, rng: random.Random) -> Optional[bytes]:
    """Swap the payloads and callers of two sign-ins in the same booth."""
    doc = _load(data)
    by_booth: Dict[int, list] = {}
    for e in _events(doc, "sign_in"):
        by_booth.setdefault(e["target"], []).append(e)
    pairs = [evs for evs in by_booth.values() if len(evs) >= 2]
    if not pairs:
        return None
    a, b = rng.sample(rng.choice(pairs), 2)
    for key in ("payload", "caller", "canonical"):
        a[key], b[key] = b[key], a[key]
    return canonical_json(doc)


def alter_aggregate(data: bytes, rng: random.Random) -> Optional[bytes]:
    doc = _load(data)
    totals = doc["result"]["aggregate"]["totals"]
    totals[rng.randrange(len(totals))] += 1
    return canonical_json(doc)


def flip_bit(data: bytes, rng: random.Random) -> bytes:
    i = rng.randrange(len(data))
    out = bytearray(data)
    out[i] ^= 1 << rng.randrange(8)
    return bytes(out)


TAMPERS: Dict[str, Callable[[bytes, random.Random], Optional[bytes]]] = {
    "shift-ballot": shift_ballot,
    "double-vote": duplicate_ballot,
    "forged-proof": forge_proof,
    "wrong-phase-event": wrong_phase_event,
    "altered-tally": alter_tally,
    "altered-roster-order": alter_roster_order,
    "altered-aggregate": alter_aggregate,
}
