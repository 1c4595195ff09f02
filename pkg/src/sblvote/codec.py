"""JSON-ready encodings of protocol objects.

Elements and scalars travel as lowercase hex of their fixed-width big-endian
bytes; decoding re-checks subgroup membership and scalar range.
"""

from __future__ import annotations

import json
from typing import Any

from .group import GroupElement, GroupError, GroupParams, Scalar
from .protocol import Ballot, BoothTally, ElectionResult, MpcKeySet, RecoveryShare, VoteEncoding
from .sigma import DleqProof, SchnorrProof, VoteBranch, VoteProof


class CodecError(ValueError):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _bytes(s: Any, what: str) -> bytes:
    if not isinstance(s, str):
        raise CodecError("malformed-json", f"{what}: expected hex string")
    if s != s.lower():
        raise CodecError("malformed-json", f"{what}: hex must be lowercase")
    try:
        return bytes.fromhex(s)
    except ValueError as exc:
        raise CodecError("malformed-json", f"{what}: {exc}") from exc


def enc_elem(e: GroupElement) -> str:
    return e.hex()


def dec_elem(params: GroupParams, s: Any, what: str = "element") -> GroupElement:
    data = _bytes(s, what)
    try:
        return params.element_from_bytes(data)
    except GroupError as exc:
        raise CodecError("non-member-element", f"{what}: {exc}") from exc


def dec_scalar(params: GroupParams, s: Any, what: str = "scalar") -> Scalar:
    data = _bytes(s, what)
    try:
        return params.scalar_from_bytes(data)
    except GroupError as exc:
        raise CodecError("malformed-json", f"{what}: {exc}") from exc


def dec_address(s: Any) -> bytes:
    return _bytes(s, "address")


def _int(v: Any, what: str) -> int:
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise CodecError("malformed-json", f"{what}: expected non-negative integer")
    return v


def _get(d: Any, key: str) -> Any:
    if not isinstance(d, dict) or key not in d:
        raise CodecError("malformed-json", f"missing field {key!r}")
    return d[key]


# -- proofs ----------------------------------------------------------------


def enc_schnorr(p: SchnorrProof) -> dict:
    return {"a": p.a.hex(), "z": p.z.hex()}


def dec_schnorr(params: GroupParams, d: Any) -> SchnorrProof:
    return SchnorrProof(dec_elem(params, _get(d, "a"), "proof.a"), dec_scalar(params, _get(d, "z"), "proof.z"))


def enc_dleq(p: DleqProof) -> dict:
    return {"a1": p.a1.hex(), "a2": p.a2.hex(), "z": p.z.hex()}


def dec_dleq(params: GroupParams, d: Any) -> DleqProof:
    return DleqProof(
        dec_elem(params, _get(d, "a1"), "proof.a1"),
        dec_elem(params, _get(d, "a2"), "proof.a2"),
        dec_scalar(params, _get(d, "z"), "proof.z"),
    )


def enc_vote_proof(p: VoteProof) -> list:
    return [{"a1": b.a1.hex(), "a2": b.a2.hex(), "c": b.c.hex(), "z": b.z.hex()} for b in p.branches]


def dec_vote_proof(params: GroupParams, d: Any) -> VoteProof:
    if not isinstance(d, list):
        raise CodecError("malformed-json", "vote proof must be a list of branches")
    return VoteProof(
        tuple(
            VoteBranch(
                dec_elem(params, _get(b, "a1"), f"branch[{j}].a1"),
                dec_elem(params, _get(b, "a2"), f"branch[{j}].a2"),
                dec_scalar(params, _get(b, "c"), f"branch[{j}].c"),
                dec_scalar(params, _get(b, "z"), f"branch[{j}].z"),
            )
            for j, b in enumerate(d)
        )
    )


# -- protocol artifacts ----------------------------------------------------


def enc_ballot(b: Ballot) -> dict:
    return {"voter": b.voter.hex(), "B": b.B.hex(), "proof": enc_vote_proof(b.proof)}


def dec_ballot(params: GroupParams, d: Any) -> Ballot:
    return Ballot(
        dec_address(_get(d, "voter")), dec_elem(params, _get(d, "B"), "B"), dec_vote_proof(params, _get(d, "proof"))
    )


def enc_share(s: RecoveryShare) -> dict:
    return {
        "voter": s.voter.hex(),
        "R": s.R.hex(),
        "proof": enc_dleq(s.proof) if s.proof is not None else None,
        "absent_hash": s.absent_hash.hex(),
    }


def dec_share(params: GroupParams, d: Any) -> RecoveryShare:
    proof = _get(d, "proof")
    return RecoveryShare(
        dec_address(_get(d, "voter")),
        dec_elem(params, _get(d, "R"), "R"),
        dec_dleq(params, proof) if proof is not None else None,
        _bytes(_get(d, "absent_hash"), "absent_hash"),
    )


def enc_mpc(keys: MpcKeySet, encoding: VoteEncoding) -> dict:
    return {"Y": [y.hex() for y in keys.keys], "k": encoding.k, "m": encoding.m}


def dec_mpc(params: GroupParams, d: Any) -> tuple[MpcKeySet, VoteEncoding]:
    ys = _get(d, "Y")
    if not isinstance(ys, list):
        raise CodecError("malformed-json", "Y must be a list")
    keys = MpcKeySet(tuple(dec_elem(params, y, f"Y[{i}]") for i, y in enumerate(ys)))
    return keys, VoteEncoding(_int(_get(d, "k"), "k"), _int(_get(d, "m"), "m"))


def enc_tally(t: BoothTally) -> dict:
    return {"booth_id": t.booth_id, "V": t.V, "counts": list(t.counts), "S": format(t.S, "x"), "T": t.T.hex()}


def dec_tally(params: GroupParams, d: Any) -> BoothTally:
    counts = _get(d, "counts")
    if not isinstance(counts, list):
        raise CodecError("malformed-json", "counts must be a list")
    S = _get(d, "S")
    try:
        S_int = int(S, 16)
    except (TypeError, ValueError) as exc:
        raise CodecError("malformed-json", "S must be hex") from exc
    return BoothTally(
        _int(_get(d, "booth_id"), "booth_id"),
        _int(_get(d, "V"), "V"),
        tuple(_int(c, "count") for c in counts),
        S_int,
        dec_elem(params, _get(d, "T"), "T"),
    )


def enc_result(r: ElectionResult) -> dict:
    return {
        "totals": list(r.totals),
        "counted_booths": list(r.counted_booths),
        "aborted_booths": list(r.aborted_booths),
        "partial": r.partial,
    }


def dec_result(d: Any) -> ElectionResult:
    return ElectionResult(
        tuple(_int(t, "total") for t in _get(d, "totals")),
        tuple(_int(b, "booth") for b in _get(d, "counted_booths")),
        tuple(_int(b, "booth") for b in _get(d, "aborted_booths")),
    )

