"""Voter- and authority-side algorithms of the self-tallying protocol.

Roster indices are 1-based and follow sign-in order. With ephemeral keys
X_i = g^x_i, the blinding key of voter i is

    Y_i = prod_{j<i} X_j / prod_{j>i} X_j

so that prod_i Y_i^x_i = 1 and the product of all blinded votes leaves only
g^(sum of vote exponents).
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Iterable, List, Optional, Sequence, Tuple

from .group import (
    GroupElement,
    GroupParams,
    Scalar,
    dlog_bounded,
    encode_items,
    product,
    random_scalar,
)
from .sigma import (
    DleqProof,
    ProofContext,
    SchnorrProof,
    VoteProof,
    prove_dleq,
    prove_schnorr,
    prove_vote,
)

PHASE_SIGNIN = b"signin"
PHASE_VOTE = b"vote"
PHASE_RECOVERY = b"recovery"

# 40 bits keeps the baby-step table at 2^20 entries or fewer
BSGS_MAX_PACKED_BITS = 40


class ProtocolError(ValueError):
    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class VoterKeyMaterial:
    x: Scalar = field(repr=False)
    X: GroupElement
    proof: SchnorrProof


@dataclass
class BoothRoster:
    entries: List[Tuple[bytes, GroupElement]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def keys(self) -> List[GroupElement]:
        return [X for _, X in self.entries]

    def index_of(self, address: bytes) -> Optional[int]:
        for i, (addr, _) in enumerate(self.entries, start=1):
            if addr == address:
                return i
        return None

    def key(self, i: int) -> GroupElement:
        return self.entries[i - 1][1]

    def address(self, i: int) -> bytes:
        return self.entries[i - 1][0]


@dataclass(frozen=True)
class MpcKeySet:
    keys: Tuple[GroupElement, ...]


@dataclass(frozen=True)
class VoteEncoding:
    k: int
    m: int

    @property
    def exponents(self) -> List[int]:
        return [1 << ((j - 1) * self.m) for j in range(1, self.k + 1)]

    def pack(self, counts: Sequence[int]) -> int:
        return sum(c << (j * self.m) for j, c in enumerate(counts))

    def unpack(self, S: int) -> List[int]:
        mask = (1 << self.m) - 1
        return [(S >> (j * self.m)) & mask for j in range(self.k)]


@dataclass(frozen=True)
class Ballot:
    voter: bytes
    B: GroupElement
    proof: VoteProof


@dataclass(frozen=True)
class RecoveryShare:
    voter: bytes
    R: GroupElement
    proof: Optional[DleqProof]  # None exactly when the recovery base is the identity
    absent_hash: bytes


@dataclass(frozen=True)
class BoothTally:
    booth_id: int
    V: int
    counts: Tuple[int, ...]
    S: int
    T: GroupElement


@dataclass(frozen=True)
class ElectionResult:
    totals: Tuple[int, ...]
    counted_booths: Tuple[int, ...]
    aborted_booths: Tuple[int, ...]

    @property
    def partial(self) -> bool:
        return bool(self.aborted_booths)


# -- sign-in and key derivation --------------------------------------------


def keygen(params: GroupParams, ctx: ProofContext, rng: random.Random) -> VoterKeyMaterial:
    return key_from_secret(params, ctx, random_scalar(params, rng), rng)


def key_from_secret(params: GroupParams, ctx: ProofContext, x: Scalar, rng: random.Random) -> VoterKeyMaterial:
    X, proof = prove_schnorr(params, ctx.with_phase(PHASE_SIGNIN), x, rng)
    return VoterKeyMaterial(x, X, proof)


def derive_mpc_keys(params: GroupParams, roster: BoothRoster) -> MpcKeySet:
    """Blinding keys for every roster slot, via one prefix/suffix sweep."""
    keys = roster.keys
    n = len(keys)
    if n < 1:
        raise ProtocolError("empty-roster", "at least one signed-in voter is required")
    p = params.p
    prefix = [1] * (n + 1)
    for i, X in enumerate(keys):
        prefix[i + 1] = prefix[i] * X.value % p
    suffix = [1] * (n + 2)
    for i in range(n, 0, -1):
        suffix[i] = suffix[i + 1] * keys[i - 1].value % p
    out = []
    for i in range(1, n + 1):
        below = prefix[i - 1]
        above = suffix[i + 1]
        out.append(params.element(below * pow(above, -1, p) % p))
    return MpcKeySet(tuple(out))


def make_encoding(n: int, k: int, q_bits: int) -> VoteEncoding:
    if n < 1 or k < 1:
        raise ProtocolError("bad-arguments", "need n >= 1 and k >= 1")
    m = n.bit_length()  # == ceil(log2(n + 1))
    if k * m >= q_bits:
        raise ProtocolError(
            "capacity-exceeded", f"{k} candidates x {m} bits does not fit a {q_bits}-bit scalar field"
        )
    return VoteEncoding(k, m)


# -- voting ----------------------------------------------------------------


def cast_ballot(
    params: GroupParams,
    ctx: ProofContext,
    key: VoterKeyMaterial,
    Y: GroupElement,
    v: int,
    encoding: VoteEncoding,
    rng: random.Random,
) -> Ballot:
    if not 1 <= v <= encoding.k:
        raise ProtocolError("candidate-out-of-range", f"candidate {v} outside 1..{encoding.k}")
    B, proof = prove_vote(params, ctx.with_phase(PHASE_VOTE), key.x, Y, v, encoding.exponents, rng)
    return Ballot(ctx.voter, B, proof)


# -- fault recovery --------------------------------------------------------


def absent_set_hash(absent: Iterable[int]) -> bytes:
    items = [struct.pack(">I", i) for i in sorted(absent)]
    return hashlib.sha256(encode_items(b"sbl/absent/v1", items)).digest()


def recovery_base(params: GroupParams, roster: BoothRoster, absent: Iterable[int], i: int) -> GroupElement:
    absent = set(absent)
    if not absent:
        raise ProtocolError("no-absent-voters", "recovery needs a nonempty absent set")
    if i in absent:
        raise ProtocolError("voter-absent", f"voter {i} is in the absent set")
    if not absent <= set(range(1, len(roster) + 1)):
        raise ProtocolError("bad-absent-set", "absent set is not a subset of the roster")
    below = product((roster.key(j) for j in absent if j < i), params)
    above = product((roster.key(j) for j in absent if j > i), params)
    return below / above


def make_recovery_share(
    params: GroupParams,
    ctx: ProofContext,
    key: VoterKeyMaterial,
    roster: BoothRoster,
    absent: Iterable[int],
    rng: random.Random,
) -> RecoveryShare:
    absent = set(absent)
    i = roster.index_of(ctx.voter)
    if i is None:
        raise ProtocolError("not-signed-in", "voter is not on the roster")
    h = recovery_base(params, roster, absent, i)
    digest = absent_set_hash(absent)
    if h == params.identity:
        return RecoveryShare(ctx.voter, params.identity, None, digest)
    _, R, proof = prove_dleq(params, ctx.with_phase(PHASE_RECOVERY), key.x, h, rng)
    return RecoveryShare(ctx.voter, R, proof, digest)


# -- tallying --------------------------------------------------------------


def tally_booth(params: GroupParams, ballots: Iterable[Ballot], shares: Iterable[RecoveryShare]) -> GroupElement:
    blinded = product((b.B for b in ballots), params)
    corrections = product((s.R for s in shares), params)
    return blinded / corrections


def _compositions(total: int, parts: int) -> Iterable[Tuple[int, ...]]:
    # stars and bars: each multiset of bar positions is one count vector
    for bars in combinations_with_replacement(range(total + 1), parts - 1):
        prev = 0
        out = []
        for b in bars:
            out.append(b - prev)
            prev = b
        out.append(total - prev)
        yield tuple(out)


def decode_tally(
    params: GroupParams, T: GroupElement, V: int, encoding: VoteEncoding, strategy: str = "auto"
) -> List[int]:
    """Recover per-candidate counts from the tally element.

    ``strategy`` is "bsgs", "enumerate", or "auto" (BSGS when the packed sum
    has at most 40 bits).
    """
    if V < 0:
        raise ProtocolError("decode-failure", "negative ballot count")
    if strategy == "auto":
        strategy = "bsgs" if encoding.k * encoding.m <= BSGS_MAX_PACKED_BITS else "enumerate"
    g = params.generator
    if strategy == "bsgs":
        bound = V * encoding.exponents[-1] + 1
        S = dlog_bounded(g, T, bound)
        if S is None:
            raise ProtocolError("decode-failure", "tally exponent not found")
        counts = encoding.unpack(S)
        if encoding.pack(counts) != S or sum(counts) != V:
            raise ProtocolError("decode-failure", f"exponent {S} does not unpack to {V} ballots")
        return counts
    if strategy == "enumerate":
        for counts in _compositions(V, encoding.k):
            if max(counts, default=0) >= 1 << encoding.m:
                continue
            if g.pow_public(encoding.pack(counts)) == T:
                return list(counts)
        raise ProtocolError("decode-failure", "no count vector matches the tally element")
    raise ValueError(f"unknown decode strategy {strategy!r}")


def make_booth_tally(
    params: GroupParams, booth_id: int, counts: Sequence[int], encoding: VoteEncoding
) -> BoothTally:
    S = encoding.pack(counts)
    return BoothTally(booth_id, sum(counts), tuple(counts), S, params.generator.pow_public(S))


def aggregate(tallies: Iterable[BoothTally], aborted: Iterable[int], k: int) -> ElectionResult:
    totals = [0] * k
    counted = []
    for t in tallies:
        counted.append(t.booth_id)
        for j, c in enumerate(t.counts):
            totals[j] += c
    return ElectionResult(tuple(totals), tuple(sorted(counted)), tuple(sorted(aborted)))
