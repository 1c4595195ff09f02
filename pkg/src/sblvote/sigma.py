"""Fiat-Shamir sigma proofs published on the ledger.

Three systems, each with its own domain tag:

* Schnorr proof of knowledge of x with X = g^x (sign-in).
* Chaum-Pedersen proof that log_g X == log_h R (recovery shares).
* CDS disjunction of k Chaum-Pedersen statements: the blinded vote
  B = Y^x * g^f(v) encodes one of the allowed exponents f(1..k) (ballots).

Verifiers raise :class:`ProofRejected` with a short reason code and return
None on success.
"""

from __future__ import annotations

import os
import random
import struct
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

from .group import (
    GroupElement,
    GroupError,
    GroupParams,
    Scalar,
    hash_to_scalar,
    random_scalar,
)

SCHNORR_TAG = b"sbl/schnorr/v1"
DLEQ_TAG = b"sbl/dleq/v1"
VOTE_TAG = b"sbl/vote/v1"


class ProofRejected(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ProofContext:
    election_id: bytes
    booth_id: int
    voter: bytes
    phase: bytes

    def items(self) -> List[bytes]:
        return [self.election_id, struct.pack(">I", self.booth_id), self.voter, self.phase]

    def with_phase(self, phase: bytes) -> "ProofContext":
        return ProofContext(self.election_id, self.booth_id, self.voter, phase)


# -- test-profile hooks ----------------------------------------------------
# Deterministic vectors need injected nonces and challenges. The hooks refuse
# to arm unless SBL_TEST_HOOKS=1, so the normal proving path cannot be steered.

_forced_nonces: deque = deque()
_forced_challenges: deque = deque()


@contextmanager
def forced_randomness(nonces: Sequence[int] = (), challenges: Sequence[int] = ()) -> Iterator[None]:
    if os.environ.get("SBL_TEST_HOOKS") != "1":
        raise RuntimeError("nonce/challenge injection requires SBL_TEST_HOOKS=1")
    _forced_nonces.extend(nonces)
    _forced_challenges.extend(challenges)
    try:
        yield
    finally:
        _forced_nonces.clear()
        _forced_challenges.clear()


def _nonce(params: GroupParams, rng: random.Random) -> Scalar:
    if _forced_nonces:
        return params.scalar(_forced_nonces.popleft())
    return random_scalar(params, rng)


def _challenge(params: GroupParams, tag: bytes, items: List[bytes]) -> Scalar:
    if _forced_challenges:
        return params.scalar(_forced_challenges.popleft())
    return hash_to_scalar(params, tag, items)


def _require_members(params: GroupParams, *elements: GroupElement) -> None:
    for e in elements:
        if e.params != params or not params.is_member(e.value):
            raise ProofRejected("bad-membership")


# -- Schnorr ---------------------------------------------------------------


@dataclass(frozen=True)
class SchnorrProof:
    a: GroupElement
    z: Scalar

    def encode(self) -> List[bytes]:
        return [self.a.to_bytes(), self.z.to_bytes()]

    @classmethod
    def decode(cls, params: GroupParams, fields: Sequence[bytes]) -> "SchnorrProof":
        a, z = fields
        return cls(params.element_from_bytes(a), params.scalar_from_bytes(z))


def schnorr_input(ctx: ProofContext, X: GroupElement, a: GroupElement) -> List[bytes]:
    return ctx.items() + [X.params.generator.to_bytes(), X.to_bytes(), a.to_bytes()]


def prove_schnorr(
    params: GroupParams, ctx: ProofContext, x: Scalar, rng: random.Random
) -> Tuple[GroupElement, SchnorrProof]:
    if not 0 < x.value < params.q:
        raise ValueError("secret must lie in [1, q)")
    g = params.generator
    X = g ** x
    w = _nonce(params, rng)
    a = g ** w
    c = _challenge(params, SCHNORR_TAG, schnorr_input(ctx, X, a))
    return X, SchnorrProof(a, w + c * x)


def verify_schnorr(params: GroupParams, ctx: ProofContext, X: GroupElement, proof: SchnorrProof) -> None:
    _require_members(params, X, proof.a)
    c = hash_to_scalar(params, SCHNORR_TAG, schnorr_input(ctx, X, proof.a))
    if params.generator.pow_public(proof.z) != proof.a * X.pow_public(c):
        raise ProofRejected("equation-failed")


# -- Chaum-Pedersen --------------------------------------------------------


@dataclass(frozen=True)
class DleqProof:
    a1: GroupElement
    a2: GroupElement
    z: Scalar

    def encode(self) -> List[bytes]:
        return [self.a1.to_bytes(), self.a2.to_bytes(), self.z.to_bytes()]

    @classmethod
    def decode(cls, params: GroupParams, fields: Sequence[bytes]) -> "DleqProof":
        a1, a2, z = fields
        return cls(params.element_from_bytes(a1), params.element_from_bytes(a2), params.scalar_from_bytes(z))


def dleq_input(
    ctx: ProofContext, X: GroupElement, h: GroupElement, R: GroupElement, a1: GroupElement, a2: GroupElement
) -> List[bytes]:
    g = X.params.generator
    return ctx.items() + [e.to_bytes() for e in (g, X, h, R, a1, a2)]


def prove_dleq(
    params: GroupParams, ctx: ProofContext, x: Scalar, h: GroupElement, rng: random.Random
) -> Tuple[GroupElement, GroupElement, DleqProof]:
    if not 0 < x.value < params.q:
        raise ValueError("secret must lie in [1, q)")
    _require_members(params, h)
    g = params.generator
    X, R = g ** x, h ** x
    w = _nonce(params, rng)
    a1, a2 = g ** w, h ** w
    c = _challenge(params, DLEQ_TAG, dleq_input(ctx, X, h, R, a1, a2))
    return X, R, DleqProof(a1, a2, w + c * x)


def verify_dleq(
    params: GroupParams, ctx: ProofContext, X: GroupElement, h: GroupElement, R: GroupElement, proof: DleqProof
) -> None:
    _require_members(params, X, h, R, proof.a1, proof.a2)
    c = hash_to_scalar(params, DLEQ_TAG, dleq_input(ctx, X, h, R, proof.a1, proof.a2))
    if params.generator.pow_public(proof.z) != proof.a1 * X.pow_public(c):
        raise ProofRejected("equation-failed")
    if h.pow_public(proof.z) != proof.a2 * R.pow_public(c):
        raise ProofRejected("equation-failed")


# -- 1-out-of-k vote proof -------------------------------------------------


@dataclass(frozen=True)
class VoteBranch:
    a1: GroupElement
    a2: GroupElement
    c: Scalar
    z: Scalar


@dataclass(frozen=True)
class VoteProof:
    branches: Tuple[VoteBranch, ...]

    def encode(self) -> List[bytes]:
        out = []
        for b in self.branches:
            out += [b.a1.to_bytes(), b.a2.to_bytes(), b.c.to_bytes(), b.z.to_bytes()]
        return out

    @classmethod
    def decode(cls, params: GroupParams, fields: Sequence[bytes]) -> "VoteProof":
        if len(fields) % 4:
            raise GroupError("vote proof needs four fields per branch")
        branches = []
        for i in range(0, len(fields), 4):
            a1, a2, c, z = fields[i : i + 4]
            branches.append(
                VoteBranch(
                    params.element_from_bytes(a1),
                    params.element_from_bytes(a2),
                    params.scalar_from_bytes(c),
                    params.scalar_from_bytes(z),
                )
            )
        return cls(tuple(branches))


def vote_input(
    ctx: ProofContext,
    X: GroupElement,
    Y: GroupElement,
    B: GroupElement,
    a1s: Sequence[GroupElement],
    a2s: Sequence[GroupElement],
) -> List[bytes]:
    g = X.params.generator
    return ctx.items() + [e.to_bytes() for e in (g, X, Y, B, *a1s, *a2s)]


def prove_vote(
    params: GroupParams,
    ctx: ProofContext,
    x: Scalar,
    Y: GroupElement,
    v: int,
    encodings: Sequence[int],
    rng: random.Random,
) -> Tuple[GroupElement, VoteProof]:
    """Blind candidate ``v`` (1-based) and prove B encodes one of ``encodings``."""
    k = len(encodings)
    if not 1 <= v <= k:
        raise ValueError(f"candidate {v} outside 1..{k}")
    g = params.generator
    X = g ** x
    B = Y ** x * g.pow_public(encodings[v - 1])
    a1s: List[Optional[GroupElement]] = [None] * k
    a2s: List[Optional[GroupElement]] = [None] * k
    cs: List[Optional[Scalar]] = [None] * k
    zs: List[Optional[Scalar]] = [None] * k
    for j in range(k):
        if j == v - 1:
            continue
        c_j, z_j = random_scalar(params, rng), random_scalar(params, rng)
        shifted = _unshift(B, encodings[j])
        a1s[j] = g.pow_public(z_j) * X.pow_public(-c_j)
        a2s[j] = Y.pow_public(z_j) * shifted.pow_public(-c_j)
        cs[j], zs[j] = c_j, z_j
    w = _nonce(params, rng)
    a1s[v - 1], a2s[v - 1] = g ** w, Y ** w
    c = _challenge(params, VOTE_TAG, vote_input(ctx, X, Y, B, a1s, a2s))
    c_v = c - sum((cs[j].value for j in range(k) if j != v - 1), 0)
    cs[v - 1] = c_v
    zs[v - 1] = w + c_v * x
    return B, VoteProof(tuple(VoteBranch(a1s[j], a2s[j], cs[j], zs[j]) for j in range(k)))


def _unshift(B: GroupElement, f_j: int) -> GroupElement:
    # B * g^-f via the inverse of a short power; f_j is small, its negation mod q is not
    return B / B.params.generator.pow_public(f_j)


def verify_vote_branch(
    X: GroupElement, Y: GroupElement, B: GroupElement, branch: VoteBranch, f_j: int
) -> bool:
    g = X.params.generator
    if g.pow_public(branch.z) != branch.a1 * X.pow_public(branch.c):
        return False
    return Y.pow_public(branch.z) == branch.a2 * _unshift(B, f_j).pow_public(branch.c)


def verify_vote(
    params: GroupParams,
    ctx: ProofContext,
    X: GroupElement,
    Y: GroupElement,
    B: GroupElement,
    proof: VoteProof,
    encodings: Sequence[int],
) -> None:
    if len(proof.branches) != len(encodings):
        raise ProofRejected("branch-count")
    _require_members(params, X, Y, B)
    for b in proof.branches:
        _require_members(params, b.a1, b.a2)
    c = hash_to_scalar(
        params,
        VOTE_TAG,
        vote_input(ctx, X, Y, B, [b.a1 for b in proof.branches], [b.a2 for b in proof.branches]),
    )
    if sum(b.c.value for b in proof.branches) % params.q != c.value:
        raise ProofRejected("challenge-sum")
    for j, (branch, f_j) in enumerate(zip(proof.branches, encodings), start=1):
        if not verify_vote_branch(X, Y, B, branch, f_j):
            raise ProofRejected(f"branch-equation({j})")
