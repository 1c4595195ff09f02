import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmpy2 import mpz

from sblvote.group import GroupElement, named_params, random_scalar
from sblvote.sigma import (
    DleqProof,
    ProofContext,
    ProofRejected,
    SchnorrProof,
    VoteBranch,
    VoteProof,
    forced_randomness,
    prove_dleq,
    prove_schnorr,
    prove_vote,
    verify_dleq,
    verify_schnorr,
    verify_vote,
)

CTX = ProofContext(b"e1", 1, b"\x01" * 20, b"signin")
ENC = [1, 8, 64]


def test_schnorr_forced_vector(tg):
    x = tg.scalar(5)
    with forced_randomness(nonces=[4], challenges=[2]):
        X, proof = prove_schnorr(tg, CTX, x, random.Random(0))
    assert X.value == 9
    assert proof.a.value == 16  # 2^4
    assert proof.z.value == (4 + 2 * 5) % 11 == 3


def test_schnorr_roundtrip(g64, rng):
    x = random_scalar(g64, rng)
    X, proof = prove_schnorr(g64, CTX, x, rng)
    verify_schnorr(g64, CTX, X, proof)
    assert SchnorrProof.decode(g64, proof.encode()) == proof


def test_schnorr_context_binding(g64, rng):
    x = random_scalar(g64, rng)
    X, proof = prove_schnorr(g64, CTX, x, rng)
    for other in (
        ProofContext(b"e2", 1, CTX.voter, CTX.phase),
        ProofContext(CTX.election_id, 2, CTX.voter, CTX.phase),
        ProofContext(CTX.election_id, 1, b"\x02" * 20, CTX.phase),
        CTX.with_phase(b"vote"),
    ):
        with pytest.raises(ProofRejected):
            verify_schnorr(g64, other, X, proof)


def test_secret_range(g64, rng):
    with pytest.raises(ValueError):
        prove_schnorr(g64, CTX, g64.scalar(0), rng)


def test_dleq_roundtrip_and_rejects(g64, rng):
    x = random_scalar(g64, rng)
    h = g64.generator ** random_scalar(g64, rng)
    X, R, proof = prove_dleq(g64, CTX, x, h, rng)
    verify_dleq(g64, CTX, X, h, R, proof)
    assert DleqProof.decode(g64, proof.encode()) == proof
    with pytest.raises(ProofRejected):
        verify_dleq(g64, CTX, X, h, R * g64.generator, proof)
    with pytest.raises(ProofRejected):
        verify_dleq(g64, CTX, X, h * g64.generator, R, proof)


def test_dleq_rejects_wrong_discrete_log(g64, rng):
    # an honest-looking proof for R = h^(x+1) must fail
    x = random_scalar(g64, rng)
    h = g64.generator ** random_scalar(g64, rng)
    X, R, proof = prove_dleq(g64, CTX, x + 1, h, rng)
    with pytest.raises(ProofRejected):
        verify_dleq(g64, CTX, g64.generator ** x, h, R, proof)


@pytest.mark.parametrize("v", [1, 2, 3])
def test_vote_proof_roundtrip(g64, rng, v):
    x = random_scalar(g64, rng)
    Y = g64.generator ** random_scalar(g64, rng)
    X = g64.generator ** x
    B, proof = prove_vote(g64, CTX, x, Y, v, ENC, rng)
    assert B == Y ** x * g64.generator ** ENC[v - 1]
    verify_vote(g64, CTX, X, Y, B, proof, ENC)
    assert VoteProof.decode(g64, proof.encode()) == proof


def test_vote_proof_rejections(g64, rng):
    x = random_scalar(g64, rng)
    Y = g64.generator ** random_scalar(g64, rng)
    X = g64.generator ** x
    B, proof = prove_vote(g64, CTX, x, Y, 2, ENC, rng)
    with pytest.raises(ProofRejected, match="branch-count"):
        verify_vote(g64, CTX, X, Y, B, VoteProof(proof.branches[:2]), ENC)
    with pytest.raises(ProofRejected):
        verify_vote(g64, CTX, X, Y, B * g64.generator, proof, ENC)
    b0 = proof.branches[0]
    bumped = VoteProof((VoteBranch(b0.a1, b0.a2, b0.c + 1, b0.z),) + proof.branches[1:])
    with pytest.raises(ProofRejected, match="challenge-sum"):
        verify_vote(g64, CTX, X, Y, B, bumped, ENC)
    with pytest.raises(ValueError):
        prove_vote(g64, CTX, x, Y, 4, ENC, rng)


def test_vote_proof_cannot_cover_a_disallowed_exponent(g64, rng):
    x = random_scalar(g64, rng)
    Y = g64.generator ** random_scalar(g64, rng)
    B, proof = prove_vote(g64, CTX, x, Y, 1, [3, 8, 64], rng)
    with pytest.raises(ProofRejected):
        verify_vote(g64, CTX, g64.generator ** x, Y, B, proof, ENC)


def test_membership_enforced(tg, rng):
    x = tg.scalar(3)
    X, proof = prove_schnorr(tg, CTX, x, rng)
    bad = GroupElement(tg, mpz(5))  # 5 is a non-residue mod 23
    with pytest.raises(ProofRejected, match="bad-membership"):
        verify_schnorr(tg, CTX, bad, proof)


def _extract(z1, c1, z2, c2, q):
    return (z1 - z2) * pow((c1 - c2) % q, -1, q) % q


def test_special_soundness_schnorr(g64, rng):
    x = random_scalar(g64, rng)
    with forced_randomness(nonces=[777, 777], challenges=[11, 29]):
        _, p1 = prove_schnorr(g64, CTX, x, rng)
        _, p2 = prove_schnorr(g64, CTX, x, rng)
    assert p1.a == p2.a
    assert _extract(p1.z.value, 11, p2.z.value, 29, g64.q) == x.value


def test_special_soundness_dleq(g64, rng):
    x = random_scalar(g64, rng)
    h = g64.generator ** random_scalar(g64, rng)
    with forced_randomness(nonces=[99, 99], challenges=[5, 6]):
        _, _, p1 = prove_dleq(g64, CTX, x, h, rng)
        _, _, p2 = prove_dleq(g64, CTX, x, h, rng)
    assert _extract(p1.z.value, 5, p2.z.value, 6, g64.q) == x.value


def test_special_soundness_vote(g64):
    x = random_scalar(g64, random.Random(1))
    Y = g64.generator ** 12345
    # identical simulator randomness, identical nonce, two overall challenges
    with forced_randomness(nonces=[4242, 4242], challenges=[1000, 2000]):
        _, p1 = prove_vote(g64, CTX, x, Y, 2, ENC, random.Random(9))
        _, p2 = prove_vote(g64, CTX, x, Y, 2, ENC, random.Random(9))
    diffs = [j for j in range(3) if p1.branches[j].c != p2.branches[j].c]
    assert diffs == [1]
    b1, b2 = p1.branches[1], p2.branches[1]
    assert _extract(b1.z.value, b1.c.value, b2.z.value, b2.c.value, g64.q) == x.value


def test_hooks_require_env(monkeypatch):
    monkeypatch.setenv("SBL_TEST_HOOKS", "0")
    with pytest.raises(RuntimeError):
        with forced_randomness(nonces=[1]):
            pass


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**32))
def test_vote_completeness_property(v, seed):
    P = named_params(64)
    r = random.Random(seed)
    enc = [1 << (3 * j) for j in range(5)]
    x = random_scalar(P, r)
    Y = P.generator ** random_scalar(P, r)
    B, proof = prove_vote(P, CTX, x, Y, v, enc, r)
    verify_vote(P, CTX, P.generator ** x, Y, B, proof, enc)
