"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import csv
import hashlib
import io
import json
import os
import random
import subprocess
import sys
import time
from collections import Counter

import pytest

from fuzz_support import fuzz
from sblvote.group import GroupElement, TEST_GROUP, named_params, random_scalar
from sblvote.protocol import (
    BoothRoster,
    VoteEncoding,
    cast_ballot,
    decode_tally,
    derive_mpc_keys,
    key_from_secret,
    make_recovery_share,
    tally_booth,
)
from sblvote.sigma import (
    ProofContext,
    ProofRejected,
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
from sblvote.sim import ScenarioConfig, run_election
from sblvote.sim.runner import bench, rows_to_csv
from sblvote.sim.scenario import ATTACK_TYPES
from sblvote.sim.tamper import TAMPERS, flip_bit
from sblvote.transcript import audit_bytes

# Randomized criteria use the seeded 64-bit test-profile group: the 23-element
# group cannot encode three voters, and its q = 11 would let a forged proof
# pass with probability 1/11.
P64 = named_params(64)


def _random_votes(r, n, k, abstain=None):
    return [r.randint(1, k) if abstain is None or i not in abstain else None for i in range(n)]


def test_1_self_tallying_correctness(criterion):
    r = random.Random(1001)
    mismatches, t0 = 0, time.perf_counter()
    for trial in range(1000):
        n = r.randint(1, 64)
        k = r.randint(1, 5)
        G = r.randint(1, min(4, n))
        votes = _random_votes(r, n, k)
        cfg = ScenarioConfig(election_id=f"acc1-{trial}", voters=n, candidates=k, booths=G, seed=trial, votes=votes)
        result, _, _ = run_election(cfg)
        oracle = Counter(votes)
        if result.totals != [oracle[j] for j in range(1, k + 1)] or result.partial:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = criterion(1, "self-tallying", mismatches == 0 and elapsed < 60, f"1000 elections, {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


def _recovery_votes(r, n, G, k, worst):
    """Votes where every booth has at least one abstainer and one voter."""
    votes = [r.randint(1, k) for _ in range(n)]
    for b in range(G):
        members = list(range(b, n, G))
        if worst:
            absent = members[1:]
        else:
            rate = r.uniform(0.05, 0.5)
            absent = [i for i in members if r.random() < rate]
            if not absent:
                absent = [r.choice(members)]
            if len(absent) == len(members):
                absent = absent[1:]
        for i in absent:
            votes[i] = None
    return votes


def test_2_fault_recovery(criterion):
    r = random.Random(2002)
    mismatches, not_recovered, worst_cases = 0, 0, 0
    for trial in range(200):
        worst = trial % 10 == 0
        n = r.randint(2, 48)
        G = 1 if worst else r.randint(1, min(4, n // 2))
        k = r.randint(1, 5)
        votes = _recovery_votes(r, n, G, k, worst)
        worst_cases += worst and votes.count(None) == n - 1
        cfg = ScenarioConfig(election_id=f"acc2-{trial}", voters=n, candidates=k, booths=G, seed=trial, votes=votes)
        result, data, _ = run_election(cfg)
        recovered = {e["target"] for e in json.loads(data)["events"] if e["op"] == "recovery"}
        absent_booths = {i % G + 1 for i, v in enumerate(votes) if v is None}
        if not absent_booths <= recovered or any(b.status != "Closed" for b in result.booths):
            not_recovered += 1
        oracle = Counter(v for v in votes if v is not None)
        if result.totals != [oracle[j] for j in range(1, k + 1)]:
            mismatches += 1
    ok = mismatches == 0 and not_recovered == 0 and worst_cases == 20
    criterion(2, "fault recovery", ok, f"200 elections, {worst_cases} with |absent| = n-1, {mismatches} mismatches, {not_recovered} not recovered")
    assert ok


def test_3_worked_micro_vectors(criterion):
    tg, rng = TEST_GROUP, random.Random(3)
    xs = [3, 5, 7]
    addrs = [bytes([i]) * 20 for i in range(3)]
    ctx = [ProofContext(b"worked", 1, a, b"") for a in addrs]
    keys = [key_from_secret(tg, ctx[i], tg.scalar(x), rng) for i, x in enumerate(xs)]
    roster = BoothRoster([(addrs[i], k.X) for i, k in enumerate(keys)])
    Y = derive_mpc_keys(tg, roster).keys
    enc = VoteEncoding(2, 2)

    # brute-force oracle: all arithmetic on exponents mod 11, then one power of 2 mod 23
    y_exp = [(sum(xs[:i]) - sum(xs[i + 1 :])) % 11 for i in range(3)]
    f = [1, 4]
    full_exp = sum(x * y + f[v - 1] for x, y, v in zip(xs, y_exp, (1, 2, 1))) % 11
    h_exp = (-xs[2]) % 11
    rec_exp = (sum(x * y + f[v - 1] for x, y, v in zip(xs[:2], y_exp[:2], (1, 2))) - sum(x * h_exp for x in xs[:2])) % 11

    checks = {}
    checks["X"] = [k.X.value for k in keys] == [8, 9, 13]
    checks["Y"] = [y.value for y in Y] == [12, 13, 3] == [pow(2, e, 23) for e in y_exp]
    ballots = [cast_ballot(tg, ctx[i], keys[i], Y[i], v, enc, rng) for i, v in enumerate((1, 2, 1))]
    T = tally_booth(tg, ballots, [])
    checks["T full"] = T.value == 18 == pow(2, full_exp, 23) and full_exp == 6
    checks["counts full"] = decode_tally(tg, T, 3, enc, "bsgs") == [2, 1] == decode_tally(tg, T, 3, enc, "enumerate")
    ballots = ballots[:2]
    ballots[1] = cast_ballot(tg, ctx[1], keys[1], Y[1], 2, enc, rng)
    shares = [make_recovery_share(tg, ctx[i], keys[i], roster, {3}, rng) for i in range(2)]
    checks["R"] = [s.R.value for s in shares] == [2, 6]
    T = tally_booth(tg, ballots, shares)
    checks["T recovery"] = T.value == 9 == pow(2, rec_exp, 23) and rec_exp == 5
    checks["counts recovery"] = decode_tally(tg, T, 2, enc) == [1, 1]
    failed = [name for name, good in checks.items() if not good]
    ok = criterion(3, "worked micro-vectors", not failed, "all vectors reproduced" if not failed else f"failed: {failed}")
    assert ok


# -- criterion 4 ---------------------------------------------------------------

ENC = [1 << (3 * j) for j in range(4)]


def _honest(system, r):
    ctx = ProofContext(b"acc4", r.randint(1, 9), r.randbytes(20), b"p")
    x = random_scalar(P64, r)
    if system == "schnorr":
        X, proof = prove_schnorr(P64, ctx, x, r)
        return ctx, {"X": X}, proof
    if system == "dleq":
        h = P64.generator ** random_scalar(P64, r)
        X, R, proof = prove_dleq(P64, ctx, x, h, r)
        return ctx, {"X": X, "h": h, "R": R}, proof
    Y = P64.generator ** random_scalar(P64, r)
    B, proof = prove_vote(P64, ctx, x, Y, r.randint(1, len(ENC)), ENC, r)
    return ctx, {"X": P64.generator ** x, "Y": Y, "B": B}, proof


def _verify(system, ctx, st, proof):
    if system == "schnorr":
        verify_schnorr(P64, ctx, st["X"], proof)
    elif system == "dleq":
        verify_dleq(P64, ctx, st["X"], st["h"], st["R"], proof)
    else:
        verify_vote(P64, ctx, st["X"], st["Y"], st["B"], proof, ENC)


def _perturb(value, r):
    if isinstance(value, GroupElement):
        return value * P64.generator ** r.randrange(1, P64.q)
    return value + r.randrange(1, P64.q)


def _tamper_one_field(system, st, proof, r):
    """Change exactly one statement or proof field; return the altered pair and the field name."""
    fields = [("st", k) for k in st]
    if system == "schnorr":
        fields += [("proof", "a"), ("proof", "z")]
    elif system == "dleq":
        fields += [("proof", "a1"), ("proof", "a2"), ("proof", "z")]
    else:
        fields += [("branch", (j, f)) for j in range(len(proof.branches)) for f in ("a1", "a2", "c", "z")]
    kind, name = r.choice(fields)
    st = dict(st)
    if kind == "st":
        st[name] = _perturb(st[name], r)
    elif kind == "proof":
        cls = type(proof)
        values = {f: getattr(proof, f) for f in proof.__dataclass_fields__}
        values[name] = _perturb(values[name], r)
        proof = cls(**values)
    else:
        j, f = name
        br = list(proof.branches)
        values = {g: getattr(br[j], g) for g in ("a1", "a2", "c", "z")}
        values[f] = _perturb(values[f], r)
        br[j] = VoteBranch(**values)
        proof = VoteProof(tuple(br))
    return st, proof, f"{kind}.{name}"


def _extraction(r):
    ok = True
    for _ in range(20):
        x = random_scalar(P64, r)
        w, c1, c2 = r.randrange(1, P64.q), r.randrange(P64.q), r.randrange(P64.q)
        if c1 == c2:
            continue
        ctx = ProofContext(b"ext", 1, b"v", b"p")
        inv = pow((c1 - c2) % P64.q, -1, P64.q)
        with forced_randomness(nonces=[w, w], challenges=[c1, c2]):
            _, p1 = prove_schnorr(P64, ctx, x, r)
            _, p2 = prove_schnorr(P64, ctx, x, r)
        ok &= (p1.z.value - p2.z.value) * inv % P64.q == x.value
        h = P64.generator ** random_scalar(P64, r)
        with forced_randomness(nonces=[w, w], challenges=[c1, c2]):
            _, _, d1 = prove_dleq(P64, ctx, x, h, r)
            _, _, d2 = prove_dleq(P64, ctx, x, h, r)
        ok &= (d1.z.value - d2.z.value) * inv % P64.q == x.value
        Y = P64.generator ** random_scalar(P64, r)
        v = r.randint(1, len(ENC))
        seed = r.random()
        with forced_randomness(nonces=[w, w], challenges=[c1, c2]):
            _, v1 = prove_vote(P64, ctx, x, Y, v, ENC, random.Random(seed))
            _, v2 = prove_vote(P64, ctx, x, Y, v, ENC, random.Random(seed))
        b1, b2 = v1.branches[v - 1], v2.branches[v - 1]
        ok &= (b1.z.value - b2.z.value) * pow((b1.c.value - b2.c.value) % P64.q, -1, P64.q) % P64.q == x.value
    return ok


def test_4_nizk_completeness_soundness(criterion):
    r = random.Random(4004)
    honest_fail = Counter()
    accepted_tamper = []
    for system in ("schnorr", "dleq", "vote"):
        for _ in range(1000):
            ctx, st, proof = _honest(system, r)
            try:
                _verify(system, ctx, st, proof)
            except ProofRejected:
                honest_fail[system] += 1
    for trial in range(1000):
        system = ("schnorr", "dleq", "vote")[trial % 3]
        ctx, st, proof = _honest(system, r)
        st2, proof2, field = _tamper_one_field(system, st, proof, r)
        try:
            _verify(system, ctx, st2, proof2)
            accepted_tamper.append((system, field))
        except ProofRejected:
            pass
    extracted = _extraction(r)
    ok = not honest_fail and not accepted_tamper and extracted
    criterion(
        4,
        "NIZK completeness/soundness",
        ok,
        f"3x1000 honest, {sum(honest_fail.values())} rejected; 1000 tamperings, {len(accepted_tamper)} accepted; "
        f"extraction {'ok' if extracted else 'failed'}",
    )
    assert ok


def test_5_ledger_safety(criterion):
    stats = fuzz(P64, 10_000, seed=5)
    ok = stats.ops == 10_000 and not stats.violations
    criterion(
        5,
        "ledger safety",
        ok,
        f"{stats.ops} ops, {stats.accepted} accepted, {stats.rejected} rejected, {len(stats.violations)} violations",
    )
    assert ok, stats.violations[:5]


def test_6_audit_soundness(criterion):
    r = random.Random(6006)
    problems = []
    for attack in ATTACK_TYPES:
        cfg = ScenarioConfig(election_id=f"acc6-{attack}", voters=12, candidates=3, booths=2, seed=60, attacks=[{"type": attack, "booth": 2}])
        result, data, outcomes = run_election(cfg)
        report = audit_bytes(data)
        o = outcomes[0]
        if o.expect == "ledger-reject":
            good = o.satisfied and report.valid and result.match
        elif o.expect == "audit-invalid":
            good = o.satisfied and not report.valid
        else:  # liveness attack: the booth aborts and the honest transcript still audits
            good = o.satisfied and report.valid and result.partial
        if not good:
            problems.append(attack)
    honest_invalid = 0
    for trial in range(30):
        cfg = ScenarioConfig(
            election_id=f"acc6-h{trial}", voters=r.randint(2, 20), candidates=r.randint(1, 4), booths=1,
            seed=trial, abstain_rate=r.choice([0.0, 0.3]),
        )
        honest_invalid += not audit_bytes(run_election(cfg)[1]).valid
    _, base, _ = run_election(ScenarioConfig(election_id="acc6-base", voters=5, candidates=3, booths=2, seed=6, abstain_rate=0.2))
    for name, fn in TAMPERS.items():
        if name == "bit-flip":
            continue
        out = fn(base, r)
        if out is not None and audit_bytes(out).valid:
            problems.append(f"tamper:{name}")
    false_valid = sum(audit_bytes(flip_bit(base, r)).valid for _ in range(1000))
    ok = not problems and honest_invalid == 0 and false_valid == 0
    criterion(
        6,
        "audit soundness",
        ok,
        f"{len(ATTACK_TYPES)} attacks + {len(TAMPERS)} tampers, problems {problems}; "
        f"{honest_invalid}/30 honest invalid; {false_valid}/1000 bit flips valid",
    )
    assert ok


def test_7_determinism(criterion):
    configs = [
        ScenarioConfig(voters=9, candidates=3, booths=2, seed=7),
        ScenarioConfig(voters=12, candidates=4, booths=3, seed=8, abstain_rate=0.3, attacks=["double-vote", "bad-mpc-keys"]),
        ScenarioConfig(voters=6, candidates=2, seed=9, attacks=["stall-recovery"]),
    ]
    same = all(run_election(c)[1] == run_election(c)[1] for c in configs)
    # and across interpreters with a different hash seed
    script = (
        "import sys, hashlib; from sblvote.sim import ScenarioConfig, run_election; "
        "c = ScenarioConfig.model_validate_json(sys.argv[1]); "
        "print(hashlib.sha256(run_election(c)[1]).hexdigest())"
    )
    env = dict(os.environ, PYTHONHASHSEED="12345")
    out = subprocess.run([sys.executable, "-c", script, configs[1].model_dump_json()], env=env, capture_output=True, text=True, check=True)
    cross = out.stdout.strip() == hashlib.sha256(run_election(configs[1])[1]).hexdigest()
    ok = criterion(7, "determinism", same and cross, f"in-process {'identical' if same else 'DIFFER'}, subprocess {'identical' if cross else 'DIFFER'}")
    assert ok


@pytest.mark.slow
def test_8_desk_scale_performance(criterion, tmp_path):
    cfg = ScenarioConfig(election_id="desk-scale", voters=1000, candidates=5, booths=10, seed=8, group="production")
    t0 = time.perf_counter()
    rows, result = bench(cfg, audit=False)
    elapsed = time.perf_counter() - t0
    path = tmp_path / "bench.csv"
    path.write_text(rows_to_csv(rows))
    table = list(csv.DictReader(io.StringIO(path.read_text())))
    phases = {row["phase"]: row for row in table}
    throughput = all(float(phases[p]["ops_per_sec"]) > 0 for p in ("signin_verify", "ballot_prove", "ballot_verify", "mpc_verify"))
    verified = result.counters.get("ballot_verify", 0) == 1000 and result.counters.get("signin_verify", 0) == 1000
    ok = elapsed < 300 and result.match and throughput and verified
    criterion(
        8,
        "desk-scale performance",
        ok,
        f"{elapsed:.1f}s for n=1000, k=5, G=10, 2048-bit; ballots {phases['ballot_verify']['ops_per_sec']}/s verified",
    )
    assert ok
