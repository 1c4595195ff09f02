import json
import random
from collections import Counter

import pytest
from scipy import stats

from sblvote.sim import ScenarioConfig, run_election
from sblvote.sim.runner import ScenarioError, _plan_voters
from sblvote.transcript import audit_bytes


def test_worked_full_participation():
    result, data, _ = run_election(ScenarioConfig(voters=3, candidates=2, seed=7, votes=[1, 2, 1]), audit=True)
    assert result.totals == [2, 1] and result.match
    assert result.counters["audit_valid"] == 1


def test_worked_recovery():
    cfg = ScenarioConfig(voters=3, candidates=2, seed=7, votes=[1, 2, None])
    result, data, _ = run_election(cfg)
    assert result.totals == [1, 1] and result.match and not result.partial
    ops = [e["op"] for e in json.loads(data)["events"]]
    assert "recovery" in ops
    assert audit_bytes(data).valid


def test_double_vote_attack_keeps_election_valid():
    cfg = ScenarioConfig(voters=6, candidates=3, seed=3, attacks=["double-vote"])
    result, data, outcomes = run_election(cfg, audit=True)
    assert [o.observed for o in outcomes] == ["double-vote"] and outcomes[0].satisfied
    assert result.match and audit_bytes(data).valid


@pytest.mark.parametrize(
    "attack,expect",
    [
        ("forged-ballot", "ledger-reject"),
        ("wrong-phase", "ledger-reject"),
        ("bad-mpc-keys", "ledger-reject"),
        ("stall-recovery", "booth-aborted"),
        ("tamper-transcript", "audit-invalid"),
    ],
)
def test_attack_catalog(attack, expect):
    cfg = ScenarioConfig(voters=8, candidates=3, booths=2, seed=5, attacks=[{"type": attack, "booth": 2}])
    result, data, outcomes = run_election(cfg)
    assert len(outcomes) == 1
    o = outcomes[0]
    assert o.expect == expect and o.satisfied, o
    if attack == "stall-recovery":
        assert result.partial and result.booths[1].status == "Aborted"
        assert audit_bytes(data).valid
    elif attack == "tamper-transcript":
        assert not audit_bytes(data).valid
    else:
        assert audit_bytes(data).valid and result.match


def test_booth_with_no_signins_is_aborted():
    result, data, _ = run_election(ScenarioConfig(voters=4, candidates=2, booths=2, seed=1, signin_rate=0.0))
    assert all(b.status == "Aborted" for b in result.booths)
    assert result.partial and result.totals == [0, 0]
    assert audit_bytes(data).valid


def test_determinism():
    cfg = ScenarioConfig(voters=10, candidates=3, booths=2, seed=42, abstain_rate=0.2)
    a = run_election(cfg)[1]
    b = run_election(cfg)[1]
    assert a == b
    assert run_election(cfg.model_copy(update={"seed": 43}))[1] != a


def test_round_robin_booths():
    voters = _plan_voters(ScenarioConfig(voters=7, candidates=2, booths=3), random.Random(0))
    assert [v.booth for v in voters] == [1, 2, 3, 1, 2, 3, 1]


def test_uniform_votes_chi_square():
    cfg = ScenarioConfig(voters=5000, candidates=5, booths=1, seed=8)
    counts = Counter(v.vote for v in _plan_voters(cfg, random.Random(f"{cfg.seed}/behaviour")))
    assert stats.chisquare([counts[j] for j in range(1, 6)]).pvalue > 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(voters=2, candidates=2, booths=3)
    with pytest.raises(ValueError):
        ScenarioConfig(voters=2, candidates=2, votes=[1])
    with pytest.raises(ValueError):
        ScenarioConfig(voters=2, candidates=2, votes=[1, 3])
    with pytest.raises(ValueError):
        ScenarioConfig(voters=2, candidates=2, attacks=[{"type": "double-vote", "booth": 2}])
    with pytest.raises(ValueError):
        ScenarioConfig(voters=2, candidates=2, group=8)


def test_capacity_error_surfaces():
    with pytest.raises(ScenarioError) as info:
        run_election(ScenarioConfig(voters=3, candidates=2, group="test-group"))
    assert info.value.code == "capacity-exceeded"
    assert str(info.value).count("capacity-exceeded") == 1


def test_test_group_single_voter_fits():
    # the p = 23 group only has room for one voter and one candidate
    result, data, _ = run_election(ScenarioConfig(voters=1, candidates=1, group="test-group", seed=2))
    assert result.totals == [1] and audit_bytes(data).valid
