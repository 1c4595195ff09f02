from __future__ import annotations

from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

AttackType = Literal["double-vote", "forged-ballot", "wrong-phase", "tamper-transcript", "bad-mpc-keys", "stall-recovery"]
ATTACK_TYPES = ("double-vote", "forged-ballot", "wrong-phase", "tamper-transcript", "bad-mpc-keys", "stall-recovery")


class AttackSpec(BaseModel):
    type: AttackType
    booth: int = Field(1, ge=1)


class ScenarioConfig(BaseModel):
    election_id: str = "sbl-election"
    voters: int = Field(ge=1)
    candidates: int = Field(ge=1)
    booths: int = Field(1, ge=1)
    seed: int = 0
    group: Union[Literal["test-group", "production"], int] = 64
    abstain_rate: float = Field(0.0, ge=0.0, le=1.0)
    signin_rate: float = Field(1.0, ge=0.0, le=1.0)
    # "uniform", or one entry per voter: a 1-based candidate, or null to abstain
    votes: Union[Literal["uniform"], List[Optional[int]]] = "uniform"
    attacks: List[AttackSpec] = Field(default_factory=list)
    phase_ticks: int = Field(10, ge=1)

    @field_validator("attacks", mode="before")
    @classmethod
    def _attack_shorthand(cls, v):
        if isinstance(v, list):
            return [{"type": a} if isinstance(a, str) else a for a in v]
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "ScenarioConfig":
        if self.booths > self.voters:
            raise ValueError("booth count cannot exceed voter count")
        if isinstance(self.group, int) and self.group < 16:
            raise ValueError("group bits must be at least 16")
        if isinstance(self.votes, list):
            if len(self.votes) != self.voters:
                raise ValueError(f"votes list has {len(self.votes)} entries for {self.voters} voters")
            for v in self.votes:
                if v is not None and not 1 <= v <= self.candidates:
                    raise ValueError(f"vote {v} outside 1..{self.candidates}")
        for a in self.attacks:
            if a.booth > self.booths:
                raise ValueError(f"attack targets booth {a.booth} but only {self.booths} exist")
        return self


class BoothOutcome(BaseModel):
    booth_id: int
    status: str
    voters: int
    signed_in: int
    ballots: int
    counts: Optional[List[int]] = None
    abort_reason: Optional[str] = None


class AttackOutcome(BaseModel):
    attack: str
    booth: int
    expect: Literal["ledger-reject", "audit-invalid", "booth-aborted"]
    code: str
    observed: Optional[str] = None
    satisfied: bool = False


class RunResult(BaseModel):
    booths: List[BoothOutcome]
    totals: List[int]
    partial: bool
    expected: List[int]
    match: bool
    attacks: List[AttackOutcome] = Field(default_factory=list)
    timings: dict = Field(default_factory=dict)
    counters: dict = Field(default_factory=dict)
