from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field

from ..sim.scenario import AttackOutcome, RunResult, ScenarioConfig


class RunRequest(BaseModel):
    config: ScenarioConfig
    audit: bool = False


class RunResponse(BaseModel):
    result: RunResult
    transcript: str
    expectations: List[AttackOutcome]


class CheckStatus(BaseModel):
    status: Literal["pass", "fail"]
    checked: int
    failed: int


class AuditResponse(BaseModel):
    verdict: Literal["valid", "invalid"]
    checks: Dict[str, CheckStatus]
    first_failure: Optional[Dict[str, Any]] = None


class BenchRequest(BaseModel):
    config: ScenarioConfig
    audit: bool = True


class BenchRow(BaseModel):
    phase: str
    seconds: float
    ops: int
    unit: str
    ops_per_sec: float


class BenchResponse(BaseModel):
    rows: List[BenchRow]
    csv: str
    result: RunResult


class GenConfigRequest(BaseModel):
    voters: int = Field(ge=1)
    candidates: int = Field(ge=1)
    booths: int = Field(1, ge=1)
    seed: int = 0
    group: Union[Literal["test-group", "production"], int] = 64


class ElectionCreate(BaseModel):
    election_id: str
    authority: str = Field(description="hex address of the election authority")
    candidates: List[str] = Field(min_length=1)
    booth_count: int = Field(ge=1)
    group: Union[Literal["test-group", "production"], int] = 64


class ElectionInfo(BaseModel):
    election_id: str
    tick: int
    events: int
    booths: Dict[str, str]
    result: Optional[Dict[str, Any]] = None


class OperationRequest(BaseModel):
    op: str
    target: Union[int, Literal["main"]]
    caller: str = Field(description="hex address of the submitting party")
    payload: Any = None
    tick: Optional[int] = Field(None, description="defaults to the current clock")


class EventOut(BaseModel):
    seq: int
    tick: int
    target: Union[int, str]
    op: str
    caller: str
    payload: Any
    canonical: str
    block_hash: str


class ClockAdvance(BaseModel):
    ticks: int = Field(1, ge=0)


class ClockOut(BaseModel):
    tick: int


class ErrorOut(BaseModel):
    code: str
    detail: str
