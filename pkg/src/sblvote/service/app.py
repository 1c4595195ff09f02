"""HTTP front end: scenario runs, audits, benchmarks, and live ledgers.

Live ledgers accept the same operations the transcript records, so several
clients (authority, voters, observers) can drive one election and anyone can
pull the transcript once every booth is terminal.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse

from .. import __version__
from ..codec import CodecError
from ..group import GroupError, named_params
from ..ledger import Ledger, LedgerError
from ..protocol import ProtocolError
from ..sim.runner import ScenarioError, bench, rows_to_csv, run_election
from ..sim.scenario import ScenarioConfig
from ..transcript import TranscriptError, audit_bytes, export
from .schemas import (
    AuditResponse,
    BenchRequest,
    BenchResponse,
    ClockAdvance,
    ClockOut,
    ElectionCreate,
    ElectionInfo,
    EventOut,
    GenConfigRequest,
    OperationRequest,
    RunRequest,
    RunResponse,
)

log = logging.getLogger(__name__)


@dataclass
class _Hosted:
    ledger: Ledger
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app() -> FastAPI:
    app = FastAPI(title="sblvote", version=__version__)
    elections: Dict[str, _Hosted] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(LedgerError)
    async def _ledger_error(request: Request, exc: LedgerError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"code": exc.code, "detail": str(exc)})

    @app.exception_handler(CodecError)
    async def _codec_error(request: Request, exc: CodecError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"code": exc.code, "detail": str(exc)})

    @app.exception_handler(ScenarioError)
    async def _scenario_error(request: Request, exc: ScenarioError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"code": exc.code, "detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    # -- simulator and auditor --------------------------------------------

    @app.post("/runs", response_model=RunResponse)
    def create_run(req: RunRequest) -> RunResponse:
        result, transcript, outcomes = run_election(req.config, audit=req.audit)
        return RunResponse(result=result, transcript=transcript.decode(), expectations=outcomes)

    @app.post("/audits", response_model=AuditResponse)
    async def create_audit(request: Request) -> AuditResponse:
        """Audit the raw transcript bytes sent as the request body."""
        report = audit_bytes(await request.body())
        return AuditResponse(**report.to_dict())

    @app.post("/bench", response_model=BenchResponse)
    def create_bench(req: BenchRequest) -> BenchResponse:
        rows, result = bench(req.config, audit=req.audit)
        return BenchResponse(rows=rows, csv=rows_to_csv(rows), result=result)

    @app.post("/configs", response_model=ScenarioConfig)
    def generate_config(req: GenConfigRequest) -> ScenarioConfig:
        try:
            return ScenarioConfig(
                election_id=f"sbl-{req.seed}",
                voters=req.voters,
                candidates=req.candidates,
                booths=req.booths,
                seed=req.seed,
                group=req.group,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    # -- live ledgers --------------------------------------------------------

    def _hosted(election_id: str) -> _Hosted:
        hosted = elections.get(election_id)
        if hosted is None:
            raise HTTPException(status_code=404, detail=f"no election {election_id!r}")
        return hosted

    def _info(ledger: Ledger) -> ElectionInfo:
        state = ledger.main.to_dict()
        return ElectionInfo(
            election_id=ledger.election_id.decode(errors="replace"),
            tick=ledger.clock.tick,
            events=len(ledger.events),
            booths={str(b): s.phase.value for b, s in sorted(ledger.booths.items())},
            result=state["result"],
        )

    @app.post("/elections", response_model=ElectionInfo, status_code=201)
    def create_election(req: ElectionCreate) -> ElectionInfo:
        try:
            params = named_params(req.group)
            authority = bytes.fromhex(req.authority)
        except (GroupError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with registry_lock:
            if req.election_id in elections:
                raise HTTPException(status_code=409, detail=f"election {req.election_id!r} exists")
            ledger = Ledger(params, req.election_id.encode(), authority, req.candidates)
            ledger.open_election(authority, req.booth_count)
            elections[req.election_id] = _Hosted(ledger)
        log.info("opened election %s with %d booths", req.election_id, req.booth_count)
        return _info(ledger)

    @app.get("/elections/{election_id}", response_model=ElectionInfo)
    def get_election(election_id: str) -> ElectionInfo:
        return _info(_hosted(election_id).ledger)

    @app.get("/elections/{election_id}/booths/{booth_id}")
    def get_booth(election_id: str, booth_id: int) -> dict:
        hosted = _hosted(election_id)
        with hosted.lock:
            booth = hosted.ledger.booths.get(booth_id)
            if booth is None:
                raise HTTPException(status_code=404, detail=f"no booth {booth_id}")
            return booth.to_dict()

    @app.post("/elections/{election_id}/ops", response_model=EventOut)
    def submit_operation(election_id: str, req: OperationRequest) -> EventOut:
        hosted = _hosted(election_id)
        try:
            caller = bytes.fromhex(req.caller)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail="caller must be hex") from exc
        with hosted.lock:
            ledger = hosted.ledger
            tick = ledger.clock.tick if req.tick is None else req.tick
            try:
                event = ledger.apply(tick, req.target, req.op, caller, req.payload)
            except (ProtocolError, TypeError, ValueError) as exc:
                if isinstance(exc, (LedgerError, CodecError)):
                    raise
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return EventOut(**event.to_dict())

    @app.post("/elections/{election_id}/clock", response_model=ClockOut)
    def advance_clock(election_id: str, req: ClockAdvance) -> ClockOut:
        hosted = _hosted(election_id)
        with hosted.lock:
            return ClockOut(tick=hosted.ledger.clock.advance(req.ticks))

    @app.get("/elections/{election_id}/transcript")
    def get_transcript(election_id: str) -> Response:
        hosted = _hosted(election_id)
        with hosted.lock:
            try:
                data = export(hosted.ledger)
            except TranscriptError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
        return Response(content=data, media_type="application/json")

    return app


app = create_app()
