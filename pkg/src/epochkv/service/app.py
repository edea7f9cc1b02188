"""HTTP face of one embedded engine.

The app owns a single Engine for its lifetime. Transaction handles live
server-side in a registry keyed by tx number; requests reference them by
number. Handles are single-threaded by contract, so each carries a lock —
concurrent requests against the same tx serialize, different txs don't.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Dict, Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from ..api import Engine, EngineConfig, TransactionHandle
from ..errors import (
    EngineError,
    EngineHalted,
    MalformedHistory,
    NotRegistered,
    ReadAreaViolation,
    ReadOnlyViolation,
    RegistryFull,
    TooLarge,
    TxInactive,
    UnknownTable,
    WpMismatch,
)
from ..oracle import (
    check_csr,
    check_mvsr_bruteforce,
    check_witness,
    parse_trace,
    replay_writer_digest,
)
from ..slots import MODE_LTX, MODE_OCC, MODE_READONLY
from . import models as m

_STATUS_FOR = {
    UnknownTable: 404,
    TxInactive: 409,
    WpMismatch: 400,
    ReadOnlyViolation: 400,
    ReadAreaViolation: 400,
    MalformedHistory: 400,
    TooLarge: 413,
    RegistryFull: 503,
    EngineHalted: 503,
    NotRegistered: 409,
}

_MODES = {"occ": MODE_OCC, "ltx": MODE_LTX, "readonly": MODE_READONLY}


class _TxRegistry:
    """Live handles + terminal results that outlive their handles."""

    def __init__(self):
        self._mu = threading.Lock()
        self.live: Dict[int, Tuple[TransactionHandle, threading.Lock]] = {}
        self.finished: Dict[int, object] = {}  # tx -> CommitResult

    def add(self, handle: TransactionHandle) -> int:
        num = handle.txid.num
        with self._mu:
            self.live[num] = (handle, threading.Lock())
        return num

    def get(self, num: int):
        with self._mu:
            entry = self.live.get(num)
        if entry is None:
            raise KeyError(num)
        return entry

    def retire(self, num: int, result) -> None:
        # waiting results keep the handle alive for poll()
        if result is not None and not result.waiting:
            with self._mu:
                self.live.pop(num, None)
                self.finished[num] = result

    def result_of(self, num: int):
        with self._mu:
            return self.finished.get(num)

    def live_count(self) -> int:
        with self._mu:
            return len(self.live)


def _commit_response(result) -> m.CommitResponse:
    return m.CommitResponse(
        status=result.status,
        slot=result.slot,
        reason=result.reason,
        blockers=list(result.blockers),
    )


def create_app(config: Optional[EngineConfig] = None) -> FastAPI:
    cfg = config or EngineConfig()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.engine = Engine(cfg)
        app.state.txs = _TxRegistry()
        try:
            yield
        finally:
            app.state.engine.close()

    app = FastAPI(title="epochkv", lifespan=lifespan)

    @app.exception_handler(EngineError)
    async def _engine_error(request: Request, exc: EngineError):
        code = _STATUS_FOR.get(type(exc), 400)
        body = m.ErrorBody(error=type(exc).__name__, detail=str(exc))
        return JSONResponse(status_code=code, content=body.model_dump())

    @app.exception_handler(KeyError)
    async def _unknown_tx(request: Request, exc: KeyError):
        body = m.ErrorBody(error="UnknownTx", detail=f"no live transaction {exc}")
        return JSONResponse(status_code=404, content=body.model_dump())

    def engine() -> Engine:
        return app.state.engine

    def txs() -> _TxRegistry:
        return app.state.txs

    # -- tables -----------------------------------------------------------

    @app.post("/tables", response_model=m.TableInfo)
    def create_table(req: m.CreateTableRequest):
        try:
            tid = engine().create_table(req.name)
        except ValueError as exc:  # duplicate name
            return JSONResponse(
                status_code=409,
                content=m.ErrorBody(error="TableExists", detail=str(exc)).model_dump(),
            )
        return m.TableInfo(table_id=tid, name=req.name)

    @app.get("/tables", response_model=list[m.TableInfo])
    def list_tables():
        return [
            m.TableInfo(table_id=meta.table_id, name=meta.name)
            for meta in sorted(engine().store.tables(), key=lambda t: t.table_id)
        ]

    # -- transactions -------------------------------------------------------

    @app.post("/txs", response_model=m.BeginResponse)
    def begin(req: m.BeginRequest):
        mode = _MODES.get(req.mode.lower())
        if mode is None:
            return JSONResponse(
                status_code=400,
                content=m.ErrorBody(
                    error="BadMode", detail=f"mode must be one of {sorted(_MODES)}"
                ).model_dump(),
            )
        handle = engine().begin(mode, wp_tables=req.wp_tables, read_area=req.read_area)
        num = txs().add(handle)
        return m.BeginResponse(tx=num, mode=req.mode.lower(),
                               valid_epoch=handle.txid.valid_epoch or None)

    @app.post("/txs/{tx}/read", response_model=m.ReadResponse)
    def tx_read(tx: int, req: m.KeyRequest):
        handle, lock = txs().get(tx)
        with lock:
            value = handle.read(req.table, req.key_bytes)
        return m.ReadResponse(found=value is not None,
                              value=None if value is None else value.hex())

    @app.post("/txs/{tx}/scan", response_model=m.ScanResponse)
    def tx_scan(tx: int, req: m.ScanRequest):
        handle, lock = txs().get(tx)
        lo = bytes.fromhex(req.lo) if req.lo is not None else None
        hi = bytes.fromhex(req.hi) if req.hi is not None else None
        with lock:
            rows = handle.scan(req.table, lo, hi)
        return m.ScanResponse(rows=[(k.hex(), v.hex()) for k, v in rows])

    @app.post("/txs/{tx}/write")
    def tx_write(tx: int, req: m.WriteRequest):
        handle, lock = txs().get(tx)
        with lock:
            handle.write(req.table, req.key_bytes, bytes.fromhex(req.value))
        return {"ok": True}

    @app.post("/txs/{tx}/delete")
    def tx_delete(tx: int, req: m.KeyRequest):
        handle, lock = txs().get(tx)
        with lock:
            handle.delete(req.table, req.key_bytes)
        return {"ok": True}

    @app.post("/txs/{tx}/commit", response_model=m.CommitResponse)
    def tx_commit(tx: int):
        handle, lock = txs().get(tx)
        with lock:
            result = handle.commit()
        txs().retire(tx, result)
        return _commit_response(result)

    @app.post("/txs/{tx}/poll", response_model=Optional[m.CommitResponse])
    def tx_poll(tx: int):
        done = txs().result_of(tx)
        if done is not None:
            return _commit_response(done)
        handle, lock = txs().get(tx)
        with lock:
            result = handle.poll()
        txs().retire(tx, result)
        return None if result is None else _commit_response(result)

    @app.post("/txs/{tx}/abort", response_model=m.CommitResponse)
    def tx_abort(tx: int):
        done = txs().result_of(tx)
        if done is not None:
            return _commit_response(done)
        handle, lock = txs().get(tx)
        with lock:
            result = handle.abort()
        txs().retire(tx, result)
        return _commit_response(result)

    # -- epochs ------------------------------------------------------------

    @app.get("/epoch", response_model=m.EpochInfo)
    def epoch_info():
        e = engine()
        return m.EpochInfo(current=e.current_epoch(), safe=e.safe_epoch(),
                           durable=e.durable_epoch())

    @app.post("/epoch/advance", response_model=m.EpochInfo)
    def epoch_advance():
        e = engine()
        e.advance_epoch()
        return m.EpochInfo(current=e.current_epoch(), safe=e.safe_epoch(),
                           durable=e.durable_epoch())

    @app.get("/epoch/classify/{epoch}", response_model=m.ClassifyResponse)
    def classify(epoch: int):
        return m.ClassifyResponse(epoch=epoch,
                                  classification=engine().classify_epoch(epoch))

    # -- trace, digests, oracle ----------------------------------------------

    @app.get("/trace", response_class=PlainTextResponse)
    def trace():
        return engine().trace_text()

    @app.get("/digest", response_model=m.DigestResponse)
    def digest():
        e = engine()
        return m.DigestResponse(content=e.content_digest(), writer=e.writer_digest())

    @app.post("/oracle/check", response_model=m.OracleCheckResponse)
    def oracle_check(req: m.OracleCheckRequest):
        events = parse_trace(req.trace) if req.trace is not None \
            else engine().trace_events()
        w = check_witness(events)
        csr = check_csr(events)
        try:
            mvsr = check_mvsr_bruteforce(events, limit=req.mvsr_limit).ok
        except TooLarge:
            mvsr = None
        return m.OracleCheckResponse(
            witness_ok=w.ok,
            reads_checked=w.reads_checked,
            violations=w.violations,
            csr_acyclic=csr.acyclic,
            csr_cycle=csr.cycle,
            mvsr_ok=mvsr,
            replay_digest=replay_writer_digest(events),
        )

    # -- health -------------------------------------------------------------

    @app.get("/health", response_model=m.HealthResponse)
    def health():
        e = engine()
        return m.HealthResponse(
            status="halted" if e.halted else "ok",
            halted=e.halted,
            halt_error=e.halt_error,
            current_epoch=e.current_epoch(),
            live_txs=txs().live_count(),
        )

    return app
