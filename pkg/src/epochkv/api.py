"""Engine facade: configuration, transaction handles, trace, lifecycle.

One Engine owns the epoch counter, version store, reservation registry, long
transaction machinery and the log. All commit-side mutation funnels through a
single commit mutex — short commits, long precommits and epoch boundary
processing serialize against each other; reads never take it.

Epoch boundaries do the deferred work, in order: re-drive waiting long
transactions, drop reservations of transactions finalized during the closing
epoch, flush the closing epoch's committed versions, refresh the safe
snapshot epoch, garbage-collect shadowed versions.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from . import durability as dur
from .epoch import EpochManager
from .errors import (
    AbortReason,
    EngineHalted,
    IoFailure,
    ReadOnlyViolation,
    TxInactive,
)
from .ltx import LtxManager, LtxState
from .occ import OccTx
from .oracle import (
    ABORT,
    BEGIN,
    COMMIT,
    READ,
    TOMBSTONE,
    WRITE,
    HistoryEvent,
    serialize_events,
)
from .slots import (
    LTX_TIER,
    MODE_LTX,
    MODE_OCC,
    MODE_READONLY,
    CommitResult,
    Slot,
    TxId,
    aborted_result,
    committed_result,
)
from .store import VersionStore
from .wp import WpRegistry


@dataclass
class EngineConfig:
    epoch_period_ms: int = 40  # 0 = manual epochs (advance_epoch() only)
    wp_capacity: int = 64  # reservation slots per table
    forwarding_enabled: bool = True  # False degrades long txs to fixed-slot MVTO
    aggressive_forwarding: bool = True  # take elision wins even when native fits
    max_wait_epochs: Optional[int] = None  # boundary waits before a policy abort
    log_dir: Optional[str] = None  # None = no durability
    trace: bool = True  # record the history trace


class _ReadOnlyTx:
    __slots__ = ("txid", "snapshot", "status", "result")

    def __init__(self, txid: TxId, snapshot: Slot):
        self.txid = txid
        self.snapshot = snapshot
        self.status = "active"
        self.result: Optional[CommitResult] = None


class TransactionHandle:
    """Client-side face of one transaction. Not thread-safe; one thread per
    handle (the engine itself is safe across handles)."""

    def __init__(self, engine: "Engine", mode: str, inner):
        self._engine = engine
        self.mode = mode
        self._inner = inner

    @property
    def txid(self) -> TxId:
        return self._inner.txid

    @property
    def status(self) -> str:
        return self._inner.status

    def read(self, table: int, key: bytes) -> Optional[bytes]:
        return self._engine.tx_read(self, table, key)

    def scan(
        self, table: int, lo: Optional[bytes] = None, hi: Optional[bytes] = None
    ) -> List[Tuple[bytes, bytes]]:
        return self._engine.tx_scan(self, table, lo, hi)

    def write(self, table: int, key: bytes, value: bytes) -> None:
        self._engine.tx_write(self, table, key, value)

    def delete(self, table: int, key: bytes) -> None:
        self._engine.tx_write(self, table, key, None)

    def commit(self) -> CommitResult:
        return self._engine.tx_commit(self)

    def poll(self) -> Optional[CommitResult]:
        return self._inner.result

    def abort(self) -> CommitResult:
        return self._engine.tx_abort(self)


class Engine:
    def __init__(self, config: Optional[EngineConfig] = None, **overrides):
        if config is None:
            config = EngineConfig(**overrides)
        elif overrides:
            raise TypeError("pass either a config object or keyword overrides")
        self.config = config
        self.store = VersionStore()
        self.epoch = EpochManager(config.epoch_period_ms)
        self.wp = WpRegistry(config.wp_capacity)
        self.ltx = LtxManager()
        self.commit_mu = threading.RLock()
        self.events: List[HistoryEvent] = []
        self.halted = False
        self.halt_error: Optional[str] = None
        self._tx_counter = 0
        self._tx_counter_mu = threading.Lock()
        self._occ_seq = 0
        self._flush_pending: Dict[int, list] = {}
        self._wp_removals: Dict[int, List[Tuple[TxId, frozenset]]] = {}
        self._ro_snapshots: Dict[int, int] = {}  # live read-only txs pin gc
        self._closed = False

        recovered_seal = 0
        if config.log_dir:
            log_path = os.path.join(config.log_dir, dur.LOG_NAME)
            if os.path.exists(log_path) and os.path.getsize(log_path) > 0:
                recovered_seal, _ = dur.recover_into(self.store, config.log_dir)
        self.durability = dur.DurabilityManager(self.store, config.log_dir)
        if recovered_seal:
            self.epoch.bootstrap(recovered_seal + 1)
            self.durability.durable_epoch = recovered_seal
            self.ltx.safe_epoch = recovered_seal
            for meta in self.store.tables():  # recovered tables need registries
                self.wp.add_table(meta.table_id)
        self.recovered_epoch = recovered_seal

        self.epoch.on_epoch_close(self._on_epoch_close)
        self.epoch.start_ticker()

    # -- tables ------------------------------------------------------------------

    def create_table(self, name: str) -> int:
        # register in the reservation registry as well
        tid = self.store.create_table(name)
        self.wp.add_table(tid)
        return tid

    def table_id(self, name: str) -> Optional[int]:
        return self.store.table_by_name(name)

    # -- transaction lifecycle ------------------------------------------------------

    def begin(
        self,
        mode: str = MODE_OCC,
        wp_tables: Iterable[int] = (),
        read_area: Optional[Iterable[int]] = None,
    ) -> TransactionHandle:
        if self._closed:
            raise EngineHalted("engine is closed")
        if mode == MODE_OCC:
            inner = OccTx(TxId(num=self.next_tx_num(), mode=MODE_OCC))
        elif mode == MODE_LTX:
            inner = self.ltx.begin(self, wp_tables, read_area)
        elif mode == MODE_READONLY:
            # snapshot choice and gc-pin registration must be atomic against
            # the boundary's floor computation, or a concurrent close could
            # collect versions this snapshot still needs
            with self.commit_mu:
                snap_epoch = self.ltx.safe_epoch + 1
                num = self.next_tx_num()
                self._ro_snapshots[num] = snap_epoch
            inner = _ReadOnlyTx(
                TxId(num=num, mode=MODE_READONLY, valid_epoch=snap_epoch),
                (snap_epoch, LTX_TIER, 0),
            )
        else:
            raise ValueError(f"unknown transaction mode {mode!r}")
        self._emit(BEGIN, inner.txid.num)
        return TransactionHandle(self, mode, inner)

    def tx_read(self, handle: TransactionHandle, table: int, key: bytes) -> Optional[bytes]:
        _check_key(key)
        inner = handle._inner
        if handle.mode == MODE_OCC:
            value, writer = inner.read(self.store, table, key)
        elif handle.mode == MODE_LTX:
            value, writer = self.ltx.read(self, inner, table, key)
        else:
            self._check_ro_active(inner)
            self.store.table(table)
            v = self.store.visible_version(table, key, inner.snapshot)
            value = None if v is None or v.deleted else v.value
            writer = v.writer if v is not None else None
        self._emit(READ, inner.txid.num, table, key, writer)
        return value

    def tx_scan(
        self,
        handle: TransactionHandle,
        table: int,
        lo: Optional[bytes],
        hi: Optional[bytes],
    ) -> List[Tuple[bytes, bytes]]:
        inner = handle._inner
        if handle.mode == MODE_OCC:
            rows = inner.scan(self.store, table, lo, hi)
        elif handle.mode == MODE_LTX:
            rows = self.ltx.scan(self, inner, table, lo, hi)
        else:
            self._check_ro_active(inner)
            rows = [
                (key, v.value, v.writer)
                for key, v in self.store.scan(table, lo, hi, inner.snapshot)
            ]
        num = inner.txid.num
        for key, _value, writer in rows:
            self._emit(READ, num, table, key, writer)
        return [(key, value) for key, value, _writer in rows]

    def tx_write(
        self,
        handle: TransactionHandle,
        table: int,
        key: bytes,
        value: Optional[bytes],
    ) -> None:
        _check_key(key)
        if value is not None and not isinstance(value, bytes):
            raise TypeError("values are bytes")
        inner = handle._inner
        if handle.mode == MODE_READONLY:
            raise ReadOnlyViolation("read-only transactions cannot write")
        if handle.mode == MODE_OCC:
            inner.write(self.store, table, key, value)
        else:
            self.ltx.write(self, inner, table, key, value)
        # deletes travel in the trace as writes flagged in the writer column
        self._emit(WRITE, inner.txid.num, table, key, writer=TOMBSTONE if value is None else None)

    def tx_commit(self, handle: TransactionHandle) -> CommitResult:
        inner = handle._inner
        if handle.mode == MODE_READONLY:
            self._check_ro_active(inner)
            inner.status = "committed"
            self._ro_snapshots.pop(inner.txid.num, None)
            inner.result = committed_result(inner.snapshot)
            self._emit(COMMIT, inner.txid.num, slot=inner.snapshot)
            return inner.result
        if self.halted:
            raise EngineHalted(self.halt_error or "engine halted")
        if handle.mode == MODE_OCC:
            with self.commit_mu:
                at = self.epoch.current()
                result = inner.commit_locked(self, at)
                if result.committed:
                    self._emit(COMMIT, inner.txid.num, slot=result.slot)
                else:
                    self._emit(ABORT, inner.txid.num)
            return result
        return self.ltx.precommit(self, inner)

    def tx_abort(self, handle: TransactionHandle) -> CommitResult:
        inner = handle._inner
        if inner.status == "aborted" and inner.result is not None:
            return inner.result  # double abort is a no-op
        if handle.mode == MODE_OCC:
            if inner.status != "active":
                raise TxInactive(f"tx {inner.txid} is {inner.status}")
            result = inner.abort()
            self._emit(ABORT, inner.txid.num)
            return result
        if handle.mode == MODE_READONLY:
            self._check_ro_active(inner)
            inner.status = "aborted"
            self._ro_snapshots.pop(inner.txid.num, None)
            inner.result = aborted_result(AbortReason.USER_ABORT)
            self._emit(ABORT, inner.txid.num)
            return inner.result
        return self.ltx.request_abort(self, inner)

    @staticmethod
    def _check_ro_active(inner: _ReadOnlyTx) -> None:
        if inner.status != "active":
            raise TxInactive(f"tx {inner.txid} is {inner.status}")

    # -- hooks used by occ/ltx/boundary ------------------------------------------

    def next_tx_num(self) -> int:
        # engine-scoped so traces and digests are reproducible per engine
        with self._tx_counter_mu:
            self._tx_counter += 1
            return self._tx_counter

    def next_occ_seq(self) -> int:
        # called under commit_mu
        self._occ_seq += 1
        return self._occ_seq

    def note_committed_versions(self, epoch: int, versions: list) -> None:
        # called under commit_mu
        self._flush_pending.setdefault(epoch, []).extend(versions)

    def schedule_wp_removal(self, txid: TxId, tables: frozenset) -> None:
        # called under commit_mu; executed when the current epoch closes
        if tables:
            epoch = self.epoch.current()
            self._wp_removals.setdefault(epoch, []).append((txid, tables))

    def emit_commit(self, txid: TxId, slot: Slot) -> None:
        self._emit(COMMIT, txid.num, slot=slot)

    def emit_abort(self, txid: TxId, reason: str) -> None:
        self._emit(ABORT, txid.num)

    def ensure_staged(self, valid_epoch: int) -> None:
        """Block (timed mode) or drive (manual mode) until `valid_epoch` starts."""
        if self.epoch.current() >= valid_epoch:
            return
        if self.epoch.manual:
            while self.epoch.current() < valid_epoch:
                self.advance_epoch()
        else:
            self.epoch.wait_for(valid_epoch)

    def _emit(
        self,
        kind: str,
        tx: int,
        table: Optional[int] = None,
        key: Optional[bytes] = None,
        writer: Optional[int] = None,
        slot: Optional[Slot] = None,
    ) -> None:
        if self.config.trace:
            self.events.append(HistoryEvent(kind, tx, table, key, writer, slot))

    # -- epoch boundary --------------------------------------------------------------

    def _on_epoch_close(self, closing: int) -> None:
        with self.commit_mu:
            self.ltx.resolve_waiters(self, closing)
            for epoch in sorted(e for e in self._wp_removals if e <= closing):
                for txid, tables in self._wp_removals.pop(epoch):
                    for table in tables:
                        self.wp.remove(table, txid)
            versions = self._flush_pending.pop(closing, [])
            if not self.halted:
                try:
                    self.durability.flush_epoch(closing, versions)
                except IoFailure as exc:
                    self.halted = True
                    self.halt_error = str(exc)
            self.ltx.update_safe_epoch(closing)
            floor = self.ltx.gc_floor(closing)
            if self._ro_snapshots:
                # live read-only snapshots read below (epoch, 0, 0); keep
                # every version they can still see
                floor = min(floor, min(self._ro_snapshots.values()))
            self.store.gc(floor)
            self.ltx.prune_slot_states(floor)

    def advance_epoch(self) -> int:
        return self.epoch.advance()

    def current_epoch(self) -> int:
        return self.epoch.current()

    def safe_epoch(self) -> int:
        return self.ltx.safe_epoch

    def durable_epoch(self) -> int:
        return self.durability.durable_epoch

    def classify_epoch(self, epoch: int) -> str:
        return self.ltx.classify(epoch)

    # -- trace + digests -----------------------------------------------------------

    def trace_events(self) -> List[HistoryEvent]:
        return list(self.events)

    def trace_text(self) -> str:
        return serialize_events(self.events)

    def content_digest(self) -> str:
        return self.store.content_digest()

    def writer_digest(self) -> str:
        return self.store.writer_digest()

    # -- lifecycle -------------------------------------------------------------------

    def close(self) -> None:
        """Stop the ticker, seal the current epoch (flushing it), release the log."""
        if self._closed:
            return
        self._closed = True
        self.epoch.stop_ticker()
        if not self.halted:
            try:
                self.advance_epoch()
            except Exception:
                pass
        self.durability.close()

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _check_key(key: bytes) -> None:
    if not isinstance(key, bytes) or not key:
        raise TypeError("keys are non-empty bytes")
