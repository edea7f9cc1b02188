"""Epoch-grained durability: append-only log, group flush, recovery.

Record layout (little-endian):

    epoch   u64   flush epoch (file order is non-decreasing in this field)
    table   u32   0xFFFFFFFF marks an epoch-end seal (keylen = vallen = 0)
    keylen  u32
    vallen  u32   0xFFFFFFFF marks a delete (no value bytes follow)
    key     bytes
    value   bytes
    crc     u32   crc32 over everything above

A flush happens once per closing epoch and writes that epoch's committed
versions in slot order, then the seal, then fsyncs. A version whose record
already holds a committed successor at flush time is skipped entirely — its
effect can never be observed again, so it never needs to hit disk. Because
file order is flush order and within a flush is slot order, replaying with
last-write-wins reproduces the newest surviving version per key.

Recovery reads until end of file. A record that ends early is a torn tail:
everything from the last complete seal onward is discarded. A record that is
complete but fails its checksum is corruption and refuses recovery.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from typing import Dict, List, Optional, Tuple

from .errors import CorruptLog, IoFailure
from .store import VersionStore

_HEADER = struct.Struct("<QIII")
SEAL_TABLE = 0xFFFFFFFF
DELETE_LEN = 0xFFFFFFFF
LOG_NAME = "wal.log"


def _encode(epoch: int, table: int, key: bytes, value: Optional[bytes]) -> bytes:
    if value is None:
        body = _HEADER.pack(epoch, table, len(key), DELETE_LEN) + key
    else:
        body = _HEADER.pack(epoch, table, len(key), len(value)) + key + value
    return body + struct.pack("<I", zlib.crc32(body))


def _encode_seal(epoch: int) -> bytes:
    body = _HEADER.pack(epoch, SEAL_TABLE, 0, 0)
    return body + struct.pack("<I", zlib.crc32(body))


class LogRecord:
    __slots__ = ("epoch", "table", "key", "value", "seal")

    def __init__(self, epoch: int, table: int, key: bytes, value: Optional[bytes], seal: bool):
        self.epoch = epoch
        self.table = table
        self.key = key
        self.value = value
        self.seal = seal


class WalWriter:
    """Owns the single append-only log file for an engine."""

    def __init__(self, log_dir: str):
        self.path = os.path.join(log_dir, LOG_NAME)
        os.makedirs(log_dir, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_WRONLY | os.O_APPEND, 0o644)
        except OSError as exc:
            raise IoFailure(f"cannot open log {self.path}: {exc}") from exc
        self._mu = threading.Lock()
        self.closed = False

    def append_epoch(
        self, epoch: int, items: List[Tuple[int, bytes, Optional[bytes]]]
    ) -> None:
        """Write one sealed epoch section: `items` (already in slot order),
        then the seal, then fsync. Raises IoFailure on any OS error."""
        chunks = [_encode(epoch, table, key, value) for table, key, value in items]
        chunks.append(_encode_seal(epoch))
        buf = b"".join(chunks)
        with self._mu:
            if self.closed:
                raise IoFailure("log writer is closed")
            try:
                os.write(self._fd, buf)
                os.fsync(self._fd)
            except OSError as exc:
                raise IoFailure(f"log write failed: {exc}") from exc

    def close(self) -> None:
        with self._mu:
            if not self.closed:
                self.closed = True
                os.close(self._fd)


def parse_log(path: str) -> Tuple[List[LogRecord], int]:
    """All records through the last complete seal, plus the sealed epoch.

    Returns ([], 0) for a missing or empty file. Trailing bytes that do not
    form a complete record — or complete records past the final seal — are a
    torn tail and are dropped. A complete record with a bad checksum raises
    CorruptLog.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        return [], 0

    records: List[LogRecord] = []
    sealed_epoch = 0
    sealed_count = 0  # records fully covered by a seal
    off = 0
    n = len(data)
    while off < n:
        if off + _HEADER.size > n:
            break  # torn header
        epoch, table, keylen, vallen = _HEADER.unpack_from(data, off)
        if table == SEAL_TABLE:
            if keylen != 0 or vallen != 0:
                raise CorruptLog(f"malformed seal at offset {off}")
            end = off + _HEADER.size + 4
            if end > n:
                break
            body = data[off : off + _HEADER.size]
            (crc,) = struct.unpack_from("<I", data, off + _HEADER.size)
            if crc != zlib.crc32(body):
                raise CorruptLog(f"seal checksum mismatch at offset {off}")
            records.append(LogRecord(epoch, table, b"", None, True))
            sealed_epoch = epoch
            sealed_count = len(records)
            off = end
            continue
        value_len = 0 if vallen == DELETE_LEN else vallen
        end = off + _HEADER.size + keylen + value_len + 4
        if end > n:
            break  # torn record
        body = data[off : end - 4]
        (crc,) = struct.unpack_from("<I", data, end - 4)
        if crc != zlib.crc32(body):
            raise CorruptLog(f"record checksum mismatch at offset {off}")
        key = data[off + _HEADER.size : off + _HEADER.size + keylen]
        value = (
            None
            if vallen == DELETE_LEN
            else data[off + _HEADER.size + keylen : end - 4]
        )
        records.append(LogRecord(epoch, table, key, value, False))
        off = end

    return records[:sealed_count], sealed_epoch


def replay(path: str) -> Tuple[Dict[Tuple[int, bytes], Optional[bytes]], int]:
    """Last-write-wins state from the sealed prefix of the log."""
    records, sealed_epoch = parse_log(path)
    state: Dict[Tuple[int, bytes], Optional[bytes]] = {}
    for rec in records:
        if not rec.seal:
            state[(rec.table, rec.key)] = rec.value
    return state, sealed_epoch


class DurabilityManager:
    """Engine-side flush driver. Tracks which committed versions belong to
    each wall-clock epoch and writes them out when the epoch closes."""

    def __init__(self, store: VersionStore, log_dir: Optional[str]):
        self.store = store
        self.writer = WalWriter(log_dir) if log_dir else None
        self.durable_epoch = 0

    def flush_epoch(self, epoch: int, versions: List) -> None:
        """Close out `epoch`: persist its surviving versions in slot order.

        A version with any committed successor on its record is elided — by
        the time this runs its value can no longer become visible, including
        to recovery (a newer version of the key is either in this same flush
        or already sealed in an earlier epoch section... later sections
        overwrite earlier ones on replay, so order is preserved either way).
        """
        if self.writer is None:
            self.durable_epoch = epoch
            return
        items: List[Tuple[int, bytes, Optional[bytes]]] = []
        for v in sorted(versions, key=lambda v: v.slot):
            rec = v.record
            if rec.versions and rec.versions[-1] is not v:
                # committed successor exists (chains are slot-sorted)
                last = rec.versions[-1]
                if last.slot > v.slot:
                    continue
            v.persisted = True
            items.append((rec.table, rec.key, v.value))
        self.writer.append_epoch(epoch, items)
        self.durable_epoch = epoch

    def close(self) -> None:
        if self.writer is not None:
            self.writer.close()


def recover_into(store: VersionStore, log_dir: str) -> Tuple[int, int]:
    """Load the sealed log prefix into a fresh store.

    Replay is last-write-wins in file order, so each surviving key gets a
    single committed version (writer 0) at its final record's epoch. Tables
    referenced by the log but not yet created are materialized with synthetic
    names; numeric ids are preserved, and later create_table calls continue
    above them. Returns (sealed_epoch, keys_applied).
    """
    from .slots import OCC_TIER

    path = os.path.join(log_dir, LOG_NAME)
    records, sealed_epoch = parse_log(path)
    final: Dict[Tuple[int, bytes], Tuple[Optional[bytes], int]] = {}
    for rec in records:
        if not rec.seal:
            final[(rec.table, rec.key)] = (rec.value, rec.epoch)

    existing = {m.table_id for m in store.tables()}
    for table in sorted({t for t, _ in final}):
        if table in existing:
            continue
        while store._next_table <= table:  # materialize ids in order
            tid = store._next_table
            store.create_table(f"table-{tid}")
            existing.add(tid)

    applied = 0
    seq = 0
    for (table, key), (value, epoch) in sorted(final.items()):
        if value is None:
            continue  # deleted by its last record: leave the key absent
        seq += 1
        rec = store.get_or_create_record(table, key)
        with rec.latch:
            rec.latch_owner = 0
            v = store.install_inflight(0, table, key, value)
            store.promote(v, (epoch, OCC_TIER, seq))
            v.persisted = True
            rec.latch_owner = None
        applied += 1
    return sealed_epoch, applied
