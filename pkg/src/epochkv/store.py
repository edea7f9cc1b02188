"""Multi-version store: tables, records, version chains, read claims.

Each record keeps its committed versions sorted by serialization slot, so
"newest committed version below a snapshot" is a binary search. Chains are
not append-only: a long transaction pushed below its natural position may
insert a committed version under the current tip.

Readers never latch. Scans copy the sorted key list (atomic in CPython) and
resolve visibility per key; writers serialize externally (engine commit
mutex) and additionally take per-record latches in global (table, key) order.

Read claims: short-transaction reads leave only a per-record clue epoch and a
per-table max read epoch. Long-transaction reads register predicate entries
(point / range / full scan) that carry the reader's final slot once it
commits; later writers validate against committed entries.
"""

from __future__ import annotations

import hashlib
import threading
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from operator import attrgetter
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import UnknownTable
from .slots import Slot

_by_slot = attrgetter("slot")

INFLIGHT = "inflight"
COMMITTED = "committed"
ABORTED = "aborted"

POINT = "point"
RANGE = "range"
FULL = "full"


class Version:
    __slots__ = ("value", "writer", "slot", "status", "persisted", "record")

    def __init__(self, value: Optional[bytes], writer: int, record: "Record"):
        self.value = value  # None = delete marker
        self.writer = writer  # tx num
        self.slot: Optional[Slot] = None
        self.status = INFLIGHT
        self.persisted = False
        self.record = record

    @property
    def deleted(self) -> bool:
        return self.value is None

    def __repr__(self) -> str:
        return f"Version(writer={self.writer}, slot={self.slot}, status={self.status})"


class Record:
    __slots__ = (
        "key",
        "table",
        "versions",
        "pending",
        "latch",
        "latch_owner",
        "read_clue",
        "point_claims",
    )

    def __init__(self, table: int, key: bytes):
        self.table = table
        self.key = key
        # Committed versions sorted by slot. Single list so latch-free readers
        # bisecting concurrently with a writer's insert never see torn state.
        self.versions: List[Version] = []
        self.pending: List[Version] = []
        self.latch = threading.Lock()
        self.latch_owner: Optional[int] = None
        self.read_clue = 0  # max epoch of committed short-tx reads
        self.point_claims: List["PredicateEntry"] = []  # committed point reads

    def tip(self) -> Optional[Version]:
        return self.versions[-1] if self.versions else None

    def visible(self, as_of: Optional[Slot]) -> Optional[Version]:
        """Newest committed version, or newest strictly below `as_of`."""
        versions = self.versions
        if as_of is None:
            return versions[-1] if versions else None
        i = bisect_left(versions, as_of, key=_by_slot)
        return versions[i - 1] if i else None

    def committed_between(self, lo: Optional[Slot], hi: Slot) -> bool:
        """Any committed version with lo < slot < hi? (lo None = open below)"""
        versions = self.versions
        i = 0 if lo is None else bisect_right(versions, lo, key=_by_slot)
        return i < len(versions) and versions[i].slot < hi

    def insert_committed(self, version: Version) -> None:
        assert version.slot is not None
        insort(self.versions, version, key=_by_slot)


@dataclass
class PredicateEntry:
    """A long transaction's read claim against future writers."""

    table: int
    kind: str  # POINT | RANGE | FULL
    reader: int  # tx num
    key: Optional[bytes] = None  # POINT
    lo: Optional[bytes] = None  # RANGE, inclusive
    hi: Optional[bytes] = None  # RANGE, exclusive; None = unbounded
    seen_slot: Optional[Slot] = None  # POINT: slot of version read, None if absent
    committed: bool = False
    reader_slot: Optional[Slot] = None

    def covers(self, key: bytes) -> bool:
        if self.kind == POINT:
            return key == self.key
        if self.kind == FULL:
            return True
        if self.lo is not None and key < self.lo:
            return False
        if self.hi is not None and key >= self.hi:
            return False
        return True


class TableMeta:
    __slots__ = (
        "table_id",
        "name",
        "records",
        "_keys",
        "structure_version",
        "max_read_epoch",
        "index_latch",
        "point_preds",
        "range_preds",
    )

    def __init__(self, table_id: int, name: str):
        self.table_id = table_id
        self.name = name
        self.records: Dict[bytes, Record] = {}
        self._keys: List[bytes] = []  # sorted
        self.structure_version = 0
        self.max_read_epoch = 0
        self.index_latch = threading.Lock()
        self.point_preds: Dict[bytes, List[PredicateEntry]] = {}
        self.range_preds: List[PredicateEntry] = []


class VersionStore:
    def __init__(self) -> None:
        self._tables: Dict[int, TableMeta] = {}
        self._by_name: Dict[str, int] = {}
        self._next_table = 0
        self._mu = threading.Lock()

    # -- tables -------------------------------------------------------------

    def create_table(self, name: str) -> int:
        with self._mu:
            if name in self._by_name:
                raise ValueError(f"table {name!r} already exists")
            tid = self._next_table
            self._next_table += 1
            self._tables[tid] = TableMeta(tid, name)
            self._by_name[name] = tid
            return tid

    def table(self, table: int) -> TableMeta:
        try:
            return self._tables[table]
        except KeyError:
            raise UnknownTable(f"no table with id {table}")

    def table_by_name(self, name: str) -> Optional[int]:
        return self._by_name.get(name)

    def tables(self) -> List[TableMeta]:
        return list(self._tables.values())

    # -- reads --------------------------------------------------------------

    def record(self, table: int, key: bytes) -> Optional[Record]:
        return self.table(table).records.get(key)

    def visible_version(
        self, table: int, key: bytes, as_of: Optional[Slot] = None
    ) -> Optional[Version]:
        rec = self.record(table, key)
        return rec.visible(as_of) if rec is not None else None

    def get_visible(
        self, table: int, key: bytes, as_of: Optional[Slot] = None
    ) -> Optional[bytes]:
        v = self.visible_version(table, key, as_of)
        return None if v is None or v.deleted else v.value

    def scan(
        self,
        table: int,
        lo: Optional[bytes] = None,
        hi: Optional[bytes] = None,
        as_of: Optional[Slot] = None,
    ) -> List[Tuple[bytes, Version]]:
        """Visible (key, version) pairs in [lo, hi), ordered by key."""
        meta = self.table(table)
        keys = meta._keys  # list copy semantics below are GIL-atomic
        i = 0 if lo is None else bisect_left(keys, lo)
        j = len(keys) if hi is None else bisect_left(keys, hi)
        out: List[Tuple[bytes, Version]] = []
        for key in keys[i:j]:
            rec = meta.records.get(key)
            if rec is None:
                continue
            v = rec.visible(as_of)
            if v is not None and not v.deleted:
                out.append((key, v))
        return out

    # -- writes (engine commit sections only) --------------------------------

    def get_or_create_record(self, table: int, key: bytes) -> Record:
        meta = self.table(table)
        rec = meta.records.get(key)
        if rec is None:
            with meta.index_latch:
                rec = meta.records.get(key)
                if rec is None:
                    rec = Record(table, key)
                    meta.records[key] = rec
                    insort(meta._keys, key)
                    meta.structure_version += 1
        return rec

    def install_inflight(
        self, tx_num: int, table: int, key: bytes, value: Optional[bytes]
    ) -> Version:
        """Stage a version on the record. Caller holds the record's latch.

        Bumps the table structure version when the key is new to the index or
        the write transitions the record to/from deleted.
        """
        meta = self.table(table)
        existed = key in meta.records
        rec = self.get_or_create_record(table, key)
        assert rec.latch_owner == tx_num, "install requires the record latch"
        if existed:
            tip = rec.tip()
            tip_deleted = tip is None or tip.deleted
            if tip_deleted != (value is None):
                meta.structure_version += 1
        v = Version(value, tx_num, rec)
        rec.pending.append(v)
        return v

    def promote(self, version: Version, slot: Slot) -> None:
        """Flip an in-flight version to committed at its final slot."""
        rec = version.record
        version.slot = slot
        version.status = COMMITTED
        rec.pending.remove(version)
        rec.insert_committed(version)

    def discard(self, version: Version) -> None:
        version.status = ABORTED
        rec = version.record
        if version in rec.pending:
            rec.pending.remove(version)

    # -- read claims ----------------------------------------------------------

    def bump_read_clue(self, table: int, key: bytes, epoch: int) -> None:
        """Record a committed short-tx read: per-record clue and table max."""
        rec = self.record(table, key)
        if rec is not None and epoch > rec.read_clue:
            rec.read_clue = epoch
        self.bump_table_read_epoch(table, epoch)

    def bump_table_read_epoch(self, table: int, epoch: int) -> None:
        meta = self.table(table)
        if epoch > meta.max_read_epoch:
            meta.max_read_epoch = epoch

    def register_predicate(self, entry: PredicateEntry) -> None:
        meta = self.table(entry.table)
        if entry.kind == POINT:
            assert entry.key is not None
            meta.point_preds.setdefault(entry.key, []).append(entry)
        else:
            meta.range_preds.append(entry)

    def commit_predicates(self, tx_num: int, reader_slot: Slot) -> None:
        """Flip a committing reader's entries to committed and index point
        claims on their records for fast overwrite checks."""
        for meta in self.tables():
            for entries in list(meta.point_preds.values()):
                for e in entries:
                    if e.reader == tx_num and not e.committed:
                        e.committed = True
                        e.reader_slot = reader_slot
                        rec = meta.records.get(e.key)
                        if rec is not None:
                            rec.point_claims.append(e)
            for e in meta.range_preds:
                if e.reader == tx_num and not e.committed:
                    e.committed = True
                    e.reader_slot = reader_slot

    def drop_predicates(self, tx_num: int) -> None:
        """Remove an aborted reader's uncommitted entries."""
        for meta in self.tables():
            for key in list(meta.point_preds):
                meta.point_preds[key] = [
                    e
                    for e in meta.point_preds[key]
                    if not (e.reader == tx_num and not e.committed)
                ]
                if not meta.point_preds[key]:
                    del meta.point_preds[key]
            meta.range_preds = [
                e
                for e in meta.range_preds
                if not (e.reader == tx_num and not e.committed)
            ]

    def committed_point_claims(self, table: int, key: bytes) -> Iterable[PredicateEntry]:
        rec = self.record(table, key)
        return rec.point_claims if rec is not None else ()

    def committed_absent_claims(self, table: int, key: bytes) -> Iterable[PredicateEntry]:
        meta = self.table(table)
        return [e for e in meta.point_preds.get(key, ()) if e.committed]

    def committed_range_claims(self, table: int) -> Iterable[PredicateEntry]:
        return [e for e in self.table(table).range_preds if e.committed]

    # -- maintenance ----------------------------------------------------------

    def gc(self, floor_epoch: int) -> int:
        """Drop versions shadowed below the visibility floor; unhook records
        whose only state is an old tombstone. Returns versions dropped."""
        floor: Slot = (floor_epoch, 0, 0)
        dropped = 0
        for meta in self.tables():
            dead_keys: List[bytes] = []
            for key, rec in list(meta.records.items()):
                i = bisect_left(rec.versions, floor, key=_by_slot)
                if i > 1:
                    cut = i - 1
                    del rec.versions[:cut]
                    dropped += cut
                if (
                    len(rec.versions) == 1
                    and not rec.pending
                    and rec.versions[0].deleted
                    and rec.versions[0].slot < floor
                    and not rec.point_claims
                ):
                    dead_keys.append(key)
            if dead_keys:
                with meta.index_latch:
                    for key in dead_keys:
                        del meta.records[key]
                        ki = bisect_left(meta._keys, key)
                        if ki < len(meta._keys) and meta._keys[ki] == key:
                            del meta._keys[ki]
                    meta.structure_version += 1
            for key in list(meta.point_preds):
                meta.point_preds[key] = [
                    e
                    for e in meta.point_preds[key]
                    if not e.committed or e.reader_slot[0] >= floor_epoch
                ]
                if not meta.point_preds[key]:
                    del meta.point_preds[key]
            meta.range_preds = [
                e
                for e in meta.range_preds
                if not e.committed or e.reader_slot[0] >= floor_epoch
            ]
            for rec in meta.records.values():
                if rec.point_claims:
                    rec.point_claims = [
                        e for e in rec.point_claims if e.reader_slot[0] >= floor_epoch
                    ]
        return dropped

    # -- digests ----------------------------------------------------------------

    def content_digest(self) -> str:
        """SHA-256 over the visible committed state (table, key, value)."""
        h = hashlib.sha256()
        for meta in sorted(self.tables(), key=lambda m: m.table_id):
            for key in sorted(meta.records):
                v = meta.records[key].visible(None)
                if v is not None and not v.deleted:
                    h.update(
                        b"%d\x00%s\x00%s\x01" % (meta.table_id, key.hex().encode(), v.value.hex().encode())
                    )
        return h.hexdigest()

    def writer_digest(self) -> str:
        """SHA-256 over (table, key, tip writer) of committed live tips.

        Writer identity only — the history trace carries no values, so this is
        the strongest digest a trace replay can be checked against. Tombstone
        tips are skipped: a deleted key hashes the same as one never written,
        which keeps the digest stable across garbage collection unhooking
        dead records.
        """
        h = hashlib.sha256()
        for meta in sorted(self.tables(), key=lambda m: m.table_id):
            for key in sorted(meta.records):
                v = meta.records[key].visible(None)
                if v is not None and not v.deleted:
                    h.update(
                        b"%d\x00%s\x00%d\x01"
                        % (meta.table_id, key.hex().encode(), v.writer)
                    )
        return h.hexdigest()
