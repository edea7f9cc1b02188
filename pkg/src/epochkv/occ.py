"""Short (optimistic) transactions.

Reads run latch-free and remember the identity of the version they observed.
Writes buffer locally. Commit re-checks every read against the current tip
under the engine's commit mutex, stamps the transaction into the current
epoch's short tier, and installs the write set. A failed commit leaves no
visible state change; a successful one additionally publishes read clues
(per-record max read epoch + per-table max) that later long-transaction
writers validate against.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from .errors import AbortReason, TxInactive
from .slots import OCC_TIER, CommitResult, TxId, aborted_result, committed_result
from .store import Version, VersionStore

ACTIVE = "active"
COMMITTED = "committed"
ABORTED = "aborted"


class OccRead:
    """One read observation: whatever version object was tip at read time.

    `version` is None when the key had no committed version (no record, or an
    all-pending record). A tombstone tip is still a version object here — the
    caller saw "absent", but validation only needs tip identity.
    """

    __slots__ = ("table", "key", "version")

    def __init__(self, table: int, key: bytes, version: Optional[Version]):
        self.table = table
        self.key = key
        self.version = version


class OccTx:
    def __init__(self, txid: TxId):
        self.txid = txid
        self.status = ACTIVE
        self.reads: List[OccRead] = []
        self.read_keys: set = set()  # (table, key) dedup for validation
        self.scans: List[Tuple[int, Optional[bytes], Optional[bytes], int]] = []
        self.writes: Dict[Tuple[int, bytes], Optional[bytes]] = {}
        self.read_tables: set = set()
        self.write_tables: set = set()
        self.result: Optional[CommitResult] = None

    # -- operations (called with the engine as collaborator) -----------------

    def check_active(self) -> None:
        if self.status != ACTIVE:
            raise TxInactive(f"tx {self.txid} is {self.status}")

    def read(
        self, store: VersionStore, table: int, key: bytes
    ) -> Tuple[Optional[bytes], Optional[int]]:
        """Returns (value, writer num). Writer is None for a never-written key,
        the tombstone's writer for a deleted one, self for own buffered writes."""
        self.check_active()
        wkey = (table, key)
        if wkey in self.writes:
            return self.writes[wkey], self.txid.num
        store.table(table)  # raise early on unknown table
        rec = store.record(table, key)
        v = rec.visible(None) if rec is not None else None
        self.read_tables.add(table)
        if wkey not in self.read_keys:
            self.read_keys.add(wkey)
            self.reads.append(OccRead(table, key, v))
        if v is None:
            return None, None
        return (None if v.deleted else v.value), v.writer

    def scan(
        self,
        store: VersionStore,
        table: int,
        lo: Optional[bytes],
        hi: Optional[bytes],
    ) -> List[Tuple[bytes, bytes, int]]:
        """Visible (key, value, writer) rows in [lo, hi) merged with own
        writes. Registers a structure token for phantom detection and per-key
        read entries for the found rows."""
        self.check_active()
        meta = store.table(table)
        token_sv = meta.structure_version
        found = store.scan(table, lo, hi, None)
        self.read_tables.add(table)
        self.scans.append((table, lo, hi, token_sv))
        out: List[Tuple[bytes, bytes, int]] = []
        for key, v in found:
            wkey = (table, key)
            if wkey in self.writes:
                continue  # own write shadows the stored version
            if wkey not in self.read_keys:
                self.read_keys.add(wkey)
                self.reads.append(OccRead(table, key, v))
            out.append((key, v.value, v.writer))
        for (wtable, wkey_), val in self.writes.items():
            if wtable != table or val is None:
                continue
            if lo is not None and wkey_ < lo:
                continue
            if hi is not None and wkey_ >= hi:
                continue
            out.append((wkey_, val, self.txid.num))
        out.sort(key=lambda row: row[0])
        return out

    def write(self, store: VersionStore, table: int, key: bytes, value: Optional[bytes]) -> None:
        self.check_active()
        store.table(table)
        self.writes[(table, key)] = value
        self.write_tables.add(table)

    # -- commit ----------------------------------------------------------------
    # Runs under the engine commit mutex; `at` is the current epoch sampled
    # inside that mutex (epoch advances also serialize on it).

    def commit_locked(self, engine, at: int) -> CommitResult:
        self.check_active()
        store: VersionStore = engine.store
        latched: List = []

        def release() -> None:
            for rec in reversed(latched):
                rec.latch_owner = None
                rec.latch.release()

        def fail(reason: str) -> CommitResult:
            release()
            self.status = ABORTED
            self.result = aborted_result(reason)
            return self.result

        # 0. Structure snapshot before our own latching creates records —
        # otherwise inserting into a table we scanned would self-abort.
        pre_sv = {table: store.table(table).structure_version
                  for table, _lo, _hi, _sv in self.scans}

        # 1. Latch the write set in global (table, key) order.
        for table, key in sorted(self.writes):
            rec = store.get_or_create_record(table, key)
            rec.latch.acquire()
            rec.latch_owner = self.txid.num
            latched.append(rec)

        # 2. Read validation: tip must still be the version we saw.
        for r in self.reads:
            rec = store.record(r.table, r.key)
            tip = rec.visible(None) if rec is not None else None
            if tip is not r.version:
                return fail(AbortReason.OCC_READ_VALIDATION_FAIL)
            if (
                rec is not None
                and rec.latch_owner is not None
                and rec.latch_owner != self.txid.num
            ):
                return fail(AbortReason.OCC_READ_VALIDATION_FAIL)

        # 3. Table reservations: any effective non-self reservation on a table
        # we touched kills the transaction (short txs never hold them).
        for table in self.read_tables | self.write_tables:
            for entry in engine.wp.effective(table, at):
                if entry.tx.num != self.txid.num:
                    return fail(AbortReason.OCC_WP_CONFLICT)

        # 4. Scan structure tokens (vs. the pre-latch snapshot).
        for table, _lo, _hi, token_sv in self.scans:
            if pre_sv[table] != token_sv:
                return fail(AbortReason.OCC_PHANTOM)

        # 5. Serialization slot: current epoch, short tier, global commit seq.
        slot = (at, OCC_TIER, engine.next_occ_seq())

        # 6. Install, publish read clues, release.
        installed = []
        for (table, key), value in sorted(self.writes.items()):
            v = store.install_inflight(self.txid.num, table, key, value)
            installed.append(v)
        for v in installed:
            store.promote(v, slot)
        engine.note_committed_versions(at, installed)
        for r in self.reads:
            store.bump_read_clue(r.table, r.key, at)
        for table, _lo, _hi, _sv in self.scans:
            store.bump_table_read_epoch(table, at)
        release()
        self.status = COMMITTED
        self.result = committed_result(slot)
        return self.result

    def abort(self, reason: str = AbortReason.USER_ABORT) -> CommitResult:
        # Nothing installed outside commit_locked, so this is bookkeeping only.
        self.status = ABORTED
        self.result = aborted_result(reason)
        return self.result
