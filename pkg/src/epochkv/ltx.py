"""Long (staged, priority-ordered) transactions.

Lifecycle: begin pins the next epoch as the transaction's valid epoch under a
shared epoch guard and registers table write reservations; operations block
until the valid epoch starts; reads run against the frozen snapshot
(valid_epoch, long tier, 0); precommit computes how far the transaction can
be pushed back (its forward bound), waits at epoch boundaries on undecided
higher-priority peers, validates reads and writes at a candidate slot, and
installs. Priority is begin order: (valid_epoch, begin seq ascending) — a
transaction only ever waits on strictly higher-priority ones, so waiting is
deadlock-free.

Slot bands inside an epoch's long tier: transactions that keep their valid
epoch take ascending native positions; transactions pushed below (forwarded)
take descending positions under the native base, so every forwarded commit
serializes before every native commit of that epoch, in arrival order of
descending priority.
"""

from __future__ import annotations

import threading
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .errors import (
    AbortReason,
    ReadAreaViolation,
    TxInactive,
    WpMismatch,
)
from .slots import (
    LTX_TIER,
    CommitResult,
    Slot,
    SlotState,
    TxId,
    aborted_result,
    committed_result,
    waiting_result,
)
from .store import POINT, RANGE, FULL, PredicateEntry, Version, VersionStore

ACTIVE = "active"
VALIDATING = "validating"
WAITING = "waiting"
COMMITTED = "committed"
ABORTED = "aborted"

SAFE = "Safe"
UNSAFE = "Unsafe"


class LtxRead:
    __slots__ = ("table", "key", "version")

    def __init__(self, table: int, key: bytes, version: Optional[Version]):
        self.table = table
        self.key = key
        self.version = version  # committed version visible at the snapshot


class LtxState:
    def __init__(
        self,
        txid: TxId,
        wp_tables: FrozenSet[int],
        read_area: Optional[FrozenSet[int]],
    ):
        self.txid = txid
        self.wp_tables = wp_tables
        self.read_area = read_area
        self.status = ACTIVE
        self.reads: List[LtxRead] = []
        self.read_keys: Set[Tuple[int, bytes]] = set()
        self.writes: Dict[Tuple[int, bytes], Optional[bytes]] = {}
        self.predicates: List[PredicateEntry] = []
        self.overwriters: Set[int] = set()  # higher-priority reservation holders seen
        self.forward_bound = txid.valid_epoch
        self.bound_fixed = False
        self.wait_epochs = 0
        self.abort_requested = False
        self.final_slot: Optional[Slot] = None
        self.result: Optional[CommitResult] = None

    @property
    def snapshot(self) -> Slot:
        return (self.txid.valid_epoch, LTX_TIER, 0)

    @property
    def write_tables(self) -> Set[int]:
        return {table for table, _ in self.writes}

    def check_live(self) -> None:
        if self.status in (COMMITTED, ABORTED):
            raise TxInactive(f"tx {self.txid} is {self.status}")

    def check_open(self) -> None:
        # Once precommit starts the read/write sets are frozen; the read-wait
        # rule is only sound because non-active txs issue no further reads.
        if self.status != ACTIVE:
            raise TxInactive(f"tx {self.txid} is {self.status}; operations are closed")


class LtxManager:
    """Registry and commit machinery for long transactions."""

    def __init__(self) -> None:
        self._mu = threading.Lock()
        self.live: Dict[int, LtxState] = {}
        self.finalized: Dict[int, Tuple[str, Optional[Slot]]] = {}
        self.waiting: Dict[int, LtxState] = {}
        self._valid_seqs: Dict[int, int] = {}
        self._slot_states: Dict[int, SlotState] = {}
        self.safe_epoch = 0

    # -- begin ----------------------------------------------------------------

    def begin(self, engine, wp_tables: Iterable[int], read_area=None) -> LtxState:
        wp_set = frozenset(wp_tables)
        area = None if read_area is None else frozenset(read_area)
        for table in wp_set | (area or frozenset()):
            engine.store.table(table)  # validate ids up front
        guard = engine.epoch.acquire_guard()
        try:
            valid = engine.epoch.current() + 1
            with self._mu:
                seq = self._valid_seqs.get(valid, 0)
                self._valid_seqs[valid] = seq + 1
            txid = TxId(num=engine.next_tx_num(), mode="ltx", valid_epoch=valid, seq=seq)
            st = LtxState(txid, wp_set, area)
            with self._mu:
                self.live[txid.num] = st
            registered = []
            try:
                for table in sorted(wp_set):
                    engine.wp.register(table, txid, valid)
                    registered.append(table)
            except Exception:
                for table in registered:
                    engine.wp.remove(table, txid)
                with self._mu:
                    del self.live[txid.num]
                raise
        finally:
            guard.release()
        return st

    # -- operations -------------------------------------------------------------

    def read(
        self, engine, st: LtxState, table: int, key: bytes
    ) -> Tuple[Optional[bytes], Optional[int]]:
        st.check_open()
        engine.ensure_staged(st.txid.valid_epoch)
        if st.read_area is not None and table not in st.read_area:
            raise ReadAreaViolation(
                f"tx {st.txid} declared read area does not cover table {table}"
            )
        wkey = (table, key)
        if wkey in st.writes:
            return st.writes[wkey], st.txid.num
        store: VersionStore = engine.store
        store.table(table)
        rec = store.record(table, key)
        v = rec.visible(st.snapshot) if rec is not None else None
        if wkey not in st.read_keys:
            st.read_keys.add(wkey)
            st.reads.append(LtxRead(table, key, v))
            entry = PredicateEntry(
                table=table,
                kind=POINT,
                reader=st.txid.num,
                key=key,
                seen_slot=v.slot if v is not None else None,
            )
            store.register_predicate(entry)
            st.predicates.append(entry)
        self._note_overwriters(engine, st, table)
        if v is None:
            return None, None
        return (None if v.deleted else v.value), v.writer

    def scan(
        self,
        engine,
        st: LtxState,
        table: int,
        lo: Optional[bytes],
        hi: Optional[bytes],
    ) -> List[Tuple[bytes, bytes, int]]:
        st.check_open()
        engine.ensure_staged(st.txid.valid_epoch)
        if st.read_area is not None and table not in st.read_area:
            raise ReadAreaViolation(
                f"tx {st.txid} declared read area does not cover table {table}"
            )
        store: VersionStore = engine.store
        found = store.scan(table, lo, hi, st.snapshot)
        kind = FULL if lo is None and hi is None else RANGE
        entry = PredicateEntry(
            table=table, kind=kind, reader=st.txid.num, lo=lo, hi=hi
        )
        store.register_predicate(entry)
        st.predicates.append(entry)
        out: List[Tuple[bytes, bytes, int]] = []
        for key, v in found:
            wkey = (table, key)
            if wkey in st.writes:
                continue
            if wkey not in st.read_keys:
                st.read_keys.add(wkey)
                st.reads.append(LtxRead(table, key, v))
            out.append((key, v.value, v.writer))
        for (wtable, wkey_), val in st.writes.items():
            if wtable != table or val is None:
                continue
            if lo is not None and wkey_ < lo:
                continue
            if hi is not None and wkey_ >= hi:
                continue
            out.append((wkey_, val, st.txid.num))
        out.sort(key=lambda row: row[0])
        self._note_overwriters(engine, st, table)
        return out

    def write(
        self, engine, st: LtxState, table: int, key: bytes, value: Optional[bytes]
    ) -> None:
        st.check_open()
        engine.ensure_staged(st.txid.valid_epoch)
        if table not in st.wp_tables:
            raise WpMismatch(
                f"tx {st.txid} writes table {table} outside its reservations"
            )
        st.writes[(table, key)] = value

    def _note_overwriters(self, engine, st: LtxState, table: int) -> None:
        mine = st.txid.priority_key()
        for entry in engine.wp.effective(table, st.txid.valid_epoch):
            other = entry.tx
            if other.num != st.txid.num and other.priority_key() < mine:
                st.overwriters.add(other.num)

    # -- precommit ----------------------------------------------------------------

    def precommit(self, engine, st: LtxState) -> CommitResult:
        engine.ensure_staged(st.txid.valid_epoch)
        with engine.commit_mu:
            return self._precommit_locked(engine, st)

    def _precommit_locked(self, engine, st: LtxState) -> CommitResult:
        if st.status in (COMMITTED, ABORTED):
            raise TxInactive(f"tx {st.txid} is {st.status}")
        if st.abort_requested:
            return self._finalize_abort(engine, st, AbortReason.USER_ABORT)
        st.status = VALIDATING

        bound, blockers = self._compute_bound(engine, st)
        if not blockers and st.writes:
            blockers = self._read_wait_blockers(engine, st, bound)
        if blockers:
            st.status = WAITING
            with self._mu:
                self.waiting[st.txid.num] = st
            st.result = waiting_result(tuple(sorted(blockers)))
            return st.result
        st.bound_fixed = True
        with self._mu:
            self.waiting.pop(st.txid.num, None)

        # Epoch-granular read ceiling: every read's version must come from an
        # epoch strictly below the final bound.
        for r in st.reads:
            if r.version is not None and r.version.slot[0] >= bound:
                return self._finalize_abort(engine, st, AbortReason.LTX_READ_UPPER_BOUND)

        return self._validate_and_install(engine, st, bound)

    def _compute_bound(self, engine, st: LtxState) -> Tuple[int, List[int]]:
        bound = st.forward_bound
        blockers: List[int] = []
        if engine.config.forwarding_enabled:
            store: VersionStore = engine.store
            for r in st.reads:
                rec = store.record(r.table, r.key)
                if rec is None:
                    continue
                over = self._lowest_overwriter(rec, r.version)
                if over is not None:
                    bound = min(bound, over.slot[0])
            for num in sorted(st.overwriters):
                kind, payload = self._lookup(num)
                if kind == "committed":
                    bound = min(bound, payload[0])
                elif kind == "live":
                    u = payload
                    if u.bound_fixed:
                        bound = min(bound, u.forward_bound)
                    else:
                        blockers.append(num)
        st.forward_bound = min(st.forward_bound, bound)
        return st.forward_bound, blockers

    @staticmethod
    def _lowest_overwriter(rec, version: Optional[Version]) -> Optional[Version]:
        """Lowest committed version above the one read (all, for absent reads)."""
        versions = rec.versions
        if version is None:
            return versions[0] if versions else None
        from bisect import bisect_right
        from .store import _by_slot

        i = bisect_right(versions, version.slot, key=_by_slot)
        return versions[i] if i < len(versions) else None

    def _lookup(self, num: int):
        with self._mu:
            if num in self.live:
                return "live", self.live[num]
            kind_slot = self.finalized.get(num)
        if kind_slot is None or kind_slot[0] == ABORTED:
            return "aborted", None
        return "committed", kind_slot[1]

    def _read_wait_blockers(self, engine, st: LtxState, bound: int) -> List[int]:
        """Higher-priority peers that are still issuing reads and whose
        snapshot would see our writes if we committed at `bound`."""
        mine = st.txid.priority_key()
        my_tables = st.write_tables
        out: List[int] = []
        with self._mu:
            peers = list(self.live.values())
        for u in peers:
            if u.txid.num == st.txid.num or u.status != ACTIVE:
                continue
            if u.txid.priority_key() >= mine:
                continue
            if u.txid.valid_epoch < bound:
                continue
            if u.read_area is not None and not (u.read_area & my_tables):
                continue
            out.append(u.txid.num)
        return out

    # -- validation at a candidate slot ------------------------------------------

    def _reads_ok(self, engine, st: LtxState, cand: Slot) -> bool:
        store: VersionStore = engine.store
        for r in st.reads:
            rec = store.record(r.table, r.key)
            if r.version is None:
                if rec is not None and rec.committed_between(None, cand):
                    return False
            else:
                if not (r.version.slot < cand):
                    return False
                if rec is not None and rec.committed_between(r.version.slot, cand):
                    return False
        return True

    def _writes_ok(self, engine, st: LtxState, cand: Slot) -> Optional[str]:
        """None if the write set installs cleanly at `cand`, else abort reason."""
        store: VersionStore = engine.store
        me = st.txid.num
        for (table, key), value in st.writes.items():
            meta = store.table(table)
            rec = meta.records.get(key)
            if rec is not None and rec.read_clue >= cand[0]:
                return AbortReason.LTX_WRITE_CONFLICT
            for e in meta.point_preds.get(key, ()):  # committed point claims
                if not e.committed or e.reader == me:
                    continue
                if cand < e.reader_slot and (e.seen_slot is None or e.seen_slot < cand):
                    return AbortReason.LTX_WRITE_CONFLICT
            for e in meta.range_preds:
                if not e.committed or e.reader == me or not e.covers(key):
                    continue
                if cand < e.reader_slot:
                    v_star = rec.visible(e.reader_slot) if rec is not None else None
                    if v_star is None or v_star.slot < cand:
                        return AbortReason.LTX_PHANTOM
            tip = rec.tip() if rec is not None else None
            structural = tip is None or (tip.deleted != (value is None))
            if structural and meta.max_read_epoch >= cand[0]:
                return AbortReason.LTX_PHANTOM
        return None

    def _elision_opportunity(self, engine, st: LtxState, cand: Slot) -> bool:
        """Would every write land under an already-committed successor?"""
        if not st.writes:
            return False
        store: VersionStore = engine.store
        for table, key in st.writes:
            rec = store.record(table, key)
            tip = rec.tip() if rec is not None else None
            if tip is None or not (tip.slot > cand):
                return False
        return True

    def _reads_clean(self, engine, st: LtxState) -> bool:
        store: VersionStore = engine.store
        for r in st.reads:
            rec = store.record(r.table, r.key)
            if rec is None:
                continue
            if self._lowest_overwriter(rec, r.version) is not None:
                return False
        return True

    def _validate_and_install(self, engine, st: LtxState, bound: int) -> CommitResult:
        cfg = engine.config
        valid = st.txid.valid_epoch
        sstate = self._slot_state(bound)

        native = (bound, LTX_TIER, sstate.native_next)
        forwarded = (bound, LTX_TIER, sstate.forwarded_next)
        if not cfg.forwarding_enabled:
            order = [("native", native)]
        elif bound < valid:
            order = [("forwarded", forwarded)]
        elif (
            cfg.aggressive_forwarding
            and self._reads_clean(engine, st)
            and self._elision_opportunity(engine, st, forwarded)
        ):
            order = [("forwarded", forwarded), ("native", native)]
        else:
            order = [("native", native), ("forwarded", forwarded)]

        write_fail: Optional[str] = None
        chosen: Optional[Tuple[str, Slot]] = None
        for band, cand in order:
            if not self._reads_ok(engine, st, cand):
                continue
            reason = self._writes_ok(engine, st, cand)
            if reason is None:
                chosen = (band, cand)
                break
            write_fail = reason
        if chosen is None:
            return self._finalize_abort(
                engine, st, write_fail or AbortReason.LTX_READ_UPPER_BOUND
            )

        band, slot = chosen
        taken = sstate.take_native() if band == "native" else sstate.take_forwarded()
        assert taken == slot[2]

        store: VersionStore = engine.store
        latched = []
        for table, key in sorted(st.writes):
            rec = store.get_or_create_record(table, key)
            rec.latch.acquire()
            rec.latch_owner = st.txid.num
            latched.append(rec)
        installed = []
        for (table, key), value in sorted(st.writes.items()):
            installed.append(store.install_inflight(st.txid.num, table, key, value))
        for v in installed:
            store.promote(v, slot)
        for rec in reversed(latched):
            rec.latch_owner = None
            rec.latch.release()
        store.commit_predicates(st.txid.num, slot)
        engine.note_committed_versions(engine.epoch.current(), installed)

        st.status = COMMITTED
        st.final_slot = slot
        st.result = committed_result(slot)
        self._retire(engine, st, COMMITTED, slot)
        engine.emit_commit(st.txid, slot)
        return st.result

    def _slot_state(self, epoch: int) -> SlotState:
        with self._mu:
            ss = self._slot_states.get(epoch)
            if ss is None:
                ss = self._slot_states[epoch] = SlotState()
            return ss

    def _finalize_abort(self, engine, st: LtxState, reason: str) -> CommitResult:
        engine.store.drop_predicates(st.txid.num)
        st.status = ABORTED
        st.result = aborted_result(reason)
        self._retire(engine, st, ABORTED, None)
        engine.emit_abort(st.txid, reason)
        return st.result

    def _retire(self, engine, st: LtxState, status: str, slot: Optional[Slot]) -> None:
        with self._mu:
            self.live.pop(st.txid.num, None)
            self.waiting.pop(st.txid.num, None)
            self.finalized[st.txid.num] = (status, slot)
        engine.schedule_wp_removal(st.txid, st.wp_tables)

    # -- external abort -----------------------------------------------------------

    def request_abort(self, engine, st: LtxState) -> CommitResult:
        with engine.commit_mu:
            if st.status in (COMMITTED, ABORTED):
                return st.result  # type: ignore[return-value]
            if st.status == WAITING:
                # Resolved at the next epoch boundary, like all waiter outcomes.
                st.abort_requested = True
                return st.result  # type: ignore[return-value]
            return self._finalize_abort(engine, st, AbortReason.USER_ABORT)

    # -- epoch boundary processing --------------------------------------------------

    def resolve_waiters(self, engine, closing: int) -> None:
        """Re-drive waiting transactions in priority order. Runs under the
        engine commit mutex while `closing` is still the current epoch."""
        with self._mu:
            pending = sorted(self.waiting.values(), key=lambda s: s.txid.priority_key())
        for st in pending:
            if st.status != WAITING:
                continue
            st.wait_epochs += 1
            limit = engine.config.max_wait_epochs
            if st.abort_requested:
                self._finalize_abort(engine, st, AbortReason.USER_ABORT)
                continue
            if limit is not None and st.wait_epochs > limit:
                self._finalize_abort(engine, st, AbortReason.USER_ABORT)
                continue
            self._precommit_locked(engine, st)

    def update_safe_epoch(self, closing: int) -> int:
        with self._mu:
            bounds = [u.forward_bound for u in self.live.values()]
            candidate = closing if not bounds else min(closing, min(bounds) - 1)
            if candidate > self.safe_epoch:
                self.safe_epoch = candidate
            return self.safe_epoch

    def gc_floor(self, closing: int) -> int:
        with self._mu:
            bounds = [u.forward_bound for u in self.live.values()]
            floor = self.safe_epoch + 1
            if bounds:
                floor = min(floor, min(bounds))
            return floor

    def classify(self, epoch: int) -> str:
        return SAFE if epoch <= self.safe_epoch else UNSAFE

    def prune_slot_states(self, floor: int) -> None:
        with self._mu:
            for e in [e for e in self._slot_states if e < floor]:
                del self._slot_states[e]
            for e in [e for e in self._valid_seqs if e < floor]:
                del self._valid_seqs[e]
