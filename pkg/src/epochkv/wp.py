"""Table-level write reservations declared by long transactions at begin.

A reservation (owner tx, valid_epoch) announces that the owner may write the
table from valid_epoch on. Short transactions consult these during commit
validation; a reservation is invisible until its valid epoch so a short
transaction validating in the registration epoch is unaffected.

Each table has a fixed-size entry array guarded by a 64-bit version-stamped
lock word: bit 0 is the lock bit, bits 1..63 count releases. Readers never
lock; they snapshot optimistically and retry while the word is locked or
changed underneath them.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

from .errors import NotRegistered, RegistryFull
from .slots import TxId

DEFAULT_CAPACITY = 64

LOCK_BIT = 1
VERSION_STEP = 2  # version lives in bits 1..63


@dataclass(frozen=True)
class WpEntry:
    tx: TxId
    valid_epoch: int


class _TableWp:
    __slots__ = ("word", "entries", "_mutex")

    def __init__(self, capacity: int):
        self.word = 0
        self.entries: List[Optional[WpEntry]] = [None] * capacity
        # mutex backs the lock bit; the word itself is what readers trust
        self._mutex = threading.Lock()

    def _lock(self) -> None:
        self._mutex.acquire()
        self.word |= LOCK_BIT

    def _unlock(self) -> None:
        # clear lock bit, bump version
        self.word = (self.word | LOCK_BIT) + 1
        self._mutex.release()


class WpRegistry:
    """Registry of write reservations for every table in the engine."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self._tables: Dict[int, _TableWp] = {}
        self._tables_mu = threading.Lock()

    def add_table(self, table: int) -> None:
        with self._tables_mu:
            self._tables[table] = _TableWp(self.capacity)

    def _state(self, table: int) -> _TableWp:
        try:
            return self._tables[table]
        except KeyError:
            raise NotRegistered(f"table {table} has no reservation registry")

    # -- mutation (begin / end-of-epoch paths) ------------------------------

    def register(self, table: int, tx: TxId, valid_epoch: int) -> None:
        st = self._state(table)
        st._lock()
        try:
            for i, e in enumerate(st.entries):
                if e is None:
                    st.entries[i] = WpEntry(tx, valid_epoch)
                    return
            raise RegistryFull(f"table {table} reservation registry is full")
        finally:
            st._unlock()

    def remove(self, table: int, tx: TxId) -> None:
        st = self._state(table)
        st._lock()
        try:
            for i, e in enumerate(st.entries):
                if e is not None and e.tx.num == tx.num:
                    st.entries[i] = None
                    return
            raise NotRegistered(f"tx {tx} holds no reservation on table {table}")
        finally:
            st._unlock()

    # -- reading -------------------------------------------------------------

    def snapshot(self, table: int) -> List[WpEntry]:
        """Optimistic consistent copy of the table's entries."""
        st = self._state(table)
        while True:
            v1 = st.word
            if v1 & LOCK_BIT:
                time.sleep(0)
                continue
            copy = [e for e in list(st.entries) if e is not None]
            if st.word == v1:
                return copy
            time.sleep(0)

    def effective(self, table: int, at: int) -> List[WpEntry]:
        """Entries whose valid epoch has arrived by epoch `at`."""
        return [e for e in self.snapshot(table) if e.valid_epoch <= at]

    def word_raw(self, table: int) -> int:
        return self._state(table).word
