"""Serialization slots and transaction identity.

A slot is a plain tuple (epoch, tier, seq) so lexicographic tuple comparison
is the total commit order. Within one epoch every long transaction (tier 0)
orders before every short one (tier 1).

Long transactions share the tier-0 seq space of their slot epoch, split in
two bands: forwarded positions count DOWN from NATIVE_BASE - 1, so a
transaction pushed below its natural position lands under every native of
that epoch and under earlier-forwarded (higher-priority) arrivals; native
positions count UP from NATIVE_BASE in begin order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

Slot = Tuple[int, int, int]

LTX_TIER = 0
OCC_TIER = 1

# Tier-0 seq band split: forwarded < NATIVE_BASE <= native.
NATIVE_BASE = 1 << 32

MODE_OCC = "occ"
MODE_LTX = "ltx"
MODE_READONLY = "readonly"


def slot_str(slot: Slot) -> str:
    return "%d.%d.%d" % slot


def parse_slot(text: str) -> Slot:
    e, t, s = text.split(".")
    return (int(e), int(t), int(s))


@dataclass(frozen=True)
class TxId:
    """Engine-lifetime-unique transaction identity.

    Long transactions additionally carry (valid_epoch, seq); that pair,
    ascending, is their priority order (earlier begin = higher priority).
    """

    num: int
    mode: str
    valid_epoch: int = 0
    seq: int = 0

    def priority_key(self) -> Tuple[int, int]:
        return (self.valid_epoch, self.seq)

    def __str__(self) -> str:
        return str(self.num)


@dataclass
class SlotState:
    """Per-epoch tier-0 seq allocation state."""

    native_next: int = NATIVE_BASE
    forwarded_next: int = NATIVE_BASE - 1

    def take_native(self) -> int:
        k = self.native_next
        self.native_next += 1
        return k

    def take_forwarded(self) -> int:
        k = self.forwarded_next
        if k < 0:
            raise RuntimeError("forwarded band exhausted")
        self.forwarded_next -= 1
        return k


@dataclass
class CommitResult:
    """Outcome of a commit or poll call."""

    status: str  # "committed" | "aborted" | "waiting"
    slot: Optional[Slot] = None
    reason: Optional[str] = None
    blockers: Tuple[int, ...] = field(default_factory=tuple)  # tx nums, ascending

    @property
    def committed(self) -> bool:
        return self.status == "committed"

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    @property
    def waiting(self) -> bool:
        return self.status == "waiting"


def committed_result(slot: Slot) -> CommitResult:
    return CommitResult("committed", slot=slot)


def aborted_result(reason: str) -> CommitResult:
    return CommitResult("aborted", reason=reason)


def waiting_result(blockers) -> CommitResult:
    return CommitResult("waiting", blockers=tuple(blockers))
