"""Offline history checkers.

Works on value-less traces: one event per line,

    kind tx table keyhex version_writer slot

with "-" for fields a kind does not carry and slots printed epoch.tier.seq.
Kinds: begin, read, write, commit, abort. A read's version_writer names the
transaction whose write it observed ("-" = observed absence). Deletes appear
as writes flagged in the otherwise-unused version_writer column (0 = this
write is a tombstone); a reader that observes a tombstone reports the
deleter as its version_writer, and a reader that finds nothing at all
reports "-". Writer identity is what the checkers reason about; values never
appear. On read events writer 0 means the recovered pre-log initial state.

Three checkers, in increasing strictness of what they assume about the
engine:

* check_witness — validates the engine's own serialization claim: every
  committed read must be consistent with the commit slots ("the version I
  read is the newest committed one below my slot").
* check_mvsr_bruteforce — ignores slots entirely and asks whether ANY serial
  order of the committed transactions explains the reads and final writes
  (view-serializability, exponential, capped).
* check_csr — classical conflict-serializability on the committed projection
  in arrival order. Deliberately too strong: schedules this engine accepts
  may fail it while passing the two above.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .errors import MalformedHistory, TooLarge
from .slots import Slot, parse_slot, slot_str

BEGIN = "begin"
READ = "read"
WRITE = "write"
COMMIT = "commit"
ABORT = "abort"
KINDS = (BEGIN, READ, WRITE, COMMIT, ABORT)

BOOTSTRAP_WRITER = 0  # recovery loads state as this pseudo-transaction
TOMBSTONE = 0  # writer column of a write event: this write is a delete


@dataclass
class HistoryEvent:
    kind: str
    tx: int
    table: Optional[int] = None
    key: Optional[bytes] = None
    writer: Optional[int] = None  # reads: version writer; None = saw absence
    slot: Optional[Slot] = None  # commit only

    def line(self) -> str:
        return " ".join(
            (
                self.kind,
                str(self.tx),
                "-" if self.table is None else str(self.table),
                "-" if self.key is None else (self.key.hex() or "-"),
                "-" if self.writer is None else str(self.writer),
                "-" if self.slot is None else slot_str(self.slot),
            )
        )


def serialize_events(events: Iterable[HistoryEvent]) -> str:
    return "".join(e.line() + "\n" for e in events)


def parse_trace(text: str) -> List[HistoryEvent]:
    events: List[HistoryEvent] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise MalformedHistory(f"line {lineno}: expected 6 fields, got {len(parts)}")
        kind, tx_s, table_s, key_s, writer_s, slot_s = parts
        if kind not in KINDS:
            raise MalformedHistory(f"line {lineno}: unknown kind {kind!r}")
        try:
            tx = int(tx_s)
            table = None if table_s == "-" else int(table_s)
            key = None if key_s == "-" else bytes.fromhex(key_s)
            writer = None if writer_s == "-" else int(writer_s)
            slot = None if slot_s == "-" else parse_slot(slot_s)
        except (ValueError, TypeError) as exc:
            raise MalformedHistory(f"line {lineno}: {exc}") from exc
        events.append(HistoryEvent(kind, tx, table, key, writer, slot))
    _validate(events)
    return events


def _validate(events: Sequence[HistoryEvent]) -> None:
    begun: Set[int] = set()
    done: Set[int] = set()
    for i, e in enumerate(events, 1):
        if e.tx in done:
            raise MalformedHistory(f"event {i}: tx {e.tx} already finished")
        if e.kind == BEGIN:
            if e.tx in begun:
                raise MalformedHistory(f"event {i}: tx {e.tx} begun twice")
            begun.add(e.tx)
        elif e.kind in (READ, WRITE):
            if e.tx not in begun:
                raise MalformedHistory(f"event {i}: op before begin of tx {e.tx}")
            if e.table is None or e.key is None:
                raise MalformedHistory(f"event {i}: {e.kind} needs table and key")
        elif e.kind == COMMIT:
            if e.tx not in begun:
                raise MalformedHistory(f"event {i}: commit before begin of tx {e.tx}")
            if e.slot is None:
                raise MalformedHistory(f"event {i}: commit without slot")
            done.add(e.tx)
        elif e.kind == ABORT:
            if e.tx not in begun:
                raise MalformedHistory(f"event {i}: abort before begin of tx {e.tx}")
            done.add(e.tx)


Events = Union[str, Sequence[HistoryEvent]]


def _as_events(history: Events) -> Sequence[HistoryEvent]:
    if isinstance(history, str):
        return parse_trace(history)
    events = list(history)
    _validate(events)
    return events


def _committed(events: Sequence[HistoryEvent]) -> Dict[int, Slot]:
    out: Dict[int, Slot] = {}
    for e in events:
        if e.kind == COMMIT:
            out[e.tx] = e.slot  # type: ignore[assignment]
    return out


# ---------------------------------------------------------------------------
# witness check: engine-claimed slots explain every committed read


@dataclass
class WitnessReport:
    ok: bool
    reads_checked: int
    violations: List[str] = field(default_factory=list)


def check_witness(history: Events) -> WitnessReport:
    events = _as_events(history)
    committed = _committed(events)
    aborted = {e.tx for e in events if e.kind == ABORT}

    # committed writes per key, sorted by the writer's commit slot; a tx's
    # last write event to a key decides whether its installed version is a
    # tombstone
    writes: Dict[Tuple[int, bytes], List[Slot]] = {}
    deleted_at: Dict[Tuple[int, bytes], Set[Slot]] = {}
    wrote: Dict[int, Dict[Tuple[int, bytes], bool]] = {}
    for e in events:
        if e.kind == WRITE and e.tx in committed:
            wrote.setdefault(e.tx, {})[(e.table, e.key)] = e.writer == TOMBSTONE
    for tx, keys in wrote.items():
        for tk, is_delete in keys.items():
            insort(writes.setdefault(tk, []), committed[tx])
            if is_delete:
                deleted_at.setdefault(tk, set()).add(committed[tx])

    violations: List[str] = []
    checked = 0
    for e in events:
        if e.kind != READ or e.tx not in committed:
            continue
        if e.writer == e.tx or e.writer == BOOTSTRAP_WRITER:
            continue  # own buffered write / recovered initial state
        checked += 1
        reader_slot = committed[e.tx]
        tk = (e.table, e.key)
        slots = writes.get(tk, [])
        where = f"tx {e.tx} read table {e.table} key {e.key.hex()}"
        if e.writer is None:
            # absence is explained by no prior committed write, or by the
            # newest prior one being a delete (its record may since be GCed)
            i = bisect_left(slots, reader_slot)
            if i > 0 and slots[i - 1] not in deleted_at.get(tk, ()):
                violations.append(
                    f"{where}: saw absence but a committed write at "
                    f"{slot_str(slots[i - 1])} precedes slot {slot_str(reader_slot)}"
                )
            continue
        if e.writer in aborted:
            violations.append(f"{where}: observed aborted writer {e.writer}")
            continue
        if e.writer not in committed:
            violations.append(f"{where}: observed unfinished writer {e.writer}")
            continue
        if tk not in wrote.get(e.writer, {}):
            violations.append(f"{where}: writer {e.writer} never wrote that key")
            continue
        w_slot = committed[e.writer]
        if not w_slot < reader_slot:
            violations.append(
                f"{where}: writer slot {slot_str(w_slot)} not below reader "
                f"slot {slot_str(reader_slot)}"
            )
            continue
        lo = bisect_right(slots, w_slot)
        hi = bisect_left(slots, reader_slot)
        if lo < hi:
            violations.append(
                f"{where}: committed write at {slot_str(slots[lo])} intervenes "
                f"between {slot_str(w_slot)} and {slot_str(reader_slot)}"
            )
    return WitnessReport(ok=not violations, reads_checked=checked, violations=violations)


# ---------------------------------------------------------------------------
# brute-force view-serializability over committed transactions


@dataclass
class MvsrReport:
    ok: bool
    order: Optional[List[int]]
    considered: int


def _mvsr_inputs(events: Sequence[HistoryEvent]):
    committed = _committed(events)
    reads: Dict[int, List[Tuple[Tuple[int, bytes], Optional[int]]]] = {
        t: [] for t in committed
    }
    # tk -> is_delete; a tx's last write event to a key is the one installed
    writes: Dict[int, Dict[Tuple[int, bytes], bool]] = {t: {} for t in committed}
    seen_reads: Set[Tuple[int, int, bytes, Optional[int]]] = set()
    for e in events:
        if e.tx not in committed:
            continue
        if e.kind == READ:
            if e.writer == e.tx:
                continue  # own write, trivially consistent
            sig = (e.tx, e.table, e.key, e.writer)
            if sig in seen_reads:
                continue
            seen_reads.add(sig)
            reads[e.tx].append(((e.table, e.key), e.writer))
        elif e.kind == WRITE:
            writes[e.tx][(e.table, e.key)] = e.writer == TOMBSTONE
    final: Dict[Tuple[int, bytes], int] = {}
    for tx, keys in writes.items():
        for tk in keys:
            if tk not in final or committed[tx] > committed[final[tk]]:
                final[tk] = tx
    return committed, reads, writes, final


def _read_ok(
    want: Optional[int], got: Optional[Tuple[int, bool]]
) -> bool:
    """Does serial state `got` (writer, deleted) explain an observed read?

    Absence (None) is explained by no write yet or a delete; the recovered
    initial state (writer 0) only survives while nothing overwrote it; any
    other writer must be the live last write — a reader of a tombstone
    reports the deleter, which compares equal here.
    """
    if want is None:
        return got is None or got[1]
    if want == BOOTSTRAP_WRITER:
        return got is None
    return got is not None and got[0] == want


def _order_explains(
    order: Sequence[int],
    reads,
    writes,
    final,
) -> bool:
    state: Dict[Tuple[int, bytes], Tuple[int, bool]] = {}
    for tx in order:
        for tk, want in reads[tx]:
            if not _read_ok(want, state.get(tk)):
                return False
        for tk, is_delete in writes[tx].items():
            state[tk] = (tx, is_delete)
    for tk, tx in final.items():
        got = state.get(tk)
        if got is None or got[0] != tx:
            return False
    return True


def check_mvsr_bruteforce(history: Events, limit: int = 8) -> MvsrReport:
    """Is there ANY serial order of the committed transactions that explains
    every read and the final write of every key? Exhaustive; O(n!)."""
    events = _as_events(history)
    committed, reads, writes, final = _mvsr_inputs(events)
    txs = sorted(committed)
    if len(txs) > limit:
        raise TooLarge(f"{len(txs)} committed transactions exceed limit {limit}")
    considered = 0
    for order in permutations(txs):
        considered += 1
        if _order_explains(order, reads, writes, final):
            return MvsrReport(ok=True, order=list(order), considered=considered)
    return MvsrReport(ok=False, order=None, considered=considered)


def mvsr_backtrack(history: Events, limit: int = 8) -> bool:
    """Independent reimplementation of the same decision problem, written as
    incremental backtracking over prefixes. Used to cross-check the
    permutation scan; keep the two divergent on purpose."""
    events = _as_events(history)
    committed, reads, writes, final = _mvsr_inputs(events)
    txs = sorted(committed)
    if len(txs) > limit:
        raise TooLarge(f"{len(txs)} committed transactions exceed limit {limit}")

    State = Dict[Tuple[int, bytes], Tuple[int, bool]]

    def feasible(tx: int, state: State) -> bool:
        return all(_read_ok(want, state.get(tk)) for tk, want in reads[tx])

    def rec(remaining: Set[int], state: State) -> bool:
        if not remaining:
            return all(
                tk in state and state[tk][0] == tx for tk, tx in final.items()
            )
        for tx in sorted(remaining):
            if not feasible(tx, state):
                continue
            undo = {tk: state.get(tk) for tk in writes[tx]}
            for tk, is_delete in writes[tx].items():
                state[tk] = (tx, is_delete)
            if rec(remaining - {tx}, state):
                return True
            for tk, old in undo.items():
                if old is None:
                    state.pop(tk, None)
                else:
                    state[tk] = old
        return False

    return rec(set(txs), {})


# ---------------------------------------------------------------------------
# conflict-serializability on the committed projection, arrival order


@dataclass
class CsrReport:
    acyclic: bool
    cycle: Optional[List[int]]
    edges: int


def check_csr(history: Events) -> CsrReport:
    events = _as_events(history)
    committed = _committed(events)
    last_ops: Dict[Tuple[int, bytes], List[Tuple[int, str]]] = {}
    graph: Dict[int, Set[int]] = {t: set() for t in committed}
    edges = 0
    for e in events:
        if e.tx not in committed or e.kind not in (READ, WRITE):
            continue
        tk = (e.table, e.key)
        ops = last_ops.setdefault(tk, [])
        for prior_tx, prior_kind in ops:
            if prior_tx == e.tx:
                continue
            if prior_kind == WRITE or e.kind == WRITE:
                if e.tx not in graph[prior_tx]:
                    graph[prior_tx].add(e.tx)
                    edges += 1
        ops.append((e.tx, e.kind))

    # iterative DFS, white/grey/black
    WHITE, GREY, BLACK = 0, 1, 2
    color = {t: WHITE for t in graph}
    parent: Dict[int, Optional[int]] = {}
    for root in sorted(graph):
        if color[root] != WHITE:
            continue
        stack: List[Tuple[int, Iterable[int]]] = [(root, iter(sorted(graph[root])))]
        color[root] = GREY
        parent[root] = None
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    parent[nxt] = node
                    stack.append((nxt, iter(sorted(graph[nxt]))))
                    advanced = True
                    break
                if color[nxt] == GREY:
                    path = [node]
                    cur = parent[node]
                    while path[-1] != nxt and cur is not None:
                        path.append(cur)
                        cur = parent.get(cur)
                    path.reverse()  # nxt ... node, closing edge node -> nxt
                    return CsrReport(acyclic=False, cycle=path, edges=edges)
            if not advanced:
                color[node] = BLACK
                stack.pop()
        # stack drained; continue with next root
    return CsrReport(acyclic=True, cycle=None, edges=edges)


# ---------------------------------------------------------------------------
# trace replay digest


def replay_writer_digest(history: Events) -> str:
    """Apply committed writes in slot order; hash (table, key, final writer)
    exactly as the store's writer_digest does. Keys whose final write is a
    delete drop out, same as tombstone tips there."""
    events = _as_events(history)
    committed = _committed(events)
    per_tx: Dict[int, List[Tuple[int, bytes, bool]]] = {}
    for e in events:
        if e.kind == WRITE and e.tx in committed:
            per_tx.setdefault(e.tx, []).append((e.table, e.key, e.writer == TOMBSTONE))
    state: Dict[Tuple[int, bytes], Optional[int]] = {}
    for tx in sorted(per_tx, key=lambda t: committed[t]):
        for table, key, is_delete in per_tx[tx]:
            state[(table, key)] = None if is_delete else tx
    h = hashlib.sha256()
    for (table, key), writer in sorted(state.items()):
        if writer is not None:
            h.update(b"%d\x00%s\x00%d\x01" % (table, key.hex().encode(), writer))
    return h.hexdigest()
