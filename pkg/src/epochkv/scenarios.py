"""Hand-scripted interleavings with frozen expected outcomes.

Every scenario runs under manual epoch control (period 0), so outcomes are
deterministic: same slots, same abort reasons, same trace, every run. Each
returns a ScenarioResult whose `checks` list is the contract; `passed` is
the conjunction.

The four-transaction contention pattern (fig1-*): four single-key tables
a/b/c/d seeded with "0". t1 reads a and overwrites b; t2 reads b then writes
c; t3 reads b and c then writes a; t4 reads b (after t1 committed) and
writes d. Run as long transactions with forwarding this commits t1, t2, t4
and write-conflicts t3; as short optimistic transactions only t1 and t4
survive validation; with forwarding disabled every reader of b loses to
t1's overwrite and only t1 commits.
"""

from __future__ import annotations

import os
import random
import shutil
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .api import Engine, EngineConfig
from .durability import LOG_NAME, parse_log
from .errors import AbortReason, CorruptLog, UnknownScenario
from .ltx import SAFE, UNSAFE
from .oracle import check_csr, check_mvsr_bruteforce, check_witness
from .slots import MODE_LTX, MODE_OCC, MODE_READONLY, NATIVE_BASE


@dataclass
class Check:
    label: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.ok else "FAIL"
        out = f"[{mark}] {self.label}"
        return out + (f": {self.detail}" if self.detail else "")


@dataclass
class ScenarioResult:
    name: str
    checks: List[Check] = field(default_factory=list)
    trace: str = ""

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def expect(self, label: str, ok: bool, detail: str = "") -> None:
        self.checks.append(Check(label, bool(ok), detail))

    def report(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"scenario {self.name}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _engine(**overrides) -> Engine:
    cfg = EngineConfig(epoch_period_ms=0, **overrides)
    return Engine(cfg)


def _seed_four(eng: Engine) -> Tuple[int, int, int, int]:
    tables = tuple(eng.create_table(n) for n in "abcd")
    seed = eng.begin(MODE_OCC)
    for tbl, k in zip(tables, (b"a", b"b", b"c", b"d")):
        seed.write(tbl, k, b"0")
    assert seed.commit().committed
    eng.advance_epoch()
    return tables


def _fig1_ops(tables, handles) -> List:
    """The shared interleaving; handles may be long or short transactions."""
    A, B, C, D = tables
    t1, t2, t3, t4 = handles
    t1.read(A, b"a")
    t2.read(B, b"b")
    t3.read(B, b"b")
    t3.read(C, b"c")
    t1.write(B, b"b", b"1")
    r1 = t1.commit()
    t4.read(B, b"b")  # sees t1's overwrite
    t2.write(C, b"c", b"2")
    t3.write(A, b"a", b"3")
    t4.write(D, b"d", b"4")
    return [r1, t2.commit(), t3.commit(), t4.commit()]


def fig1_ltx() -> ScenarioResult:
    res = ScenarioResult("fig1-ltx")
    eng = _engine()
    A, B, C, D = _seed_four(eng)
    handles = [
        eng.begin(MODE_LTX, wp_tables=[B]),
        eng.begin(MODE_LTX, wp_tables=[C]),
        eng.begin(MODE_LTX, wp_tables=[A]),
        eng.begin(MODE_LTX, wp_tables=[D]),
    ]
    eng.advance_epoch()  # stage: all four become active at their valid epoch
    E = eng.current_epoch()
    rs = _fig1_ops((A, B, C, D), handles)
    eng.advance_epoch()

    res.expect("3 of 4 commit", sum(r.committed for r in rs) == 3,
               " ".join(r.status for r in rs))
    res.expect("t1 native slot", rs[0].slot == (E, 0, NATIVE_BASE), str(rs[0].slot))
    res.expect("t2 forwarded below t1", rs[1].slot == (E, 0, NATIVE_BASE - 1), str(rs[1].slot))
    res.expect("t3 write conflict", rs[2].reason == AbortReason.LTX_WRITE_CONFLICT,
               str(rs[2].reason))
    res.expect("t4 forwarded below t2", rs[3].slot == (E, 0, NATIVE_BASE - 2), str(rs[3].slot))
    ev = eng.trace_events()
    res.expect("witness pass", check_witness(ev).ok)
    res.expect("view-serializable", check_mvsr_bruteforce(ev).ok)
    res.trace = eng.trace_text()
    eng.close()
    return res


def fig1_occ() -> ScenarioResult:
    res = ScenarioResult("fig1-occ")
    eng = _engine()
    tables = _seed_four(eng)
    handles = [eng.begin(MODE_OCC) for _ in range(4)]
    rs = _fig1_ops(tables, handles)
    eng.advance_epoch()

    res.expect("2 of 4 commit", sum(r.committed for r in rs) == 2,
               " ".join(r.status for r in rs))
    res.expect("t2 read validation fails",
               rs[1].reason == AbortReason.OCC_READ_VALIDATION_FAIL)
    res.expect("t3 read validation fails",
               rs[2].reason == AbortReason.OCC_READ_VALIDATION_FAIL)
    res.expect("witness pass", check_witness(eng.trace_events()).ok)
    res.trace = eng.trace_text()
    eng.close()
    return res


def fig1_mvto() -> ScenarioResult:
    # degraded mode: forwarding disabled, bound frozen at the valid epoch
    res = ScenarioResult("fig1-mvto")
    eng = _engine(forwarding_enabled=False)
    A, B, C, D = _seed_four(eng)
    handles = [
        eng.begin(MODE_LTX, wp_tables=[B]),
        eng.begin(MODE_LTX, wp_tables=[C]),
        eng.begin(MODE_LTX, wp_tables=[A]),
        eng.begin(MODE_LTX, wp_tables=[D]),
    ]
    eng.advance_epoch()
    rs = _fig1_ops((A, B, C, D), handles)
    eng.advance_epoch()

    res.expect("1 of 4 commits", sum(r.committed for r in rs) == 1,
               " ".join(r.status for r in rs))
    for i in (1, 2, 3):
        res.expect(f"t{i + 1} hits read upper bound",
                   rs[i].reason == AbortReason.LTX_READ_UPPER_BOUND, str(rs[i].reason))
    res.trace = eng.trace_text()
    eng.close()
    return res


def fig2_forwarding() -> ScenarioResult:
    """Three long writers of one key commit in one epoch in inverse arrival
    order; the log keeps a single record for the key (the slot-max version),
    and the committed projection is cyclic under CSR yet witness-clean."""
    res = ScenarioResult("fig2-forwarding")
    tmp = tempfile.mkdtemp(prefix="fig2-")
    try:
        eng = _engine(log_dir=tmp)
        T = eng.create_table("t")
        seed = eng.begin(MODE_OCC)
        seed.write(T, b"x", b"x0")
        seed.write(T, b"d", b"d0")
        assert seed.commit().committed
        eng.advance_epoch()

        t1 = eng.begin(MODE_LTX, wp_tables=[T])
        t2 = eng.begin(MODE_LTX, wp_tables=[T])
        t3 = eng.begin(MODE_LTX, wp_tables=[T])
        eng.advance_epoch()
        E = eng.current_epoch()

        t2.read(T, b"x")  # pre-overwrite read forces t2 below t1
        t1.write(T, b"x", b"x1")
        t1.write(T, b"d", b"d1")
        r1 = t1.commit()
        t2.write(T, b"d", b"d2")
        r2 = t2.commit()
        t3.write(T, b"d", b"d3")
        r3 = t3.commit()
        eng.advance_epoch()  # close E: flush runs, elision applies

        res.expect("3 commits", all(r.committed for r in (r1, r2, r3)),
                   " ".join(r.status for r in (r1, r2, r3)))
        res.expect("slot order t3 < t2 < t1", r3.slot < r2.slot < r1.slot,
                   f"{r3.slot} {r2.slot} {r1.slot}")
        probe = eng.begin(MODE_OCC)
        res.expect("visible d is t1's", probe.read(T, b"d") == b"d1")
        probe.abort()

        recs, _ = parse_log(os.path.join(tmp, LOG_NAME))
        d_recs = [r for r in recs if not r.seal and r.epoch == E and r.key == b"d"]
        res.expect("exactly 1 persisted record for d", len(d_recs) == 1,
                   f"{len(d_recs)} records")
        res.expect("persisted d is t1's", bool(d_recs) and d_recs[0].value == b"d1")

        ev = eng.trace_events()
        res.expect("witness pass", check_witness(ev).ok)
        csr = check_csr(ev)
        res.expect("conflict graph cyclic", not csr.acyclic, f"cycle {csr.cycle}")
        res.expect("view-serializable", check_mvsr_bruteforce(ev).ok)
        res.trace = eng.trace_text()
        eng.close()
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return res


def wp_visibility() -> ScenarioResult:
    """A reservation taken while epoch N is current becomes effective at N+1:
    short transactions validating in N slide under it, short transactions in
    N+1 abort, and after the holder finalizes the reservation lingers only to
    the end of that epoch."""
    res = ScenarioResult("wp-visibility")
    eng = _engine()
    T = eng.create_table("t")
    seed = eng.begin(MODE_OCC)
    seed.write(T, b"k", b"0")
    assert seed.commit().committed
    eng.advance_epoch()

    N = eng.current_epoch()
    holder = eng.begin(MODE_LTX, wp_tables=[T])  # effective from N+1
    o1 = eng.begin(MODE_OCC)
    o1.write(T, b"k", b"occ-at-N")
    r1 = o1.commit()
    res.expect("occ commits at registration epoch N", r1.committed, r1.status)

    eng.advance_epoch()  # N+1: holder active, reservation effective
    res.expect("holder staged at N+1", eng.current_epoch() == N + 1)
    o2 = eng.begin(MODE_OCC)
    o2.write(T, b"k", b"occ-at-N+1")
    r2 = o2.commit()
    res.expect("occ aborts under effective reservation",
               r2.reason == AbortReason.OCC_WP_CONFLICT, str(r2.reason))

    holder.write(T, b"k", b"ltx")
    rh = holder.commit()
    res.expect("holder commits", rh.committed, rh.status)

    # removal is deferred to the end of the finalizing epoch
    o3 = eng.begin(MODE_OCC)
    o3.write(T, b"k", b"occ-same-epoch")
    r3 = o3.commit()
    res.expect("reservation still effective after holder commit",
               r3.reason == AbortReason.OCC_WP_CONFLICT, str(r3.reason))

    eng.advance_epoch()
    o4 = eng.begin(MODE_OCC)
    o4.write(T, b"k", b"occ-after-removal")
    r4 = o4.commit()
    res.expect("occ commits after removal boundary", r4.committed, r4.status)

    res.expect("witness pass", check_witness(eng.trace_events()).ok)
    res.trace = eng.trace_text()
    eng.close()
    return res


def safe_snapshot() -> ScenarioResult:
    """Epochs a live long transaction may still commit into stay Unsafe;
    read-only transactions pin themselves to the newest Safe prefix and never
    abort. When the long transaction forwards into an old epoch, that epoch
    was still classified Unsafe at commit time — the classification never
    lied to a snapshot reader."""
    res = ScenarioResult("safe-snapshot")
    eng = _engine()
    T = eng.create_table("t")  # contended data, written by short txs
    W = eng.create_table("w")  # the long tx's reserved write target
    seed = eng.begin(MODE_OCC)
    seed.write(T, b"k", b"v0")
    assert seed.commit().committed
    eng.advance_epoch()

    ltx = eng.begin(MODE_LTX, wp_tables=[W], read_area=[T, W])
    eng.advance_epoch()  # stage
    E = eng.current_epoch()  # ltx valid epoch; its bound pins safety below E
    ltx.read(T, b"k")

    eng.advance_epoch()
    eng.advance_epoch()  # several boundaries pass while the long tx lives
    res.expect("epoch below bound is Safe", eng.classify_epoch(E - 1) == SAFE,
               eng.classify_epoch(E - 1))
    res.expect("valid epoch stays Unsafe while live", eng.classify_epoch(E) == UNSAFE,
               eng.classify_epoch(E))

    occ = eng.begin(MODE_OCC)
    occ.write(T, b"k", b"v1")
    assert occ.commit().committed  # commits into an Unsafe epoch

    ro1 = eng.begin(MODE_READONLY)
    got = ro1.read(T, b"k")
    res.expect("snapshot below the live bound misses unsafe write", got == b"v0",
               repr(got))
    res.expect("read-only commit never aborts", ro1.commit().committed)

    ltx.write(W, b"w", b"ltx")
    unsafe_at_commit = eng.classify_epoch(E)
    rl = ltx.commit()
    res.expect("long tx commits into its valid epoch after it ended",
               rl.committed and rl.slot[0] == E, f"{rl.status} {rl.slot}")
    res.expect("that epoch was Unsafe at commit time", unsafe_at_commit == UNSAFE,
               unsafe_at_commit)

    eng.advance_epoch()  # finalizing boundary releases the pin
    res.expect("epoch flips Safe after finalize", eng.classify_epoch(E) == SAFE,
               eng.classify_epoch(E))
    ro2 = eng.begin(MODE_READONLY)
    got2 = ro2.read(T, b"k")
    # slot-max committed version below the new snapshot: the occ write at a
    # later epoch outranks the forwarded long-tx version at E
    res.expect("new snapshot sees the newest committed version", got2 == b"v1",
               repr(got2))
    res.expect("read-only commit never aborts (2)", ro2.commit().committed)

    res.expect("witness pass", check_witness(eng.trace_events()).ok)
    res.trace = eng.trace_text()
    eng.close()
    return res


def recovery() -> ScenarioResult:
    """Truncate the log at seeded-random byte offsets; every recovery lands
    exactly on a sealed-epoch boundary state (content digest equality), and
    in-place rot in a sealed record raises CorruptLog."""
    res = ScenarioResult("recovery")
    tmp = tempfile.mkdtemp(prefix="recovery-")
    try:
        eng = _engine(log_dir=tmp)
        t1 = eng.create_table("t1")
        t2 = eng.create_table("t2")
        rng = random.Random(5)
        digest_at = {}
        for step in range(120):
            tx = eng.begin(MODE_OCC)
            for _ in range(3):
                tbl = t1 if rng.random() < 0.5 else t2
                k = b"k%02d" % rng.randrange(24)
                if rng.random() < 0.12:
                    tx.delete(tbl, k)
                else:
                    tx.write(tbl, k, b"v%04d" % step)
            tx.commit()
            if step % 7 == 0:
                closing = eng.current_epoch()
                eng.advance_epoch()
                digest_at[closing] = eng.content_digest()
        closing = eng.current_epoch()
        eng.advance_epoch()
        digest_at[closing] = eng.content_digest()
        res.trace = eng.trace_text()
        eng.close()

        path = os.path.join(tmp, LOG_NAME)
        size = os.path.getsize(path)
        exact = 0
        trials = 12
        for _ in range(trials):
            cut = rng.randrange(1, size + 1)
            work = tempfile.mkdtemp(prefix="cut-", dir=tmp)
            dst = os.path.join(work, LOG_NAME)
            shutil.copy(path, dst)
            with open(dst, "r+b") as f:
                f.truncate(cut)
            eng2 = _engine(log_dir=work)
            seal = eng2.recovered_epoch
            if seal:
                want = digest_at.get(seal)
            else:  # cut inside the first epoch: recover to empty
                empty = _engine()
                want = empty.content_digest()
                empty.close()
            exact += eng2.content_digest() == want
            eng2.close()
        res.expect(f"{trials} random truncations recover digest-exact",
                   exact == trials, f"{exact}/{trials}")

        rot = os.path.join(tmp, "rot")
        os.makedirs(rot)
        dst = os.path.join(rot, LOG_NAME)
        shutil.copy(path, dst)
        with open(dst, "r+b") as f:
            f.seek(size // 2)
            b = f.read(1)
            f.seek(size // 2)
            f.write(bytes([b[0] ^ 0xFF]))
        try:
            _engine(log_dir=rot).close()
            res.expect("in-place rot raises CorruptLog", False, "no error raised")
        except CorruptLog as exc:
            res.expect("in-place rot raises CorruptLog", True, str(exc)[:60])
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return res


SCENARIOS: Dict[str, Callable[[], ScenarioResult]] = {
    "fig1-ltx": fig1_ltx,
    "fig1-occ": fig1_occ,
    "fig1-mvto": fig1_mvto,
    "fig2-forwarding": fig2_forwarding,
    "wp-visibility": wp_visibility,
    "safe-snapshot": safe_snapshot,
    "recovery": recovery,
}


def scenario_names() -> List[str]:
    return list(SCENARIOS)


def run_scenario(name: str) -> ScenarioResult:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(
            f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}"
        ) from None
    return fn()
