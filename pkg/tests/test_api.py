"""Engine facade: modes, handles, trace emission, snapshots, lifecycle."""

import pytest

from conftest import make_engine, put
from epochkv import (
    Engine,
    EngineConfig,
    MODE_LTX,
    MODE_OCC,
    MODE_READONLY,
)
from epochkv.errors import EngineHalted, ReadOnlyViolation, TxInactive
from epochkv.oracle import parse_trace, replay_writer_digest
from epochkv.slots import LTX_TIER


def test_config_or_overrides_not_both():
    eng = Engine(epoch_period_ms=0)
    eng.close()
    with pytest.raises(TypeError):
        Engine(EngineConfig(), epoch_period_ms=0)


def test_unknown_mode_rejected(eng):
    with pytest.raises(ValueError):
        eng.begin("weird")


def test_key_and_value_validation(eng):
    t = eng.create_table("t")
    tx = eng.begin(MODE_OCC)
    with pytest.raises(TypeError):
        tx.read(t, "str-key")
    with pytest.raises(TypeError):
        tx.read(t, b"")
    with pytest.raises(TypeError):
        tx.write(t, b"k", "str-value")
    tx.abort()


def test_table_id_lookup(eng):
    t = eng.create_table("t")
    assert eng.table_id("t") == t
    assert eng.table_id("nope") is None


def test_readonly_snapshot_slot_is_safe_plus_one(eng):
    eng.create_table("t")
    while eng.safe_epoch() < 4:
        eng.advance_epoch()
    assert eng.safe_epoch() == 4
    ro = eng.begin(MODE_READONLY)
    assert ro.txid.valid_epoch == 5
    res = ro.commit()
    assert res.committed and res.slot == (5, LTX_TIER, 0)


def test_readonly_cannot_write(eng):
    t = eng.create_table("t")
    ro = eng.begin(MODE_READONLY)
    with pytest.raises(ReadOnlyViolation):
        ro.write(t, b"k", b"v")
    with pytest.raises(ReadOnlyViolation):
        ro.delete(t, b"k")
    ro.abort()


def test_readonly_reads_frozen_snapshot(eng):
    t = eng.create_table("t")
    put(eng, t, b"k", b"v1")
    eng.advance_epoch()
    ro = eng.begin(MODE_READONLY)
    assert ro.read(t, b"k") == b"v1"
    put(eng, t, b"k", b"v2")
    eng.advance_epoch()
    assert ro.read(t, b"k") == b"v1"  # still the picked snapshot
    assert ro.scan(t) == [(b"k", b"v1")]
    assert ro.commit().committed
    probe = eng.begin(MODE_READONLY)
    assert probe.read(t, b"k") == b"v2"
    probe.commit()


def test_readonly_snapshot_pinned_across_gc(eng):
    t = eng.create_table("t")
    put(eng, t, b"k", b"v1")
    eng.advance_epoch()
    ro = eng.begin(MODE_READONLY)
    for i in range(5):
        put(eng, t, b"k", b"g%d" % i)
        eng.advance_epoch()  # gc runs each boundary; the pin must hold v1
    assert ro.read(t, b"k") == b"v1"
    ro.commit()
    rec = eng.store.record(t, b"k")
    assert len(rec.versions) > 1
    eng.advance_epoch()  # pin released: old versions become collectible
    assert len(eng.store.record(t, b"k").versions) == 1


def test_event_stream_counts_ops_plus_two(eng):
    t = eng.create_table("t")
    put(eng, t, b"k", b"v")
    base = len(eng.trace_events())
    tx = eng.begin(MODE_OCC)
    tx.read(t, b"k")
    tx.write(t, b"k", b"w")
    assert tx.commit().committed
    events = eng.trace_events()[base:]
    assert [e.kind for e in events] == ["begin", "read", "write", "commit"]
    assert len(events) == 2 + 2


def test_aborted_tx_trace_ends_with_abort(eng):
    t = eng.create_table("t")
    tx = eng.begin(MODE_OCC)
    tx.write(t, b"k", b"v")
    tx.abort()
    kinds = [e.kind for e in eng.trace_events() if e.tx == tx.txid.num]
    assert kinds == ["begin", "write", "abort"]


def test_double_abort_is_idempotent_all_modes(eng):
    t = eng.create_table("t")
    for mode, kwargs in (
        (MODE_OCC, {}),
        (MODE_LTX, {"wp_tables": [t]}),
        (MODE_READONLY, {}),
    ):
        tx = eng.begin(mode, **kwargs)
        first = tx.abort()
        again = tx.abort()
        assert again is first
        with pytest.raises(TxInactive):
            tx.commit()


def test_trace_roundtrips_through_parser(eng):
    t = eng.create_table("t")
    put(eng, t, b"k", b"v")
    tx = eng.begin(MODE_OCC)
    tx.read(t, b"k")
    tx.delete(t, b"k")
    tx.commit()
    parsed = parse_trace(eng.trace_text())
    assert [(e.kind, e.tx) for e in parsed] == [
        (e.kind, e.tx) for e in eng.trace_events()
    ]


def test_trace_can_be_disabled():
    eng = make_engine(trace=False)
    t = eng.create_table("t")
    put(eng, t, b"k", b"v")
    assert eng.trace_events() == []
    eng.close()


def test_writer_digest_matches_trace_replay(eng):
    t = eng.create_table("t")
    for i in range(6):
        put(eng, t, b"k%d" % (i % 3), b"v%d" % i)
    tx = eng.begin(MODE_OCC)
    tx.delete(t, b"k2")
    tx.commit()
    assert replay_writer_digest(eng.trace_events()) == eng.writer_digest()


def test_closed_engine_rejects_new_transactions():
    eng = make_engine()
    eng.create_table("t")
    eng.close()
    with pytest.raises(EngineHalted):
        eng.begin(MODE_OCC)
    eng.close()  # idempotent


def test_context_manager_closes():
    with make_engine() as eng:
        eng.create_table("t")
    with pytest.raises(EngineHalted):
        eng.begin(MODE_OCC)


def test_timed_mode_ticks_without_manual_advance():
    eng = Engine(EngineConfig(epoch_period_ms=2))
    try:
        assert eng.epoch.wait_for(4, timeout=5.0)
        t = eng.create_table("t")
        put(eng, t, b"k", b"v")
        tx = eng.begin(MODE_LTX, wp_tables=[t])
        tx.write(t, b"k", b"w")
        assert tx.commit().committed  # staging waits on the ticker
    finally:
        eng.close()
