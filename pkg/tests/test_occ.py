"""Short-transaction behavior: buffering, validation, reservations, phantoms."""

import pytest

from conftest import put
from epochkv import MODE_LTX, MODE_OCC
from epochkv.errors import AbortReason, TxInactive, UnknownTable
from epochkv.slots import OCC_TIER


@pytest.fixture
def table(eng):
    return eng.create_table("t")


def test_read_own_write_returns_buffered(eng, table):
    tx = eng.begin(MODE_OCC)
    tx.write(table, b"k", b"v1")
    assert tx.read(table, b"k") == b"v1"
    tx.write(table, b"k", b"v2")
    assert tx.read(table, b"k") == b"v2"


def test_read_own_delete_is_absent(eng, table):
    put(eng, table, b"k", b"v")
    tx = eng.begin(MODE_OCC)
    tx.delete(table, b"k")
    assert tx.read(table, b"k") is None


def test_absent_read_returns_none(eng, table):
    tx = eng.begin(MODE_OCC)
    assert tx.read(table, b"nope") is None
    assert tx.commit().committed


def test_commit_slot_is_native_occ(eng, table):
    at = eng.current_epoch()
    r1 = put(eng, table, b"a", b"1")
    r2 = put(eng, table, b"b", b"2")
    assert r1.slot[0] == at and r1.slot[1] == OCC_TIER
    assert r2.slot > r1.slot  # engine-scoped sequence, strictly increasing


def test_committed_value_visible_to_later_tx(eng, table):
    put(eng, table, b"k", b"v")
    tx = eng.begin(MODE_OCC)
    assert tx.read(table, b"k") == b"v"
    assert tx.commit().committed


def test_read_validation_fail_on_overwrite(eng, table):
    put(eng, table, b"k", b"v0")
    t1 = eng.begin(MODE_OCC)
    assert t1.read(table, b"k") == b"v0"
    put(eng, table, b"k", b"v1")  # tip moved under t1's feet
    t1.write(table, b"other", b"x")
    res = t1.commit()
    assert res.aborted
    assert res.reason == AbortReason.OCC_READ_VALIDATION_FAIL


def test_read_validation_ok_when_untouched(eng, table):
    put(eng, table, b"k", b"v0")
    t1 = eng.begin(MODE_OCC)
    assert t1.read(table, b"k") == b"v0"
    put(eng, table, b"unrelated", b"x")
    assert t1.commit().committed


def test_blind_writes_both_commit(eng, table):
    t1 = eng.begin(MODE_OCC)
    t2 = eng.begin(MODE_OCC)
    t1.write(table, b"k", b"1")
    t2.write(table, b"k", b"2")
    assert t1.commit().committed
    assert t2.commit().committed
    probe = eng.begin(MODE_OCC)
    assert probe.read(table, b"k") == b"2"  # later slot wins
    probe.abort()


def test_wp_conflict_once_reservation_effective(eng, table):
    put(eng, table, b"k", b"v0")
    holder = eng.begin(MODE_LTX, wp_tables=[table])
    # not yet effective: short tx on the same table still commits
    early = eng.begin(MODE_OCC)
    early.write(table, b"k", b"pre")
    assert early.commit().committed
    eng.ensure_staged(holder.txid.valid_epoch)
    late = eng.begin(MODE_OCC)
    late.write(table, b"k", b"post")
    res = late.commit()
    assert res.aborted and res.reason == AbortReason.OCC_WP_CONFLICT
    holder.abort()


def test_read_only_table_wp_conflict(eng):
    data = eng.create_table("data")
    side = eng.create_table("side")
    put(eng, data, b"k", b"v0")
    holder = eng.begin(MODE_LTX, wp_tables=[data])
    eng.ensure_staged(holder.txid.valid_epoch)
    tx = eng.begin(MODE_OCC)
    assert tx.read(data, b"k") == b"v0"
    tx.write(side, b"k", b"x")  # writes elsewhere; the read still conflicts
    res = tx.commit()
    assert res.aborted and res.reason == AbortReason.OCC_WP_CONFLICT
    holder.abort()


def test_phantom_on_scan_after_insert(eng, table):
    put(eng, table, b"a", b"1")
    t1 = eng.begin(MODE_OCC)
    assert [k for k, _ in t1.scan(table)] == [b"a"]
    put(eng, table, b"b", b"2")  # structural change invalidates the token
    t1.write(table, b"z", b"x")
    res = t1.commit()
    assert res.aborted and res.reason == AbortReason.OCC_PHANTOM


def test_scan_stable_when_no_structural_change(eng, table):
    put(eng, table, b"a", b"1")
    t1 = eng.begin(MODE_OCC)
    assert [k for k, _ in t1.scan(table)] == [b"a"]
    put(eng, table, b"a", b"updated")  # value change only: same key set
    t1.write(table, b"a", b"mine")
    res = t1.commit()
    # the scan token survives, but the read version moved
    assert res.aborted and res.reason == AbortReason.OCC_READ_VALIDATION_FAIL


def test_scan_merges_pending_writes_sorted(eng, table):
    put(eng, table, b"b", b"2")
    put(eng, table, b"d", b"4")
    tx = eng.begin(MODE_OCC)
    tx.write(table, b"c", b"3")
    tx.write(table, b"a", b"1")
    tx.delete(table, b"d")
    rows = tx.scan(table)
    assert rows == [(b"a", b"1"), (b"b", b"2"), (b"c", b"3")]
    tx.abort()


def test_scan_bounds(eng, table):
    for k in (b"a", b"b", b"c", b"d"):
        put(eng, table, k, k)
    tx = eng.begin(MODE_OCC)
    assert [k for k, _ in tx.scan(table, lo=b"b", hi=b"d")] == [b"b", b"c"]
    tx.abort()


def test_unknown_table_raises_at_write(eng):
    tx = eng.begin(MODE_OCC)
    with pytest.raises(UnknownTable):
        tx.write(99, b"k", b"v")


def test_ops_after_abort_raise(eng, table):
    tx = eng.begin(MODE_OCC)
    tx.write(table, b"k", b"v")
    tx.abort()
    with pytest.raises(TxInactive):
        tx.read(table, b"k")
    with pytest.raises(TxInactive):
        tx.commit()


def test_delete_then_read_back_absent(eng, table):
    put(eng, table, b"k", b"v")
    tx = eng.begin(MODE_OCC)
    tx.delete(table, b"k")
    assert tx.commit().committed
    probe = eng.begin(MODE_OCC)
    assert probe.read(table, b"k") is None
    probe.abort()
