"""Write-reservation registry: lock word, register/remove, effective filter."""

import threading

import pytest

from epochkv.errors import NotRegistered, RegistryFull
from epochkv.slots import TxId
from epochkv.wp import WpRegistry


def ltx_id(num, valid_epoch, seq=0):
    return TxId(num=num, mode="ltx", valid_epoch=valid_epoch, seq=seq)


@pytest.fixture
def reg():
    r = WpRegistry(capacity=4)
    r.add_table(0)
    return r


def test_lock_word_version_counts_mutations(reg):
    # fresh word: unlocked, version 0
    assert reg.word_raw(0) == 0
    reg.register(0, ltx_id(7, 6), 6)
    # one mutation: version 1, lock bit clear
    assert reg.word_raw(0) == 2
    reg.remove(0, ltx_id(7, 6))
    # register + remove: version moved by 2
    assert reg.word_raw(0) == 4
    assert reg.snapshot(0) == []


def test_register_then_snapshot(reg):
    assert reg.snapshot(0) == []
    reg.register(0, ltx_id(7, 6), 6)
    entries = reg.snapshot(0)
    assert len(entries) == 1
    assert entries[0].tx.num == 7
    assert entries[0].valid_epoch == 6


def test_capacity_exhaustion():
    reg = WpRegistry(capacity=2)
    reg.add_table(0)
    reg.register(0, ltx_id(1, 5), 5)
    reg.register(0, ltx_id(2, 5), 5)
    with pytest.raises(RegistryFull):
        reg.register(0, ltx_id(3, 5), 5)
    # freeing a slot makes the next registration fit
    reg.remove(0, ltx_id(1, 5))
    reg.register(0, ltx_id(3, 5), 5)
    assert sorted(e.tx.num for e in reg.snapshot(0)) == [2, 3]


def test_effective_filters_by_valid_epoch(reg):
    reg.register(0, ltx_id(1, 6), 6)
    assert reg.effective(0, 5) == []  # not yet effective
    assert [e.tx.num for e in reg.effective(0, 6)] == [1]
    reg.register(0, ltx_id(2, 8), 8)
    assert [e.tx.num for e in reg.effective(0, 7)] == [1]
    assert sorted(e.tx.num for e in reg.effective(0, 8)) == [1, 2]


def test_remove_unknown_tx(reg):
    with pytest.raises(NotRegistered):
        reg.remove(0, ltx_id(42, 5))


def test_unknown_table(reg):
    with pytest.raises(NotRegistered):
        reg.snapshot(99)


def test_snapshot_never_torn_under_churn():
    reg = WpRegistry(capacity=8)
    reg.add_table(0)
    valid_nums = set(range(1000, 1032))
    stop = threading.Event()
    bad = []

    def reader():
        while not stop.is_set():
            for e in reg.snapshot(0):
                if e is None or e.tx.num not in valid_nums or e.valid_epoch != e.tx.valid_epoch:
                    bad.append(e)

    readers = [threading.Thread(target=reader) for _ in range(3)]
    for t in readers:
        t.start()
    for round_ in range(250):
        tx = ltx_id(1000 + round_ % 32, 5 + round_ % 7)
        reg.register(0, tx, tx.valid_epoch)
        reg.remove(0, tx)
    stop.set()
    for t in readers:
        t.join(timeout=10)
    assert not bad
    # every successful mutation bumped the version exactly once
    assert reg.word_raw(0) == 2 * (2 * 250)


def test_tables_isolated():
    reg = WpRegistry(capacity=2)
    reg.add_table(0)
    reg.add_table(1)
    reg.register(0, ltx_id(1, 5), 5)
    assert reg.snapshot(1) == []
    assert len(reg.snapshot(0)) == 1
