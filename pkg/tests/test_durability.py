"""Log format, group flush, torn-tail handling, corruption, recovery."""

import os

import pytest

from conftest import make_engine, put, wipe
from epochkv import MODE_OCC
from epochkv.errors import CorruptLog, EngineHalted, IoFailure
from epochkv.durability import (
    DELETE_LEN,
    LOG_NAME,
    DurabilityManager,
    WalWriter,
    parse_log,
    replay,
)
from epochkv.store import VersionStore


def log_path(d):
    return os.path.join(str(d), LOG_NAME)


def test_roundtrip_with_seals(tmp_path):
    w = WalWriter(str(tmp_path))
    w.append_epoch(1, [(0, b"k1", b"v1"), (1, b"k2", b"v2")])
    w.append_epoch(2, [(0, b"k1", None)])  # delete record
    w.close()
    records, sealed = parse_log(log_path(tmp_path))
    assert sealed == 2
    data = [(r.epoch, r.table, r.key, r.value) for r in records if not r.seal]
    assert data == [(1, 0, b"k1", b"v1"), (1, 1, b"k2", b"v2"), (2, 0, b"k1", None)]
    seals = [r.epoch for r in records if r.seal]
    assert seals == [1, 2]


def test_replay_last_write_wins(tmp_path):
    w = WalWriter(str(tmp_path))
    w.append_epoch(1, [(0, b"a", b"1"), (0, b"b", b"1")])
    w.append_epoch(2, [(0, b"a", b"2"), (0, b"b", None)])
    w.close()
    state, sealed = replay(log_path(tmp_path))
    assert sealed == 2
    assert state == {(0, b"a"): b"2", (0, b"b"): None}


def test_missing_file_is_empty(tmp_path):
    assert parse_log(log_path(tmp_path)) == ([], 0)


def test_torn_tail_dropped(tmp_path):
    w = WalWriter(str(tmp_path))
    w.append_epoch(1, [(0, b"k", b"v1")])
    w.append_epoch(2, [(0, b"k", b"v2")])
    w.close()
    path = log_path(tmp_path)
    size = os.path.getsize(path)
    with open(path, "r+b") as f:
        f.truncate(size - 1)  # clip one byte off the final seal
    records, sealed = parse_log(path)
    assert sealed == 1
    assert [(r.key, r.value) for r in records if not r.seal] == [(b"k", b"v1")]
    # a complete record past the last seal is still a torn (unsealed) tail
    state, _ = replay(path)
    assert state == {(0, b"k"): b"v1"}


def test_complete_record_bad_crc_refuses(tmp_path):
    w = WalWriter(str(tmp_path))
    w.append_epoch(1, [(0, b"k", b"vv")])
    w.close()
    path = log_path(tmp_path)
    with open(path, "r+b") as f:
        f.seek(20)  # first key byte: framing stays intact, checksum breaks
        b = f.read(1)
        f.seek(20)
        f.write(bytes([b[0] ^ 0xFF]))
    with pytest.raises(CorruptLog):
        parse_log(path)


def test_delete_encoded_without_value_bytes(tmp_path):
    w = WalWriter(str(tmp_path))
    w.append_epoch(1, [(0, b"k", None)])
    w.close()
    with open(log_path(tmp_path), "rb") as f:
        raw = f.read()
    import struct

    epoch, table, keylen, vallen = struct.unpack_from("<QIII", raw, 0)
    assert (epoch, table, keylen, vallen) == (1, 0, 1, DELETE_LEN)


def test_closed_writer_raises(tmp_path):
    w = WalWriter(str(tmp_path))
    w.close()
    with pytest.raises(IoFailure):
        w.append_epoch(1, [])


def test_flush_without_writer_still_advances(tmp_path):
    mgr = DurabilityManager(VersionStore(), None)
    mgr.flush_epoch(5, [])
    assert mgr.durable_epoch == 5


def test_durable_epoch_tracks_closed_epochs(tmp_path):
    eng = make_engine(log_dir=str(tmp_path))
    try:
        eng.create_table("t")
        assert eng.durable_epoch() == 0
        eng.advance_epoch()
        eng.advance_epoch()
        assert eng.durable_epoch() == eng.current_epoch() - 1
        _, sealed = parse_log(log_path(tmp_path))
        assert sealed == eng.durable_epoch()
    finally:
        eng.close()


def test_same_epoch_overwrite_elided_from_log(tmp_path):
    eng = make_engine(log_dir=str(tmp_path))
    t = eng.create_table("t")
    put(eng, t, b"k", b"v1")
    put(eng, t, b"k", b"v2")  # same epoch: the first version never hits disk
    eng.advance_epoch()
    records, _ = parse_log(log_path(tmp_path))
    key_records = [r for r in records if not r.seal and r.key == b"k"]
    assert [(r.epoch, r.value) for r in key_records] == [(1, b"v2")]
    eng.close()


def test_restart_restores_state_and_epochs(tmp_path):
    d = str(tmp_path)
    eng = make_engine(log_dir=d)
    t = eng.create_table("t")
    put(eng, t, b"a", b"1")
    eng.advance_epoch()
    put(eng, t, b"b", b"2")
    put(eng, t, b"a", b"3")
    wipe(eng, t, b"b")
    digest = None
    eng.advance_epoch()
    digest = eng.content_digest()
    sealed_before = eng.durable_epoch()
    eng.close()

    back = make_engine(log_dir=d)
    try:
        assert back.recovered_epoch >= sealed_before
        assert back.current_epoch() == back.recovered_epoch + 1
        assert back.durable_epoch() == back.recovered_epoch
        assert back.content_digest() == digest
        tx = back.begin(MODE_OCC)
        assert tx.read(t, b"a") == b"3"
        assert tx.read(t, b"b") is None  # delete-final key stays gone
        tx.abort()
    finally:
        back.close()


def test_recovery_materializes_table_ids(tmp_path):
    d = str(tmp_path)
    eng = make_engine(log_dir=d)
    eng.create_table("zero")
    eng.create_table("one")
    two = eng.create_table("two")
    put(eng, two, b"k", b"v")  # only the highest id ever hits the log
    eng.close()

    back = make_engine(log_dir=d)
    try:
        tx = back.begin(MODE_OCC)
        assert tx.read(two, b"k") == b"v"
        tx.abort()
        assert back.create_table("next") == two + 1  # ids continue above
    finally:
        back.close()


def test_truncated_restart_matches_sealed_prefix(tmp_path):
    d = str(tmp_path)
    eng = make_engine(log_dir=d)
    t = eng.create_table("t")
    digests = {}
    for i in range(4):
        put(eng, t, b"k%d" % i, b"v%d" % i)
        put(eng, t, b"k0", b"gen%d" % i)
        eng.advance_epoch()
        digests[eng.durable_epoch()] = eng.content_digest()
    eng.close()
    path = log_path(tmp_path)
    blob = open(path, "rb").read()
    # chop mid-file: recovery must land exactly on some sealed prefix
    with open(path, "wb") as f:
        f.write(blob[: int(len(blob) * 0.55)])
    back = make_engine(log_dir=d)
    try:
        sealed = back.recovered_epoch
        assert sealed in digests
        assert back.content_digest() == digests[sealed]
    finally:
        back.close()


def test_io_failure_halts_engine(tmp_path):
    eng = make_engine(log_dir=str(tmp_path))
    t = eng.create_table("t")
    put(eng, t, b"k", b"v")
    eng.durability.writer.close()  # simulate the device going away
    eng.advance_epoch()
    assert eng.halted
    tx = eng.begin(MODE_OCC)
    tx.write(t, b"k", b"w")
    with pytest.raises(EngineHalted):
        tx.commit()
    eng.close()
