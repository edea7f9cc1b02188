"""Shared fixtures and helpers.

All engine fixtures run with manual epochs (period 0) so tests control every
boundary; scenarios and timed-mode coverage construct their own engines.
"""

import pytest

from epochkv import Engine, EngineConfig, MODE_OCC


@pytest.fixture
def eng():
    engine = Engine(EngineConfig(epoch_period_ms=0))
    yield engine
    engine.close()


def make_engine(**overrides) -> Engine:
    overrides.setdefault("epoch_period_ms", 0)
    return Engine(EngineConfig(**overrides))


def put(engine: Engine, table: int, key: bytes, value: bytes):
    """One committed single-write short transaction."""
    tx = engine.begin(MODE_OCC)
    tx.write(table, key, value)
    result = tx.commit()
    assert result.committed, result
    return result


def wipe(engine: Engine, table: int, key: bytes):
    tx = engine.begin(MODE_OCC)
    tx.delete(table, key)
    result = tx.commit()
    assert result.committed, result
    return result


def install(store, table: int, key: bytes, value, writer: int, slot):
    """Install a committed version directly (store-level tests only)."""
    rec = store.get_or_create_record(table, key)
    rec.latch.acquire()
    rec.latch_owner = writer
    try:
        v = store.install_inflight(writer, table, key, value)
        store.promote(v, slot)
    finally:
        rec.latch_owner = None
        rec.latch.release()
    return v
