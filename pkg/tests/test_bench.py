"""Workload runner: config parsing, determinism, verification plumbing."""

import pytest

from epochkv.bench import WorkloadConfig, parse_config, run_workload
from epochkv.errors import ConfigError


def small(**kw):
    base = dict(txs=120, tables=2, keys=16, sessions=3, seed=7)
    base.update(kw)
    return WorkloadConfig(**base)


def test_parse_config_full():
    cfg = parse_config(
        """
        # comment line
        seed = 9
        txs=50          # trailing comment
        ltx_ratio = 0.25
        forwarding_enabled = no
        """
    )
    assert cfg.seed == 9
    assert cfg.txs == 50
    assert cfg.ltx_ratio == 0.25
    assert cfg.forwarding_enabled is False


def test_parse_config_overrides_win():
    cfg = parse_config("seed = 1\n", overrides={"seed": "3", "keys": "8"})
    assert cfg.seed == 3 and cfg.keys == 8


@pytest.mark.parametrize(
    "text",
    [
        "no_equals_here\n",
        "unknown_key = 1\n",
        "txs = banana\n",
        "forwarding_enabled = maybe\n",
        "read_ratio = 1.5\n",
        "ltx_ratio = 0.8\nreadonly_ratio = 0.4\n",
        "epoch_every = 0\n",
        "sessions = 0\n",
    ],
)
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_manual_mode_is_deterministic():
    a = run_workload(small())
    b = run_workload(small())
    assert a.deterministic_dict() == b.deterministic_dict()
    assert sum(a.committed.values()) + sum(a.aborted.values()) == 120


def test_seed_changes_outcome():
    a = run_workload(small())
    b = run_workload(small(seed=8))
    assert a.deterministic_dict() != b.deterministic_dict()


def test_verify_checks_pass():
    rep = run_workload(small(txs=200, ltx_ratio=0.3), verify=True)
    assert rep.witness_ok is True
    assert rep.witness_violations == 0
    assert rep.replay_digest_match is True
    assert rep.csr_acyclic in (True, False)  # informational only


def test_workload_mixes_modes():
    rep = run_workload(small(txs=300, ltx_ratio=0.3, readonly_ratio=0.2))
    assert rep.committed.get("readonly", 0) > 0
    assert rep.committed.get("ltx", 0) > 0
    assert rep.committed.get("occ", 0) > 0
    assert rep.epochs_used > 1


def test_forwarding_off_aborts_more_long_txs():
    on = run_workload(small(txs=400, ltx_ratio=0.4))
    off = run_workload(small(txs=400, ltx_ratio=0.4, forwarding_enabled=False))
    assert off.aborted.get("ltx", 0) > on.aborted.get("ltx", 0)


def test_timed_mode_runs_and_reports_rate():
    rep = run_workload(small(txs=400, sessions=4, epoch_period_ms=2), verify=True)
    assert sum(rep.committed.values()) + sum(rep.aborted.values()) == 400
    assert rep.wall_seconds is not None and rep.txs_per_second > 0
    assert rep.witness_ok is True
    assert rep.replay_digest_match is True


def test_trace_from_run_is_parseable(tmp_path):
    cfg = small(txs=60)
    rep = run_workload(cfg, verify=True)
    assert rep.trace_events > 0
    # verify already parsed it internally; double-check the count contract:
    # every tx contributes begin + ops + final (commit/abort) lines
    assert rep.witness_ok is True


def test_durable_workload_writes_log(tmp_path):
    rep = run_workload(small(txs=100, log_dir=str(tmp_path)), verify=True)
    assert (tmp_path / "wal.log").stat().st_size > 0
    assert rep.witness_ok is True
