"""Workload driver with two execution modes.

Manual mode (epoch_period_ms = 0) is single-threaded and bit-for-bit
reproducible: transaction programs are pre-generated from the seed, a fixed
pool of logical sessions is stepped round-robin one operation at a time, and
the epoch advances after every `epoch_every` scheduler steps. The report
carries only deterministic fields (counts, per-reason aborts, latency in
epochs, digests).

Timed mode (epoch_period_ms > 0) runs real threads against the epoch ticker
and additionally reports wall-clock throughput; those fields are excluded
from the deterministic dump.

Config files are `key=value` lines (# comments). Unknown keys or malformed
values raise ConfigError.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field, fields as dc_fields
from typing import Dict, Iterator, List, Optional, Tuple

from .api import Engine, EngineConfig
from .errors import ConfigError
from .oracle import check_csr, check_witness, replay_writer_digest
from .slots import MODE_LTX, MODE_OCC, MODE_READONLY


@dataclass
class WorkloadConfig:
    seed: int = 42
    tables: int = 2
    keys: int = 64  # keyspace per table
    txs: int = 500
    sessions: int = 4  # logical sessions (manual) / threads (timed)
    ops_per_tx: int = 4
    read_ratio: float = 0.7  # read share of ops in read-write txs
    scan_ratio: float = 0.1  # share of reads that are small scans
    ltx_ratio: float = 0.15  # share of txs run as long transactions
    readonly_ratio: float = 0.1  # share of txs run as read-only snapshots
    value_size: int = 8
    epoch_every: int = 16  # manual mode: advance after this many steps
    epoch_period_ms: int = 0  # >0 switches to timed mode
    forwarding_enabled: bool = True
    aggressive_forwarding: bool = True
    max_wait_epochs: int = 64
    log_dir: Optional[str] = None

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            epoch_period_ms=self.epoch_period_ms,
            forwarding_enabled=self.forwarding_enabled,
            aggressive_forwarding=self.aggressive_forwarding,
            max_wait_epochs=self.max_wait_epochs,
            log_dir=self.log_dir,
        )


_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(text: str, overrides: Optional[Dict[str, str]] = None) -> WorkloadConfig:
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    raw.update(overrides or {})

    cfg = WorkloadConfig()
    types = {f.name: f.type for f in dc_fields(WorkloadConfig)}
    for key, value in raw.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        try:
            if isinstance(current, bool):
                parsed = _BOOLS[value.lower()]
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:  # str/None fields
                parsed = value
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
        setattr(cfg, key, parsed)
    _sanity(cfg)
    return cfg


def _sanity(cfg: WorkloadConfig) -> None:
    if cfg.tables < 1 or cfg.keys < 1 or cfg.txs < 0 or cfg.sessions < 1:
        raise ConfigError("tables, keys, sessions must be >= 1 and txs >= 0")
    for name in ("read_ratio", "scan_ratio", "ltx_ratio", "readonly_ratio"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"{name} must be within [0, 1]")
    if cfg.ltx_ratio + cfg.readonly_ratio > 1.0:
        raise ConfigError("ltx_ratio + readonly_ratio exceed 1")
    if cfg.epoch_every < 1:
        raise ConfigError("epoch_every must be >= 1")


# ---------------------------------------------------------------------------
# transaction programs


@dataclass
class _Op:
    kind: str  # "read" | "scan" | "write" | "delete"
    table: int
    key: bytes
    hi: Optional[bytes] = None
    value: Optional[bytes] = None


@dataclass
class _TxSpec:
    mode: str
    ops: List[_Op]
    wp_tables: Tuple[int, ...] = ()
    read_tables: Tuple[int, ...] = ()


def _gen_specs(cfg: WorkloadConfig, table_ids: List[int]) -> List[_TxSpec]:
    rng = random.Random(cfg.seed)
    key_of = lambda i: b"k%05d" % i
    specs: List[_TxSpec] = []
    for txn in range(cfg.txs):
        roll = rng.random()
        if roll < cfg.readonly_ratio:
            mode = MODE_READONLY
        elif roll < cfg.readonly_ratio + cfg.ltx_ratio:
            mode = MODE_LTX
        else:
            mode = MODE_OCC
        ops: List[_Op] = []
        for opi in range(cfg.ops_per_tx):
            table = table_ids[rng.randrange(len(table_ids))]
            ki = rng.randrange(cfg.keys)
            if mode == MODE_READONLY or rng.random() < cfg.read_ratio:
                if rng.random() < cfg.scan_ratio:
                    span = rng.randrange(2, 6)
                    ops.append(
                        _Op("scan", table, key_of(ki), hi=key_of(min(ki + span, cfg.keys)))
                    )
                else:
                    ops.append(_Op("read", table, key_of(ki)))
            elif rng.random() < 0.05:
                ops.append(_Op("delete", table, key_of(ki)))
            else:
                pad = b"%d.%d." % (txn, opi)
                value = (pad + b"v" * cfg.value_size)[: max(cfg.value_size, len(pad))]
                ops.append(_Op("write", table, key_of(ki), value=value))
        if mode == MODE_LTX and not any(o.kind in ("write", "delete") for o in ops):
            mode = MODE_OCC  # pure-read long tx adds nothing here
        wp = tuple(sorted({o.table for o in ops if o.kind in ("write", "delete")}))
        rd = tuple(sorted({o.table for o in ops if o.kind in ("read", "scan")}))
        specs.append(_TxSpec(mode, ops, wp_tables=wp, read_tables=rd))
    return specs


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsReport:
    config: WorkloadConfig
    committed: Dict[str, int] = field(default_factory=dict)
    aborted: Dict[str, int] = field(default_factory=dict)
    abort_reasons: Dict[str, int] = field(default_factory=dict)
    wait_resolved: int = 0  # long txs that went through >= 1 boundary wait
    latency_epochs: Dict[int, int] = field(default_factory=dict)  # ltx commit latency
    epochs_used: int = 0
    content_digest: str = ""
    writer_digest: str = ""
    trace_events: int = 0
    witness_ok: Optional[bool] = None
    witness_violations: int = 0
    csr_acyclic: Optional[bool] = None
    replay_digest_match: Optional[bool] = None
    wall_seconds: Optional[float] = None  # timed mode only
    txs_per_second: Optional[float] = None

    def record(self, mode: str, result, waited: bool, latency: Optional[int]) -> None:
        if result.committed:
            self.committed[mode] = self.committed.get(mode, 0) + 1
        else:
            self.aborted[mode] = self.aborted.get(mode, 0) + 1
            reason = result.reason or "?"
            self.abort_reasons[reason] = self.abort_reasons.get(reason, 0) + 1
        if waited:
            self.wait_resolved += 1
        if latency is not None and result.committed:
            self.latency_epochs[latency] = self.latency_epochs.get(latency, 0) + 1

    def deterministic_dict(self) -> Dict:
        """Stable, wall-clock-free view: identical runs produce identical dicts."""
        return {
            "committed": dict(sorted(self.committed.items())),
            "aborted": dict(sorted(self.aborted.items())),
            "abort_reasons": dict(sorted(self.abort_reasons.items())),
            "wait_resolved": self.wait_resolved,
            "latency_epochs": {str(k): v for k, v in sorted(self.latency_epochs.items())},
            "epochs_used": self.epochs_used,
            "content_digest": self.content_digest,
            "writer_digest": self.writer_digest,
            "trace_events": self.trace_events,
        }

    def to_dict(self) -> Dict:
        out = self.deterministic_dict()
        out["witness_ok"] = self.witness_ok
        out["witness_violations"] = self.witness_violations
        out["csr_acyclic"] = self.csr_acyclic
        out["replay_digest_match"] = self.replay_digest_match
        if self.wall_seconds is not None:
            out["wall_seconds"] = round(self.wall_seconds, 3)
            out["txs_per_second"] = round(self.txs_per_second or 0.0, 1)
        return out


# ---------------------------------------------------------------------------
# execution


def _seed_engine(cfg: WorkloadConfig) -> Tuple[Engine, List[int]]:
    engine = Engine(cfg.engine_config())
    table_ids = [engine.create_table(f"bench{k}") for k in range(cfg.tables)]
    seed_tx = engine.begin(MODE_OCC)
    for table in table_ids:
        for i in range(0, cfg.keys, 2):  # half the keyspace pre-exists
            seed_tx.write(table, b"k%05d" % i, b"seed")
    assert seed_tx.commit().committed
    if engine.epoch.manual:
        engine.advance_epoch()
    return engine, table_ids


def _run_one(engine: Engine, spec: _TxSpec, report: MetricsReport, lock=None):
    """Generator: executes one transaction, yielding between steps (manual
    scheduler) — timed mode just drains it."""
    begin_epoch = engine.current_epoch()
    if spec.mode == MODE_LTX:
        handle = engine.begin(MODE_LTX, wp_tables=spec.wp_tables,
                              read_area=tuple(set(spec.read_tables) | set(spec.wp_tables)))
    else:
        handle = engine.begin(spec.mode)
    yield
    for op in spec.ops:
        if op.kind == "read":
            handle.read(op.table, op.key)
        elif op.kind == "scan":
            handle.scan(op.table, op.key, op.hi)
        elif op.kind == "delete":
            if spec.mode != MODE_READONLY:
                handle.delete(op.table, op.key)
        else:
            handle.write(op.table, op.key, op.value)
        yield
    result = handle.commit()
    waited = False
    while result.waiting:
        waited = True
        if engine.epoch.manual:
            yield  # boundary comes from the scheduler
        else:
            engine.epoch.wait_for(engine.current_epoch() + 1, timeout=1.0)
        result = handle.poll()
    latency = engine.current_epoch() - begin_epoch if spec.mode == MODE_LTX else None
    if lock:
        with lock:
            report.record(spec.mode, result, waited, latency)
    else:
        report.record(spec.mode, result, waited, latency)


def _run_manual(engine: Engine, specs: List[_TxSpec], cfg: WorkloadConfig,
                report: MetricsReport) -> None:
    queue = iter(specs)
    sessions: List[Optional[Iterator]] = [None] * cfg.sessions
    steps = 0
    live = True
    while live:
        live = False
        for i in range(cfg.sessions):
            if sessions[i] is None:
                nxt = next(queue, None)
                if nxt is not None:
                    sessions[i] = _run_one(engine, nxt, report)
            gen = sessions[i]
            if gen is None:
                continue
            live = True
            try:
                next(gen)
            except StopIteration:
                sessions[i] = None
            steps += 1
            if steps % cfg.epoch_every == 0:
                engine.advance_epoch()
    engine.advance_epoch()  # final boundary: resolve stragglers, flush


def _run_timed(engine: Engine, specs: List[_TxSpec], cfg: WorkloadConfig,
               report: MetricsReport) -> None:
    lock = threading.Lock()
    cursor = {"i": 0}

    def worker():
        while True:
            with lock:
                i = cursor["i"]
                if i >= len(specs):
                    return
                cursor["i"] = i + 1
            for _ in _run_one(engine, specs[i], report, lock):
                pass

    threads = [threading.Thread(target=worker) for _ in range(cfg.sessions)]
    start = time.monotonic()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    report.wall_seconds = time.monotonic() - start
    report.txs_per_second = (
        len(specs) / report.wall_seconds if report.wall_seconds else 0.0
    )


def run_workload(cfg: WorkloadConfig, verify: bool = False) -> MetricsReport:
    engine, table_ids = _seed_engine(cfg)
    specs = _gen_specs(cfg, table_ids)
    report = MetricsReport(config=cfg)
    first_epoch = engine.current_epoch()
    try:
        if engine.epoch.manual:
            _run_manual(engine, specs, cfg, report)
        else:
            _run_timed(engine, specs, cfg, report)
        report.epochs_used = engine.current_epoch() - first_epoch
        report.content_digest = engine.content_digest()
        report.writer_digest = engine.writer_digest()
        events = engine.trace_events()
        report.trace_events = len(events)
        if verify:
            w = check_witness(events)
            report.witness_ok = w.ok
            report.witness_violations = len(w.violations)
            report.csr_acyclic = check_csr(events).acyclic
            report.replay_digest_match = (
                replay_writer_digest(events) == report.writer_digest
            )
    finally:
        engine.close()
    return report
