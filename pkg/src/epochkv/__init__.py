"""epochkv: embedded in-memory multi-version transactional KV engine.

Short optimistic transactions and staged, priority-ordered long transactions
commit under one epoch-based ordering framework; durability is epoch-grained
write-ahead logging; an offline oracle checks emitted history traces.
"""

from .api import Engine, EngineConfig, TransactionHandle
from .errors import (
    AbortReason,
    ConfigError,
    CorruptLog,
    EngineError,
    EngineHalted,
    IoFailure,
    MalformedHistory,
    NotRegistered,
    ReadAreaViolation,
    ReadOnlyViolation,
    RegistryFull,
    TooLarge,
    TxInactive,
    UnknownScenario,
    UnknownTable,
    WpMismatch,
)
from .oracle import (
    BOOTSTRAP_WRITER,
    TOMBSTONE,
    HistoryEvent,
    check_csr,
    check_mvsr_bruteforce,
    check_witness,
    mvsr_backtrack,
    parse_trace,
    replay_writer_digest,
    serialize_events,
)
from .slots import (
    LTX_TIER,
    MODE_LTX,
    MODE_OCC,
    MODE_READONLY,
    NATIVE_BASE,
    OCC_TIER,
    CommitResult,
    Slot,
    TxId,
)

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EngineConfig",
    "TransactionHandle",
    "CommitResult",
    "TxId",
    "Slot",
    "AbortReason",
    "EngineError",
    "EngineHalted",
    "IoFailure",
    "CorruptLog",
    "ConfigError",
    "MalformedHistory",
    "NotRegistered",
    "ReadAreaViolation",
    "ReadOnlyViolation",
    "RegistryFull",
    "TooLarge",
    "TxInactive",
    "UnknownScenario",
    "UnknownTable",
    "WpMismatch",
    "HistoryEvent",
    "check_witness",
    "check_mvsr_bruteforce",
    "mvsr_backtrack",
    "check_csr",
    "parse_trace",
    "serialize_events",
    "replay_writer_digest",
    "BOOTSTRAP_WRITER",
    "TOMBSTONE",
    "MODE_OCC",
    "MODE_LTX",
    "MODE_READONLY",
    "LTX_TIER",
    "OCC_TIER",
    "NATIVE_BASE",
    "__version__",
]
