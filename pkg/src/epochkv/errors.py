"""Exception types and abort reasons shared across the engine.

Protocol violations (using a finished handle, writing outside a declared
reservation, malformed input) raise exceptions. Aborts that are a normal
outcome of validation are *not* exceptions; they come back as a CommitResult
carrying one of the AbortReason strings below.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for everything raised by this package."""


class UnknownTable(EngineError):
    """Operation names a table id that was never created."""


class TxInactive(EngineError):
    """Operation on a handle that already committed or aborted."""


class ReadOnlyViolation(EngineError):
    """Write or delete attempted through a read-only transaction."""


class ReadAreaViolation(EngineError):
    """Long transaction read a table outside its declared read area."""


class WpMismatch(EngineError):
    """Long transaction wrote a table it did not reserve at begin."""


class RegistryFull(EngineError):
    """Write-reservation registry for the table has no free slot; retry later."""


class NotRegistered(EngineError):
    """Removal of a write reservation that is not present (protocol bug)."""


class IoFailure(EngineError):
    """Log file could not be opened or written."""


class EngineHalted(EngineError):
    """Log IO failed; engine accepts no new commits (reads still work)."""


class CorruptLog(EngineError):
    """Checksum failure before the final epoch seal; not a torn tail."""


class MalformedHistory(EngineError):
    """Trace violates event grammar (missing begin, two terminals, ...)."""


class TooLarge(EngineError):
    """History exceeds the brute-force checker's transaction limit."""


class ConfigError(EngineError):
    """Bad benchmark configuration file or value."""


class UnknownScenario(EngineError):
    """Scenario name is not one of the scripted scenarios."""


class AbortReason:
    """Abort reason tags carried by CommitResult (not exceptions)."""

    OCC_READ_VALIDATION_FAIL = "OccReadValidationFail"
    OCC_WP_CONFLICT = "OccWpConflict"
    OCC_PHANTOM = "OccPhantom"
    WP_MISMATCH = "WpMismatch"
    LTX_READ_UPPER_BOUND = "LtxReadUpperBound"
    LTX_WRITE_CONFLICT = "LtxWriteConflict"
    LTX_PHANTOM = "LtxPhantom"
    USER_ABORT = "UserAbort"
