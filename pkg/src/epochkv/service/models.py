"""Wire models. Keys and values are hex strings (bytes aren't JSON)."""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator


def _hex_bytes(v: str) -> str:
    bytes.fromhex(v)  # raises ValueError on junk
    return v


class CreateTableRequest(BaseModel):
    name: str = Field(min_length=1, max_length=255)


class TableInfo(BaseModel):
    table_id: int
    name: str


class BeginRequest(BaseModel):
    mode: str = "occ"  # occ | ltx | readonly
    wp_tables: List[int] = Field(default_factory=list)
    read_area: Optional[List[int]] = None


class BeginResponse(BaseModel):
    tx: int
    mode: str
    valid_epoch: Optional[int] = None


class KeyRequest(BaseModel):
    table: int
    key: str

    _chk = field_validator("key")(_hex_bytes)

    @property
    def key_bytes(self) -> bytes:
        return bytes.fromhex(self.key)


class WriteRequest(KeyRequest):
    value: str  # hex

    _chk_v = field_validator("value")(_hex_bytes)


class ScanRequest(BaseModel):
    table: int
    lo: Optional[str] = None  # hex, inclusive
    hi: Optional[str] = None  # hex, exclusive

    @field_validator("lo", "hi")
    @classmethod
    def _chk_bounds(cls, v):
        if v is not None:
            bytes.fromhex(v)
        return v


class ReadResponse(BaseModel):
    found: bool
    value: Optional[str] = None  # hex


class ScanResponse(BaseModel):
    rows: List[Tuple[str, str]]  # (key hex, value hex)


class CommitResponse(BaseModel):
    status: str  # committed | aborted | waiting
    slot: Optional[Tuple[int, int, int]] = None
    reason: Optional[str] = None
    blockers: List[int] = Field(default_factory=list)


class EpochInfo(BaseModel):
    current: int
    safe: int
    durable: int


class ClassifyResponse(BaseModel):
    epoch: int
    classification: str  # Safe | Unsafe


class DigestResponse(BaseModel):
    content: str
    writer: str


class OracleCheckRequest(BaseModel):
    trace: Optional[str] = None  # omitted = the engine's own trace
    mvsr_limit: int = 8


class OracleCheckResponse(BaseModel):
    witness_ok: bool
    reads_checked: int
    violations: List[str]
    csr_acyclic: bool
    csr_cycle: Optional[List[int]] = None
    mvsr_ok: Optional[bool] = None  # None = history too large for brute force
    replay_digest: str


class HealthResponse(BaseModel):
    status: str
    halted: bool
    halt_error: Optional[str] = None
    current_epoch: int
    live_txs: int


class ErrorBody(BaseModel):
    error: str
    detail: str


class MetricsResponse(BaseModel):
    report: Dict
