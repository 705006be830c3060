"""
Wire schemas: events file, sources file, sighting feed, store snapshot and
API response documents.

Timestamps are RFC 3339 with an explicit offset and are normalized to UTC
on load.
"""

from datetime import datetime, timezone
from typing import Annotated, Literal, Optional

from pydantic import AfterValidator, AwareDatetime, BaseModel, ConfigDict, Field

from .lifecycle import SightingKind

SNAPSHOT_SCHEMA_VERSION = 1


def _to_utc(value: datetime) -> datetime:
    return value.astimezone(timezone.utc)


UtcDatetime = Annotated[AwareDatetime, AfterValidator(_to_utc)]


def format_timestamp(value: datetime) -> str:
    """RFC 3339 UTC with a ``Z`` suffix."""
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


# =============================================================================
# Input documents
# =============================================================================

class AttributeDocument(BaseModel):
    """Attribute inside an events file."""
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    category: str
    type: str = Field(min_length=1)
    value: str
    source_id: str = Field(min_length=1)
    created_at: UtcDatetime
    tags: list[str] = Field(default_factory=list)


class EventDocument(BaseModel):
    """Event inside an events file (top-level list)."""
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    info: str = ""
    published_at: UtcDatetime
    tags: list[str] = Field(default_factory=list)
    attributes: list[AttributeDocument] = Field(default_factory=list)


class SourceDocument(BaseModel):
    """One entry of the sources file."""
    model_config = ConfigDict(extra="forbid")

    source_id: str = Field(min_length=1)
    source_confidence: float = Field(ge=0.0, le=1.0)


class SightingDocument(BaseModel):
    """One sighting record (feed line or POST body)."""
    model_config = ConfigDict(extra="forbid")

    attribute_id: str = Field(min_length=1)
    timestamp: UtcDatetime
    kind: SightingKind
    source_id: str = Field(min_length=1)


# =============================================================================
# Store snapshot
# =============================================================================

class SnapshotSighting(BaseModel):
    timestamp: UtcDatetime
    kind: SightingKind
    source_id: str


class SnapshotState(BaseModel):
    history: list[SnapshotSighting] = Field(default_factory=list)
    false_positive_cleared_at: Optional[UtcDatetime] = None


class SnapshotAttribute(BaseModel):
    id: str
    event_id: Optional[str] = None
    category: str
    type: str
    value: str
    source_id: str
    created_at: UtcDatetime
    tags: list[str] = Field(default_factory=list)


class SnapshotEvent(BaseModel):
    id: str
    info: str = ""
    published_at: UtcDatetime
    tags: list[str] = Field(default_factory=list)
    attribute_ids: list[str] = Field(default_factory=list)


class SnapshotDocument(BaseModel):
    """Persisted store; versioned by ``schema_version``."""
    schema_version: Literal[1] = SNAPSHOT_SCHEMA_VERSION
    sources: list[SourceDocument] = Field(default_factory=list)
    events: list[SnapshotEvent] = Field(default_factory=list)
    attributes: list[SnapshotAttribute] = Field(default_factory=list)
    states: dict[str, SnapshotState] = Field(default_factory=dict)


# =============================================================================
# Output documents
# =============================================================================

class ModelDocument(BaseModel):
    variant: Literal["linear", "exponential", "polynomial"]
    tau: Optional[float] = Field(default=None, description="End-time in `unit` (expiration override applied)")
    delta: float
    unit: Literal["s", "h", "d"]
    exponent_convention: Literal["reciprocal", "direct"]


class ScoreDocument(BaseModel):
    """Score of one attribute at ``evaluated_at``."""
    attribute_id: str
    base_score: float = Field(ge=0, le=100)
    current_score: float = Field(ge=0, le=100)
    expired: bool
    false_positive: bool
    model: ModelDocument
    last_reference: datetime = Field(description="Last positive sighting, else creation time")
    evaluated_at: datetime
    first_seen: Optional[datetime] = None
    last_seen: Optional[datetime] = None
    sighting_count: int = 0


class ExpiredDocument(BaseModel):
    evaluated_at: datetime
    attribute_ids: list[str]


class SightingAck(BaseModel):
    attribute_id: str
    kind: SightingKind
    last_reference: datetime
    false_positive: bool
    tau_override_seconds: Optional[float] = None


class FalsePositiveClearAck(BaseModel):
    attribute_id: str
    cleared_at: datetime
    false_positive: bool
    last_reference: datetime


class RegistryReloadAck(BaseModel):
    namespaces: list[str]


class SnapshotSaveAck(BaseModel):
    path: str
    attributes: int
    sightings: int


class ImportReport(BaseModel):
    """Counts produced by a full import."""
    events: int
    attributes: int
    tags_resolved: int
    tags_unresolved: int
    sightings: int
