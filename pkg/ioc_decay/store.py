"""
Attribute store: an immutable snapshot plus a single-writer holder.

Readers take ``AttributeStore.snapshot()`` and evaluate against it without
locking. Writers (sighting ingestion, administrative clears, taxonomy reload)
are serialized by a lock; each builds a new snapshot and swaps it in one
assignment, so a reader sees either the old or the new state, never a mix.
"""

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from loguru import logger
from pydantic import ValidationError as PydanticValidationError

from . import lifecycle
from .decay import DecayModel, ModelTable, ScoreResult
from .errors import ParseError, ReadOnlyStore, UnknownAttribute
from .lifecycle import Attribute, Sighting, SightingState
from .schemas import (
    SnapshotAttribute,
    SnapshotDocument,
    SnapshotEvent,
    SnapshotSighting,
    SnapshotState,
    SourceDocument,
)
from .scoring import ScoringConfig, ScoringContext, SourceProfile
from .taxonomy import MachineTag, TaxonomyRegistry, parse_machine_tag


@dataclass(frozen=True)
class Event:
    """A shared event; its attributes already carry inherited tags."""
    id: str
    info: str
    published_at: datetime
    event_tags: tuple[MachineTag, ...] = ()
    attributes: tuple[Attribute, ...] = ()


@dataclass(frozen=True)
class StoreSnapshot:
    """Consistent, immutable view of everything needed to score."""
    scoring: ScoringContext
    models: ModelTable
    events: Mapping[str, Event] = field(default_factory=dict)
    attributes: Mapping[str, Attribute] = field(default_factory=dict)
    states: Mapping[str, SightingState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", MappingProxyType(dict(self.events)))
        object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))
        object.__setattr__(self, "states", MappingProxyType(dict(self.states)))

    @property
    def registry(self) -> TaxonomyRegistry:
        return self.scoring.registry

    @property
    def sighting_count(self) -> int:
        return sum(len(s.history) for s in self.states.values())

    def attribute(self, attribute_id: str) -> Attribute:
        try:
            return self.attributes[attribute_id]
        except KeyError:
            raise UnknownAttribute(attribute_id) from None

    def state(self, attribute_id: str) -> SightingState:
        self.attribute(attribute_id)
        return self.states.get(attribute_id, SightingState())

    def model_for(self, attribute_id: str) -> DecayModel:
        return self.models.model_for(self.attribute(attribute_id).type)

    def score(self, attribute_id: str, now: datetime) -> ScoreResult:
        attribute = self.attribute(attribute_id)
        return lifecycle.current_score(
            attribute, self.state(attribute_id), self.models.model_for(attribute.type), self.scoring, now
        )

    def list_expired(self, now: datetime) -> list[str]:
        return lifecycle.list_expired(self.attributes, self.states, self.models, self.scoring, now)

    def with_state(self, attribute_id: str, state: SightingState) -> "StoreSnapshot":
        states = dict(self.states)
        states[attribute_id] = state
        return replace(self, states=states)


class AttributeStore:
    """Single-writer, multi-reader holder of the current snapshot."""

    def __init__(self, snapshot: StoreSnapshot, readonly: bool = False) -> None:
        self._snapshot = snapshot
        self._write_lock = threading.Lock()
        self.readonly = readonly

    def snapshot(self) -> StoreSnapshot:
        return self._snapshot

    def _check_writable(self) -> None:
        if self.readonly:
            raise ReadOnlyStore("Store is read-only")

    def record_sighting(self, sighting: Sighting) -> SightingState:
        """Apply a sighting and publish the new snapshot."""
        self._check_writable()
        with self._write_lock:
            current = self._snapshot
            attribute = current.attribute(sighting.attribute_id)
            state = lifecycle.record_sighting(current.state(attribute.id), sighting, attribute)
            self._snapshot = current.with_state(attribute.id, state)
        return state

    def clear_false_positive(self, attribute_id: str, cleared_at: datetime) -> SightingState:
        self._check_writable()
        with self._write_lock:
            current = self._snapshot
            attribute = current.attribute(attribute_id)
            state = lifecycle.clear_false_positive(current.state(attribute_id), attribute, cleared_at)
            self._snapshot = current.with_state(attribute_id, state)
        logger.info(f"Cleared false-positive flag on {attribute_id} at {cleared_at.isoformat()}")
        return state

    def reload_registry(self, registry: TaxonomyRegistry) -> None:
        with self._write_lock:
            current = self._snapshot
            self._snapshot = replace(current, scoring=current.scoring.with_registry(registry))
        logger.info(f"Taxonomy registry swapped ({len(registry)} namespaces)")

    def save(self, path: Path) -> StoreSnapshot:
        """Write the current snapshot; returns the snapshot written."""
        self._check_writable()
        snapshot = self._snapshot
        save_snapshot(snapshot, path)
        return snapshot


# =============================================================================
# Persistence
# =============================================================================

def snapshot_to_document(snapshot: StoreSnapshot) -> SnapshotDocument:
    sources = [
        SourceDocument(source_id=p.source_id, source_confidence=p.source_confidence)
        for _, p in sorted(snapshot.scoring.sources.items())
    ]
    events = [
        SnapshotEvent(
            id=e.id,
            info=e.info,
            published_at=e.published_at,
            tags=[t.canonical() for t in e.event_tags],
            attribute_ids=[a.id for a in e.attributes],
        )
        for _, e in sorted(snapshot.events.items())
    ]
    attributes = [
        SnapshotAttribute(
            id=a.id,
            event_id=a.event_id,
            category=a.category,
            type=a.type,
            value=a.value,
            source_id=a.source_id,
            created_at=a.created_at,
            tags=[t.canonical() for t in a.tags],
        )
        for _, a in sorted(snapshot.attributes.items())
    ]
    states = {
        attribute_id: SnapshotState(
            history=[
                SnapshotSighting(timestamp=s.timestamp, kind=s.kind, source_id=s.source_id)
                for s in state.history
            ],
            false_positive_cleared_at=state.false_positive_cleared_at,
        )
        for attribute_id, state in sorted(snapshot.states.items())
        if state.history or state.false_positive_cleared_at is not None
    }
    return SnapshotDocument(sources=sources, events=events, attributes=attributes, states=states)


def dump_snapshot(snapshot: StoreSnapshot) -> str:
    """Canonical JSON text: identical stores give identical bytes."""
    doc = snapshot_to_document(snapshot).model_dump(mode="json")
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_snapshot(snapshot: StoreSnapshot, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dump_snapshot(snapshot), encoding="utf-8")
    tmp.replace(path)
    logger.info(f"Snapshot saved to {path} ({len(snapshot.attributes)} attributes)")


def snapshot_from_document(
    doc: SnapshotDocument,
    registry: TaxonomyRegistry,
    models: ModelTable,
    scoring_config: ScoringConfig,
    default_source_confidence: float,
) -> StoreSnapshot:
    sources = {s.source_id: SourceProfile(s.source_id, s.source_confidence) for s in doc.sources}
    attributes = {
        a.id: Attribute(
            id=a.id,
            category=a.category,
            type=a.type,
            value=a.value,
            source_id=a.source_id,
            created_at=a.created_at,
            tags=tuple(parse_machine_tag(t) for t in a.tags),
            event_id=a.event_id,
        )
        for a in doc.attributes
    }
    events = {
        e.id: Event(
            id=e.id,
            info=e.info,
            published_at=e.published_at,
            event_tags=tuple(parse_machine_tag(t) for t in e.tags),
            attributes=tuple(attributes[i] for i in e.attribute_ids if i in attributes),
        )
        for e in doc.events
    }
    states = {}
    for attribute_id, s in doc.states.items():
        attribute = attributes.get(attribute_id)
        if attribute is None:
            raise ParseError(f"snapshot state references unknown attribute {attribute_id!r}")
        history = [Sighting(attribute_id, h.timestamp, h.kind, h.source_id) for h in s.history]
        states[attribute_id] = lifecycle.rebuild_state(attribute, history, s.false_positive_cleared_at)

    scoring = ScoringContext(registry, sources, scoring_config, default_source_confidence)
    return StoreSnapshot(scoring=scoring, models=models, events=events, attributes=attributes, states=states)


def load_snapshot_document(path: Path) -> SnapshotDocument:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno, column=e.colno) from e
    if isinstance(raw, dict) and raw.get("schema_version") != 1:
        raise ParseError(f"unsupported schema_version {raw.get('schema_version')!r}", path=path)
    try:
        return SnapshotDocument.model_validate(raw)
    except PydanticValidationError as e:
        raise ParseError(f"invalid snapshot: {e}", path=path) from e


def load_snapshot(
    path: Path,
    registry: TaxonomyRegistry,
    models: ModelTable,
    scoring_config: ScoringConfig,
    default_source_confidence: float,
) -> StoreSnapshot:
    """
    Read a snapshot document and rebuild every sighting state from its history.

    Raises:
        ParseError: bad JSON, unsupported schema_version or invalid document
    """
    snapshot = snapshot_from_document(
        load_snapshot_document(path), registry, models, scoring_config, default_source_confidence
    )
    logger.info(f"Snapshot loaded from {path} ({len(snapshot.attributes)} attributes)")
    return snapshot
