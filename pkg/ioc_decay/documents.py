"""
Response documents shared by the HTTP service and the CLI.

Both front ends render scores through ``score_document`` so that identical
(store, id, at) inputs give identical documents.
"""

from datetime import datetime
from typing import Any

from loguru import logger

from . import lifecycle
from .config import Settings
from .decay import ModelTable
from .ingestion import import_all
from .lifecycle import SightingState
from .schemas import (
    ExpiredDocument,
    FalsePositiveClearAck,
    ModelDocument,
    RegistryReloadAck,
    ScoreDocument,
    SightingAck,
    SnapshotSaveAck,
)
from .scoring import ScoringConfig
from .store import AttributeStore, StoreSnapshot, load_snapshot
from .taxonomy import load_registry


def model_document(snapshot: StoreSnapshot, attribute_id: str, now: datetime) -> ModelDocument:
    attribute = snapshot.attribute(attribute_id)
    state = lifecycle.state_as_of(attribute, snapshot.state(attribute_id), now)
    model = lifecycle.effective_model(snapshot.model_for(attribute_id), state)
    return ModelDocument(**model.describe())


def score_document(snapshot: StoreSnapshot, attribute_id: str, now: datetime) -> ScoreDocument:
    """
    Score of one attribute at ``now`` as a response document.

    Raises:
        UnknownAttribute: id not in the store
        ClockSkew: now precedes the attribute's reference time
    """
    result = snapshot.score(attribute_id, now)
    attribute = snapshot.attribute(attribute_id)
    state = lifecycle.state_as_of(attribute, snapshot.state(attribute_id), now)
    return ScoreDocument(
        attribute_id=attribute_id,
        base_score=result.base_score,
        current_score=result.current_score,
        expired=result.expired,
        false_positive=state.false_positive,
        model=model_document(snapshot, attribute_id, now),
        last_reference=result.last_reference,
        evaluated_at=now,
        first_seen=state.first_seen,
        last_seen=state.last_seen,
        sighting_count=len(state.history),
    )


def expired_document(snapshot: StoreSnapshot, now: datetime) -> ExpiredDocument:
    return ExpiredDocument(evaluated_at=now, attribute_ids=snapshot.list_expired(now))


def sighting_ack(attribute_id: str, kind: Any, state: SightingState, snapshot: StoreSnapshot) -> SightingAck:
    attribute = snapshot.attribute(attribute_id)
    return SightingAck(
        attribute_id=attribute_id,
        kind=kind,
        last_reference=state.reference_time(attribute),
        false_positive=state.false_positive,
        tau_override_seconds=state.tau_override.total_seconds() if state.tau_override is not None else None,
    )


def false_positive_clear_ack(attribute_id: str, state: SightingState, snapshot: StoreSnapshot) -> FalsePositiveClearAck:
    attribute = snapshot.attribute(attribute_id)
    return FalsePositiveClearAck(
        attribute_id=attribute_id,
        cleared_at=state.false_positive_cleared_at,
        false_positive=state.false_positive,
        last_reference=state.reference_time(attribute),
    )


def to_json(document: Any) -> dict[str, Any]:
    return document.model_dump(mode="json")


# =============================================================================
# Store bootstrap
# =============================================================================

def load_store_snapshot(settings: Settings) -> StoreSnapshot:
    """
    The persisted snapshot at ``settings.store_path`` if present, else a fresh import.

    Taxonomies, model table and weights always come from ``settings``; the
    snapshot only carries events, sources and sighting histories.
    """
    if settings.store_path.is_file():
        registry = load_registry(settings.taxonomy_dir, settings.scoring.default_predicate_weight)
        return load_snapshot(
            settings.store_path,
            registry,
            ModelTable.from_settings(settings.decay),
            ScoringConfig(settings.scoring.weight_x),
            settings.scoring.default_source_confidence,
        )
    logger.info(f"No snapshot at {settings.store_path}, importing from configured files")
    return import_all(settings).snapshot


def open_store(settings: Settings, readonly: bool = False) -> AttributeStore:
    return AttributeStore(load_store_snapshot(settings), readonly=readonly)


def reload_registry(store: AttributeStore, settings: Settings) -> RegistryReloadAck:
    """Re-read the taxonomy directory and swap the registry into ``store``."""
    registry = load_registry(settings.taxonomy_dir, settings.scoring.default_predicate_weight)
    store.reload_registry(registry)
    return RegistryReloadAck(namespaces=sorted(registry.namespaces))


def save_store(store: AttributeStore, settings: Settings) -> SnapshotSaveAck:
    """Persist the current snapshot to ``settings.store_path``."""
    snapshot = store.save(settings.store_path)
    return SnapshotSaveAck(
        path=str(settings.store_path),
        attributes=len(snapshot.attributes),
        sightings=snapshot.sighting_count,
    )
