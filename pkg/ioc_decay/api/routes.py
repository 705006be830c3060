"""
Score, expiry, sighting and admin routes.

Scores are evaluated on read against the store's current snapshot; nothing
is precomputed.
"""

from typing import Optional

from fastapi import APIRouter, Query
from loguru import logger
from pydantic import AwareDatetime

from .. import __version__
from ..documents import (
    expired_document,
    false_positive_clear_ack,
    reload_registry,
    save_store,
    score_document,
    sighting_ack,
)
from ..lifecycle import Sighting
from ..schemas import (
    ExpiredDocument,
    FalsePositiveClearAck,
    RegistryReloadAck,
    ScoreDocument,
    SightingAck,
    SightingDocument,
    SnapshotSaveAck,
)
from .dependencies import ClockDep, SettingsDep, StoreDep, resolve_now

router = APIRouter(prefix="/v1", tags=["ioc-decay"])

SERVICE_NAME = "ioc-decay"

AtQuery = Query(default=None, description="Evaluation instant, RFC 3339 with offset; defaults to server now")


@router.get("/attributes/expired", response_model=ExpiredDocument)
async def get_expired(store: StoreDep, clock: ClockDep, at: Optional[AwareDatetime] = AtQuery) -> ExpiredDocument:
    """Ids of every attribute whose score is 0 at ``at``, sorted."""
    return expired_document(store.snapshot(), resolve_now(at, clock))


@router.get("/attributes/{attribute_id}/score", response_model=ScoreDocument)
async def get_score(
    attribute_id: str,
    store: StoreDep,
    clock: ClockDep,
    at: Optional[AwareDatetime] = AtQuery,
) -> ScoreDocument:
    return score_document(store.snapshot(), attribute_id, resolve_now(at, clock))


@router.post("/sightings", response_model=SightingAck)
async def post_sighting(body: SightingDocument, store: StoreDep) -> SightingAck:
    """
    Apply one sighting.

    Returns the attribute's new reference time; 409 when the server is
    read-only, 404 for an unknown attribute.
    """
    sighting = Sighting(body.attribute_id, body.timestamp, body.kind, body.source_id)
    state = store.record_sighting(sighting)
    logger.info(f"Sighting {body.kind.value} applied to {body.attribute_id} at {body.timestamp.isoformat()}")
    return sighting_ack(body.attribute_id, body.kind, state, store.snapshot())


@router.post("/attributes/{attribute_id}/false-positive/clear", response_model=FalsePositiveClearAck)
async def clear_false_positive(
    attribute_id: str,
    store: StoreDep,
    clock: ClockDep,
    at: Optional[AwareDatetime] = AtQuery,
) -> FalsePositiveClearAck:
    """
    Lift a confirmed false-positive flag as of ``at``.

    Later positive sightings reset the decay again; 409 when read-only.
    """
    state = store.clear_false_positive(attribute_id, resolve_now(at, clock))
    return false_positive_clear_ack(attribute_id, state, store.snapshot())


@router.post("/admin/taxonomies/reload", response_model=RegistryReloadAck)
async def reload_taxonomies(store: StoreDep, settings: SettingsDep) -> RegistryReloadAck:
    """Re-read ``taxonomy_dir`` and swap the registry in one step."""
    return reload_registry(store, settings)


@router.post("/admin/snapshot", response_model=SnapshotSaveAck)
async def save_snapshot(store: StoreDep, settings: SettingsDep) -> SnapshotSaveAck:
    """Write the current snapshot to ``store_path``; 409 when read-only."""
    return save_store(store, settings)


@router.get("/health")
async def health_check(store: StoreDep) -> dict:
    """Health check endpoint."""
    return {
        "status": "healthy",
        "service": SERVICE_NAME,
        "version": __version__,
        "attributes": len(store.snapshot().attributes),
        "readonly": store.readonly,
    }
