"""
Load events, sources, taxonomies and sighting feeds from disk into a store.

Events and sources are UTF-8 JSON documents; the sighting feed is
newline-delimited JSON. Validation collects every problem before failing.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from loguru import logger
from pydantic import ValidationError as PydanticValidationError

from . import lifecycle
from .config import Settings
from .decay import ModelTable
from .errors import (
    ClockSkew,
    ConfigError,
    MalformedTag,
    NegativeTau,
    ParseError,
    UnknownKind,
    ValidationError,
)
from .lifecycle import Attribute, Sighting, SightingKind, SightingState
from .schemas import EventDocument, ImportReport, SightingDocument, SourceDocument
from .scoring import ScoringConfig, ScoringContext, SourceProfile, resolve_tag_conflicts
from .store import Event, StoreSnapshot
from .taxonomy import MachineTag, ResolutionKind, TaxonomyRegistry, load_registry, parse_machine_tag


@dataclass(frozen=True)
class ImportResult:
    snapshot: StoreSnapshot
    report: ImportReport


def _read_json(path: Path) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ParseError("file not found", path=path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno, column=e.colno) from e


def _pydantic_problems(prefix: str, error: PydanticValidationError) -> list[str]:
    problems = []
    for err in error.errors():
        loc = ".".join(str(part) for part in err["loc"])
        problems.append(f"{prefix}.{loc}: {err['msg']}" if loc else f"{prefix}: {err['msg']}")
    return problems


def _parse_tags(raw_tags: list[str], prefix: str, problems: list[str]) -> list[MachineTag]:
    tags = []
    for j, raw in enumerate(raw_tags):
        try:
            tags.append(parse_machine_tag(raw))
        except MalformedTag as e:
            problems.append(f"{prefix}.tags[{j}]: {e}")
    return tags


# =============================================================================
# Events
# =============================================================================

def load_events(path: Path) -> list[Event]:
    """
    Parse and validate an events file.

    Event tags propagate to every attribute; an attribute's own tag wins on a
    (namespace, predicate) conflict.

    Raises:
        ParseError: undecodable JSON (with line/column)
        ValidationError: every violated invariant across the file
    """
    raw = _read_json(path)
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ValidationError(["top level must be a list of events"], source=str(path))

    problems: list[str] = []
    events: list[Event] = []
    seen_events: set[str] = set()
    seen_attributes: set[str] = set()

    for i, item in enumerate(raw):
        prefix = f"events[{i}]"
        try:
            doc = EventDocument.model_validate(item)
        except PydanticValidationError as e:
            problems.extend(_pydantic_problems(prefix, e))
            continue

        if doc.id in seen_events:
            problems.append(f"{prefix}.id: duplicate event id {doc.id!r}")
        seen_events.add(doc.id)

        event_tags = _parse_tags(doc.tags, prefix, problems)
        attributes = []
        for k, attr_doc in enumerate(doc.attributes):
            attr_prefix = f"{prefix}.attributes[{k}]"
            if attr_doc.id in seen_attributes:
                problems.append(f"{attr_prefix}.id: duplicate attribute id {attr_doc.id!r}")
            seen_attributes.add(attr_doc.id)
            own_tags = _parse_tags(attr_doc.tags, attr_prefix, problems)
            attributes.append(
                Attribute(
                    id=attr_doc.id,
                    category=attr_doc.category,
                    type=attr_doc.type,
                    value=attr_doc.value,
                    source_id=attr_doc.source_id,
                    created_at=attr_doc.created_at,
                    tags=tuple(resolve_tag_conflicts(event_tags + own_tags)),
                    event_id=doc.id,
                )
            )

        events.append(
            Event(
                id=doc.id,
                info=doc.info,
                published_at=doc.published_at,
                event_tags=tuple(event_tags),
                attributes=tuple(attributes),
            )
        )

    if problems:
        raise ValidationError(problems, source=str(path))

    logger.info(f"Loaded {len(events)} event(s), {len(seen_attributes)} attribute(s) from {path}")
    return events


# =============================================================================
# Sources
# =============================================================================

def load_sources(path: Path) -> dict[str, SourceProfile]:
    """Sources file: a list of {source_id, source_confidence}."""
    raw = _read_json(path)
    if raw is None:
        return {}
    if not isinstance(raw, list):
        raise ValidationError(["top level must be a list of sources"], source=str(path))

    problems: list[str] = []
    sources: dict[str, SourceProfile] = {}
    for i, item in enumerate(raw):
        try:
            doc = SourceDocument.model_validate(item)
        except PydanticValidationError as e:
            problems.extend(_pydantic_problems(f"sources[{i}]", e))
            continue
        if doc.source_id in sources:
            problems.append(f"sources[{i}].source_id: duplicate source {doc.source_id!r}")
        sources[doc.source_id] = SourceProfile(doc.source_id, doc.source_confidence)

    if problems:
        raise ValidationError(problems, source=str(path))
    return sources


# =============================================================================
# Sightings
# =============================================================================

def parse_sighting(record: Any, path: Optional[Path] = None, line: Optional[int] = None) -> Sighting:
    """
    Validate one sighting record.

    Raises:
        UnknownKind: kind outside positive / false_positive / expiration
        ParseError: any other schema violation
    """
    if isinstance(record, dict) and "kind" in record:
        try:
            SightingKind.parse(record["kind"])
        except UnknownKind as e:
            where = f"{path}:{line}: " if path is not None else ""
            raise UnknownKind(f"{where}{e}") from None
    try:
        doc = SightingDocument.model_validate(record)
    except PydanticValidationError as e:
        raise ParseError(f"invalid sighting record: {e}", path=path, line=line) from e
    return Sighting(doc.attribute_id, doc.timestamp, doc.kind, doc.source_id)


def load_sightings(path: Path) -> list[Sighting]:
    """
    Read a newline-delimited sighting feed.

    Records come back sorted by timestamp (file order on ties) with exact
    duplicates dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError("file not found", path=path)

    sightings: list[Sighting] = []
    seen: set[tuple] = set()
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(e.msg, path=path, line=line_no, column=e.colno) from e
            sighting = parse_sighting(record, path=path, line=line_no)
            if sighting.dedup_key in seen:
                continue
            seen.add(sighting.dedup_key)
            sightings.append(sighting)

    sightings.sort(key=lambda s: s.timestamp)
    logger.info(f"Loaded {len(sightings)} sighting(s) from {path}")
    return sightings


def sightings_for(sightings: list[Sighting], attribute_id: str) -> list[Sighting]:
    return [s for s in sightings if s.attribute_id == attribute_id]


# =============================================================================
# Full import
# =============================================================================

def _count_tags(attributes: dict[str, Attribute], registry: TaxonomyRegistry) -> tuple[int, int]:
    resolved = unresolved = 0
    for attribute in attributes.values():
        for tag in attribute.tags:
            if registry.resolve(tag).kind is ResolutionKind.NOT_FOUND:
                unresolved += 1
            else:
                resolved += 1
    return resolved, unresolved


def build_scoring_context(
    settings: Settings,
    registry: TaxonomyRegistry,
    sources: dict[str, SourceProfile],
) -> ScoringContext:
    return ScoringContext(
        registry,
        sources,
        ScoringConfig(settings.scoring.weight_x),
        settings.scoring.default_source_confidence,
    )


def import_all(settings: Settings) -> ImportResult:
    """
    Load taxonomies, events, sources and sightings into a fresh snapshot.

    Raises:
        ConfigError: no events file configured
        TaxonomyLoadError: taxonomy directory missing or invalid
        ParseError / ValidationError: component errors; sighting problems are
            aggregated into one ValidationError
    """
    if settings.events_file is None:
        raise ConfigError("events_file is not configured")

    registry = load_registry(settings.taxonomy_dir, settings.scoring.default_predicate_weight)
    models = ModelTable.from_settings(settings.decay)
    events = load_events(settings.events_file)
    sources = load_sources(settings.sources_file) if settings.sources_file else {}

    attributes = {a.id: a for e in events for a in e.attributes}
    for attribute in sorted(attributes.values(), key=lambda a: a.id):
        if attribute.source_id not in sources:
            logger.warning(
                f"Attribute {attribute.id}: unknown source {attribute.source_id!r}, "
                f"using source_confidence {settings.scoring.default_source_confidence}"
            )
        if attribute.type not in models:
            logger.info(f"Attribute {attribute.id}: no model for type {attribute.type!r}, using default")

    states: dict[str, SightingState] = {}
    applied = 0
    problems: list[str] = []
    if settings.sightings_file:
        for sighting in load_sightings(settings.sightings_file):
            attribute = attributes.get(sighting.attribute_id)
            if attribute is None:
                problems.append(f"sighting at {sighting.timestamp.isoformat()}: unknown attribute {sighting.attribute_id!r}")
                continue
            try:
                states[attribute.id] = lifecycle.record_sighting(
                    states.get(attribute.id, SightingState()), sighting, attribute
                )
            except (ClockSkew, NegativeTau) as e:
                problems.append(str(e))
                continue
            applied += 1
    if problems:
        raise ValidationError(problems, source=str(settings.sightings_file))

    snapshot = StoreSnapshot(
        scoring=build_scoring_context(settings, registry, sources),
        models=models,
        events={e.id: e for e in events},
        attributes=attributes,
        states=states,
    )
    resolved, unresolved = _count_tags(attributes, registry)
    report = ImportReport(
        events=len(events),
        attributes=len(attributes),
        tags_resolved=resolved,
        tags_unresolved=unresolved,
        sightings=applied,
    )
    logger.info(f"Import complete: {report.model_dump()}")
    return ImportResult(snapshot, report)
