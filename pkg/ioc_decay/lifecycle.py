"""
Sighting-driven lifecycle of an attribute.

A positive sighting resets the score to its base value, a confirmed false
positive zeroes it until an administrator clears the flag, and an expiration
sighting fixes the end-time (tau) relative to the last positive sighting.

States are immutable: every operation returns a new ``SightingState``.
"""

import bisect
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from loguru import logger

from .decay import DecayModel, ElapsedTime, ModelTable, ScoreResult, TimeUnit, evaluate
from .errors import ClockSkew, InsufficientHistory, InvalidParameter, NegativeTau, UnknownAttribute, UnknownKind
from .scoring import ScoringContext
from .taxonomy import MachineTag

MIN_POSITIVES_FOR_TAU = 3


class SightingKind(str, Enum):
    POSITIVE = "positive"
    FALSE_POSITIVE = "false_positive"
    EXPIRATION = "expiration"

    @classmethod
    def parse(cls, raw: "str | SightingKind") -> "SightingKind":
        try:
            return cls(raw)
        except ValueError:
            raise UnknownKind(f"Unknown sighting kind {raw!r} (expected positive, false_positive or expiration)") from None


@dataclass(frozen=True)
class Attribute:
    """An indicator: (category, type, value) plus its effective tags."""
    id: str
    category: str
    type: str
    value: str
    source_id: str
    created_at: datetime
    tags: tuple[MachineTag, ...] = ()
    event_id: Optional[str] = None


@dataclass(frozen=True)
class Sighting:
    attribute_id: str
    timestamp: datetime
    kind: SightingKind
    source_id: str

    @property
    def dedup_key(self) -> tuple[str, datetime, str, str]:
        return (self.attribute_id, self.timestamp, self.kind.value, self.source_id)


@dataclass(frozen=True)
class SightingState:
    """Derived sighting state of one attribute.

    ``history`` is ordered by timestamp, ties in arrival order. All other
    fields are recomputed from it by ``rebuild_state``.
    """
    last_positive: Optional[datetime] = None
    tau_override: Optional[timedelta] = None
    false_positive: bool = False
    history: tuple[Sighting, ...] = ()
    false_positive_cleared_at: Optional[datetime] = None

    @property
    def first_seen(self) -> Optional[datetime]:
        return self.history[0].timestamp if self.history else None

    @property
    def last_seen(self) -> Optional[datetime]:
        return self.history[-1].timestamp if self.history else None

    def reference_time(self, attribute: Attribute) -> datetime:
        """T_{t-1}: last positive sighting, else the attribute's creation."""
        return self.last_positive or attribute.created_at


def rebuild_state(
    attribute: Attribute,
    history: Sequence[Sighting],
    cleared_at: Optional[datetime],
) -> SightingState:
    last_positive: Optional[datetime] = None
    tau_override: Optional[timedelta] = None
    false_positive = False

    for s in history:
        if s.kind is SightingKind.POSITIVE:
            if last_positive is None or s.timestamp > last_positive:
                last_positive = s.timestamp
        elif s.kind is SightingKind.FALSE_POSITIVE:
            if cleared_at is None or s.timestamp > cleared_at:
                false_positive = True
        else:
            reference = last_positive or attribute.created_at
            if s.timestamp < reference:
                raise NegativeTau(
                    f"Expiration sighting at {s.timestamp.isoformat()} predates reference "
                    f"{reference.isoformat()} of attribute {attribute.id}"
                )
            tau_override = s.timestamp - reference

    return SightingState(
        last_positive=last_positive,
        tau_override=tau_override,
        false_positive=false_positive,
        history=tuple(history),
        false_positive_cleared_at=cleared_at,
    )


def record_sighting(state: SightingState, sighting: Sighting, attribute: Attribute) -> SightingState:
    """
    Apply one sighting and return the new state.

    Out-of-order arrivals are inserted by timestamp (after any equal
    timestamps) and the derived fields are recomputed.

    Raises:
        UnknownAttribute: the sighting targets another attribute
        ClockSkew: the sighting predates the attribute's creation
        NegativeTau: an expiration sighting predates its reference time
    """
    if sighting.attribute_id != attribute.id:
        raise UnknownAttribute(sighting.attribute_id)
    if sighting.timestamp < attribute.created_at:
        if sighting.kind is SightingKind.EXPIRATION:
            raise NegativeTau(
                f"Expiration sighting at {sighting.timestamp.isoformat()} predates creation of {attribute.id}"
            )
        raise ClockSkew(
            f"Sighting at {sighting.timestamp.isoformat()} predates creation of {attribute.id} "
            f"({attribute.created_at.isoformat()})"
        )

    history = list(state.history)
    stamps = [s.timestamp for s in history]
    history.insert(bisect.bisect_right(stamps, sighting.timestamp), sighting)

    new_state = rebuild_state(attribute, history, state.false_positive_cleared_at)
    logger.debug(f"Sighting {sighting.kind.value} on {attribute.id} at {sighting.timestamp.isoformat()}")
    return new_state


def clear_false_positive(state: SightingState, attribute: Attribute, cleared_at: datetime) -> SightingState:
    """Lift the sticky false-positive flag; only later false_positive sightings set it again."""
    return rebuild_state(attribute, state.history, cleared_at)


def state_as_of(attribute: Attribute, state: SightingState, now: datetime) -> SightingState:
    """The state restricted to sightings stamped at or before ``now``."""
    cleared_at = state.false_positive_cleared_at
    if cleared_at is not None and cleared_at > now:
        cleared_at = None
    elif not state.history or state.history[-1].timestamp <= now:
        return state
    visible = [s for s in state.history if s.timestamp <= now]
    return rebuild_state(attribute, visible, cleared_at)


def effective_elapsed(
    attribute: Attribute,
    state: SightingState,
    now: datetime,
    unit: TimeUnit = TimeUnit.HOURS,
) -> ElapsedTime:
    """
    Time since the last positive sighting (or since creation when never sighted).

    Raises:
        ClockSkew: now precedes the reference time
    """
    reference = state.reference_time(attribute)
    if now < reference:
        raise ClockSkew(
            f"Evaluation time {now.isoformat()} precedes reference {reference.isoformat()} of {attribute.id}"
        )
    return ElapsedTime.from_timedelta(now - reference, unit)


def effective_model(model: DecayModel, state: SightingState) -> DecayModel:
    """The model with an expiration override, if any, substituted for its tau."""
    if state.tau_override is not None and state.tau_override.total_seconds() > 0 and model.tau is not None:
        return model.with_tau_seconds(state.tau_override.total_seconds())
    return model


def current_score(
    attribute: Attribute,
    state: SightingState,
    model: DecayModel,
    scoring: ScoringContext,
    now: datetime,
) -> ScoreResult:
    """
    Score of an attribute at ``now``.

    Only sightings up to ``now`` are taken into account. An expiration
    override replaces the polynomial tau and, for every model, acts as a
    hard end-time.
    """
    state = state_as_of(attribute, state, now)
    base = scoring.base_score_for(attribute.tags, attribute.source_id)
    reference = state.reference_time(attribute)

    if state.false_positive:
        return ScoreResult(base, 0.0, True, evaluated_at=now, last_reference=reference)

    elapsed = effective_elapsed(attribute, state, now, model.unit)

    if state.tau_override is not None:
        tau_seconds = state.tau_override.total_seconds()
        if elapsed.seconds >= tau_seconds:
            return ScoreResult(base, 0.0, True, evaluated_at=now, last_reference=reference)
        model = effective_model(model, state)

    return evaluate(base, model, elapsed, evaluated_at=now, last_reference=reference)


def positive_instants(history: Iterable[Sighting]) -> np.ndarray:
    """Distinct positive-sighting instants, seconds after the earliest, ascending."""
    stamps = [s.timestamp for s in history if s.kind is SightingKind.POSITIVE]
    if not stamps:
        return np.empty(0, dtype=float)
    origin = min(stamps)
    # simultaneous sightings from several sources count once
    return np.unique(np.array([(ts - origin).total_seconds() for ts in stamps], dtype=float))


def positive_gaps(history: Iterable[Sighting]) -> np.ndarray:
    """Successive gaps (seconds) between distinct positive-sighting instants."""
    return np.diff(positive_instants(history))


def estimate_tau(history: Sequence[Sighting], multiplier: float = 2.0, quantile: float = 0.95) -> timedelta:
    """
    End-time estimate from regular sightings: multiplier x nearest-rank quantile
    of the inter-sighting gaps.

    Raises:
        InsufficientHistory: fewer than three distinct positive instants
        InvalidParameter: multiplier <= 0 or quantile outside (0, 1]
    """
    if not multiplier > 0:
        raise InvalidParameter(f"multiplier must be > 0, got {multiplier!r}")
    if not 0 < quantile <= 1:
        raise InvalidParameter(f"quantile must lie in (0, 1], got {quantile!r}")

    instants = positive_instants(history)
    if instants.size < MIN_POSITIVES_FOR_TAU:
        raise InsufficientHistory(
            f"Need at least {MIN_POSITIVES_FOR_TAU} distinct positive sighting instants, got {instants.size}"
        )

    # inverted_cdf is the nearest-rank definition
    gap = float(np.quantile(np.diff(instants), quantile, method="inverted_cdf"))
    tau = timedelta(seconds=multiplier * gap)
    if tau <= timedelta(0):
        raise InsufficientHistory(f"Sighting gaps give a non-positive end-time ({tau})")
    return tau


def gap_statistics(history: Sequence[Sighting]) -> dict[str, float]:
    """min / median / max of the positive inter-sighting gaps, in seconds."""
    gaps = positive_gaps(history)
    if gaps.size == 0:
        raise InsufficientHistory("Need at least 2 positive sightings for gap statistics")
    return {
        "count": int(gaps.size),
        "min": float(gaps.min()),
        "median": float(np.median(gaps)),
        "max": float(gaps.max()),
    }


def list_expired(
    attributes: Mapping[str, Attribute],
    states: Mapping[str, SightingState],
    models: ModelTable,
    scoring: ScoringContext,
    now: datetime,
) -> list[str]:
    """Ids of all attributes whose score is 0 at ``now``, sorted; unborn attributes are skipped."""
    expired = []
    for attribute_id in sorted(attributes):
        attribute = attributes[attribute_id]
        if attribute.created_at > now:
            continue
        state = states.get(attribute_id, SightingState())
        result = current_score(attribute, state, models.model_for(attribute.type), scoring, now)
        if result.expired:
            expired.append(attribute_id)
    return expired
