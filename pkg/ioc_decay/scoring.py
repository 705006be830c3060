"""
Base score of an attribute from its taxonomy tags and its source's confidence.

    tags       = sum(taxonomy_i * weight_i) / sum(100 * weight_i)
    base_score = weight_x * tags + omega_sc * source_confidence

with weight_x + omega_sc = 100. Tags resolving to UNDEFINED or NOT_FOUND are
left out of both sums.
"""

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InvalidParameter
from .taxonomy import MachineTag, TaxonomyRegistry

DEFAULT_WEIGHT_X = 50
DEFAULT_SOURCE_CONFIDENCE = 0.5


@dataclass(frozen=True)
class ScoringConfig:
    """weight_x of the tags term; omega_sc is always 100 - weight_x."""
    weight_x: int = DEFAULT_WEIGHT_X

    def __post_init__(self) -> None:
        if isinstance(self.weight_x, bool) or not isinstance(self.weight_x, int) or not 0 <= self.weight_x <= 100:
            raise InvalidParameter(f"weight_x must be an integer in [0,100], got {self.weight_x!r}")

    @property
    def omega_sc(self) -> int:
        return 100 - self.weight_x


@dataclass(frozen=True)
class SourceProfile:
    """Trust in a producing organization: 1 fully trusted, 0 no trust."""
    source_id: str
    source_confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.source_confidence <= 1.0:
            raise InvalidParameter(
                f"source_confidence for {self.source_id!r} must lie in [0,1], got {self.source_confidence!r}"
            )


@dataclass(frozen=True)
class TagsScore:
    """Taxonomy score in [0,1], or absent when no tag contributes."""
    value: Optional[float] = None

    @property
    def is_absent(self) -> bool:
        return self.value is None


ABSENT = TagsScore()


def resolve_tag_conflicts(tags: Sequence[MachineTag]) -> list[MachineTag]:
    """
    Keep only the last-attached tag per (namespace, predicate).

    Survivors keep their relative order. The key is case-folded the same way
    taxonomy lookups are.
    """
    last_index = {tag.key: i for i, tag in enumerate(tags)}
    return [tag for i, tag in enumerate(tags) if last_index[tag.key] == i]


def tags_score(tags: Iterable[MachineTag], registry: TaxonomyRegistry) -> TagsScore:
    """
    Weighted mean of the numerical values of all contributing tags.

    Groups (namespaces) carry no role beyond summation, so the double sum
    collapses into one weighted mean. Values and weights are integers, which
    keeps both sums exact and the result independent of tag order.
    """
    numerator = 0
    denominator = 0
    for tag in tags:
        resolution = registry.resolve(tag)
        if not resolution.is_numeric:
            continue
        weight = registry.weight(tag.namespace, tag.predicate)
        numerator += resolution.value * weight
        denominator += 100 * weight

    if denominator == 0:
        return ABSENT
    return TagsScore(numerator / denominator)


def base_score(tags: TagsScore, source: SourceProfile, config: ScoringConfig) -> float:
    """
    Decay-independent score in [0,100].

    An attribute without contributing tags is scored on its source alone
    (100 * source_confidence) instead of being treated as carrying
    zero-confidence tags.
    """
    if tags.is_absent:
        score = 100 * source.source_confidence
    else:
        score = config.weight_x * tags.value + config.omega_sc * source.source_confidence
    return min(100.0, max(0.0, float(score)))


def compute_base_score(
    tags: Sequence[MachineTag],
    source: SourceProfile,
    registry: TaxonomyRegistry,
    config: ScoringConfig,
) -> float:
    """tags_score followed by base_score for one attribute's effective tags."""
    return base_score(tags_score(tags, registry), source, config)


class ScoringContext:
    """Everything needed to score a stored attribute: registry, sources, weights."""

    def __init__(
        self,
        registry: TaxonomyRegistry,
        sources: Mapping[str, SourceProfile],
        config: ScoringConfig,
        default_source_confidence: float = DEFAULT_SOURCE_CONFIDENCE,
    ) -> None:
        self.registry = registry
        self.sources = MappingProxyType(dict(sources))
        self.config = config
        self.default_source_confidence = default_source_confidence

    def source_profile(self, source_id: str) -> SourceProfile:
        profile = self.sources.get(source_id)
        if profile is None:
            return SourceProfile(source_id, self.default_source_confidence)
        return profile

    def base_score_for(self, tags: Sequence[MachineTag], source_id: str) -> float:
        return compute_base_score(tags, self.source_profile(source_id), self.registry, self.config)

    def with_registry(self, registry: TaxonomyRegistry) -> "ScoringContext":
        return ScoringContext(registry, self.sources, self.config, self.default_source_confidence)
