"""
Tests for the taxonomy score, base score and tag-conflict resolution.
"""

import numpy as np
import pytest

from ioc_decay.errors import InvalidParameter
from ioc_decay.scoring import (
    ABSENT,
    ScoringConfig,
    ScoringContext,
    SourceProfile,
    TagsScore,
    base_score,
    compute_base_score,
    resolve_tag_conflicts,
    tags_score,
)
from ioc_decay.taxonomy import MachineTag, TaxonomyRegistry, namespace_from_document, parse_machine_tag

SEED = 20240101
CASES = 10_000

COMPLETELY = MachineTag("misp", "confidence-level", "completely-confident")
FAIRLY = MachineTag("misp", "confidence-level", "fairly-confident")
CANNOT_EVALUATE = MachineTag("misp", "confidence-level", "confidence-cannot-be-evaluated")
OSINT_93 = MachineTag("osint", "certainty", "93")
OSINT_100 = MachineTag("osint", "certainty", "100")
UNKNOWN = MachineTag("nope", "p", "v")


class TestTagsScore:
    """Weighted mean of numeric tags."""

    def test_single_tag(self, registry):
        assert tags_score([COMPLETELY], registry) == TagsScore(1.0)

    def test_equal_weights(self, registry):
        assert tags_score([COMPLETELY, OSINT_93], registry).value == pytest.approx(0.965)

    def test_predicate_weights_apply(self, weighted_registry):
        tags = [MachineTag("weighted", "heavy", "high"), MachineTag("weighted", "light", "zero")]
        assert tags_score(tags, weighted_registry).value == pytest.approx(0.9)

    def test_undefined_is_excluded(self, registry):
        assert tags_score([COMPLETELY, CANNOT_EVALUATE], registry) == tags_score([COMPLETELY], registry)

    def test_not_found_is_excluded(self, registry):
        assert tags_score([FAIRLY, UNKNOWN], registry) == TagsScore(0.5)

    def test_no_contributing_tags_is_absent(self, registry):
        assert tags_score([], registry) == ABSENT
        assert tags_score([CANNOT_EVALUATE, UNKNOWN], registry).is_absent

    def test_zero_weight_only_is_absent(self):
        ns = namespace_from_document(
            {"namespace": "z", "predicates": [{"name": "p", "weight": 0}],
             "values": [{"predicate": "p", "entry": "a", "numerical_value": 90}]}
        )
        assert tags_score([MachineTag("z", "p", "a")], TaxonomyRegistry({"z": ns})).is_absent


class TestBaseScore:
    """weight_x * tags + omega_sc * source_confidence."""

    def test_fully_confident_tags_give_80(self, registry):
        source = SourceProfile("org", 0.6)
        assert compute_base_score([COMPLETELY, OSINT_100], source, registry, ScoringConfig()) == pytest.approx(80.0)

    def test_absent_tags_use_source_alone(self):
        assert base_score(ABSENT, SourceProfile("org", 0.6), ScoringConfig(50)) == pytest.approx(60.0)

    def test_tags_only(self):
        assert base_score(TagsScore(0.25), SourceProfile("org", 1.0), ScoringConfig(100)) == pytest.approx(25.0)

    def test_source_only(self):
        assert base_score(TagsScore(0.25), SourceProfile("org", 0.4), ScoringConfig(0)) == pytest.approx(40.0)

    def test_omega_is_complement(self):
        assert ScoringConfig(30).omega_sc == 70

    @pytest.mark.parametrize("weight_x", [-1, 101, 50.5, True])
    def test_weight_x_domain(self, weight_x):
        with pytest.raises(InvalidParameter):
            ScoringConfig(weight_x)

    @pytest.mark.parametrize("confidence", [-0.1, 1.01])
    def test_source_confidence_domain(self, confidence):
        with pytest.raises(InvalidParameter):
            SourceProfile("org", confidence)


class TestTagConflicts:
    """Last-attached tag wins per (namespace, predicate)."""

    def test_later_tag_wins(self):
        assert resolve_tag_conflicts([FAIRLY, OSINT_93, COMPLETELY]) == [OSINT_93, COMPLETELY]

    def test_conflict_key_is_case_insensitive(self):
        shouting = parse_machine_tag('MISP:CONFIDENCE-LEVEL="unconfident"')
        assert resolve_tag_conflicts([COMPLETELY, shouting]) == [shouting]

    def test_distinct_predicates_survive(self):
        tags = [COMPLETELY, OSINT_93]
        assert resolve_tag_conflicts(tags) == tags


class TestScoringContext:
    """Source lookup with the default confidence."""

    def test_unknown_source_defaults_to_half(self, registry):
        context = ScoringContext(registry, {}, ScoringConfig())
        assert context.source_profile("stranger").source_confidence == 0.5
        assert context.base_score_for([], "stranger") == pytest.approx(50.0)


def _combined(registry, weighted_registry):
    return TaxonomyRegistry({**registry.namespaces, **weighted_registry.namespaces})


def _numeric_tags(reg):
    tags = []
    for ns in reg.namespaces.values():
        for entry in ns.entries:
            tag = MachineTag(ns.name, entry.predicate, entry.value)
            if reg.resolve(tag).is_numeric:
                tags.append(tag)
    return tags


class TestScoringProperties:
    """Randomized sweeps with a fixed seed."""

    def test_ranges(self, registry, weighted_registry):
        reg = _combined(registry, weighted_registry)
        pool = _numeric_tags(reg) + [CANNOT_EVALUATE, UNKNOWN]
        rng = np.random.default_rng(SEED)
        for _ in range(CASES):
            picks = rng.integers(0, len(pool), size=rng.integers(0, 6))
            tags = [pool[i] for i in picks]
            ts = tags_score(tags, reg)
            assert ts.is_absent or 0.0 <= ts.value <= 1.0
            config = ScoringConfig(int(rng.integers(0, 101)))
            source = SourceProfile("s", float(rng.random()))
            assert 0.0 <= base_score(ts, source, config) <= 100.0

    def test_non_numeric_tags_never_change_score(self, registry, weighted_registry):
        reg = _combined(registry, weighted_registry)
        numeric = _numeric_tags(reg)
        inert = [
            CANNOT_EVALUATE,
            UNKNOWN,
            MachineTag("weighted", "heavy", "unknown"),
            MachineTag("weighted", "light", "unrated"),
            MachineTag("osint", "certainty", "42"),
        ]
        rng = np.random.default_rng(SEED + 1)
        for _ in range(CASES):
            tags = [numeric[i] for i in rng.integers(0, len(numeric), size=rng.integers(1, 5))]
            extra = [inert[i] for i in rng.integers(0, len(inert), size=rng.integers(1, 4))]
            mixed = tags + extra
            rng.shuffle(mixed)
            assert tags_score(mixed, reg) == tags_score(tags, reg)

    def test_permutation_invariance(self, registry, weighted_registry):
        reg = _combined(registry, weighted_registry)
        pool = _numeric_tags(reg)
        rng = np.random.default_rng(SEED + 2)
        for _ in range(CASES):
            tags = [pool[i] for i in rng.integers(0, len(pool), size=rng.integers(1, 6))]
            shuffled = list(tags)
            rng.shuffle(shuffled)
            assert tags_score(shuffled, reg) == tags_score(tags, reg)

    def test_raising_a_value_never_lowers_the_score(self):
        rng = np.random.default_rng(SEED + 3)
        predicates = [f"p{i}" for i in range(4)]
        for _ in range(20):
            doc = {
                "namespace": "graded",
                "predicates": [{"name": p, "weight": int(rng.integers(1, 101))} for p in predicates],
                "values": [
                    {"predicate": p, "entry": f"v{v}", "numerical_value": v} for p in predicates for v in range(101)
                ],
            }
            reg = TaxonomyRegistry({"graded": namespace_from_document(doc)})
            for _ in range(CASES // 20):
                chosen = [p for p in predicates if rng.random() < 0.7] or predicates[:1]
                values = {p: int(rng.integers(0, 101)) for p in chosen}
                raised = dict(values)
                bumped = chosen[rng.integers(0, len(chosen))]
                raised[bumped] = int(rng.integers(values[bumped], 101))
                before = tags_score([MachineTag("graded", p, f"v{v}") for p, v in values.items()], reg)
                after = tags_score([MachineTag("graded", p, f"v{v}") for p, v in raised.items()], reg)
                assert after.value >= before.value
