"""
Machine-tag parsing and taxonomy resolution.

A machine-tag is the triple ``namespace:predicate="value"`` (the value part is
optional). Taxonomy definition files map (predicate, value) pairs of one
namespace to numerical values in [0, 100] and carry per-predicate weights.

Matching is case-insensitive on namespace and predicate and case-sensitive on
the value ("NU" is a code, not a word).
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Optional, Union

from loguru import logger

from .errors import MalformedTag, ParseError, TaxonomyLoadError, UnknownNamespace

DEFAULT_PREDICATE_WEIGHT = 50
UNDEFINED_MARKER = "undefined"

_IDENTIFIER_FORBIDDEN = re.compile(r"[\s:=]")


# =============================================================================
# Machine tags
# =============================================================================

@dataclass(frozen=True)
class MachineTag:
    """A parsed machine-tag triple."""
    namespace: str
    predicate: str
    value: Optional[str] = None

    @property
    def key(self) -> tuple[str, str]:
        """Conflict / lookup key: case-folded (namespace, predicate)."""
        return (self.namespace.lower(), self.predicate.lower())

    def canonical(self) -> str:
        if self.value is None:
            return f"{self.namespace}:{self.predicate}"
        return f'{self.namespace}:{self.predicate}="{self.value}"'

    def __str__(self) -> str:
        return self.canonical()


def _check_identifier(raw: str, part: str, name: str) -> None:
    if not part:
        raise MalformedTag(raw, f"empty {name}")
    if _IDENTIFIER_FORBIDDEN.search(part):
        raise MalformedTag(raw, f"{name} {part!r} contains whitespace, ':' or '='")


def parse_machine_tag(raw: str) -> MachineTag:
    """
    Parse ``namespace:predicate`` or ``namespace:predicate="value"``.

    Surrounding whitespace is trimmed and quoted values are unquoted. An
    unquoted value (``ns:p=v``) is accepted as-is.

    Raises:
        MalformedTag: no colon, empty namespace/predicate, or unbalanced quotes
    """
    text = raw.strip() if isinstance(raw, str) else ""
    if not text:
        raise MalformedTag(str(raw), "empty tag")

    namespace, sep, rest = text.partition(":")
    if not sep:
        raise MalformedTag(raw, "no colon separator")
    namespace = namespace.strip()

    predicate, eq, value_part = rest.partition("=")
    predicate = predicate.strip()
    _check_identifier(raw, namespace, "namespace")
    _check_identifier(raw, predicate, "predicate")

    if not eq:
        return MachineTag(namespace, predicate)

    value_part = value_part.strip()
    starts, ends = value_part.startswith('"'), value_part.endswith('"')
    if starts or ends:
        if not (starts and ends and len(value_part) >= 2):
            raise MalformedTag(raw, "unbalanced quotes")
        return MachineTag(namespace, predicate, value_part[1:-1])
    if not value_part:
        raise MalformedTag(raw, "empty value after '='")
    return MachineTag(namespace, predicate, value_part)


# =============================================================================
# Taxonomy entries and resolution outcomes
# =============================================================================

class Undefined(Enum):
    """Marker for levels that cannot be mapped to a number."""
    UNDEFINED = UNDEFINED_MARKER

    def __repr__(self) -> str:
        return "UNDEFINED"


UNDEFINED = Undefined.UNDEFINED

NumericalValue = Union[int, Undefined]


@dataclass(frozen=True)
class TaxonomyEntry:
    """One (predicate, value) level of a namespace.

    ``numerical_value`` is None when the definition file gives none; such
    entries resolve to NOT_FOUND.
    """
    predicate: str
    value: Optional[str]
    numerical_value: Optional[NumericalValue] = None


class ResolutionKind(str, Enum):
    NUMERIC = "numeric"
    UNDEFINED = "undefined"
    NOT_FOUND = "not_found"


@dataclass(frozen=True)
class Resolution:
    kind: ResolutionKind
    value: Optional[int] = None

    @property
    def is_numeric(self) -> bool:
        return self.kind is ResolutionKind.NUMERIC

    @classmethod
    def numeric(cls, value: int) -> "Resolution":
        return cls(ResolutionKind.NUMERIC, value)


NOT_FOUND = Resolution(ResolutionKind.NOT_FOUND)
UNDEFINED_RESOLUTION = Resolution(ResolutionKind.UNDEFINED)


# =============================================================================
# Registry
# =============================================================================

@dataclass(frozen=True)
class TaxonomyNamespace:
    """A loaded taxonomy: predicate weights plus its entries."""
    name: str
    predicate_weights: Mapping[str, int]
    entries: tuple[TaxonomyEntry, ...] = ()
    _index: Mapping[tuple[str, Optional[str]], TaxonomyEntry] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        weights = {p.lower(): w for p, w in self.predicate_weights.items()}
        index = {(e.predicate.lower(), e.value): e for e in self.entries}
        object.__setattr__(self, "predicate_weights", MappingProxyType(weights))
        object.__setattr__(self, "_index", MappingProxyType(index))

    def lookup(self, predicate: str, value: Optional[str]) -> Optional[TaxonomyEntry]:
        return self._index.get((predicate.lower(), value))


class TaxonomyRegistry:
    """Immutable set of namespaces; safe to share between threads."""

    def __init__(
        self,
        namespaces: Mapping[str, TaxonomyNamespace],
        default_weight: int = DEFAULT_PREDICATE_WEIGHT,
    ) -> None:
        self._namespaces = MappingProxyType({k.lower(): v for k, v in namespaces.items()})
        self.default_weight = default_weight

    @property
    def namespaces(self) -> Mapping[str, TaxonomyNamespace]:
        return self._namespaces

    def __contains__(self, namespace: str) -> bool:
        return namespace.lower() in self._namespaces

    def __len__(self) -> int:
        return len(self._namespaces)

    def resolve(self, tag: MachineTag) -> Resolution:
        ns = self._namespaces.get(tag.namespace.lower())
        if ns is None:
            return NOT_FOUND
        entry = ns.lookup(tag.predicate, tag.value)
        if entry is None or entry.numerical_value is None:
            return NOT_FOUND
        if entry.numerical_value is UNDEFINED:
            return UNDEFINED_RESOLUTION
        return Resolution.numeric(entry.numerical_value)

    def weight(self, namespace: str, predicate: str) -> int:
        ns = self._namespaces.get(namespace.lower())
        if ns is None:
            raise UnknownNamespace(f"Unknown namespace: {namespace}")
        return ns.predicate_weights.get(predicate.lower(), self.default_weight)


def resolve_numerical_value(tag: MachineTag, registry: TaxonomyRegistry) -> Resolution:
    """Numeric(v), UNDEFINED or NOT_FOUND for a tag; never raises."""
    return registry.resolve(tag)


def predicate_weight(namespace: str, predicate: str, registry: TaxonomyRegistry) -> int:
    """Configured weight of a predicate, or the registry default (50 unless overridden)."""
    return registry.weight(namespace, predicate)


# =============================================================================
# Loading
# =============================================================================

def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _parse_numerical_value(raw: Any, where: str, problems: list[str]) -> Optional[NumericalValue]:
    if raw is None:
        return None
    if raw == UNDEFINED_MARKER:
        return UNDEFINED
    if not _is_int(raw) or not 0 <= raw <= 100:
        problems.append(f"{where}: numerical_value {raw!r} is not an integer in [0,100] or {UNDEFINED_MARKER!r}")
        return None
    return raw


def namespace_from_document(doc: Any, default_weight: int = DEFAULT_PREDICATE_WEIGHT, source: str = "<document>") -> TaxonomyNamespace:
    """
    Validate one taxonomy document and build its namespace.

    Document shape::

        {"namespace": "misp",
         "predicates": [{"name": "confidence-level", "weight": 50}],
         "values": [{"predicate": "confidence-level",
                     "entry": "completely-confident",
                     "numerical_value": 100}]}

    A predicate item may carry ``numerical_value`` itself; that value applies
    to the value-less tag ``namespace:predicate``.

    Raises:
        TaxonomyLoadError: listing every problem found
    """
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise TaxonomyLoadError(f"{source}: top level must be an object")

    name = doc.get("namespace")
    if not isinstance(name, str) or not name or _IDENTIFIER_FORBIDDEN.search(name):
        problems.append(f"{source}: 'namespace' must be a non-empty identifier, got {name!r}")
        name = str(name)

    weights: dict[str, int] = {}
    entries: dict[tuple[str, Optional[str]], TaxonomyEntry] = {}

    def add_entry(entry: TaxonomyEntry, where: str) -> None:
        key = (entry.predicate.lower(), entry.value)
        if key in entries:
            problems.append(f"{where}: duplicate entry {entry.predicate}={entry.value!r}")
        entries[key] = entry

    for i, item in enumerate(doc.get("predicates") or []):
        where = f"{source}: predicates[{i}]"
        pname = item.get("name") if isinstance(item, dict) else None
        if not isinstance(pname, str) or not pname or _IDENTIFIER_FORBIDDEN.search(pname):
            problems.append(f"{where}: 'name' must be a non-empty identifier")
            continue
        if "weight" in item and item["weight"] is not None:
            w = item["weight"]
            if not _is_int(w) or not 0 <= w <= 100:
                problems.append(f"{where}: weight {w!r} is not an integer in [0,100]")
            else:
                weights[pname.lower()] = w
        if "numerical_value" in item:
            nv = _parse_numerical_value(item["numerical_value"], where, problems)
            add_entry(TaxonomyEntry(pname, None, nv), where)

    for i, item in enumerate(doc.get("values") or []):
        where = f"{source}: values[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an object")
            continue
        pname = item.get("predicate")
        if not isinstance(pname, str) or not pname:
            problems.append(f"{where}: 'predicate' is required")
            continue
        value = item.get("entry")
        if value is not None and not isinstance(value, str):
            problems.append(f"{where}: 'entry' must be a string")
            continue
        nv = _parse_numerical_value(item.get("numerical_value"), where, problems)
        add_entry(TaxonomyEntry(pname, value, nv), where)
        if pname.lower() not in weights:
            weights[pname.lower()] = default_weight

    if problems:
        raise TaxonomyLoadError("\n".join(problems))

    return TaxonomyNamespace(name=name, predicate_weights=weights, entries=tuple(entries.values()))


def load_taxonomy_file(path: Path, default_weight: int = DEFAULT_PREDICATE_WEIGHT) -> TaxonomyNamespace:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno, column=e.colno) from e
    return namespace_from_document(doc, default_weight=default_weight, source=str(path))


def load_registry(taxonomy_dir: Path, default_weight: int = DEFAULT_PREDICATE_WEIGHT) -> TaxonomyRegistry:
    """
    Load every ``*.json`` taxonomy in a directory.

    Args:
        taxonomy_dir: Directory holding one document per namespace
        default_weight: Weight for predicates the files leave unweighted

    Returns:
        TaxonomyRegistry: immutable registry

    Raises:
        TaxonomyLoadError: directory missing, duplicate namespace, invalid file
    """
    taxonomy_dir = Path(taxonomy_dir)
    if not taxonomy_dir.is_dir():
        raise TaxonomyLoadError(f"Taxonomy directory not found: {taxonomy_dir}")

    namespaces: dict[str, TaxonomyNamespace] = {}
    for path in sorted(taxonomy_dir.glob("*.json")):
        ns = load_taxonomy_file(path, default_weight=default_weight)
        if ns.name.lower() in namespaces:
            raise TaxonomyLoadError(f"{path}: namespace {ns.name!r} defined twice")
        namespaces[ns.name.lower()] = ns
        logger.debug(f"Loaded taxonomy {ns.name} ({len(ns.entries)} entries) from {path.name}")

    logger.info(f"Taxonomy registry: {len(namespaces)} namespace(s) from {taxonomy_dir}")
    return TaxonomyRegistry(namespaces, default_weight=default_weight)
