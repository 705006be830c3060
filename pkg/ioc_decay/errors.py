"""Typed errors for the ioc-decay engine.

Callers branch on these instead of inspecting messages. Each maps to a
distinct CLI exit code and HTTP status in the presenters.
"""

from pathlib import Path
from typing import Optional, Sequence


class IocDecayError(Exception):
    """Base error for any failed engine operation."""


class ConfigError(IocDecayError):
    """Missing or invalid configuration (e.g. unreadable config file)."""


class MalformedTag(IocDecayError):
    """A machine-tag string does not parse as namespace:predicate[="value"]."""

    def __init__(self, raw: str, reason: str) -> None:
        super().__init__(f"Malformed tag {raw!r}: {reason}")
        self.raw = raw
        self.reason = reason


class UnknownNamespace(IocDecayError):
    """The namespace is not present in the taxonomy registry."""


class TaxonomyLoadError(IocDecayError):
    """A taxonomy definition file failed load-time validation."""


class InvalidParameter(IocDecayError):
    """A decay or estimator parameter is outside its domain."""


class UnknownAttribute(IocDecayError):
    """The attribute id is not in the store."""

    def __init__(self, attribute_id: str) -> None:
        super().__init__(f"Unknown attribute: {attribute_id}")
        self.attribute_id = attribute_id


class NegativeTau(IocDecayError):
    """An expiration sighting does not lie after its reference time."""


class ClockSkew(IocDecayError):
    """The evaluation instant precedes the attribute's reference time."""


class InsufficientHistory(IocDecayError):
    """Too few positive sightings to estimate an end-time."""


class UnknownKind(IocDecayError):
    """A sighting kind outside positive / false_positive / expiration."""


class ReadOnlyStore(IocDecayError):
    """A write was attempted against a read-only store."""


class ParseError(IocDecayError):
    """An input document could not be decoded."""

    def __init__(
        self,
        message: str,
        path: Optional[Path] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line
        self.column = column


class ValidationError(IocDecayError):
    """One or more invariants were violated; every problem is listed."""

    def __init__(self, problems: Sequence[str], source: Optional[str] = None) -> None:
        self.problems = list(problems)
        self.source = source
        header = f"{len(self.problems)} validation problem(s)"
        if source:
            header += f" in {source}"
        super().__init__(header + ":\n  - " + "\n  - ".join(self.problems))
