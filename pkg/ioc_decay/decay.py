"""
Decay models mapping (base_score, elapsed time, parameters) to a current score.

    linear       score = base - delta * t
    exponential  score = base * exp(-delta * t)
    polynomial   score = base * (1 - (t / tau) ** (1 / delta))

Linear and polynomial scores are floored at 0 (linear past t = base/delta,
polynomial past t = tau). The polynomial exponent follows the selected
convention: ``reciprocal`` (1/delta, the default) or ``direct`` (delta).

Time carries an explicit unit. Parameters are expressed per model unit;
elapsed times in other units are converted through seconds.
"""

import csv
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional, TextIO

from .errors import InvalidParameter

# exp() underflows to 0.0 for large delta*t; the exponential model must stay
# strictly positive.
_EXP_FLOOR = math.ulp(0.0)


class TimeUnit(str, Enum):
    SECONDS = "s"
    HOURS = "h"
    DAYS = "d"

    @property
    def seconds(self) -> int:
        return _UNIT_SECONDS[self]

    @classmethod
    def parse(cls, raw: "str | TimeUnit") -> "TimeUnit":
        if isinstance(raw, TimeUnit):
            return raw
        unit = _UNIT_ALIASES.get(str(raw).strip().lower())
        if unit is None:
            raise InvalidParameter(f"Unknown time unit {raw!r} (expected s, h or d)")
        return unit


_UNIT_SECONDS = {TimeUnit.SECONDS: 1, TimeUnit.HOURS: 3600, TimeUnit.DAYS: 86400}
_UNIT_ALIASES = {
    "s": TimeUnit.SECONDS, "sec": TimeUnit.SECONDS, "seconds": TimeUnit.SECONDS,
    "h": TimeUnit.HOURS, "hour": TimeUnit.HOURS, "hours": TimeUnit.HOURS,
    "d": TimeUnit.DAYS, "day": TimeUnit.DAYS, "days": TimeUnit.DAYS,
}


class DecayVariant(str, Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"

    @classmethod
    def parse(cls, raw: "str | DecayVariant") -> "DecayVariant":
        if isinstance(raw, DecayVariant):
            return raw
        variant = _VARIANT_ALIASES.get(str(raw).strip().lower())
        if variant is None:
            raise InvalidParameter(f"Unknown decay model {raw!r}")
        return variant


_VARIANT_ALIASES = {
    "linear": DecayVariant.LINEAR, "lin": DecayVariant.LINEAR,
    "exponential": DecayVariant.EXPONENTIAL, "exp": DecayVariant.EXPONENTIAL,
    "polynomial": DecayVariant.POLYNOMIAL, "poly": DecayVariant.POLYNOMIAL,
}


class ExponentConvention(str, Enum):
    RECIPROCAL = "reciprocal"  # exponent 1/delta
    DIRECT = "direct"          # exponent delta


@dataclass(frozen=True)
class ElapsedTime:
    """A non-negative duration in a declared unit."""
    value: float
    unit: TimeUnit = TimeUnit.HOURS

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise InvalidParameter(f"Elapsed time must be finite and >= 0, got {self.value!r}")

    @property
    def seconds(self) -> float:
        return self.value * self.unit.seconds

    def to(self, unit: TimeUnit) -> float:
        if unit is self.unit:
            return self.value
        return self.seconds / unit.seconds

    @classmethod
    def from_timedelta(cls, delta: timedelta, unit: TimeUnit = TimeUnit.HOURS) -> "ElapsedTime":
        return cls(delta.total_seconds() / unit.seconds, unit)


# =============================================================================
# Score functions (t, tau and delta share one unit)
# =============================================================================

def _check_common(base: float, delta: float, t: float) -> None:
    if not 0.0 <= base <= 100.0:
        raise InvalidParameter(f"base score must lie in [0,100], got {base!r}")
    if not delta > 0:
        raise InvalidParameter(f"delta must be > 0, got {delta!r}")
    if not t >= 0:
        raise InvalidParameter(f"t must be >= 0, got {t!r}")


def score_linear(base: float, delta: float, t: float) -> float:
    _check_common(base, delta, t)
    return max(0.0, base - delta * t)


def score_exponential(base: float, delta: float, t: float) -> float:
    _check_common(base, delta, t)
    score = base * math.exp(-delta * t)
    if score == 0.0 and base > 0.0:
        return _EXP_FLOOR
    return score


def score_polynomial(
    base: float,
    tau: float,
    delta: float,
    t: float,
    convention: ExponentConvention = ExponentConvention.RECIPROCAL,
) -> float:
    _check_common(base, delta, t)
    if not tau > 0:
        raise InvalidParameter(f"tau must be > 0, got {tau!r}")
    if t >= tau:
        return 0.0
    exponent = 1.0 / delta if convention is ExponentConvention.RECIPROCAL else delta
    return max(0.0, base * (1.0 - (t / tau) ** exponent))


# =============================================================================
# Models
# =============================================================================

@dataclass(frozen=True)
class DecayModel:
    """One of Linear(delta), Exponential(delta), Polynomial(tau, delta).

    ``tau`` and ``delta`` are expressed in ``unit``.
    """
    variant: DecayVariant
    delta: float
    tau: Optional[float] = None
    unit: TimeUnit = TimeUnit.HOURS
    convention: ExponentConvention = ExponentConvention.RECIPROCAL

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise InvalidParameter(f"delta must be > 0, got {self.delta!r}")
        if self.variant is DecayVariant.POLYNOMIAL:
            if self.tau is None or not self.tau > 0:
                raise InvalidParameter(f"polynomial model needs tau > 0, got {self.tau!r}")
        elif self.tau is not None:
            raise InvalidParameter(f"{self.variant.value} model takes no tau")

    @classmethod
    def linear(cls, delta: float, unit: TimeUnit = TimeUnit.HOURS) -> "DecayModel":
        return cls(DecayVariant.LINEAR, delta, unit=unit)

    @classmethod
    def exponential(cls, delta: float, unit: TimeUnit = TimeUnit.HOURS) -> "DecayModel":
        return cls(DecayVariant.EXPONENTIAL, delta, unit=unit)

    @classmethod
    def polynomial(
        cls,
        tau: float,
        delta: float,
        unit: TimeUnit = TimeUnit.HOURS,
        convention: ExponentConvention = ExponentConvention.RECIPROCAL,
    ) -> "DecayModel":
        return cls(DecayVariant.POLYNOMIAL, delta, tau=tau, unit=unit, convention=convention)

    @classmethod
    def from_params(cls, params: Any, convention: "ExponentConvention | str" = ExponentConvention.RECIPROCAL) -> "DecayModel":
        """Build from a config ``ModelParams`` (or anything with model/tau/delta/unit)."""
        variant = DecayVariant.parse(params.model)
        unit = TimeUnit.parse(params.unit)
        tau = params.tau if variant is DecayVariant.POLYNOMIAL else None
        return cls(variant, params.delta, tau=tau, unit=unit, convention=ExponentConvention(convention))

    def with_tau_seconds(self, seconds: float) -> "DecayModel":
        return replace(self, tau=seconds / self.unit.seconds)

    def in_unit(self, unit: "TimeUnit | str") -> "DecayModel":
        """Same curve with tau and delta re-expressed in another unit."""
        unit = TimeUnit.parse(unit)
        if unit is self.unit:
            return self
        scale = unit.seconds / self.unit.seconds
        if self.variant is DecayVariant.POLYNOMIAL:
            # delta is a shape exponent, not a rate
            return replace(self, tau=self.tau / scale, unit=unit)
        return replace(self, delta=self.delta * scale, unit=unit)

    def describe(self) -> dict[str, Any]:
        return {
            "variant": self.variant.value,
            "tau": self.tau,
            "delta": self.delta,
            "unit": self.unit.value,
            "exponent_convention": self.convention.value,
        }


@dataclass(frozen=True)
class ScoreResult:
    """Outcome of one evaluation; expired iff current_score == 0."""
    base_score: float
    current_score: float
    expired: bool
    evaluated_at: Optional[datetime] = None
    last_reference: Optional[datetime] = None


def score_at(base: float, model: DecayModel, t: float) -> float:
    """Current score with ``t`` already in the model unit."""
    if model.variant is DecayVariant.LINEAR:
        return score_linear(base, model.delta, t)
    if model.variant is DecayVariant.EXPONENTIAL:
        return score_exponential(base, model.delta, t)
    return score_polynomial(base, model.tau, model.delta, t, model.convention)


def evaluate(
    base: float,
    model: DecayModel,
    t: ElapsedTime,
    *,
    evaluated_at: Optional[datetime] = None,
    last_reference: Optional[datetime] = None,
) -> ScoreResult:
    current = score_at(base, model, t.to(model.unit))
    return ScoreResult(
        base_score=base,
        current_score=current,
        expired=current == 0.0,
        evaluated_at=evaluated_at,
        last_reference=last_reference,
    )


def half_life(model: DecayModel, base: Optional[float] = None) -> Optional[float]:
    """
    Time (in the model unit) at which the score is base/2.

    Linear needs ``base``; returns None without it or when base is 0.
    """
    if model.variant is DecayVariant.LINEAR:
        if base is None or base <= 0:
            return None
        return base / (2 * model.delta)
    if model.variant is DecayVariant.EXPONENTIAL:
        return math.log(2) / model.delta
    # (t/tau)^k = 1/2  =>  t = tau * 0.5^(1/k)
    if model.convention is ExponentConvention.RECIPROCAL:
        return model.tau * 0.5 ** model.delta
    return model.tau * 0.5 ** (1.0 / model.delta)


# =============================================================================
# Curves
# =============================================================================

@dataclass(frozen=True)
class CurvePoint:
    t: float
    score: float


def emit_curve(base: float, model: DecayModel, horizon: float, step: float) -> list[CurvePoint]:
    """
    Sample the model at t = 0, step, 2*step, ... up to horizon (model unit).

    Every point goes through ``evaluate`` so the series matches pointwise.
    """
    if not step > 0:
        raise InvalidParameter(f"step must be > 0, got {step!r}")
    if not horizon >= step:
        raise InvalidParameter(f"horizon must be >= step, got horizon={horizon!r} step={step!r}")

    count = math.floor(horizon / step + 1e-9) + 1
    points = []
    for i in range(count):
        t = i * step
        points.append(CurvePoint(t, evaluate(base, model, ElapsedTime(t, model.unit)).current_score))
    return points


def format_time(t: float) -> str:
    """Lossless text for a sample time; integral values print without a fraction."""
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def write_curve_csv(points: Iterable[CurvePoint], unit: TimeUnit, handle: TextIO) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["t", unit.value, "score"])
    for point in points:
        writer.writerow([format_time(point.t), unit.value, f"{point.score:.6f}"])


# =============================================================================
# Per-type model table
# =============================================================================

class ModelTable:
    """Attribute type -> DecayModel, with a fallback for unknown types."""

    def __init__(self, models: Mapping[str, DecayModel], default: DecayModel) -> None:
        self._models = MappingProxyType(dict(models))
        self.default = default

    @classmethod
    def from_settings(cls, decay_settings: Any) -> "ModelTable":
        convention = ExponentConvention(decay_settings.exponent_convention)
        models = {
            attr_type: DecayModel.from_params(params, convention)
            for attr_type, params in decay_settings.models.items()
        }
        return cls(models, DecayModel.from_params(decay_settings.default_model, convention))

    @property
    def models(self) -> Mapping[str, DecayModel]:
        return self._models

    def __contains__(self, attribute_type: str) -> bool:
        return attribute_type in self._models

    def model_for(self, attribute_type: str) -> DecayModel:
        return self._models.get(attribute_type, self.default)
