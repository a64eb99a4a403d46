"""Model parameters, intensity schedules and the regime classifier."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .numerics import LogValue, log_unit_ball_volume

Number = Union[int, float]


class DeltaRangeWarning(UserWarning):
    """The canonical distance parameter left (0, 1)."""


@dataclass(frozen=True)
class ModelParams:
    """Dimension, distance parameter and intensity of the model.

    The intensity is a :class:`LogValue`; an exact-zero intensity is accepted
    and describes the empty process.
    """

    dimension: int
    delta: float
    intensity: LogValue

    def __post_init__(self):
        d = self.dimension
        if isinstance(d, bool) or int(d) != d or d < 1:
            raise ValueError(f"dimension must be a positive integer, got {d!r}")
        object.__setattr__(self, "dimension", int(d))
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive and finite, got {self.delta!r}")
        object.__setattr__(self, "delta", float(self.delta))
        lam = LogValue.coerce(self.intensity)
        if lam.sign < 0:
            raise ValueError("intensity must be non-negative")
        object.__setattr__(self, "intensity", lam)

    @classmethod
    def create(cls, dimension: int, delta: float, intensity: LogValue | Number) -> ModelParams:
        return cls(dimension, delta, LogValue.coerce(intensity))

    def with_intensity(self, intensity: LogValue | Number) -> ModelParams:
        return ModelParams(self.dimension, self.delta, LogValue.coerce(intensity))

    @property
    def log_kappa(self) -> LogValue:
        return log_unit_ball_volume(self.dimension)

    @property
    def kappa_lambda(self) -> LogValue:
        """``kappa_d * lambda``."""
        return self.log_kappa * self.intensity

    @property
    def delta_pow_d(self) -> LogValue:
        return LogValue(1, self.dimension * math.log(self.delta))

    @property
    def u(self) -> LogValue:
        """``kappa_d * lambda * delta**d``, the mean number of points in a delta-ball."""
        return self.kappa_lambda * self.delta_pow_d

    @property
    def v(self) -> LogValue:
        """``kappa_d**2 * lambda**2 * delta**(2d)`` (``u**2``), the regime quantity."""
        return self.u ** 2


def canonical_delta(d: int) -> float:
    """The dimension-dependent distance parameter ``1/d``."""
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if d < 2:
        warnings.warn("canonical delta 1/d is not inside (0, 1) for d = 1", DeltaRangeWarning, stacklevel=2)
    return 1.0 / d


def intensity_for_target_u(d: int, delta: float, u: float) -> LogValue:
    """Intensity solving ``kappa_d * lambda * delta**d = u``."""
    if not u > 0:
        raise ValueError("target u must be positive")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return LogValue(1, math.log(u)) / (log_unit_ball_volume(d) * LogValue(1, d * math.log(delta)))


def intensity_for_target_v(d: int, delta: float, v: float) -> LogValue:
    """Intensity solving ``kappa_d**2 * lambda**2 * delta**(2d) = v``."""
    if not v > 0:
        raise ValueError("target v must be positive")
    return intensity_for_target_u(d, delta, math.sqrt(v))


class ScheduleKind(str, enum.Enum):
    EXPLICIT = "explicit"
    TARGET_U = "target_u"
    TARGET_V = "target_v"


Rule = Union[Number, LogValue, Callable[[int], Union[Number, LogValue]], Mapping[int, Union[Number, LogValue]]]


@dataclass(frozen=True)
class IntensitySchedule:
    """A rule ``d -> lambda_d``.

    ``rule`` may be a constant, a callable of ``d`` or a table keyed by ``d``.
    For the target kinds it yields the target ``u_d`` / ``v_d`` instead of the
    intensity itself.
    """

    kind: ScheduleKind
    rule: Rule

    @classmethod
    def explicit(cls, rule: Rule) -> IntensitySchedule:
        return cls(ScheduleKind.EXPLICIT, rule)

    @classmethod
    def target_u(cls, rule: Rule) -> IntensitySchedule:
        return cls(ScheduleKind.TARGET_U, rule)

    @classmethod
    def target_v(cls, rule: Rule) -> IntensitySchedule:
        return cls(ScheduleKind.TARGET_V, rule)

    def _rule_value(self, d: int):
        r = self.rule
        if isinstance(r, Mapping):
            if d not in r:
                raise KeyError(f"schedule table has no entry for d = {d}")
            return r[d]
        if callable(r):
            return r(d)
        return r

    def intensity(self, d: int, delta: float) -> LogValue:
        val = self._rule_value(d)
        kind = ScheduleKind(self.kind)
        if kind is ScheduleKind.EXPLICIT:
            lam = LogValue.coerce(val)
            if lam.sign <= 0:
                raise ValueError(f"schedule produced a non-positive intensity at d = {d}")
            return lam
        val = LogValue.coerce(val)
        if val.sign <= 0:
            raise ValueError(f"schedule target must be positive at d = {d}")
        if kind is ScheduleKind.TARGET_U:
            target_u = val
        else:
            target_u = val.sqrt()
        return target_u / (log_unit_ball_volume(d) * LogValue(1, d * math.log(delta)))


@dataclass(frozen=True)
class ScheduleEntry:
    d: int
    delta: float
    log_v: float
    log_u: float
    log_kappa_lambda: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _resolve_delta(delta_rule, d: int) -> float:
    if delta_rule == "canonical":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DeltaRangeWarning)
            return canonical_delta(d)
    if callable(delta_rule):
        return float(delta_rule(d))
    return float(delta_rule)


def schedule_diagnostics(
    schedule: IntensitySchedule, delta_rule: str | float | Callable[[int], float], d_list: Sequence[int]
) -> list[ScheduleEntry]:
    """Per-dimension ``log v_d``, ``log u_d`` and ``log(kappa_d lambda_d)``.

    Failures evaluating the schedule at a dimension are reported on that entry
    (``error`` set, logs NaN) rather than aborting the sweep.
    """
    if not d_list:
        raise ValueError("d_list must be non-empty")
    if any(b <= a for a, b in zip(d_list, d_list[1:])):
        raise ValueError("d_list must be strictly ascending")
    out = []
    for d in d_list:
        try:
            delta = _resolve_delta(delta_rule, d)
            p = ModelParams(d, delta, schedule.intensity(d, delta))
            out.append(ScheduleEntry(d, delta, p.v.log(), p.u.log(), p.kappa_lambda.log()))
        except (ValueError, KeyError, ArithmeticError) as exc:
            out.append(ScheduleEntry(d, math.nan, math.nan, math.nan, math.nan, error=str(exc)))
    return out


class Regime(str, enum.Enum):
    DIVERGING = "diverging"
    CONVERGENT_POSITIVE = "convergent_positive"
    VANISHING = "vanishing"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    slope: float
    c_squared: float | None = None
    note: str = field(default="finite-sample heuristic for a d -> infinity limit")


def classify_regime(values: Sequence[tuple[int, float]], tolerance: float = 0.05) -> RegimeClassification:
    """Classify the trend of ``v_d`` from ``(d, log v_d)`` pairs.

    Fits the least-squares slope of ``log v_d`` against ``log d`` over the
    tail half of the list.
    """
    if len(values) < 4:
        raise ValueError("regime classification needs at least 4 entries")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    ds = [d for d, _ in values]
    if any(b <= a for a, b in zip(ds, ds[1:])):
        raise ValueError("dimensions must be ascending")
    tail = values[len(values) // 2:]
    x = np.log([float(d) for d, _ in tail])
    y = np.array([lv for _, lv in tail], dtype=float)
    if not np.all(np.isfinite(y)):
        return RegimeClassification(Regime.UNDETERMINED, math.nan)
    slope = float(np.polyfit(x, y, 1)[0])
    if slope > tolerance:
        return RegimeClassification(Regime.DIVERGING, slope)
    if slope < -tolerance:
        return RegimeClassification(Regime.VANISHING, slope)
    mean = float(y.mean())
    if np.all(np.abs(y - mean) <= tolerance):
        return RegimeClassification(Regime.CONVERGENT_POSITIVE, slope, c_squared=math.exp(mean))
    return RegimeClassification(Regime.UNDETERMINED, slope)
