"""Distances between standardized edge-count samples and the standard normal."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erfc, ndtri

from . import moments
from .model import ModelParams
from .simulation import edge_counts, run_replications

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def normal_cdf(t):
    """Standard normal CDF via ``erfc``."""
    out = 0.5 * erfc(-np.asarray(t, dtype=float) * _INV_SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def normal_pdf(t):
    t = np.asarray(t, dtype=float)
    out = _INV_SQRT2PI * np.exp(-0.5 * t * t)
    return float(out) if np.ndim(out) == 0 else out


def normal_cdf_antiderivative(t):
    """``Psi(t) = int_{-inf}^t Phi = t Phi(t) + phi(t)``."""
    t = np.asarray(t, dtype=float)
    out = t * normal_cdf(t) + normal_pdf(t)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _int_cdf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``int_a^b Phi`` for finite ``a <= b``.

    Uses ``Psi(b) - Psi(a)`` on the left half-line and the mirrored form
    ``(b - a) - [Psi(-a) - Psi(-b)]`` on the right to avoid cancellation.
    """
    left = (b - a) - (normal_cdf_antiderivative(-a) - normal_cdf_antiderivative(-b))
    right = normal_cdf_antiderivative(b) - normal_cdf_antiderivative(a)
    return np.where(a + b > 0, left, right)


class Standardization(str, enum.Enum):
    EXACT = "exact_mean_exact_var"
    EMPIRICAL = "empirical_moments"


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    values: np.ndarray
    standardization: Standardization = Standardization.EXACT
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).reshape(-1))
        if v.shape[0] < 1:
            raise ValueError("sample must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def standardize(
    raw_counts: Sequence[float],
    center: float | None = None,
    scale: float | None = None,
    standardization: Standardization | None = None,
    provenance: dict | None = None,
) -> EmpiricalSample:
    """Sorted ``(x - center) / scale``.

    With ``center``/``scale`` omitted the sample mean and ``n - 1`` standard
    deviation are used (empirical mode).
    """
    x = np.asarray(raw_counts, dtype=float)
    if center is None or scale is None:
        if x.shape[0] < 2:
            raise ValueError("empirical standardization needs at least 2 values")
        center = float(x.mean()) if center is None else center
        scale = float(x.std(ddof=1)) if scale is None else scale
        standardization = standardization or Standardization.EMPIRICAL
    if not scale > 0:
        raise ValueError("scale must be positive")
    return EmpiricalSample((x - center) / scale, standardization or Standardization.EXACT, provenance or {})


def wasserstein_to_standard_normal(sample: EmpiricalSample) -> float:
    """Exact ``int |F_n(t) - Phi(t)| dt`` for the empirical CDF ``F_n``.

    On each gap between order statistics ``F_n`` equals ``k/n``; the gap is
    split at ``Phi^{-1}(k/n)`` and both pieces are integrated in closed form.
    """
    x = sample.values
    n = x.shape[0]
    total = normal_cdf_antiderivative(x[0]) + normal_cdf_antiderivative(-x[-1])
    if n > 1:
        a, b = x[:-1], x[1:]
        p = np.arange(1, n) / n
        t = np.clip(ndtri(p), a, b)
        # [a, t]: Phi <= p ; [t, b]: Phi >= p
        below = p * (t - a) - _int_cdf(a, t)
        above = _int_cdf(t, b) - p * (b - t)
        total += float(np.sum(np.maximum(below, 0.0) + np.maximum(above, 0.0)))
    return float(total)


def kolmogorov_to_standard_normal(sample: EmpiricalSample) -> float:
    x = sample.values
    n = x.shape[0]
    cdf = normal_cdf(x)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(np.abs(i / n - cdf), np.abs((i - 1) / n - cdf))))


@dataclass(frozen=True)
class NormalityReport:
    wasserstein_1: float
    kolmogorov: float
    sample_mean: float
    sample_var: float
    sample_skewness: float
    n: int
    intensity_multiplier: float = 1.0
    log_intensity: float = math.nan

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def normality_report(sample: EmpiricalSample, **extra) -> NormalityReport:
    x = sample.values
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if sample.n > 1 else math.nan
    centered = x - mean
    m2 = float(np.mean(centered ** 2))
    skew = float(np.mean(centered ** 3) / m2 ** 1.5) if m2 > 0 else math.nan
    return NormalityReport(
        wasserstein_to_standard_normal(sample), kolmogorov_to_standard_normal(sample), mean, var, skew, sample.n, **extra
    )


def clt_ladder(
    base: ModelParams,
    lambda_multipliers: Sequence[float],
    replications: int,
    master_seed: int,
    threads: int = 1,
    quadrature_tol: float = moments.DEFAULT_QUADRATURE_TOL,
    max_expected: float | None = None,
) -> list[NormalityReport]:
    """Simulate and diagnose the standardized count at ``m * lambda`` for each multiplier.

    Rung ``k`` uses streams ``k * replications .. (k+1) * replications - 1``
    and standardizes with the exact mean and variance.
    """
    if not lambda_multipliers:
        raise ValueError("at least one multiplier required")
    if any(m <= 0 for m in lambda_multipliers):
        raise ValueError("multipliers must be positive")
    if any(b <= a for a, b in zip(lambda_multipliers, lambda_multipliers[1:])):
        raise ValueError("multipliers must be ascending")
    extra = {} if max_expected is None else {"max_expected": max_expected}
    reports = []
    for k, m in enumerate(lambda_multipliers):
        params = base.with_intensity(base.intensity * m)
        results = run_replications(params, replications, master_seed, first_stream=k * replications,
                                   threads=threads, **extra)
        mean = float(moments.exact_mean(params))
        sd = math.sqrt(float(moments.variance_exact(params, quadrature_tol)))
        sample = standardize(edge_counts(results), mean, sd, Standardization.EXACT,
                             {"multiplier": m, "master_seed": master_seed})
        reports.append(normality_report(sample, intensity_multiplier=float(m),
                                        log_intensity=params.intensity.log()))
    return reports
