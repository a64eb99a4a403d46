"""Mean, variance and moment formulas for the edge count.

The kernel is an indicator, so every parameter integral ``A_k`` equals
``A_1``. ``A_1(x)`` depends on ``r = |x|`` only and is written as
``u * f(r)`` with ``u = kappa_d * lambda * delta**d`` and ``f`` the fraction
of ``B(x, delta)`` lying inside ``B(-x, 2)``. Radial integrals of powers of
``f`` are computed once per ``(d, delta)`` and cached.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import ModelParams
from .numerics import LogValue, ball_intersection_volume, integrate, log_intersection_over_kappa

DEFAULT_QUADRATURE_TOL = 1e-9


class BoundValidityWarning(UserWarning):
    """A paper bound was requested outside the parameter range it is stated for."""


def log_a_one_fraction(r, d: int, delta: float) -> np.ndarray:
    """Elementwise ``log f(r)`` with ``A_1 = u * f``; ``-inf`` outside the support."""
    r = np.asarray(r, dtype=float)
    return log_intersection_over_kappa(delta, 2.0, 2.0 * r, d) - d * math.log(delta)


def a_one(r: float, params: ModelParams) -> LogValue:
    """``A_1(x) = lambda * V(B(x, delta) cap B(-x, 2))`` at ``|x| = r``."""
    if not r >= 0:
        raise ValueError("r must be non-negative")
    if params.intensity.is_zero:
        return LogValue.zero()
    return params.intensity * ball_intersection_volume(params.delta, 2.0, 2.0 * r, params.dimension)


@lru_cache(maxsize=256)
def radial_moment_logs(d: int, delta: float, tol: float = DEFAULT_QUADRATURE_TOL) -> tuple[float, float, float]:
    """``log J_p`` for ``p = 1, 2, 3`` where ``J_p = d * int_0^{1+delta/2} r^(d-1) f(r)^p dr``.

    Then ``int A_1^p dLambda = lambda * kappa_d * u**p * J_p``. Inside
    ``r <= |2 - delta|/2`` the fraction ``f`` is constant and integrated in
    closed form; the band up to ``1 + delta/2`` goes to adaptive quadrature.
    """
    r_in = abs(2.0 - delta) / 2.0
    r_out = 1.0 + delta / 2.0
    log_f_in = d * (math.log(min(delta, 2.0)) - math.log(delta))
    log_r_out = math.log(r_out)

    def band(p):
        def integrand(r):
            lf = log_a_one_fraction(r, d, delta)
            return d * np.exp((d - 1) * (np.log(r) - log_r_out) + p * lf)

        val, _ = integrate(integrand, r_in, r_out, rel_tol=tol)
        return math.log(val) + (d - 1) * log_r_out if val > 0 else -math.inf

    out = []
    for p in (1, 2, 3):
        inner = d * math.log(r_in) + p * log_f_in if r_in > 0 else -math.inf
        out.append(float(np.logaddexp(inner, band(p))))
    return tuple(out)


def exact_mean(params: ModelParams) -> LogValue:
    """``E = kappa_d**2 * lambda**2 * delta**d / 2``."""
    if params.intensity.is_zero:
        return LogValue.zero()
    return LogValue(1, math.log(0.5)) * params.kappa_lambda ** 2 * params.delta_pow_d


def _cubic_term(params: ModelParams) -> LogValue:
    """``kappa_d**3 * lambda**3 * delta**(2d)``."""
    return params.kappa_lambda * params.u ** 2


def integral_a_one_squared(params: ModelParams, quadrature_tolerance: float = DEFAULT_QUADRATURE_TOL) -> LogValue:
    """``int A_1(x)**2 Lambda(dx)`` by radial quadrature."""
    if params.intensity.is_zero:
        return LogValue.zero()
    _, log_j2, _ = radial_moment_logs(params.dimension, params.delta, quadrature_tolerance)
    return _cubic_term(params) * LogValue(1, log_j2)


def variance_exact(params: ModelParams, quadrature_tolerance: float = DEFAULT_QUADRATURE_TOL) -> LogValue:
    return exact_mean(params) + integral_a_one_squared(params, quadrature_tolerance)


def variance_bounds(params: ModelParams) -> tuple[LogValue, LogValue]:
    """Lower and upper variance bounds from the sandwich on ``A_1``.

    The lower bound needs ``delta < 2``; otherwise it degrades to the mean
    (still a valid lower bound) and a :class:`BoundValidityWarning` is issued.
    """
    if params.intensity.is_zero:
        return LogValue.zero(), LogValue.zero()
    mean = exact_mean(params)
    cubic = _cubic_term(params)
    d, half = params.dimension, params.delta / 2.0
    upper = mean + cubic * LogValue(1, d * math.log1p(half))
    if half >= 1.0:
        warnings.warn("variance lower bound requires delta < 2; using the mean", BoundValidityWarning, stacklevel=2)
        return mean, upper
    lower = mean + cubic * LogValue(1, d * math.log1p(-half))
    return lower, upper


def p_polynomial(a1: LogValue | float) -> LogValue:
    """``a**4 + 6a**3 + 7a**2 + a``: the fourth-moment polynomial with all ``A_k = a``."""
    a = LogValue.coerce(a1)
    if a.sign < 0:
        raise ValueError("a1 must be non-negative")
    return a ** 4 + 6 * a ** 3 + 7 * a ** 2 + a


def third_abs_moment(a1: LogValue | float) -> LogValue:
    """``E|D_x F|**3 = a**3 + 3a**2 + a`` with all ``A_k = a``."""
    a = LogValue.coerce(a1)
    if a.sign < 0:
        raise ValueError("a1 must be non-negative")
    return a ** 3 + 3 * a ** 2 + a


def fourth_moment(a1: LogValue | float) -> LogValue:
    """``E (D_x F)**4``; same polynomial as :func:`p_polynomial`."""
    return p_polynomial(a1)


def integrability_ratio_upper(params: ModelParams) -> float:
    """Upper bound ``1 + 1/(1 + 2 (1 - delta/2)**d u)`` on the integrability ratio."""
    half = params.delta / 2.0
    if half >= 1.0:
        raise ValueError("integrability bound requires delta < 2")
    if params.intensity.is_zero:
        return 2.0
    log_term = math.log(2.0) + params.dimension * math.log1p(-half) + params.u.log()
    return 1.0 + math.exp(-float(np.logaddexp(0.0, log_term)))


def log_p_polynomial_array(log_a: np.ndarray) -> np.ndarray:
    """Vectorized ``log P(a)`` from ``log a`` (``-inf`` maps to ``-inf``)."""
    la = np.asarray(log_a, dtype=float)
    terms = np.stack([4 * la, math.log(6) + 3 * la, math.log(7) + 2 * la, la])
    return np.logaddexp.reduce(terms, axis=0)


def log_third_moment_array(log_a: np.ndarray) -> np.ndarray:
    la = np.asarray(log_a, dtype=float)
    terms = np.stack([3 * la, math.log(3) + 2 * la, la])
    return np.logaddexp.reduce(terms, axis=0)


@dataclass(frozen=True)
class MomentReport:
    mean: LogValue
    variance_exact: LogValue
    variance_lower: LogValue
    variance_upper: LogValue
    integrability_ratio_upper: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.to_dict(),
            "variance_exact": self.variance_exact.to_dict(),
            "variance_lower": self.variance_lower.to_dict(),
            "variance_upper": self.variance_upper.to_dict(),
            "integrability_ratio_upper": self.integrability_ratio_upper,
        }


def moment_report(params: ModelParams, quadrature_tolerance: float = DEFAULT_QUADRATURE_TOL) -> MomentReport:
    lo, hi = variance_bounds(params)
    ratio = integrability_ratio_upper(params) if params.delta < 2 else math.nan
    return MomentReport(exact_mean(params), variance_exact(params, quadrature_tolerance), lo, hi, ratio)
