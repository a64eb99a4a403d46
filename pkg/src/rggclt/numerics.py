"""Log-domain arithmetic and ball geometry.

Every quantity that scales like ``kappa_d``, ``delta**d`` or a matching
intensity is carried as a :class:`LogValue` so that dimensions in the
hundreds neither overflow nor underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

Number = Union[int, float]

# Stopping rule for the continued fraction; gives an absolute error on the
# regularized incomplete beta well below BETAINC_ABS_TOL.
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAXIT = 20000
BETAINC_ABS_TOL = 1e-12


@total_ordering
@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log_abs)``.

    ``sign == 0`` is an exact zero and is never encoded as a huge negative
    logarithm.
    """

    sign: int
    log_abs: float = 0.0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if self.sign == 0:
            object.__setattr__(self, "log_abs", 0.0)
            return
        la = float(self.log_abs)
        if math.isnan(la) or la == math.inf:
            raise ValueError(f"log magnitude must be finite, got {la}")
        if la == -math.inf:
            object.__setattr__(self, "sign", 0)
            la = 0.0
        object.__setattr__(self, "log_abs", la)

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls) -> LogValue:
        return cls(0, 0.0)

    @classmethod
    def from_log(cls, log_abs: float, sign: int = 1) -> LogValue:
        return cls(sign, log_abs)

    @classmethod
    def from_float(cls, x: Number) -> LogValue:
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            raise ValueError(f"cannot represent {x} as a LogValue")
        if x == 0.0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def coerce(cls, x: LogValue | Number) -> LogValue:
        if isinstance(x, LogValue):
            return x
        return cls.from_float(x)

    # conversion ---------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_abs > 709.782712893384:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs)

    def log(self) -> float:
        """Natural log of a positive value (``-inf`` for exact zero)."""
        if self.sign < 0:
            raise ValueError("log of a negative LogValue")
        return -math.inf if self.sign == 0 else self.log_abs

    # arithmetic ---------------------------------------------------------
    def __neg__(self) -> LogValue:
        return LogValue(-self.sign, self.log_abs)

    def __abs__(self) -> LogValue:
        return LogValue(abs(self.sign), self.log_abs)

    def __mul__(self, other: LogValue | Number) -> LogValue:
        other = LogValue.coerce(other)
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log_abs + other.log_abs)

    __rmul__ = __mul__

    def __truediv__(self, other: LogValue | Number) -> LogValue:
        other = LogValue.coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogValue division by exact zero")
        if self.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log_abs - other.log_abs)

    def __rtruediv__(self, other: Number) -> LogValue:
        return LogValue.coerce(other) / self

    def __pow__(self, p: Number) -> LogValue:
        p = float(p)
        if self.sign == 0:
            if p > 0:
                return LogValue.zero()
            raise ZeroDivisionError("zero raised to a non-positive power")
        if self.sign < 0:
            if not float(p).is_integer():
                raise ValueError("fractional power of a negative LogValue")
            sign = -1 if int(p) % 2 else 1
            return LogValue(sign, p * self.log_abs)
        return LogValue(1, p * self.log_abs)

    def sqrt(self) -> LogValue:
        return self ** 0.5

    def __add__(self, other: LogValue | Number) -> LogValue:
        other = LogValue.coerce(other)
        if other.sign == 0:
            return self
        if self.sign == 0:
            return other
        a, b = self, other
        if b.log_abs > a.log_abs:
            a, b = b, a
        diff = b.log_abs - a.log_abs  # <= 0
        if a.sign == b.sign:
            return LogValue(a.sign, a.log_abs + math.log1p(math.exp(diff)))
        if diff == 0.0:
            return LogValue.zero()
        return LogValue(a.sign, a.log_abs + math.log1p(-math.exp(diff)))

    __radd__ = __add__

    def __sub__(self, other: LogValue | Number) -> LogValue:
        return self + (-LogValue.coerce(other))

    def __rsub__(self, other: Number) -> LogValue:
        return LogValue.coerce(other) - self

    # ordering (as reals) ------------------------------------------------
    def __lt__(self, other: LogValue | Number) -> bool:
        other = LogValue.coerce(other)
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        if self.sign > 0:
            return self.log_abs < other.log_abs
        return self.log_abs > other.log_abs

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = LogValue.from_float(other)
        if not isinstance(other, LogValue):
            return NotImplemented
        return self.sign == other.sign and self.log_abs == other.log_abs

    def __hash__(self) -> int:
        return hash((self.sign, self.log_abs))

    def is_finite(self) -> bool:
        return self.sign == 0 or math.isfinite(self.log_abs)

    def to_dict(self) -> dict:
        return {"sign": self.sign, "log_abs": self.log_abs, "value": float(self)}

    def __repr__(self) -> str:
        if self.sign == 0:
            return "LogValue(0)"
        return f"LogValue({'-' if self.sign < 0 else '+'}exp({self.log_abs:.12g}))"


def log_sum(values: list[LogValue]) -> LogValue:
    total = LogValue.zero()
    for v in values:
        total = total + v
    return total


# ---------------------------------------------------------------------------
# ball volumes


def _check_dimension(d) -> int:
    if isinstance(d, bool) or int(d) != d:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return d


def log_unit_ball_volume(d: int) -> LogValue:
    """``log kappa_d`` with ``kappa_d = pi**(d/2) / Gamma(1 + d/2)``."""
    d = _check_dimension(d)
    return LogValue(1, 0.5 * d * math.log(math.pi) - math.lgamma(1.0 + 0.5 * d))


def log_ball_volume(radius: float, d: int) -> LogValue:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return LogValue.zero()
    return log_unit_ball_volume(d) * LogValue(1, d * math.log(radius))


# ---------------------------------------------------------------------------
# regularized incomplete beta, log domain


def _betacf(a, b, x):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def log_betainc(a: float, b: float, x):
    """Log of the regularized incomplete beta ``I_x(a, b)``, elementwise in x.

    Returns ``-inf`` where ``I_x = 0`` (x <= 0). Accurate in log space even when
    ``I_x`` is far below the smallest double.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    out[lo] = -np.inf
    out[hi] = 0.0
    mid = ~(lo | hi)
    if mid.any():
        xm = x[mid]
        lbeta = gammaln(a + b) - gammaln(a) - gammaln(b)
        direct = xm < (a + 1.0) / (a + b + 2.0)
        res = np.empty_like(xm)
        if direct.any():
            xd = xm[direct]
            cf = _betacf(a, b, xd)
            res[direct] = lbeta + a * np.log(xd) + b * np.log1p(-xd) + np.log(cf) - math.log(a)
        if (~direct).any():
            xc = xm[~direct]
            cf = _betacf(b, a, 1.0 - xc)
            log_comp = lbeta + a * np.log(xc) + b * np.log1p(-xc) + np.log(cf) - math.log(b)
            res[~direct] = np.log1p(-np.exp(log_comp))
        out[mid] = res
    return out


# ---------------------------------------------------------------------------
# caps and two-ball intersections


def log_cap_fraction(height, radius, d: int):
    """Log of (cap volume) / (ball volume) for a cap cut at signed distance
    ``height`` from the centre (``-radius <= height <= radius``).

    A negative height means the cutting hyperplane lies behind the centre, so
    the "cap" is the full ball minus the opposite cap.
    """
    height = np.asarray(height, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), height.shape)
    h = np.abs(height)
    # 1 - (h/r)^2 written to avoid cancellation near h = r
    x = np.clip((radius - h) * (radius + h) / (radius * radius), 0.0, 1.0)
    log_half_i = math.log(0.5) + log_betainc(0.5 * (d + 1), 0.5, x)
    return np.where(height >= 0, log_half_i, np.log1p(-np.exp(log_half_i)))


def _radical_distance(r_i, r_j, c):
    return (c * c + r_i * r_i - r_j * r_j) / (2.0 * c)


def log_intersection_over_kappa(r_a, r_b, c, d: int):
    """Elementwise ``log(V(B_{r_a} cap B_{r_b}) / kappa_d)`` with centres ``c`` apart.

    Exact zeros come back as ``-inf``.
    """
    d = _check_dimension(d)
    r_a, r_b, c = np.broadcast_arrays(
        np.asarray(r_a, dtype=float), np.asarray(r_b, dtype=float), np.asarray(c, dtype=float)
    )
    out = np.full(c.shape, -np.inf)
    r_min = np.minimum(r_a, r_b)
    contained = c <= np.abs(r_a - r_b)
    out[contained] = d * np.log(r_min[contained])
    lens = ~contained & (c < r_a + r_b)
    if lens.any():
        ra, rb, cc = r_a[lens], r_b[lens], c[lens]
        ha = _radical_distance(ra, rb, cc)
        hb = _radical_distance(rb, ra, cc)
        la = d * np.log(ra) + log_cap_fraction(np.clip(ha, -ra, ra), ra, d)
        lb = d * np.log(rb) + log_cap_fraction(np.clip(hb, -rb, rb), rb, d)
        out[lens] = np.logaddexp(la, lb)
    return out


def ball_intersection_volume(r_a: float, r_b: float, center_distance: float, d: int) -> LogValue:
    """Lebesgue volume of the intersection of two d-balls."""
    if not (r_a > 0 and r_b > 0):
        raise ValueError("radii must be positive")
    if not center_distance >= 0:
        raise ValueError("center distance must be non-negative")
    d = _check_dimension(d)
    if center_distance >= r_a + r_b:
        return LogValue.zero()
    rel = float(log_intersection_over_kappa(r_a, r_b, center_distance, d))
    if rel == -math.inf:
        return LogValue.zero()
    return log_unit_ball_volume(d) * LogValue(1, rel)


# ---------------------------------------------------------------------------
# adaptive Gauss-Legendre


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3g})")
        self.achieved = achieved


_GL_ORDER = 20
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def _gl(f, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rel_tol: float = 1e-9,
    abs_tol: float = 0.0,
    max_intervals: int = 4000,
) -> tuple[float, float]:
    """Adaptive Gauss-Legendre quadrature of a vectorized integrand.

    Each panel is accepted when its 20-point rule agrees with the sum of the
    rules on its two halves. Returns ``(value, error_estimate)``.
    """
    if b <= a:
        return 0.0, 0.0
    whole = _gl(f, a, b)
    stack = [(a, b, whole)]
    total = 0.0
    err = 0.0
    n_done = 0
    while stack:
        lo, hi, est = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _gl(f, lo, mid)
        right = _gl(f, mid, hi)
        refined = left + right
        diff = abs(refined - est)
        # panel budget proportional to its share of the interval
        share = (hi - lo) / (b - a)
        scale = max(abs(whole), abs(total + refined))
        if diff <= max(rel_tol * scale * share, abs_tol * share) or hi - lo < 1e-15 * (b - a):
            total += refined
            err += diff
            continue
        n_done += 1
        if n_done > max_intervals:
            achieved = (err + diff) / max(abs(total + refined), 1e-300)
            raise QuadratureError("adaptive quadrature exceeded its panel budget", achieved)
        stack.append((lo, mid, left))
        stack.append((mid, hi, right))
    return total, err
