"""Normal-approximation terms gamma_1..3, the Wasserstein bound and rates.

Rates returned here omit the unspecified absolute constants; they are rate
*shapes* only.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import moments
from .edge_count import _qualifying
from .model import ModelParams, Regime, RegimeClassification
from .numerics import LogValue, log_unit_ball_volume
from .point_process import RngStream, uniform_in_ball

MC_BLOCK = 1 << 14
RATE_NOTE = "modulo an unspecified absolute constant"


class SigmaMode(str, enum.Enum):
    EXACT = "exact"
    LOWER_BOUND = "lower_bound"


def _check_sigma(sigma_sq: LogValue) -> LogValue:
    sigma_sq = LogValue.coerce(sigma_sq)
    if sigma_sq.sign <= 0:
        raise ValueError("sigma_sq must be positive")
    return sigma_sq


def gamma_upper(params: ModelParams, sigma_sq: LogValue) -> tuple[LogValue, LogValue, LogValue]:
    """Closed-form upper bounds on gamma_1, gamma_2, gamma_3.

    With ``u = kappa lambda delta**d``, ``s = sigma**2``, ``c = (1 + delta/2)**d``
    and ``K = kappa**3 lambda**3 delta**(2d)``::

        gamma_1 <= s**-2 K c sqrt(u**4 + 6u**3 + 7u**2 + u)
        gamma_2 <= s**-2 K c
        gamma_3 <= s**-1.5 kappa lambda c (u**3 + 3u**2 + u)
    """
    if params.intensity.is_zero:
        z = LogValue.zero()
        return z, z, z
    s = _check_sigma(sigma_sq)
    u = params.u
    c_plus = LogValue(1, params.dimension * math.log1p(params.delta / 2.0))
    k = params.kappa_lambda * u ** 2
    g2 = k * c_plus / s ** 2
    g1 = g2 * moments.p_polynomial(u).sqrt()
    g3 = params.kappa_lambda * c_plus * moments.third_abs_moment(u) / s ** 1.5
    return g1, g2, g3


def gamma_quadrature(
    params: ModelParams, sigma_sq: LogValue, tol: float = moments.DEFAULT_QUADRATURE_TOL
) -> tuple[LogValue, LogValue]:
    """Exact gamma_2 and gamma_3 for the indicator kernel.

    The double integral of ``B_{2,2}`` collapses to ``int A_1**2 dLambda``,
    so both terms reduce to radial integrals.
    """
    if params.intensity.is_zero:
        return LogValue.zero(), LogValue.zero()
    s = _check_sigma(sigma_sq)
    log_j1, log_j2, log_j3 = moments.radial_moment_logs(params.dimension, params.delta, tol)
    kl, u = params.kappa_lambda, params.u
    int_a2 = kl * u ** 2 * LogValue(1, log_j2)
    int_third = kl * (u ** 3 * LogValue(1, log_j3) + 3 * u ** 2 * LogValue(1, log_j2) + u * LogValue(1, log_j1))
    return int_a2 / s ** 2, int_third / s ** 1.5


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    standard_error: float


def _gamma_mc_block(params: ModelParams, stream: RngStream, n: int) -> np.ndarray:
    """Per-sample log-integrands ``(g1, g2, g3)`` before the volume weights.

    Every factor contains ``h`` or ``A_1``, both of which vanish unless all
    points lie in ``B(0, 1 + delta/2)``, so sampling that ball is exact.
    """
    d, delta = params.dimension, params.delta
    radius = 1.0 + delta / 2.0
    rng = stream.generator
    x1 = uniform_in_ball(rng, n, d, radius)
    x2 = uniform_in_ball(rng, n, d, radius)
    x3 = uniform_in_ball(rng, n, d, radius)
    pts = np.vstack([x1, x2, x3])
    idx = np.arange(n)
    both = _qualifying(pts, idx, idx + 2 * n, delta) & _qualifying(pts, idx + n, idx + 2 * n, delta)

    log_u = params.u.log()
    out = np.full((3, n), -np.inf)
    out[1, both] = 0.0
    if both.any():
        r1 = np.sqrt(np.einsum("ij,ij->i", x1[both], x1[both]))
        r2 = np.sqrt(np.einsum("ij,ij->i", x2[both], x2[both]))
        lp1 = moments.log_p_polynomial_array(log_u + moments.log_a_one_fraction(r1, d, delta))
        lp2 = moments.log_p_polynomial_array(log_u + moments.log_a_one_fraction(r2, d, delta))
        out[0, both] = 0.25 * (lp1 + lp2)
    r = np.sqrt(np.einsum("ij,ij->i", x1, x1))
    out[2] = moments.log_third_moment_array(log_u + moments.log_a_one_fraction(r, d, delta))
    return out


def _log_mean_and_se(log_w: np.ndarray) -> tuple[float, float]:
    """Log of the sample mean and of its standard error, computed after shifting."""
    finite = np.isfinite(log_w)
    if not finite.any():
        return -math.inf, -math.inf
    shift = float(log_w[finite].max())
    w = np.exp(log_w - shift)
    n = w.shape[0]
    mean = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    log_se = math.log(se) + shift if se > 0 else -math.inf
    return math.log(mean) + shift, log_se


def gamma_mc(
    params: ModelParams,
    sigma_sq: LogValue,
    stream: RngStream,
    n_samples: int,
    threads: int = 1,
) -> tuple[McEstimate, McEstimate, McEstimate]:
    """Plain Monte-Carlo estimates of gamma_1..3 from their integral forms.

    Draws ``(x1, x2, x3)`` uniformly in ``B(0, 1 + delta/2)`` and weights each
    k-fold integral by ``(lambda V)**k``. Blocks use child streams of
    ``stream`` and are combined in block order, so results do not depend on
    ``threads``.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if params.intensity.is_zero:
        zero = McEstimate(0.0, 0.0)
        return zero, zero, zero
    s = _check_sigma(sigma_sq)
    sizes = [MC_BLOCK] * (n_samples // MC_BLOCK)
    if n_samples % MC_BLOCK:
        sizes.append(n_samples % MC_BLOCK)

    def run(k):
        return _gamma_mc_block(params, stream.spawn(k), sizes[k])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(k) for k in range(len(sizes))]
    log_w = np.concatenate(blocks, axis=1)

    d = params.dimension
    log_lv = params.intensity.log() + log_unit_ball_volume(d).log_abs + d * math.log1p(params.delta / 2.0)
    log_s = s.log_abs
    scale = (3 * log_lv - 2 * log_s, 3 * log_lv - 2 * log_s, log_lv - 1.5 * log_s)
    out = []
    for k in range(3):
        lm, lse = _log_mean_and_se(log_w[k])
        out.append(McEstimate(_exp(lm + scale[k]), _exp(lse + scale[k])))
    return tuple(out)


def _exp(x: float) -> float:
    if x == -math.inf:
        return 0.0
    return math.exp(x) if x < 709.78 else math.inf


def wasserstein_upper(g: Sequence[LogValue]) -> LogValue:
    """``2 sqrt(gamma_1) + sqrt(gamma_2) + gamma_3``."""
    g1, g2, g3 = (LogValue.coerce(x) for x in g)
    if min(g1.sign, g2.sign, g3.sign) < 0:
        raise ValueError("gamma terms must be non-negative")
    return 2 * g1.sqrt() + g2.sqrt() + g3


def theorem_rate(params: ModelParams) -> LogValue:
    """``(kappa lambda)**-1/2 * max(1, u**-1/2)``."""
    if params.intensity.is_zero:
        raise ValueError("rate undefined for zero intensity")
    base = params.kappa_lambda ** -0.5
    u = params.u
    return base * u ** -0.5 if u < 1 else base


def regime_rate(params_sequence: Sequence[ModelParams], regime: Regime | RegimeClassification) -> list[LogValue]:
    """Leading rate term for a classified schedule.

    ``(kappa lambda)**-1/2`` in the diverging and convergent regimes,
    ``(kappa lambda)**-1/2 u**-1/2`` in the vanishing one; an undetermined
    regime falls back to :func:`theorem_rate`.
    """
    if not params_sequence:
        raise ValueError("params_sequence must be non-empty")
    if isinstance(regime, RegimeClassification):
        regime = regime.regime
    regime = Regime(regime)
    out = []
    for p in params_sequence:
        base = p.kappa_lambda ** -0.5
        if regime in (Regime.DIVERGING, Regime.CONVERGENT_POSITIVE):
            out.append(base)
        elif regime is Regime.VANISHING:
            out.append(base * p.u ** -0.5)
        else:
            out.append(theorem_rate(p))
    return out


@dataclass(frozen=True)
class GammaReport:
    gamma_upper: tuple[LogValue, LogValue, LogValue]
    gamma_quadrature: tuple[LogValue, LogValue]
    gamma_mc: tuple[McEstimate, McEstimate, McEstimate] | None
    sigma_sq_used: LogValue
    sigma_mode: SigmaMode
    wasserstein_bound: LogValue
    theorem_rate: LogValue
    rate_note: str = RATE_NOTE

    def to_dict(self) -> dict:
        return {
            "gamma_upper": [g.to_dict() for g in self.gamma_upper],
            "gamma_quadrature": [g.to_dict() for g in self.gamma_quadrature],
            "gamma_mc": None if self.gamma_mc is None else [
                {"estimate": m.estimate, "standard_error": m.standard_error} for m in self.gamma_mc
            ],
            "sigma_sq_used": self.sigma_sq_used.to_dict(),
            "sigma_mode": self.sigma_mode.value,
            "wasserstein_bound": self.wasserstein_bound.to_dict(),
            "theorem_rate": self.theorem_rate.to_dict(),
            "rate_note": self.rate_note,
        }


def gamma_report(
    params: ModelParams,
    sigma_mode: SigmaMode | str = SigmaMode.EXACT,
    stream: RngStream | None = None,
    n_samples: int = 100_000,
    tol: float = moments.DEFAULT_QUADRATURE_TOL,
    threads: int = 1,
) -> GammaReport:
    """All gamma quantities at one parameter point; MC is skipped without a stream.

    The Wasserstein bound is built from the closed-form upper bounds.
    """
    sigma_mode = SigmaMode(sigma_mode)
    if sigma_mode is SigmaMode.EXACT:
        s = moments.variance_exact(params, tol)
    else:
        s = moments.variance_bounds(params)[0]
    upper = gamma_upper(params, s)
    quad = gamma_quadrature(params, s, tol)
    mc = gamma_mc(params, s, stream, n_samples, threads) if stream is not None else None
    return GammaReport(upper, quad, mc, s, sigma_mode, wasserstein_upper(upper), theorem_rate(params))
