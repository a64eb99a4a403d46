import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from rggclt import moments
from rggclt.edge_count import first_difference
from rggclt.model import ModelParams
from rggclt.numerics import LogValue, log_unit_ball_volume
from rggclt.point_process import derive_stream, sample_configuration
from rggclt.simulation import edge_counts, run_replications

P = ModelParams.create(3, 0.4, 5.0)
KAPPA3 = 4 * math.pi / 3
U3 = 5 * KAPPA3 * 0.4 ** 3


def lens3(r1, r2, c):
    if c >= r1 + r2:
        return 0.0
    if c <= abs(r1 - r2):
        return 4 / 3 * math.pi * min(r1, r2) ** 3
    return math.pi * (r1 + r2 - c) ** 2 * (c * c + 2 * c * (r1 + r2) - 3 * (r1 - r2) ** 2) / (12 * c)


def a_one_3d(r, lam=5.0, delta=0.4):
    return lam * lens3(delta, 2.0, 2.0 * r)


def int_a_one_sq_3d(lam=5.0, delta=0.4):
    """Independent oracle: scipy quad over the closed-form 3-d lens."""
    r_in, r_out = 1 - delta / 2, 1 + delta / 2
    inner = a_one_3d(0.0, lam, delta) ** 2 * KAPPA3 * r_in ** 3
    band, _ = sp_integrate.quad(lambda r: 4 * math.pi * r * r * a_one_3d(r, lam, delta) ** 2, r_in, r_out,
                                epsabs=0, epsrel=1e-13, limit=200)
    return lam * (inner + band)


def random_params(rng, d_max=30):
    d = int(rng.integers(1, d_max + 1))
    delta = float(rng.uniform(0.01, 1.9))
    log_u = rng.uniform(-6, 6)
    log_lam = log_u - log_unit_ball_volume(d).log_abs - d * math.log(delta)
    return ModelParams(d, delta, LogValue(1, log_lam))


class TestMean:
    def test_value(self):
        expected = 0.5 * KAPPA3 ** 2 * 25 * 0.064
        assert float(moments.exact_mean(P)) == pytest.approx(expected, rel=1e-14)
        assert float(moments.exact_mean(P)) == pytest.approx(14.0368, abs=1e-4)

    def test_zero_intensity(self):
        assert moments.exact_mean(P.with_intensity(LogValue.zero())).is_zero

    def test_scaling(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = random_params(rng, 200)
            c = float(np.exp(rng.uniform(-5, 5)))
            q = p.with_intensity(p.intensity * c)
            assert moments.exact_mean(q).log_abs - moments.exact_mean(p).log_abs == pytest.approx(
                2 * math.log(c), abs=1e-10)
            assert moments._cubic_term(q).log_abs - moments._cubic_term(p).log_abs == pytest.approx(
                3 * math.log(c), abs=1e-10)

    def test_mecke_ordered_pairs(self):
        """E sum over ordered distinct pairs of h = 2 E[E]."""
        counts = edge_counts(run_replications(P, 3000, master_seed=21))
        ordered = 2 * counts
        se = ordered.std(ddof=1) / math.sqrt(len(ordered))
        assert abs(ordered.mean() - 2 * float(moments.exact_mean(P))) < 3 * se


class TestAOne:
    def test_origin(self):
        assert float(moments.a_one(0.0, P)) == pytest.approx(U3, rel=1e-13)
        assert float(moments.a_one(0.0, P)) == pytest.approx(1.34042, abs=1e-5)

    def test_outside_support(self):
        assert moments.a_one(1.3, P).is_zero
        assert moments.a_one(1.2000001, P).is_zero

    def test_against_lens_formula(self):
        for r in np.linspace(0, 1.25, 60):
            assert float(moments.a_one(r, P)) == pytest.approx(a_one_3d(r), rel=1e-11, abs=1e-15)
        assert float(moments.a_one(1.0, P)) == pytest.approx(0.6199409503083853, rel=1e-12)

    def test_r1_hit_or_miss(self):
        """Hit-or-miss MC of B(x, 0.4) cap B(-x, 2) at |x| = 1, 10^6 samples."""
        rng = np.random.default_rng(1)
        n = 1_000_000
        g = rng.standard_normal((n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        pts = g * (0.4 * rng.random(n) ** (1 / 3))[:, None]
        pts[:, 0] += 2.0  # y - (-x) for y uniform in B(x, 0.4), x = e1
        hit = np.einsum("ij,ij->i", pts, pts) <= 4.0
        vol = KAPPA3 * 0.4 ** 3
        est = 5 * vol * hit.mean()
        se = 5 * vol * math.sqrt(hit.mean() * (1 - hit.mean()) / n)
        exact = float(moments.a_one(1.0, P))
        assert 0 < exact < U3
        assert abs(est - exact) < 4 * se

    def test_sandwich(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = random_params(rng)
            r = float(rng.uniform(0, 1 + p.delta))
            a = float(moments.a_one(r, p)) / float(p.u)
            lo = 1.0 if r <= 1 - p.delta / 2 else 0.0
            hi = 1.0 if r <= 1 + p.delta / 2 else 0.0
            assert lo - 1e-12 <= a <= hi + 1e-12

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            moments.a_one(-0.1, P)


class TestVariance:
    def test_frozen_oracle(self):
        oracle = 14.036770703771534 + int_a_one_sq_3d()
        assert oracle == pytest.approx(45.88978494300768, rel=1e-13)
        assert float(moments.variance_exact(P)) == pytest.approx(oracle, rel=1e-9)
        assert float(moments.integral_a_one_squared(P)) == pytest.approx(31.853014239236153, rel=1e-9)

    def test_other_delta_against_oracle(self):
        for lam, delta in [(2.0, 0.1), (40.0, 0.9), (0.7, 1.5)]:
            p = ModelParams.create(3, delta, lam)
            assert float(moments.integral_a_one_squared(p)) == pytest.approx(int_a_one_sq_3d(lam, delta), rel=1e-8)

    def test_bounds_values(self):
        lo, hi = moments.variance_bounds(P)
        k = KAPPA3 ** 3 * 125 * 0.4 ** 6
        assert k == pytest.approx(37.630, abs=1e-3)
        assert float(lo) == pytest.approx(14.036770703771534 + 0.8 ** 3 * k, rel=1e-13)
        assert float(hi) == pytest.approx(14.036770703771534 + 1.2 ** 3 * k, rel=1e-13)
        assert float(lo) == pytest.approx(33.30, abs=0.01)
        assert float(hi) == pytest.approx(79.07, abs=0.01)

    def test_bounds_zero(self):
        lo, hi = moments.variance_bounds(P.with_intensity(LogValue.zero()))
        assert lo.is_zero and hi.is_zero

    def test_containment_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = random_params(rng)
            lo, hi = moments.variance_bounds(p)
            v = moments.variance_exact(p)
            assert lo <= v * (1 + 1e-9)
            assert v <= hi * (1 + 1e-9)
            assert lo <= hi

    def test_small_intensity_poisson_limit(self):
        p = P.with_intensity(LogValue.from_float(0.01))
        ratio = float(moments.variance_exact(p) / moments.exact_mean(p))
        assert ratio == pytest.approx(1.0, abs=0.01)

    def test_lower_bound_warns_for_large_delta(self):
        p = ModelParams.create(3, 2.5, 1.0)
        with pytest.warns(moments.BoundValidityWarning):
            lo, _ = moments.variance_bounds(p)
        assert lo == moments.exact_mean(p)

    @pytest.mark.parametrize("d", [100, 200, 500])
    def test_high_dimension_finite(self, d):
        for u in (1 / d, 1.0, float(d)):
            p = ModelParams.create(d, 1 / d, 1.0).with_intensity(
                LogValue(1, math.log(u) - log_unit_ball_volume(d).log_abs + d * math.log(d)))
            rep = moments.moment_report(p)
            for v in (rep.mean, rep.variance_exact, rep.variance_lower, rep.variance_upper):
                assert v.sign == 1 and math.isfinite(v.log_abs)
            assert rep.variance_lower <= rep.variance_exact <= rep.variance_upper


class TestPolynomials:
    @pytest.mark.parametrize("a, p, t", [(0, 0, 0), (1, 15, 5), (2, 94, 22)])
    def test_values(self, a, p, t):
        assert float(moments.p_polynomial(a)) == pytest.approx(p, rel=1e-14)
        assert float(moments.fourth_moment(a)) == pytest.approx(p, rel=1e-14)
        assert float(moments.third_abs_moment(a)) == pytest.approx(t, rel=1e-14)

    def test_origin_values(self):
        assert float(moments.third_abs_moment(U3)) == pytest.approx(9.139, abs=1e-3)
        assert float(moments.p_polynomial(U3)) == pytest.approx(31.60, abs=1e-2)

    def test_poisson_moment_identities(self):
        """For D ~ Poisson(a): E D^3 = a^3 + 3a^2 + a and E D^4 = a^4 + 6a^3 + 7a^2 + a."""
        from scipy.stats import poisson
        for a in (0.1, 1.34, 7.5):
            assert float(moments.third_abs_moment(a)) == pytest.approx(poisson.moment(3, a), rel=1e-12)
            assert float(moments.p_polynomial(a)) == pytest.approx(poisson.moment(4, a), rel=1e-12)

    def test_vectorized_matches_scalar(self):
        la = np.linspace(-20, 20, 41)
        for x, lp, lt in zip(la, moments.log_p_polynomial_array(la), moments.log_third_moment_array(la)):
            assert lp == pytest.approx(moments.p_polynomial(LogValue(1, x)).log_abs, abs=1e-12)
            assert lt == pytest.approx(moments.third_abs_moment(LogValue(1, x)).log_abs, abs=1e-12)
        assert moments.log_p_polynomial_array(np.array([-np.inf]))[0] == -np.inf

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            moments.p_polynomial(-1.0)


class TestIntegrabilityRatio:
    def test_value(self):
        expected = 1 + 1 / (1 + 2 * 0.512 * U3)
        assert moments.integrability_ratio_upper(P) == pytest.approx(expected, rel=1e-13)
        assert moments.integrability_ratio_upper(P) == pytest.approx(1.4215, abs=1e-4)

    def test_limits(self):
        assert moments.integrability_ratio_upper(P.with_intensity(LogValue.zero())) == 2.0
        tiny = P.with_intensity(LogValue(1, -700.0))
        assert moments.integrability_ratio_upper(tiny) == pytest.approx(2.0, abs=1e-12)
        with pytest.raises(ValueError):
            moments.integrability_ratio_upper(ModelParams.create(3, 2.0, 1.0))

    def test_range(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            r = moments.integrability_ratio_upper(random_params(rng, 300))
            assert 1.0 < r <= 2.0


def test_difference_moments_at_origin_small_mc():
    """E D_0 F = A_1(0); lighter version of the full acceptance check."""
    n = 2000
    d0 = np.array([first_difference(sample_configuration(P, 1.2, derive_stream(4, k)), np.zeros(3), 0.4)
                   for k in range(n)], dtype=float)
    assert abs(d0.mean() - U3) < 3 * d0.std(ddof=1) / math.sqrt(n)
