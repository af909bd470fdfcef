import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from hilbert_diffuse import (
    CovarianceSpectrum,
    GridError,
    PreconditionError,
    WienerConfig,
    empirical_covariance,
    gaussian_ball_hit,
    sample_increment,
    wilson_interval,
)
from hilbert_diffuse.q_wiener import (
    gaussian_box_log_lower_bound,
    gaussian_quadratic_cdf,
    sample_paths,
    standard_normals,
    stream_generator,
)


def _var_within(x, expected, k=3.0):
    """Sample variance of ``x`` against ``expected`` using the normal-theory standard error."""
    n = x.size
    v = x.var(ddof=1)
    se = expected * np.sqrt(2.0 / (n - 1))
    return abs(v - expected) <= k * se


class TestStreams:
    def test_reproducible(self):
        a = standard_normals(7, [3, 4], 5, 2)
        b = standard_normals(7, [3, 4], 5, 2)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = standard_normals(7, [0, 1], 3, 2)
        assert not np.array_equal(a[0], a[1])

    def test_substreams_differ(self):
        x = stream_generator(1, 0, 0).standard_normal(4)
        y = stream_generator(1, 0, 1).standard_normal(4)
        assert not np.array_equal(x, y)

    def test_order_is_step_major(self):
        z = standard_normals(11, [2], 3, 4)[0]
        flat = stream_generator(11, 2).standard_normal(12)
        np.testing.assert_array_equal(z.ravel(), flat)

    def test_large_seed(self):
        z = standard_normals(2**64 - 1, [2**63], 1, 1)
        assert np.isfinite(z).all()


class TestSampleIncrement:
    def test_rejects_nonpositive_dt(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 2))
        with pytest.raises(PreconditionError):
            sample_increment(cfg, 0.0)
        with pytest.raises(PreconditionError):
            sample_increment(cfg, -1.0)

    def test_unit_variance_first_mode(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("geom2", 3), seed=5)
        dw = sample_increment(cfg, 1.0, n=100_000)
        assert _var_within(dw[:, 0], 1.0)

    def test_second_mode_scaled(self):
        # q_2 = 0.5, dt = 2 gives variance 1
        cfg = WienerConfig(CovarianceSpectrum.preset("geom2", 3), seed=6)
        dw = sample_increment(cfg, 2.0, n=100_000)
        assert _var_within(dw[:, 1], 1.0)

    def test_variance_vanishes_linearly(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 2), seed=8)
        v = [sample_increment(cfg, dt, n=20_000)[:, 0].var() / dt for dt in (1e-2, 1e-4, 1e-6)]
        np.testing.assert_allclose(v, 1.0, rtol=0.05)

    def test_scaling_ratio_four(self):
        sp = CovarianceSpectrum.preset("poly2", 4)
        a = sample_increment(WienerConfig(sp, 1), 0.01, n=100_000).var(axis=0)
        b = sample_increment(WienerConfig(sp, 2), 0.04, n=100_000).var(axis=0)
        np.testing.assert_allclose(b / a, 4.0, rtol=0.05)

    def test_consecutive_increments_uncorrelated(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 2), seed=3)
        x = sample_increment(cfg, 0.1, n=100_000, step=0)[:, 0]
        y = sample_increment(cfg, 0.1, n=100_000, step=1)[:, 0]
        r = np.corrcoef(x, y)[0, 1]
        assert abs(r) < 4 / np.sqrt(x.size)

    def test_bitwise_reproducible(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 3), seed=99, stream_id=12)
        np.testing.assert_array_equal(sample_increment(cfg, 0.3, 5), sample_increment(cfg, 0.3, 5))


@pytest.fixture(scope="module")
def paths():
    sp = CovarianceSpectrum.preset("geom2", 3)
    return sample_paths(sp, 2.0, 0.5, 40_000, seed=21)


class TestEmpiricalCovariance:
    def test_orthogonal_modes(self, paths):
        est = empirical_covariance(paths, 1.0, 1.0, [1, 0, 0], [0, 1, 0])
        assert est.expected == 0.0
        assert abs(est.value) <= 3 * est.stderr

    def test_first_mode(self, paths):
        est = empirical_covariance(paths, 1.0, 1.0, [1, 0, 0], [1, 0, 0])
        assert est.expected == 1.0
        assert abs(est.value - 1.0) <= 3 * est.stderr

    def test_min_of_times(self, paths):
        est = empirical_covariance(paths, 2.0, 1.0, [0, 1, 0], [0, 1, 0])
        assert est.expected == pytest.approx(0.5)
        assert abs(est.value - 0.5) <= 3 * est.stderr

    def test_off_grid_refused(self, paths):
        with pytest.raises(GridError):
            empirical_covariance(paths, 0.7, 1.0, [1, 0, 0], [1, 0, 0])


class TestWilson:
    def test_zero_hits_lower_bound_zero(self):
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0 and 0 < hi < 0.35

    def test_matches_closed_form(self):
        k, n, z = 37, 200, stats.norm.ppf(0.975)
        p = k / n
        centre = (p + z**2 / (2 * n)) / (1 + z**2 / n)
        half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / (1 + z**2 / n)
        np.testing.assert_allclose(wilson_interval(k, n), (centre - half, centre + half), rtol=1e-10)

    @given(n=st.integers(1, 10_000), frac=st.floats(0, 1))
    def test_interval_contains_estimate(self, n, frac):
        k = int(round(frac * n))
        lo, hi = wilson_interval(k, n)
        assert 0 <= lo <= k / n + 1e-12 and k / n - 1e-12 <= hi <= 1


class TestGaussianBallHit:
    def test_one_dimensional_value(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 1), seed=4)
        res = gaussian_ball_hit(cfg, 1.0, 1.0, 100_000)
        expected = 2 * stats.norm.cdf(1.0) - 1
        assert res.ci[0] <= expected <= res.ci[1]
        assert res.estimate == pytest.approx(0.682689, abs=0.01)

    def test_huge_radius(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 8))
        assert gaussian_ball_hit(cfg, 1.0, 100.0, 2000).estimate == 1.0

    @pytest.mark.parametrize("t", [0.01, 0.5, 2.0])
    @pytest.mark.parametrize("R", [0.2, 1.0])
    def test_lower_bound_positive(self, t, R):
        cfg = WienerConfig(CovarianceSpectrum.preset("geom2", 4), seed=10)
        assert gaussian_ball_hit(cfg, t, R, 20_000).ci[0] > 0

    def test_requires_enough_samples(self):
        cfg = WienerConfig(CovarianceSpectrum.preset("poly2", 1))
        with pytest.raises(PreconditionError):
            gaussian_ball_hit(cfg, 1.0, 1.0, 999)


class TestGaussianOracles:
    def test_imhof_central_chi2(self):
        p = gaussian_quadratic_cdf(3.0, np.ones(4), np.zeros(4))
        assert p == pytest.approx(stats.chi2.cdf(3.0, 4), abs=1e-8)

    def test_imhof_noncentral(self):
        p = gaussian_quadratic_cdf(5.0, np.ones(3), [1.0, 0.5, 0.0])
        assert p == pytest.approx(stats.ncx2.cdf(5.0, 3, 1.25), abs=1e-8)

    def test_imhof_single_mode(self):
        p = gaussian_quadratic_cdf(1.0, [1.0], [0.3])
        assert p == pytest.approx(stats.norm.cdf(0.7) - stats.norm.cdf(-1.3), abs=1e-9)

    def test_imhof_weighted_against_mc(self, rng):
        w, s = np.array([1.0, 0.3, 0.05]), np.array([0.4, -1.0, 2.0])
        z = rng.standard_normal((400_000, 3))
        mc = np.mean(((z + s) ** 2) @ w <= 1.5)
        assert gaussian_quadratic_cdf(1.5, w, s) == pytest.approx(mc, abs=4e-3)

    def test_box_bound_below_exact(self):
        q = np.array([1.0, 0.5, 0.25])
        center, std = np.array([0.3, 0.0, -0.2]), np.array([1.0, 0.8, 0.5])
        exact = gaussian_quadratic_cdf(1.0, q * std**2, center / std)
        assert np.exp(gaussian_box_log_lower_bound(center, std, q, 1.0)) <= exact

    def test_box_bound_finite_far_away(self):
        q = 2.0 ** -np.arange(8)
        lb = gaussian_box_log_lower_bound(np.r_[-30.0, np.zeros(7)], np.sqrt(q * 0.1), q, 1.0)
        assert np.isfinite(lb) and lb < -1000
