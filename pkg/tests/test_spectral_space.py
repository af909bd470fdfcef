import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hilbert_diffuse import (
    Ball,
    ConfigurationError,
    CovarianceSpectrum,
    Ellipsoid,
    PreconditionError,
    contains,
    h_norm,
    inner_shifted,
    q_norm,
)
from hilbert_diffuse.spectral_space import (
    sample_uniform_ball,
    sample_uniform_ellipsoid,
    validate_spectrum,
)


class TestCovarianceSpectrum:
    def test_poly2_preset(self):
        sp = CovarianceSpectrum.preset("poly2", 5)
        np.testing.assert_allclose(sp.q, 1.0 / np.arange(1, 6) ** 2)
        assert sp.trace_full == pytest.approx(math.pi**2 / 6)
        assert sp.trace <= sp.trace_full

    def test_geom2_preset(self):
        sp = CovarianceSpectrum.preset("geom2", 8)
        np.testing.assert_allclose(sp.q, 2.0 ** (1 - np.arange(1, 9)))
        assert sp.trace_full == 2.0
        assert sp.tail == pytest.approx(2.0 ** (1 - 8))

    def test_custom(self):
        sp = CovarianceSpectrum.preset("custom", 0, [1, 0.5, 0.25])
        assert sp.dim == 3
        assert sp.trace == pytest.approx(1.75)
        assert sp.trace_full is None

    @pytest.mark.parametrize("q", [[0.9, 0.5], [1, 2], [1, 0.5, 0.0], [1, -0.1]])
    def test_rejects_invalid(self, q):
        with pytest.raises(ConfigurationError):
            CovarianceSpectrum(np.array(q, dtype=float))

    def test_validate_messages(self):
        assert validate_spectrum([1, 0.5, 0.25]) == []
        assert any("q_1 must equal 1" in m for m in validate_spectrum([0.9, 0.5]))

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            CovarianceSpectrum.preset("cubic", 4)


class TestNorms:
    def test_q_norm_examples(self):
        sp = CovarianceSpectrum(np.array([1.0, 0.25]))
        assert q_norm(np.zeros(2), sp) == 0.0
        assert q_norm([1.0, 0.0], sp) == 1.0
        assert q_norm([2.0, 2.0], sp) == pytest.approx(math.sqrt(5.0))

    def test_h_norm_examples(self):
        assert h_norm([0.0, 0.0]) == 0.0
        assert h_norm([3.0, 4.0]) == 5.0

    def test_dimension_mismatch(self):
        sp = CovarianceSpectrum.preset("poly2", 3)
        with pytest.raises(ConfigurationError):
            q_norm(np.ones(4), sp)

    def test_domination_many_vectors(self, preset_spectrum, rng):
        x = rng.standard_normal((100_000, preset_spectrum.dim))
        assert np.all(h_norm(x) >= q_norm(x, preset_spectrum))

    def test_equality_only_on_unit_modes(self, preset_spectrum, rng):
        e1 = np.zeros(preset_spectrum.dim)
        e1[0] = rng.standard_normal()
        assert h_norm(e1) == q_norm(e1, preset_spectrum)
        x = rng.standard_normal((1000, preset_spectrum.dim))
        assert np.all(h_norm(x) > q_norm(x, preset_spectrum))

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
    def test_domination_property(self, coords):
        sp = CovarianceSpectrum.preset("poly2", 4)
        assert h_norm(coords) >= q_norm(coords, sp)


class TestContains:
    def setup_method(self):
        self.sp = CovarianceSpectrum.preset("poly2", 3)
        self.a = np.array([0.5, -1.0, 2.0])
        self.K = Ellipsoid(self.a, 1.0, self.sp)

    def test_center(self):
        assert contains(self.K, self.a)

    def test_boundary_is_closed(self):
        # x - a = 2 e_2 has Q-norm exactly 1 since q_2 = 1/4
        assert contains(self.K, self.a + np.array([0.0, 2.0, 0.0]))
        assert contains(self.K, self.a + np.array([1.0, 0.0, 0.0]))

    def test_just_outside(self):
        assert not contains(self.K, self.a + np.array([1.0 + 1e-6, 0.0, 0.0]))

    def test_vectorized(self):
        x = np.stack([self.a, self.a + 10.0])
        np.testing.assert_array_equal(contains(self.K, x), [True, False])

    def test_ball_inside_ellipsoid(self, preset_spectrum, rng):
        a = rng.standard_normal(preset_spectrum.dim)
        B = Ball(a, 0.7)
        K = Ellipsoid(a, 0.7, preset_spectrum)
        x = sample_uniform_ball(B, 10_000, rng)
        assert np.all(B.contains(x))
        assert np.all(contains(K, x))


class TestInnerShifted:
    def test_half_radius_shift(self, rng):
        sp = CovarianceSpectrum.preset("poly2", 6)
        K = Ellipsoid(np.zeros(6), 1.0, sp)
        inner = inner_shifted(K, 0.5)
        assert inner.radius == 0.5
        np.testing.assert_array_equal(inner.center, [0.5, 0, 0, 0, 0, 0])
        x = sample_uniform_ellipsoid(inner, 10_000, rng)
        assert np.all(contains(inner, x))
        assert np.all(contains(K, x))

    def test_zero_shift_nested(self):
        sp = CovarianceSpectrum.preset("geom2", 3)
        K = Ellipsoid(np.ones(3), 2.0, sp)
        inner = inner_shifted(K, 0.0)
        np.testing.assert_array_equal(inner.center, K.center)
        assert inner.radius == 1.0

    def test_too_large_shift(self):
        sp = CovarianceSpectrum.preset("poly2", 3)
        with pytest.raises(PreconditionError):
            inner_shifted(Ellipsoid(np.zeros(3), 2.0, sp), 1.5)

    @given(
        R=st.floats(0.05, 5.0),
        frac=st.floats(0.0, 1.0),
        center=st.lists(st.floats(-3, 3), min_size=5, max_size=5),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_containment_property(self, R, frac, center, seed):
        sp = CovarianceSpectrum.preset("poly2", 5)
        K = Ellipsoid(np.array(center), R, sp)
        inner = inner_shifted(K, frac * R / 2)
        x = sample_uniform_ellipsoid(inner, 10_000, np.random.default_rng(seed))
        assert np.all(contains(K, x))
