"""Clip, logit and TV despeckling tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sardist.errors import ValidationError
from sardist.preprocess import (PreprocessConfig, clip_unit, despeckle_stack,
                                despeckle_values, inverse_logit, logit,
                                tv_denoise, tv_objective)
from sardist.raster import RasterStack


class TestClip:
    def test_boundary_values(self):
        assert clip_unit(np.float64(0.0)) == 1e-4
        assert clip_unit(np.float64(1.0)) == 1.0 - 1e-4
        assert clip_unit(np.float64(0.5)) == 0.5

    def test_custom_epsilon(self):
        assert clip_unit(np.float64(0.0), eps=0.01) == 0.01

    def test_bad_epsilon_rejected(self):
        with pytest.raises(ValidationError):
            clip_unit(np.zeros(3), eps=0.5)
        with pytest.raises(ValidationError):
            clip_unit(np.zeros(3), eps=0.0)


class TestLogit:
    def test_symmetry_point(self):
        assert logit(np.float64(0.5)) == 0.0

    def test_ln_nine(self):
        assert abs(logit(np.float64(0.9)) - math.log(9.0)) < 1e-12

    def test_inverse_of_ln_nine(self):
        assert abs(inverse_logit(np.float64(math.log(9.0))) - 0.9) < 1e-12

    def test_inverse_at_zero(self):
        assert inverse_logit(np.float64(0.0)) == 0.5

    def test_roundtrip_specific_points(self):
        for x in (0.01, 0.3, 0.99):
            assert abs(inverse_logit(logit(np.float64(x))) - x) < 1e-12

    def test_roundtrip_on_reals(self):
        # beyond |y| ~ 9.1 the float64 quantization of 1-x near 1.0 caps the
        # achievable accuracy, so tight bounds only hold inside that range
        y = np.linspace(-8.0, 8.0, 2001)
        back = logit(inverse_logit(y))
        assert np.max(np.abs(back - y)) < 1e-12
        y = np.linspace(-9.22, 9.22, 2001)   # the clipped pipeline's range
        back = logit(inverse_logit(y))
        assert np.max(np.abs(back - y)) < 3e-12

    def test_roundtrip_saturates_gracefully(self):
        y = np.linspace(-37.5, 37.5, 101)
        x = inverse_logit(y)
        assert np.all(x > 0.0) and np.all(x < 1.0)
        back = logit(x)   # must not raise
        assert np.all(np.isfinite(back))

    def test_roundtrip_from_unit_interval(self):
        x = np.concatenate([np.linspace(1e-4, 1.0 - 1e-4, 4001),
                            [1e-9, 1.0 - 1e-9]])
        back = inverse_logit(logit(x))
        assert np.max(np.abs(back - x)) < 1e-12

    def test_domain_violation_rejected(self):
        with pytest.raises(ValidationError):
            logit(np.array([0.0, 0.5]))
        with pytest.raises(ValidationError):
            logit(np.array([0.5, 1.0]))

    @given(st.floats(min_value=-40.0, max_value=40.0),
           st.floats(min_value=-40.0, max_value=40.0))
    def test_inverse_monotone(self, y1, y2):
        lo, hi = sorted((y1, y2))
        a, b = float(inverse_logit(np.float64(lo))), float(inverse_logit(np.float64(hi)))
        assert a <= b
        assert 0.0 < a and b < 1.0

    @given(st.floats(min_value=1e-4, max_value=1.0 - 1e-4))
    @settings(max_examples=200)
    def test_roundtrip_property(self, x):
        assert abs(float(inverse_logit(logit(np.float64(x)))) - x) < 1e-9


class TestTvDenoise:
    def test_constant_unchanged(self):
        u = np.full((16, 16), -12.5)
        out = tv_denoise(u, weight=1.5)
        assert np.max(np.abs(out - u)) < 1e-6

    def test_objective_descends_on_noise(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            f = rng.normal(scale=2.0, size=(24, 24))
            out = tv_denoise(f, weight=1.5)
            assert tv_objective(out, f, 1.5) <= tv_objective(f, f, 1.5)

    def test_flip_equivariance_exact(self):
        rng = np.random.default_rng(1)
        f = rng.normal(size=(20, 20))
        out = tv_denoise(f, weight=1.5)
        out_lr = tv_denoise(f[:, ::-1], weight=1.5)[:, ::-1]
        out_ud = tv_denoise(f[::-1, :], weight=1.5)[::-1, :]
        assert np.array_equal(out, out_lr)
        assert np.array_equal(out, out_ud)

    def test_zero_weight_is_identity(self):
        rng = np.random.default_rng(2)
        f = rng.normal(size=(8, 8))
        assert np.array_equal(tv_denoise(f, weight=0.0), f)

    def test_stacked_slices_match_individual(self):
        rng = np.random.default_rng(3)
        f = rng.normal(size=(3, 2, 12, 12))
        out = tv_denoise(f, weight=1.0)
        for i in range(3):
            for j in range(2):
                single = tv_denoise(f[i, j], weight=1.0)
                assert np.allclose(out[i, j], single, atol=1e-12)

    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_descent_property(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.normal(scale=3.0, size=(10, 10))
        out = tv_denoise(f, weight=1.5, iterations=30)
        assert tv_objective(out, f, 1.5) <= tv_objective(f, f, 1.5) + 1e-9


class TestDespeckle:
    def _speckled_constant(self, level=0.1, looks=9.0, size=64, seed=0):
        rng = np.random.default_rng(seed)
        return (level * rng.gamma(looks, 1.0 / looks, size=(size, size))
                ).astype(np.float32)

    def test_variance_reduction_on_speckled_constant(self):
        field = self._speckled_constant()
        out = despeckle_values(field)
        assert np.var(out) < 0.25 * np.var(field)

    def test_output_in_unit_interval(self):
        field = self._speckled_constant(level=0.4, seed=1)
        out = despeckle_values(field)
        assert out.dtype == np.float32
        assert np.all(out >= 1e-4) and np.all(out <= 1.0 - 1e-4)

    def test_constant_field_nearly_unchanged(self):
        field = np.full((16, 16), 0.2, dtype=np.float32)
        out = despeckle_values(field)
        assert np.max(np.abs(out.astype(np.float64) - 0.2)) < 1e-6

    def test_flip_commutes_through_despeckle(self):
        field = self._speckled_constant(seed=2, size=32)
        a = despeckle_values(field[:, ::-1])[:, ::-1]
        b = despeckle_values(field)
        assert np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))) < 1e-6

    def test_stack_despeckle_preserves_metadata(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(0.05, 0.3, size=(3, 2, 16, 16)).astype(np.float32)
        stack = RasterStack(values, ["2024-01-01", "2024-01-13", "2024-01-25"])
        out = despeckle_stack(stack)
        assert out.timestamps == stack.timestamps
        assert out.pol_names == stack.pol_names
        assert out.values.shape == stack.values.shape

    def test_deterministic(self):
        field = self._speckled_constant(seed=5)
        a = despeckle_values(field)
        b = despeckle_values(field)
        assert np.array_equal(a, b)


class TestConfig:
    def test_defaults_valid(self):
        PreprocessConfig().validate()

    def test_bad_step_rejected(self):
        with pytest.raises(ValidationError):
            PreprocessConfig(tv_step=0.3).validate()
        with pytest.raises(ValidationError):
            PreprocessConfig(tv_step=0.0).validate()

    def test_bad_iterations_rejected(self):
        with pytest.raises(ValidationError):
            PreprocessConfig(tv_iterations=0).validate()

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            PreprocessConfig(tv_weight_db=-1.0).validate()
