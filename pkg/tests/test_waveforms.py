import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eosqueeze.waveforms import (
    FS,
    NJ,
    THZ,
    CoherentTransient,
    TimeGrid,
    TransientSpec,
    fourier_shift,
    make_grid,
    optical_rectification,
    rectification_centroid,
    spectral_centroid,
    synthesize_transient,
    time_derivative,
)

from conftest import DEFAULT_GRID

# FFT centroid of the 12 fs rectification transient on the grid below (regression constant)
RECT_CENTROID_THZ = 49.83869872232254
RECT_GRID = TimeGrid(-256 * FS, 0.25 * FS, 2048)


class TestGrid:
    def test_span_example(self):
        g = make_grid(-250 * FS, 0.5 * FS, 1024)
        assert g.t[0] == pytest.approx(-250 * FS)
        assert g.t_end == pytest.approx(261.5 * FS)

    def test_eight_samples(self):
        g = make_grid(0.0, 1 * FS, 8)
        np.testing.assert_allclose(g.t / FS, np.arange(8))

    @pytest.mark.parametrize("dt", [0.0, -1e-15, float("nan")])
    def test_bad_step(self, dt):
        with pytest.raises(ValueError):
            make_grid(0.0, dt, 16)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            make_grid(0.0, 1 * FS, 7)

    def test_samples_bit_stable(self):
        g = DEFAULT_GRID
        k = np.arange(g.n)
        assert np.array_equal(g.t, g.t0 + k * g.dt)
        assert np.array_equal(g.t, g.t)

    def test_index_of(self):
        g = make_grid(0.0, 1.0, 10)
        assert g.index_of(2.4) == 2
        assert g.index_of(2.6) == 3
        assert g.index_of(2.5) == 2  # ties go to the earlier sample
        with pytest.raises(ValueError):
            g.index_of(9.5)


class TestTransient:
    def test_zero_energy(self):
        tr = synthesize_transient(DEFAULT_GRID, 0.0, gain=1e9)
        assert not np.any(tr.field)

    @settings(max_examples=40, deadline=None)
    @given(cep=st.floats(-20.0, 20.0), energy=st.floats(0.1, 5.0))
    def test_cep_parity_exact(self, cep, energy):
        a = synthesize_transient(DEFAULT_GRID, energy * NJ, cep, gain=1e17)
        b = synthesize_transient(DEFAULT_GRID, energy * NJ, cep + np.pi, gain=1e17)
        assert np.max(np.abs(a.field + b.field)) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(energy=st.floats(0.01, 10.0), factor=st.floats(0.1, 10.0))
    def test_linear_in_energy(self, energy, factor):
        a = synthesize_transient(DEFAULT_GRID, energy * NJ, gain=1e17)
        b = synthesize_transient(DEFAULT_GRID, factor * energy * NJ, gain=1e17)
        np.testing.assert_allclose(b.field, factor * a.field, rtol=1e-13, atol=1e-12 * np.max(np.abs(b.field)))

    def test_doubling_energy_doubles_peak(self):
        a = synthesize_transient(DEFAULT_GRID, 1.0 * NJ, gain=1e17)
        b = synthesize_transient(DEFAULT_GRID, 2.0 * NJ, gain=1e17)
        assert np.max(np.abs(b.field)) == pytest.approx(2 * np.max(np.abs(a.field)), rel=1e-15)

    def test_edge_leakage_rejected(self):
        g = TimeGrid(-100 * FS, 0.5 * FS, 400)
        with pytest.raises(ValueError, match="edges"):
            synthesize_transient(g, 1.0, env_fwhm=90 * FS)

    def test_coarse_grid_rejected(self):
        g = TimeGrid(-512 * FS, 12 * FS, 128)
        with pytest.raises(ValueError, match="coarse"):
            synthesize_transient(g, 1.0, center_freq=44 * THZ)

    def test_field_is_read_only(self):
        tr = synthesize_transient(DEFAULT_GRID, 1.0)
        with pytest.raises(ValueError):
            tr.field[0] = 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            CoherentTransient(DEFAULT_GRID, np.zeros(5), 0.0, 0.0, 0.0)

    def test_spec_build_flips(self):
        for kind in ("gaussian", "rectification"):
            a = TransientSpec(kind=kind, env_fwhm=12 * FS if kind == "rectification" else 90 * FS).build(
                RECT_GRID if kind == "rectification" else DEFAULT_GRID, 1.0, 1.0
            )
            spec = TransientSpec(kind=kind, cep=np.pi, env_fwhm=12 * FS if kind == "rectification" else 90 * FS)
            b = spec.build(a.grid, 1.0, 1.0)
            assert np.array_equal(a.field, -b.field)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            TransientSpec(kind="square")


class TestRectification:
    def test_zero_area(self):
        tr = optical_rectification(RECT_GRID, 12 * FS, 1.0)
        area = abs(np.sum(tr.field) * RECT_GRID.dt)
        assert area < 1e-9 * np.max(np.abs(tr.field)) * RECT_GRID.span

    def test_bipolar(self):
        tr = optical_rectification(RECT_GRID, 12 * FS, 1.0)
        assert tr.field.max() > 0 > tr.field.min()

    def test_zero_energy(self):
        assert not np.any(optical_rectification(RECT_GRID, 12 * FS, 0.0).field)

    def test_centroid_regression(self):
        tr = optical_rectification(RECT_GRID, 12 * FS, 1.0)
        assert spectral_centroid(tr.field, RECT_GRID) / THZ == pytest.approx(RECT_CENTROID_THZ, rel=1e-9)

    def test_centroid_matches_closed_form(self):
        tr = optical_rectification(RECT_GRID, 12 * FS, 1.0)
        assert spectral_centroid(tr.field, RECT_GRID) == pytest.approx(rectification_centroid(12 * FS), rel=1e-6)

    def test_coarse_grid(self):
        with pytest.raises(ValueError, match="coarse"):
            optical_rectification(TimeGrid(-256 * FS, 4 * FS, 128), 12 * FS)


class TestDerivative:
    def test_constant(self):
        assert np.max(np.abs(time_derivative(np.full(64, 3.0), TimeGrid(0, 1 * FS, 64)))) < 1e-9

    def test_sine(self):
        # 1000 samples of 0.25 fs span exactly 11 periods of 44 THz
        g = TimeGrid(0.0, 0.25 * FS, 1000)
        w = 2 * np.pi * 44 * THZ
        d = time_derivative(np.sin(w * g.t), g)
        assert np.max(np.abs(d - w * np.cos(w * g.t))) / w < 1e-6

    def test_fd_vs_spectral_transient(self):
        g = TimeGrid(-512 * FS, 0.2 * FS, 5120)
        tr = synthesize_transient(g, 1.0)
        ds = time_derivative(tr.field, g, "spectral")
        dfd = time_derivative(tr.field, g, "fd")
        assert np.max(np.abs(ds - dfd)) < 1e-3 * np.max(np.abs(ds))

    @settings(max_examples=25, deadline=None)
    @given(nu=st.floats(5.0, 44.0), fwhm=st.floats(20.0, 120.0), cep=st.floats(0, 6.3), t0=st.floats(-50, 50))
    def test_fd_vs_spectral_band_limited(self, nu, fwhm, cep, t0):
        g = TimeGrid(-600 * FS, 0.2 * FS, 6000)
        t = g.t - t0 * FS
        x = np.exp(-2 * np.log(2) * (t / (fwhm * FS)) ** 2) * np.cos(2 * np.pi * nu * THZ * t + cep)
        ds = time_derivative(x, g, "spectral")
        dfd = time_derivative(x, g, "fd")
        assert np.max(np.abs(ds - dfd)) < 1e-3 * np.max(np.abs(ds))

    def test_axis_handling(self):
        g = TimeGrid(0, 1 * FS, 32)
        x = np.random.default_rng(0).normal(size=(3, 32))
        d = time_derivative(x, g)
        for row in range(3):
            np.testing.assert_allclose(d[row], time_derivative(x[row], g))

    def test_bad_inputs(self):
        g = TimeGrid(0, 1 * FS, 32)
        with pytest.raises(ValueError):
            time_derivative(np.zeros(31), g)
        with pytest.raises(ValueError):
            time_derivative(np.zeros(32), g, "bogus")


def test_fourier_shift_integer_is_roll():
    g = TimeGrid(0, 1 * FS, 64)
    x = np.random.default_rng(1).normal(size=64)
    np.testing.assert_allclose(fourier_shift(x, g, 3 * FS), np.roll(x, 3), atol=1e-12)


def test_centroid_of_zero_raises():
    with pytest.raises(ValueError):
        spectral_centroid(np.zeros(64), TimeGrid(0, 1 * FS, 64))
