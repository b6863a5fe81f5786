import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fbarcirc.circuit import ModSpec, VaractorSpec
from fbarcirc.errors import ValidationError
from fbarcirc.modulation import (PeriodicElementWaveform, fourier_series, periodic_pulse, smooth_step,
                                 varactor_waveform, waveform_at)

VAR = VaractorSpec()


def test_square_states():
    w = varactor_waveform(ModSpec(rise_fraction=0.0), VAR)
    n = w.n
    on = slice(n // 8, 3 * n // 8)
    off = slice(5 * n // 8, 7 * n // 8)
    assert np.all(w.c[on] == VAR.c_forward) and np.all(w.g[on] == 1.0 / VAR.r_on)
    assert np.allclose(w.c[off], 0.2e-12, rtol=0, atol=1e-27) and np.all(w.g[off] == 0)
    assert not w.clamped


def test_off_is_zero_bias_constant():
    for mod in (ModSpec(shape="off"), ModSpec(amplitude_pp=0.0)):
        w = varactor_waveform(mod, VAR)
        assert np.all(w.c == 1e-12) and np.all(w.g == 0)


def test_sine_with_large_dc_stays_forward():
    w = varactor_waveform(ModSpec(shape="sine", amplitude_pp=6.0, dc_bias=6.0), VAR)
    assert np.all(w.c == VAR.c_forward) and np.all(w.g == 1.0 / VAR.r_on)


def test_sine_reverse_follows_cv_law():
    mod = ModSpec(shape="sine", amplitude_pp=7.0, rise_fraction=0.0)
    t = np.array([0.75 / mod.freq])  # trough at -3.5 V
    c, g, _ = waveform_at(mod, VAR, t)
    assert c[0] == pytest.approx(0.2e-12) and g[0] == 0
    c, g, _ = waveform_at(mod, VAR, np.array([0.25 / mod.freq]))
    assert c[0] == VAR.c_forward


def test_breakdown_clamp_flag():
    w = varactor_waveform(ModSpec(amplitude_pp=30.0), VAR)
    assert w.clamped
    assert np.min(w.c) == pytest.approx(VAR.c_reverse_off)
    assert not varactor_waveform(ModSpec(amplitude_pp=20.0), VAR).clamped


def test_waveform_sample_validation():
    with pytest.raises(ValidationError):
        PeriodicElementWaveform(1.0, np.ones(100), np.ones(100))
    with pytest.raises(ValidationError):
        PeriodicElementWaveform(1.0, -np.ones(256), np.ones(256))


def test_smooth_step_limits():
    assert smooth_step(0.0, 0) == 0.5
    x = np.linspace(-1, 1, 101)
    y = smooth_step(x, 0.4)
    assert np.all(np.diff(y) >= 0) and y[0] == 0 and y[-1] == 1
    assert smooth_step(0.0, 0.4) == pytest.approx(0.5)


def test_pulse_wraps_periodically():
    th = np.linspace(0, 1, 1000, endpoint=False)
    p = periodic_pulse(th, 0.9, 0.3, 0.05)
    assert np.allclose(p, periodic_pulse(th + 1.0, 0.9, 0.3, 0.05))
    assert p[int(0.05 * 1000)] == pytest.approx(1.0)
    assert np.mean(p) == pytest.approx(0.3, abs=1e-3)


def test_constant_coefficients():
    w = PeriodicElementWaveform(1e-6, np.full(512, 3e-12), np.full(512, 0.5))
    fc = fourier_series(w, 10)
    assert fc.ck(0) == pytest.approx(3e-12)
    assert np.all(fc.c[np.arange(21) != 10] == 0)
    assert fc.gk(0) == pytest.approx(0.5)


def test_ideal_square_series():
    a, b = 10e-12, 0.2e-12
    w = varactor_waveform(ModSpec(rise_fraction=0.0), VAR)
    fc = fourier_series(w, 9)
    assert fc.ck(0).real == pytest.approx((a + b) / 2, rel=1e-3)
    for k in (2, 4, 6, 8):
        assert abs(fc.ck(k)) < 1e-3 * abs(fc.ck(1))
    assert abs(fc.ck(1)) == pytest.approx((a - b) / math.pi, rel=1e-3)


def test_order_too_large():
    w = varactor_waveform(ModSpec(), VAR, n_samples=256)
    with pytest.raises(ValidationError):
        fourier_series(w, 128)
    with pytest.raises(ValidationError):
        fourier_series(w, -1)


# the sine's C-V clip at 0 V leaves a kink, so its DFT aliasing is larger
@pytest.mark.parametrize("shape, rel", [("square", 1e-9), ("sine", 1e-7)])
def test_against_quadrature(shape, rel):
    mod = ModSpec(shape=shape)
    T = 1.0 / mod.freq
    fc = fourier_series(varactor_waveform(mod, VAR), 8)
    # breakpoints at the smoothed edges keep quad accurate
    edges = sorted({(x % 1.0) * T for e in (0.0, 0.5) for x in (e - 0.025, e, e + 0.025)} | {0.0, T})
    scale = np.max(np.abs(fc.c))
    for k in range(9):
        def re(t):
            return float(waveform_at(mod, VAR, np.array([t]))[0][0] * math.cos(2 * math.pi * k * t / T))

        def im(t):
            return float(-waveform_at(mod, VAR, np.array([t]))[0][0] * math.sin(2 * math.pi * k * t / T))

        ref = complex(quad(re, 0, T, points=edges[1:-1], limit=400, epsabs=1e-30, epsrel=1e-12)[0],
                      quad(im, 0, T, points=edges[1:-1], limit=400, epsabs=1e-30, epsrel=1e-12)[0]) / T
        assert abs(fc.ck(k) - ref) < rel * scale


@settings(max_examples=40, deadline=None)
@given(duty=st.floats(0.1, 0.9), rise=st.floats(0.0, 0.2), shape=st.sampled_from(["square", "sine"]),
       dc=st.floats(-3, 3), order=st.integers(0, 64))
def test_conjugate_symmetry_and_parseval(duty, rise, shape, dc, order):
    w = varactor_waveform(ModSpec(shape=shape, duty=duty, rise_fraction=rise, dc_bias=dc), VAR, 1024)
    fc = fourier_series(w, order)
    assert np.array_equal(fc.c[::-1], np.conj(fc.c))
    assert np.array_equal(fc.g[::-1], np.conj(fc.g))
    assert np.sum(np.abs(fc.c) ** 2) <= np.mean(w.c**2) * (1 + 1e-12)
    assert np.all(w.c >= 0) and np.all(w.g >= 0)


def test_parseval_equality_at_nyquist():
    w = varactor_waveform(ModSpec(), VAR, 256)
    fc = fourier_series(w, 127)
    nyq = np.fft.rfft(w.c)[128] / 256
    assert np.sum(np.abs(fc.c) ** 2) + abs(nyq) ** 2 == pytest.approx(np.mean(w.c**2), rel=1e-12)


def test_coefficients_decay():
    fc = fourier_series(varactor_waveform(ModSpec(), VAR), 64)
    mags = np.abs(fc.c[64 + 1::2])  # odd k > 0
    assert mags[-1] < 1e-3 * mags[0]


def test_phase_shift_factor():
    k = np.arange(-16, 17)
    a = fourier_series(varactor_waveform(ModSpec(), VAR), 16)
    b = fourier_series(varactor_waveform(ModSpec(phase=120.0), VAR), 16)
    assert np.max(np.abs(b.c - a.c * np.exp(1j * k * 2 * np.pi / 3))) < 1e-9 * np.max(np.abs(a.c))
    assert np.max(np.abs(b.g - a.g * np.exp(1j * k * 2 * np.pi / 3))) < 1e-9 * np.max(np.abs(a.g))


def test_waveform_periodic_wrap():
    mod = ModSpec(shape="sine", rise_fraction=0.1)
    T = 1.0 / mod.freq
    c0, g0, _ = waveform_at(mod, VAR, np.array([0.0]))
    c1, g1, _ = waveform_at(mod, VAR, np.array([T]))
    assert c0[0] == pytest.approx(c1[0], rel=1e-12) and g0[0] == pytest.approx(g1[0], rel=1e-12)
