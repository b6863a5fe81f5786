"""Varactor drive -> periodic C(t), G(t) waveform -> truncated Fourier series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import ModSpec, VaractorSpec
from .errors import ValidationError

DEFAULT_SAMPLES = 4096


def smooth_step(x, width):
    """0 -> 1 transition centred on x=0 spanning ``width`` (quintic, C2).

    ``width == 0`` is a hard step with value 1/2 exactly at x = 0.
    """
    x = np.asarray(x, dtype=float)
    if width == 0:
        return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    with np.errstate(over="ignore"):  # subnormal width: +-inf clips to the hard step
        u = np.clip(x / width + 0.5, 0.0, 1.0)
    return np.minimum(u * u * u * (10.0 + u * (-15.0 + 6.0 * u)), 1.0)


def periodic_pulse(theta, start, width, rise):
    """Smoothed indicator of [start, start + width) on the unit circle."""
    u = np.mod(np.asarray(theta, dtype=float) - start, 1.0)
    out = np.zeros_like(u)
    for m in (-1.0, 0.0, 1.0):
        out += smooth_step(u + m, rise) - smooth_step(u + m - width, rise)
    return out


def _reverse_capacitance(v, v_peak_neg, var: VaractorSpec):
    """Linear C-V law from c_zero_bias at 0 V to c_reverse_off at the peak reverse drive."""
    v = np.minimum(v, 0.0)
    if v_peak_neg >= 0:
        return np.full_like(v, var.c_zero_bias)
    frac = np.clip(v / v_peak_neg, 0.0, 1.0)
    return var.c_zero_bias + (var.c_reverse_off - var.c_zero_bias) * frac


def _device_state(v, v_peak_neg, var: VaractorSpec):
    """Static (C, G) for a held drive voltage."""
    if v > 0:
        return var.c_forward, 1.0 / var.r_on
    return float(_reverse_capacitance(np.array(v), v_peak_neg, var)), 0.0


def waveform_at(mod: ModSpec, var: VaractorSpec, t):
    """Evaluate (C, G, clamped) at times ``t`` (s); vectorized over t."""
    t = np.asarray(t, dtype=float)
    half = mod.amplitude_pp / 2.0
    v_min = mod.dc_bias - half
    clamped = v_min < var.breakdown_v
    v_peak_neg = max(v_min, var.breakdown_v)

    if not mod.active:
        v_hold = max(mod.dc_bias, var.breakdown_v)
        c, g = _device_state(v_hold, v_hold, var)
        return np.full_like(t, c), np.full_like(t, g), mod.dc_bias < var.breakdown_v

    theta = t * mod.freq + mod.phase / 360.0
    if mod.shape == "square":
        v_hi = mod.dc_bias + half
        v_lo = v_peak_neg
        c_hi, g_hi = _device_state(v_hi, v_peak_neg, var)
        c_lo, g_lo = _device_state(v_lo, v_peak_neg, var)
        p = periodic_pulse(theta, 0.0, mod.duty, mod.rise_fraction)
        return c_lo + (c_hi - c_lo) * p, g_lo + (g_hi - g_lo) * p, clamped

    # sine: smooth the forward/reverse switch around the zero crossings
    v = np.maximum(mod.dc_bias + half * np.sin(2 * np.pi * theta), var.breakdown_v)
    ratio = -mod.dc_bias / half
    if ratio >= 1:
        fwd = np.zeros_like(t)
    elif ratio <= -1:
        fwd = np.ones_like(t)
    else:
        s = math.asin(ratio) / (2 * math.pi)
        fwd = periodic_pulse(theta, s, 0.5 - 2 * s, mod.rise_fraction)
    c_rev = _reverse_capacitance(v, v_peak_neg, var)
    c = fwd * var.c_forward + (1.0 - fwd) * c_rev
    g = fwd / var.r_on
    return c, g, clamped


@dataclass(frozen=True)
class PeriodicElementWaveform:
    period: float
    c: np.ndarray
    g: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        n = len(self.c)
        if n < 256 or n & (n - 1) or len(self.g) != n:
            raise ValidationError("samples", f"need a power-of-two sample count >= 256, got {n}")
        if np.any(self.c < 0) or np.any(self.g < 0):
            raise ValidationError("samples", "C and G must be non-negative")

    @property
    def n(self):
        return len(self.c)

    @property
    def times(self):
        return np.arange(self.n) * (self.period / self.n)


def varactor_waveform(mod: ModSpec, var: VaractorSpec, n_samples=DEFAULT_SAMPLES) -> PeriodicElementWaveform:
    """Sample one modulation period of the varactor's (C, G)."""
    period = 1.0 / mod.freq if mod.freq > 0 else math.inf
    if math.isinf(period):
        c, g, clamped = waveform_at(mod, var, np.zeros(n_samples))
    else:
        c, g, clamped = waveform_at(mod, var, np.arange(n_samples) * (period / n_samples))
    return PeriodicElementWaveform(period, np.asarray(c, float), np.asarray(g, float), bool(clamped))


@dataclass(frozen=True)
class FourierCoeffs:
    """c[k + order], g[k + order] for k in [-order, order]."""

    order: int
    c: np.ndarray
    g: np.ndarray
    omega_m: float

    def ck(self, k):
        return self.c[k + self.order]

    def gk(self, k):
        return self.g[k + self.order]


def fourier_series(w: PeriodicElementWaveform, order) -> FourierCoeffs:
    if order < 0:
        raise ValidationError("K", f"must be >= 0, got {order}")
    if 2 * order + 1 > w.n:
        raise ValidationError("K", f"order {order} needs at least {2 * order + 1} samples, waveform has {w.n}")

    def two_sided(x):
        pos = np.fft.rfft(x)[: order + 1] / w.n
        return np.concatenate([np.conj(pos[:0:-1]), pos])

    omega_m = 2 * np.pi / w.period if np.isfinite(w.period) else 0.0
    return FourierCoeffs(order, two_sided(w.c), two_sided(w.g), omega_m)
