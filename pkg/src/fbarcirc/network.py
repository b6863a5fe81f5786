"""Matching-network embedding and synthesis, circulator metrics, power accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .circuit import Circuit, MatchingNetwork
from .errors import NoMatchInTopologyError, PassivityError, ValidationError
from .solver import DEFAULT_K, HarmonicSMatrix, SweepResult, solve_harmonic_sparams

__all__ = [
    "MatchingNetwork", "CirculatorMetrics", "MatchResult", "PowerBalance",
    "embed_matching", "l_match", "optimize_match", "search_match", "metrics", "power_balance",
    "input_impedance", "write_metrics_csv", "METRICS_COLUMNS",
]

METRICS_COLUMNS = ("f_notch_hz", "isolation_db", "il_db", "rl_db", "bw40_hz", "intermod_frac")


def l_section_sparams(m: MatchingNetwork, omega, z0):
    """Two-port S of the L-section (port side 1, device side 2); arrays over omega."""
    w = np.asarray(omega, dtype=float)
    z = 1j * w * m.l_series
    y = 1j * w * m.c_shunt
    a, b, c, d = np.ones_like(z), z, y, 1.0 + y * z
    den = a + b / z0 + c * z0 + d
    s11 = (a + b / z0 - c * z0 - d) / den
    s12 = 2.0 * (a * d - b * c) / den
    s21 = 2.0 / den
    s22 = (-a + b / z0 - c * z0 + d) / den
    return s11, s12, s21, s22


def _per_port(m, n_ports):
    if isinstance(m, MatchingNetwork):
        return (m,) * n_ports
    m = tuple(MatchingNetwork() if x is None else x for x in m)
    if len(m) != n_ports:
        raise ValidationError("matching", f"need {n_ports} networks, got {len(m)}")
    return m


def _embed_full(full, omegas, z0, nets):
    """Cascade per-port L-sections onto a full conversion matrix (P, H, P, H)."""
    P, H = full.shape[0], full.shape[1]
    t = np.zeros((4, P, H), dtype=complex)
    for i, m in enumerate(nets):
        t[:, i, :] = l_section_sparams(m, omegas, z0[i])
    t11, t12, t21, t22 = (x.reshape(P * H) for x in t)
    S = full.reshape(P * H, P * H)
    # b_o = T11 a_o + T12 b_d ; a_d = T21 a_o + T22 b_d ; b_d = S a_d
    lhs = np.eye(P * H) - S * t22[None, :]
    bd = np.linalg.solve(lhs, S * t21[None, :])
    out = np.diag(t11) + t12[:, None] * bd
    return out.reshape(P, H, P, H)


def embed_matching(data, m):
    """Re-reference every port through an L-section evaluated at each sideband.

    ``m`` is one MatchingNetwork for all ports or one per port. All-identity
    networks return ``data`` itself.
    """
    nets = _per_port(m, data.full.shape[0] if isinstance(data, HarmonicSMatrix) else data.n_ports)
    if all(n.is_identity for n in nets):
        return data
    if isinstance(data, HarmonicSMatrix):
        omegas = data.omega0 + np.arange(-data.K, data.K + 1) * data.omega_m
        return replace(data, full=_embed_full(data.full, omegas, data.z0, nets))
    if data.full is None:
        raise ValidationError("data", "embedding needs the full conversion matrix (solver output)")
    new_full = np.empty_like(data.full)
    for idx, f in enumerate(data.freqs):
        omegas = 2 * np.pi * f + np.arange(-data.K, data.K + 1) * data.omega_m
        new_full[idx] = _embed_full(data.full[idx], omegas, data.z0, nets)
    s = np.transpose(new_full[:, :, :, :, data.K], (0, 1, 3, 2))
    return replace(data, full=new_full, s=s, meta={**data.meta, "matching": [(n.l_series, n.c_shunt) for n in nets]})


def input_impedance(hs: HarmonicSMatrix, port=1):
    """Carrier input impedance at ``port`` with the other ports terminated."""
    s11 = hs.entry(port, port, 0)
    return hs.z0[port - 1] * (1 + s11) / (1 - s11)


def l_match(z_in, f0, z0=50.0) -> MatchingNetwork:
    """Closed-form series-L (device side) / shunt-C (port side) section taking z_in to z0."""
    z_in = complex(z_in)
    r, x = z_in.real, z_in.imag
    if not r > 0:
        raise ValidationError("z_in", f"real part must be > 0, got {z_in}")
    if not f0 > 0:
        raise ValidationError("f0", f"must be > 0, got {f0!r}")
    w = 2 * math.pi * f0
    if math.isclose(r, z0, rel_tol=1e-12) and abs(x) <= 1e-12 * z0:
        return MatchingNetwork(0.0, 0.0)
    if r > z0:
        raise NoMatchInTopologyError(
            f"Re(z_in)={r:.6g} ohm exceeds z0={z0:.6g} ohm; needs the dual (shunt-first) section")
    x_total = math.sqrt(r * (z0 - r))
    if x > x_total:
        raise NoMatchInTopologyError(
            f"Im(z_in)={x:.6g} ohm is more inductive than the {x_total:.6g} ohm this topology can absorb")
    m = MatchingNetwork(l_series=(x_total - x) / w, c_shunt=x_total / (r * r + x_total * x_total) / w)
    z_port = 1.0 / (1j * w * m.c_shunt + 1.0 / (z_in + 1j * w * m.l_series))
    if abs(z_port - z0) > 1e-3 * z0:
        raise ArithmeticError(f"l_match self-check failed: transformed impedance {z_port} != {z0}")
    return m


@dataclass(frozen=True)
class MatchResult:
    network: MatchingNetwork
    objective: float
    start: MatchingNetwork
    start_objective: float
    improved: bool
    evaluations: int


def _objective_fn(hs: HarmonicSMatrix, objective, drive, through, isolated):
    def db(x):
        return 20 * math.log10(max(abs(x), 1e-300))

    def value(m: MatchingNetwork):
        e = embed_matching(hs, m)
        if objective == "max_isolation":
            # isolation relative to forward transmission; pure |S_iso| rewards reflecting everything
            return db(e.entry(isolated, drive)) - db(e.entry(through, drive))
        return db(e.entry(drive, drive))

    return value


def _start_point(hs: HarmonicSMatrix, f0, drive):
    z = input_impedance(hs, drive)
    z0 = hs.z0[drive - 1]
    try:
        return l_match(z, f0, z0)
    except NoMatchInTopologyError:
        # best effort inside the topology: cancel what reactance a series L can
        w = 2 * math.pi * f0
        return MatchingNetwork(max(-z.imag, 0.0) / w, 0.0)


def search_match(value, start: MatchingNetwork, maxiter=400) -> MatchResult:
    """Nelder-Mead over (l_series, c_shunt) in nH / pF, minimising ``value(network)``.

    Negative element values are penalised. A search that does not beat the
    start returns the start with ``improved=False``.
    """
    f_start = value(start)
    scale = np.array([1e-9, 1e-12])
    x0 = np.array([start.l_series, start.c_shunt]) / scale
    # a zero coordinate would collapse scipy's default simplex
    simplex = np.array([x0, x0 + [max(0.2 * x0[0], 0.5), 0.0], x0 + [0.0, max(0.2 * x0[1], 0.2)]])
    count = [0]

    def fun(x):
        count[0] += 1
        if np.any(x < 0):
            return 1e3 + 1e3 * float(np.sum(np.minimum(x, 0) ** 2))
        return value(MatchingNetwork(*(x * scale)))

    res = minimize(fun, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-6, "fatol": 1e-9, "maxiter": maxiter})
    best = MatchingNetwork(*(np.maximum(res.x, 0) * scale))
    f_best = value(best)
    if not f_best < f_start:
        return MatchResult(start, f_start, start, f_start, False, count[0])
    return MatchResult(best, f_best, start, f_start, True, count[0])


def optimize_match(c: Circuit, f0, objective="max_isolation", K=DEFAULT_K, drive=1, through=2, isolated=3,
                   start: MatchingNetwork | None = None, maxiter=400) -> MatchResult:
    """Identical L-sections on every port, tuned at f0.

    The unmatched harmonic S at f0 is solved once; candidates are embedded.
    Objectives: ``max_isolation`` (minimise |S_iso|/|S_thru| in dB) or
    ``min_return_loss`` (minimise |S_drive,drive|). The start defaults to the
    closed-form l_match of the drive port's input impedance.
    """
    if objective not in ("max_isolation", "min_return_loss"):
        raise ValidationError("objective", f"unknown objective {objective!r}")
    hs = solve_harmonic_sparams(c, 2 * math.pi * f0, None, K)
    if start is None:
        start = _start_point(hs, f0, drive)
    return search_match(_objective_fn(hs, objective, drive, through, isolated), start, maxiter)


@dataclass(frozen=True)
class CirculatorMetrics:
    """Positive-dB figures of merit; the notch is where |S_thru|/|S_iso| peaks."""

    f_notch_hz: float
    isolation_db: float
    insertion_loss_db: float
    return_loss_db: float
    intermod_fraction: float
    bandwidths: dict = field(default_factory=dict)
    nonreciprocity_db: float = math.nan
    loss_at_notch_db: float = math.nan

    def bw_at_level(self, level=40.0):
        """Hz, or None when the notch never reaches ``level``."""
        return self.bandwidths.get(float(level))

    def row(self, level=40.0):
        bw = self.bw_at_level(level)
        return (self.f_notch_hz, self.isolation_db, self.insertion_loss_db, self.return_loss_db,
                math.nan if bw is None else bw, self.intermod_fraction)


def _crossing(f1, y1, f2, y2, level):
    return f1 + (level - y1) * (f2 - f1) / (y2 - y1)


def notch_bandwidth(freqs, isolation_db, idx, level):
    """Width of the contiguous region around ``idx`` where isolation >= level."""
    if isolation_db[idx] < level:
        return None
    lo = idx
    while lo > 0 and isolation_db[lo - 1] >= level:
        lo -= 1
    hi = idx
    while hi < len(freqs) - 1 and isolation_db[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == len(freqs) - 1:
        return None
    left = _crossing(freqs[lo - 1], isolation_db[lo - 1], freqs[lo], isolation_db[lo], level)
    right = _crossing(freqs[hi], isolation_db[hi], freqs[hi + 1], isolation_db[hi + 1], level)
    return float(right - left)


def metrics(sweep: SweepResult, drive=1, through=2, isolated=3, levels=(40.0,)) -> CirculatorMetrics:
    ports = {drive, through, isolated}
    if len(ports) != 3 or not all(1 <= p <= sweep.n_ports for p in ports):
        raise ValidationError("ports", f"need three distinct ports within 1..{sweep.n_ports}")
    with np.errstate(divide="ignore"):
        thru = -sweep.db(through, drive)
        iso = -sweep.db(isolated, drive)
        refl = -sweep.db(drive, drive)
    contrast = iso - thru
    idx = int(np.argmax(contrast))
    best_thru = int(np.argmin(thru))
    k0 = sweep.K
    col = sweep.s[best_thru, :, drive - 1, :]
    side = np.abs(np.delete(col, k0, axis=1)) ** 2
    bws = {float(lv): notch_bandwidth(sweep.freqs, iso, idx, float(lv)) for lv in levels}
    return CirculatorMetrics(
        f_notch_hz=float(sweep.freqs[idx]),
        isolation_db=float(iso[idx]),
        insertion_loss_db=float(thru[best_thru]),
        return_loss_db=float(refl[idx]),
        intermod_fraction=float(np.sum(side)),
        bandwidths=bws,
        nonreciprocity_db=float(contrast[idx]),
        loss_at_notch_db=float(thru[idx]),
    )


@dataclass(frozen=True)
class PowerBalance:
    carrier: float
    sideband: float
    dissipated: float

    @property
    def total_scattered(self):
        return self.carrier + self.sideband


def power_balance(hs: HarmonicSMatrix, drive_port=1, tol=1e-9) -> PowerBalance:
    """Split unit incident power into carrier, sideband and dissipated fractions."""
    col = hs.s[:, drive_port - 1, :]
    p = np.abs(col) ** 2
    carrier = float(np.sum(p[:, hs.K]))
    sideband = float(np.sum(p) - np.sum(p[:, hs.K]))
    total = carrier + sideband
    if total > 1.0 + tol:
        raise PassivityError(
            f"scattered power {total:.12f} exceeds incident power at f0={hs.freq_hz:.9g} Hz "
            "(solver correctness failure)")
    return PowerBalance(carrier, sideband, max(1.0 - total, 0.0))


def write_metrics_csv(rows, path, level=40.0):
    """One CirculatorMetrics per row, columns METRICS_COLUMNS."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_COLUMNS)
            for m in rows:
                w.writerow([f"{v:.12e}" for v in m.row(level)])
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV {path}: {exc.strerror or exc}") from exc
