"""Time-domain periodic steady state: an independent check on the conversion-matrix solver.

Charge-form MNA, d/dt(Q(t) x) + G(t) x = b(t), integrated with the
trapezoidal rule at a fixed step until successive common periods agree.
Phasors at f0 + k*fm are then read off the last period by DFT.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._kernels import trapezoid_period
from .circuit import Circuit, Kind
from .errors import FbarCircError, NonConvergenceError, SolverError, ValidationError
from .modulation import waveform_at
from .solver import DEFAULT_K, solve_harmonic_sparams

log = logging.getLogger(__name__)

MAX_DENOMINATOR = 16
MIN_SAMPLES_PER_CYCLE = 64


@dataclass(frozen=True)
class EnergyAudit:
    """Energy over one steady-state period (J, for the normalized drive)."""

    source: float
    dissipated: float
    port_delivered: float
    pump_absorbed: float
    stored_change: float

    @property
    def residual(self):
        balance = self.dissipated + self.port_delivered + self.pump_absorbed + self.stored_change
        return abs(self.source - balance) / max(abs(self.source), 1e-300)


@dataclass
class TransientResult:
    period: float
    times: np.ndarray
    node_names: tuple
    node_waveforms: np.ndarray  # (samples, nodes)
    s: np.ndarray  # (ports, 2*n_sidebands+1): b_i at f0 + k fm per unit a_drive
    n_sidebands: int
    drive_port: int
    samples_per_cycle: int
    periods_run: int
    residual: float
    converged: bool
    energy: EnergyAudit | None = None
    extras: dict = field(default_factory=dict)

    def entry(self, i, k=0):
        return self.s[i - 1, k + self.n_sidebands]


@dataclass
class _Mna:
    names: tuple
    n_nodes: int
    q_lti: np.ndarray
    g_res: np.ndarray
    g_port: np.ndarray
    g_coupling: np.ndarray
    inc_mod: np.ndarray
    mods: list
    port_inc: np.ndarray
    z0: np.ndarray

    @property
    def g_lti(self):
        return self.g_res + self.g_port + self.g_coupling


def _build_mna(c: Circuit) -> _Mna:
    """State: node voltages, then inductor / BVD motional-arm currents."""
    nodes = list(c.unknown_nodes)
    extra_nodes = []
    currents = []
    for e in c.elements:
        if e.kind is Kind.BVD:
            extra_nodes.append(f"{e.name or 'bvd'}#{len(extra_nodes)}.m")
            currents.append(e)
        elif e.kind is Kind.INDUCTOR:
            currents.append(e)
    names = tuple(nodes + extra_nodes)
    n_nodes = len(names)
    nx = n_nodes + len(currents)
    idx = {n: i for i, n in enumerate(nodes)}
    q = np.zeros((nx, nx))
    g_res = np.zeros((nx, nx))
    g_port = np.zeros((nx, nx))
    g_cpl = np.zeros((nx, nx))

    def inc(a, b):
        v = np.zeros(nx)
        if a is not None and a in idx:
            v[idx[a]] += 1.0
        if b is not None and b in idx:
            v[idx[b]] -= 1.0
        return v

    def inc_i(ia, ib):
        v = np.zeros(nx)
        if ia is not None:
            v[ia] += 1.0
        if ib is not None:
            v[ib] -= 1.0
        return v

    inc_mod, mods, port_inc, z0 = [], [], [], []
    extra_iter = iter(range(len(nodes), n_nodes))
    cur_iter = iter(range(n_nodes, nx))
    for e in c.elements:
        a, b = e.nodes
        d = inc(a, b)
        k = e.kind
        if k is Kind.RESISTOR:
            g_res += np.outer(d, d) / e.params["r"]
        elif k is Kind.CAPACITOR:
            q += np.outer(d, d) * e.params["c"]
        elif k is Kind.PORT:
            g_port += np.outer(d, d) / e.params["z0"]
        elif k is Kind.VARACTOR:
            if e.is_modulated:
                inc_mod.append(d)
                mods.append(e)
            else:
                cv, gv, _ = waveform_at(e.mod, e.params["varactor"], 0.0)
                q += np.outer(d, d) * float(cv)
                g_res += np.outer(d, d) * float(gv)
        elif k is Kind.INDUCTOR:
            j = next(cur_iter)
            g_cpl[:, j] += d
            g_cpl[j, :] -= d
            q[j, j] = e.params["l"]
        elif k is Kind.BVD:
            p = e.params["bvd"]
            ym = next(extra_iter)
            j = next(cur_iter)
            q += np.outer(d, d) * p.c0
            # motional Rm-Lm from a to ym, then Cm from ym to b
            arm = inc(a, None) - inc_i(ym, None)
            g_cpl[:, j] += arm
            g_cpl[j, :] -= arm
            q[j, j] = p.lm
            g_res[j, j] = p.rm
            dc = inc_i(ym, None) - inc(b, None)
            q += np.outer(dc, dc) * p.cm
    for pe in c.ports:
        port_inc.append(inc(*pe.nodes))
        z0.append(pe.params["z0"])
    inc_mod = np.array(inc_mod).reshape(len(mods), nx)
    return _Mna(names, n_nodes, q, g_res, g_port, g_cpl, inc_mod, mods,
                np.array(port_inc).reshape(len(port_inc), nx), np.array(z0, dtype=float))


def common_period(f0, fm):
    """(period, carrier cycles, modulation cycles) for commensurate f0, fm."""
    if fm is None or fm == 0:
        return 1.0 / f0, 1, 0
    ratio = Fraction(f0 / fm).limit_denominator(MAX_DENOMINATOR)
    if abs(float(ratio) - f0 / fm) > 1e-9 * (f0 / fm):
        raise ValidationError(
            "f0", f"{f0:.9g} Hz is not commensurate with fm={fm:.9g} Hz (denominator <= {MAX_DENOMINATOR})")
    return ratio.denominator / fm, ratio.numerator, ratio.denominator


def _energy_audit(mna: _Mna, X, cm, gm, bvec, src, h):
    """Discrete energy balance of the trapezoidal scheme over the stored period."""
    x0, x1 = X[:-1], X[1:]
    xm = 0.5 * (x0 + x1)
    b_mid = 0.5 * (src + np.roll(src, -1))
    source = h * np.sum((xm @ bvec) * b_mid)
    dissipated = h * np.einsum("ni,ij,nj->", xm, mna.g_res, xm)
    port = h * np.einsum("ni,ij,nj->", xm, mna.g_port, xm)
    stored = 0.5 * (X[-1] @ mna.q_lti @ X[-1] - X[0] @ mna.q_lti @ X[0])
    pump = 0.0
    if len(mna.mods):
        v0 = x0 @ mna.inc_mod.T
        v1 = x1 @ mna.inc_mod.T
        vm = 0.5 * (v0 + v1)
        cm1 = np.roll(cm, -1, axis=0)
        gm1 = np.roll(gm, -1, axis=0)
        pump = float(np.sum(vm * (cm1 * v1 - cm * v0)))
        dissipated += h * float(np.sum(vm * 0.5 * (gm * v0 + gm1 * v1)))
    return EnergyAudit(float(source), float(dissipated), float(port), pump, float(stored))


def _run(c, mna, f0, fm, drive_port, spc, n_sidebands, amplitude, tol, max_periods, x_start=None):
    period, p_cycles, _ = common_period(f0, fm)
    ns = p_cycles * spc
    h = period / ns
    t = np.arange(ns) * h
    nx = mna.q_lti.shape[0]
    nm = len(mna.mods)
    cm = np.zeros((ns, nm))
    gm = np.zeros((ns, nm))
    for m, e in enumerate(mna.mods):
        cv, gv, _ = waveform_at(e.mod, e.params["varactor"], t)
        cm[:, m] = cv
        gm[:, m] = gv
    w0 = 2 * np.pi * f0
    # sin drive starts at zero so the algebraic rows begin consistent
    a_t = amplitude * np.sin(w0 * t)
    j = drive_port - 1
    bvec = mna.port_inc[j] * (2.0 / math.sqrt(mna.z0[j]))
    g_lti = mna.g_lti
    x = np.zeros(nx) if x_start is None else np.array(x_start, dtype=float)
    X = np.empty((ns + 1, nx))
    prev = None
    residual = math.inf
    periods = 0
    while periods < max_periods:
        ok = trapezoid_period(x, mna.q_lti, g_lti, mna.inc_mod, cm, gm, bvec, a_t, h, X)
        if not ok:
            raise SolverError(f"singular step matrix in transient at f0={f0:.9g} Hz")
        periods += 1
        volts = X[:-1, :mna.n_nodes]
        if prev is not None:
            scale = math.sqrt(np.mean(volts**2))
            diff = math.sqrt(np.mean((volts - prev) ** 2))
            residual = diff / scale if scale > 0 else diff
            if residual < tol:
                break
        prev = volts.copy()
        x = X[-1].copy()
    converged = residual < tol

    volts = X[:-1, :mna.n_nodes]
    ks = np.arange(-n_sidebands, n_sidebands + 1)
    wk = w0 + ks * 2 * np.pi * (fm or 0.0)
    P = len(mna.z0)
    s = np.full((P, len(ks)), np.nan + 0j)
    if amplitude != 0:
        basis = np.exp(-1j * np.outer(wk, t))  # (K, ns)
        a_phasor = (2.0 / ns) * np.sum(a_t * np.exp(-1j * w0 * t))
        v_ports = X[:-1] @ mna.port_inc.T  # (ns, P)
        b = v_ports / np.sqrt(mna.z0)[None, :]
        b[:, j] -= a_t
        s = (2.0 / ns) * (basis @ b).T / a_phasor
    energy = _energy_audit(mna, X, cm, gm, bvec, a_t, h)
    return TransientResult(period, t, mna.names, volts.copy(), s, n_sidebands, drive_port, spc,
                           periods, residual, converged, energy), X[0].copy()


def transient_pss(c: Circuit, f0, omega_m=None, drive_port=1, samples_per_cycle=128, n_sidebands=DEFAULT_K,
                  amplitude=1.0, tol=1e-8, max_periods=2000, richardson=False) -> TransientResult:
    """Periodic steady state for a unit sine wave incident on ``drive_port``.

    With ``richardson`` the run is repeated at half the step (warm-started)
    and the phasors extrapolated as (4 S_h/2 - S_h) / 3.
    """
    if not f0 > 0:
        raise ValidationError("f0", f"must be > 0, got {f0!r}")
    if samples_per_cycle < MIN_SAMPLES_PER_CYCLE:
        raise ValidationError("samples_per_cycle", f"must be >= {MIN_SAMPLES_PER_CYCLE}")
    fm = c.modulation_freq()
    if omega_m is not None and fm is not None and abs(omega_m / (2 * np.pi) - fm) > 1e-9 * fm:
        raise ValidationError("omega_m", "does not match the circuit's modulation frequency")
    if not 1 <= drive_port <= len(c.ports):
        raise ValidationError("drive_port", f"no port {drive_port}")
    if fm is not None:
        lowest = f0 - n_sidebands * fm
        if lowest <= 0:
            raise ValidationError("n_sidebands", "sideband frequency falls at or below 0 Hz")
    mna = _build_mna(c)
    res, x0 = _run(c, mna, f0, fm, drive_port, samples_per_cycle, n_sidebands, amplitude, tol, max_periods)
    if richardson and res.converged:
        fine, _ = _run(c, mna, f0, fm, drive_port, 2 * samples_per_cycle, n_sidebands, amplitude, tol,
                       max_periods, x_start=x0)
        fine.extras["s_coarse"] = res.s
        fine.extras["s_fine"] = fine.s
        fine.s = (4.0 * fine.s - res.s) / 3.0
        fine.periods_run += res.periods_run
        res = fine
    if not res.converged:
        raise NonConvergenceError(
            f"transient did not reach steady state at f0={f0:.9g} Hz after {res.periods_run} periods "
            f"(residual {res.residual:.3e})", res)
    return res


def write_waveforms_csv(result: TransientResult, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", *result.node_names])
            for t, row in zip(result.times, result.node_waveforms):
                w.writerow([f"{t:.12e}", *(f"{v:.12e}" for v in row)])
    except OSError as exc:
        raise OSError(f"cannot write waveform CSV {path}: {exc.strerror or exc}") from exc


@dataclass(frozen=True)
class ComparisonRow:
    freq_hz: float
    port_out: int
    port_in: int
    k: int
    db_transient: float
    db_harmonic: float
    phase_delta_deg: float
    error: str = ""

    @property
    def db_delta(self):
        return abs(self.db_transient - self.db_harmonic)


@dataclass
class ComparisonReport:
    rows: list
    db_threshold: float = 0.1
    phase_threshold_deg: float = 1.0
    K: int = DEFAULT_K

    @property
    def failures(self):
        return [r for r in self.rows if r.error or r.db_delta > self.db_threshold
                or abs(r.phase_delta_deg) > self.phase_threshold_deg]

    @property
    def passed(self):
        return bool(self.rows) and not self.failures

    def lines(self):
        out = []
        for r in self.rows:
            if r.error:
                out.append(f"{r.freq_hz:.6e} S{r.port_out}{r.port_in}[k={r.k}] ERROR {r.error}")
                continue
            flag = "ok" if r not in self.failures else "FAIL"
            out.append(f"{r.freq_hz:.6e} S{r.port_out}{r.port_in}[k={r.k}] transient {r.db_transient:9.4f} dB "
                       f"harmonic {r.db_harmonic:9.4f} dB  d|S| {r.db_delta:.4f} dB  "
                       f"dphase {r.phase_delta_deg:+.4f} deg  {flag}")
        return out


def compare_oracle(c: Circuit, freqs, K=DEFAULT_K, drive_ports=(1,), sidebands=(0,), samples_per_cycle=128,
                   richardson=True, db_threshold=0.1, phase_threshold_deg=1.0, **kwargs) -> ComparisonReport:
    """Per-entry dB and phase deltas between the transient and conversion-matrix solvers."""
    rows = []
    P = len(c.ports)
    n_sb = max([abs(k) for k in sidebands] + [1])
    for f in freqs:
        for j in drive_ports:
            try:
                hs = solve_harmonic_sparams(c, 2 * np.pi * f, None, K)
                tr = transient_pss(c, f, None, j, samples_per_cycle, n_sb, richardson=richardson, **kwargs)
            except (FbarCircError, ValueError) as exc:
                for i in range(1, P + 1):
                    for k in sidebands:
                        rows.append(ComparisonRow(f, i, j, k, math.nan, math.nan, math.nan, str(exc)))
                continue
            for i in range(1, P + 1):
                for k in sidebands:
                    a = tr.entry(i, k)
                    b = hs.entry(i, j, k)
                    dphase = math.degrees(np.angle(a * np.conj(b))) if abs(a) and abs(b) else 0.0
                    rows.append(ComparisonRow(f, i, j, k, 20 * math.log10(max(abs(a), 1e-300)),
                                              20 * math.log10(max(abs(b), 1e-300)), dphase))
    return ComparisonReport(rows, db_threshold, phase_threshold_deg, K)
