"""Conversion-matrix (harmonic block) nodal solver for periodically modulated circuits.

Unknowns are node voltages at the sideband frequencies w_q = w0 + q*wm,
q = -K..K, laid out as ``index = (q + K) * n_nodes + node``.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import get_lapack_funcs

from .circuit import Circuit, Kind, lti_admittance
from .errors import NonConvergenceError, SolverError, UnsupportedConfigurationError, ValidationError
from .modulation import DEFAULT_SAMPLES, fourier_series, varactor_waveform, waveform_at

log = logging.getLogger(__name__)

DEFAULT_K = 8
K_MAX = 32
RCOND_FLOOR = 1e-15


@dataclass(frozen=True)
class BlockSystem:
    omega0: float
    omega_m: float
    K: int
    matrix: np.ndarray
    nodes: tuple
    port_incidence: np.ndarray  # (P, n_nodes)
    z0: np.ndarray  # (P,)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def omegas(self):
        return self.omega0 + np.arange(-self.K, self.K + 1) * self.omega_m

    def block(self, q, p):
        n = self.n_nodes
        i, j = (q + self.K) * n, (p + self.K) * n
        return self.matrix[i:i + n, j:j + n]


@dataclass(frozen=True)
class HarmonicSMatrix:
    """Harmonic scattering data at one carrier frequency.

    ``full[i, q + K, j, p + K]`` is the wave leaving port i at sideband q per
    unit wave entering port j at sideband p. ``s[i, j, k + K]`` is the
    carrier-driven slice (p = 0).
    """

    omega0: float
    omega_m: float
    K: int
    full: np.ndarray
    z0: np.ndarray = None

    def __post_init__(self):
        if self.z0 is None:
            object.__setattr__(self, "z0", np.full(self.full.shape[0], 50.0))

    @property
    def s(self):
        return np.transpose(self.full[:, :, :, self.K], (0, 2, 1))

    @property
    def n_ports(self):
        return self.full.shape[0]

    @property
    def freq_hz(self):
        return self.omega0 / (2 * np.pi)

    def entry(self, i, j, k=0):
        """1-based port indices, sideband k."""
        return self.full[i - 1, k + self.K, j - 1, self.K]


@dataclass
class SweepResult:
    """Harmonic S-data over a frequency grid.

    ``s`` has shape (F, P, P, 2K+1); ``full`` (F, P, 2K+1, P, 2K+1) is present
    for solver output and absent for data read back from files.
    """

    freqs: np.ndarray
    K: int
    omega_m: float
    s: np.ndarray
    full: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    z0: np.ndarray = None

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        if self.z0 is None:
            self.z0 = np.full(self.s.shape[1], 50.0)

    @property
    def n_ports(self):
        return self.s.shape[1]

    def __len__(self):
        return len(self.freqs)

    def point(self, idx) -> HarmonicSMatrix:
        if self.full is None:
            raise ValidationError("full", "sweep carries only carrier-driven data")
        return HarmonicSMatrix(2 * np.pi * self.freqs[idx], self.omega_m, self.K, self.full[idx], self.z0)

    def trace(self, i, j, k=0):
        """Complex S[i][j][k] over the grid, 1-based ports."""
        return self.s[:, i - 1, j - 1, k + self.K]

    def db(self, i, j, k=0):
        return 20 * np.log10(np.abs(self.trace(i, j, k)))


def _resolve_omega_m(c: Circuit, omega_m):
    fm = c.modulation_freq()
    if fm is None:
        return 0.0 if omega_m is None else float(omega_m)
    w_circuit = 2 * np.pi * fm
    if omega_m is not None and abs(omega_m - w_circuit) > 1e-9 * w_circuit:
        raise UnsupportedConfigurationError(
            f"requested modulation {omega_m / (2 * np.pi):.6g} Hz differs from the circuit's {fm:.6g} Hz"
        )
    return w_circuit


def _incidence(nodes_index, e):
    v = np.zeros(len(nodes_index))
    a, b = e.nodes
    if a in nodes_index:
        v[nodes_index[a]] += 1.0
    if b in nodes_index:
        v[nodes_index[b]] -= 1.0
    return v


def assemble(c: Circuit, omega0, omega_m=None, K=DEFAULT_K, n_samples=DEFAULT_SAMPLES) -> BlockSystem:
    """Stamp the block nodal matrix.

    LTI admittance Y(w): block (q, q) += Y(w_q). Modulated (C(t), G(t)):
    block (q, p) += j w_q c_{q-p} + g_{q-p}. Ports: 1/Z0 to their reference.
    """
    if not omega0 > 0:
        raise ValidationError("omega0", f"must be > 0, got {omega0!r}")
    if K < 0 or int(K) != K:
        raise ValidationError("K", f"must be a non-negative integer, got {K!r}")
    K = int(K)
    omega_m = _resolve_omega_m(c, omega_m)
    nodes = c.unknown_nodes
    index = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    H = 2 * K + 1
    w = omega0 + np.arange(-K, K + 1) * omega_m
    if np.any(w <= 0):
        raise ValidationError("K", f"sideband frequency falls at or below 0 Hz for K={K}")

    A = np.zeros((H, n, H, n), dtype=complex)
    diag = np.arange(H)
    ports = c.ports
    for e in c.elements:
        inc = _incidence(index, e)
        stamp = np.outer(inc, inc)
        if e.kind is Kind.PORT:
            y = np.full(H, 1.0 / e.params["z0"], dtype=complex)
        elif e.kind is Kind.VARACTOR:
            if e.is_modulated:
                fc = fourier_series(varactor_waveform(e.mod, e.params["varactor"], n_samples), 2 * K)
                qp = diag[:, None] - diag[None, :] + 2 * K
                M = 1j * w[:, None] * fc.c[qp] + fc.g[qp]
                A += M[:, None, :, None] * stamp[None, :, None, :]
                continue
            cv, gv, _ = waveform_at(e.mod, e.params["varactor"], 0.0)
            y = 1j * w * float(cv) + float(gv)
        else:
            y = np.array([lti_admittance(e, wq) for wq in w], dtype=complex)
        with np.errstate(invalid="ignore"):  # non-finite y is reported by _factor
            A[diag, :, diag, :] += y[:, None, None] * stamp[None, :, :]

    inc_ports = np.array([_incidence(index, p) for p in ports]).reshape(len(ports), n)
    z0 = np.array([p.params["z0"] for p in ports], dtype=float)
    return BlockSystem(float(omega0), float(omega_m), K, A.reshape(H * n, H * n), nodes, inc_ports, z0)


def _factor(system: BlockSystem):
    A = system.matrix
    if not np.all(np.isfinite(A)):
        raise SolverError(f"non-finite admittance at w0={system.omega0:.9g} rad/s "
                          f"(f0={system.omega0 / (2 * np.pi):.9g} Hz): a lossless element is at resonance",
                          omega0=system.omega0)
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            # singularity is diagnosed below via rcond
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"block system not factorizable at w0={system.omega0:.9g} rad/s: {exc}",
                          omega0=system.omega0) from exc
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    anorm = np.linalg.norm(A, 1)
    rcond, _ = gecon(lu, anorm, norm="1")
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SolverError(
            f"singular block system at w0={system.omega0:.9g} rad/s "
            f"(f0={system.omega0 / (2 * np.pi):.9g} Hz), reciprocal condition estimate {rcond:.3e}",
            omega0=system.omega0, rcond=float(rcond))
    return lu, piv


def solve_harmonic_sparams(c: Circuit, omega0, omega_m=None, K=DEFAULT_K, z0=None,
                           n_samples=DEFAULT_SAMPLES) -> HarmonicSMatrix:
    """Conversion scattering matrix at carrier ``omega0``.

    Each port is driven by a source-terminated Norton branch (2a/sqrt(Z0) into
    1/Z0); b = V/sqrt(Z0) - a with real reference impedances. ``z0`` overrides
    every port's own reference impedance.
    """
    if z0 is not None:
        from dataclasses import replace

        elems = tuple(replace(e, params={**e.params, "z0": float(z0)}) if e.kind is Kind.PORT else e
                      for e in c.elements)
        c = Circuit(c.nodes, elems, c.ground)
    system = assemble(c, omega0, omega_m, K, n_samples)
    lu, piv = _factor(system)
    P = len(system.z0)
    H = 2 * system.K + 1
    n = system.n_nodes
    sq = np.sqrt(system.z0)

    # rhs column (j, p): Norton current 2/sqrt(Z0_j) at sideband p
    rhs = np.zeros((H, n, P, H), dtype=complex)
    for j in range(P):
        for p in range(H):
            rhs[p, :, j, p] = system.port_incidence[j] * (2.0 / sq[j])
    x = sla.lu_solve((lu, piv), rhs.reshape(H * n, P * H)).reshape(H, n, P, H)
    v = np.einsum("in,qnjp->iqjp", system.port_incidence, x)
    full = v / sq[:, None, None, None]
    for j in range(P):
        full[j, np.arange(H), j, np.arange(H)] -= 1.0

    loss = np.array([p.params.get("hpf_loss_db", 0.0) for p in c.ports])
    if np.any(loss > 0):
        alpha = 10.0 ** (-loss / 20.0)
        full *= alpha[:, None, None, None] * alpha[None, None, :, None]
    if not np.all(np.isfinite(full)):
        raise SolverError(f"non-finite S entries at w0={omega0:.9g} rad/s", omega0=omega0)
    return HarmonicSMatrix(float(omega0), system.omega_m, system.K, full, system.z0.copy())


def _modulation_meta(c: Circuit):
    mods = [e.mod for e in c.elements if e.kind is Kind.VARACTOR]
    if not mods:
        return {}
    m = mods[0]
    return {
        "shape": m.shape, "freq_hz": m.freq, "vpp": m.amplitude_pp, "dc_bias_v": m.dc_bias,
        "duty": m.duty, "rise_fraction": m.rise_fraction,
        "phases_deg": [e.mod.phase for e in c.elements if e.kind is Kind.VARACTOR],
    }


def sweep(c: Circuit, f_start, f_stop, points, omega_m=None, K=DEFAULT_K, workers=None,
          n_samples=DEFAULT_SAMPLES) -> SweepResult:
    """Uniform-grid sweep; parallel evaluation returns the same arrays as sequential."""
    if not (0 < f_start < f_stop):
        raise ValidationError("f_start", f"need 0 < f_start < f_stop, got {f_start!r}, {f_stop!r}")
    if int(points) != points or points < 2:
        raise ValidationError("points", f"need an integer >= 2, got {points!r}")
    freqs = np.linspace(f_start, f_stop, int(points))
    omega_m = _resolve_omega_m(c, omega_m)

    def one(f):
        try:
            return solve_harmonic_sparams(c, 2 * np.pi * f, omega_m, K, n_samples=n_samples)
        except SolverError as exc:
            raise SolverError(f"{exc} [sweep point {f:.9g} Hz]", exc.omega0, exc.rcond, freq_hz=f) from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, freqs))
    else:
        results = [one(f) for f in freqs]
    full = np.stack([r.full for r in results])
    s = np.stack([r.s for r in results])
    meta = {"K": int(K), **_modulation_meta(c)}
    return SweepResult(freqs, int(K), omega_m, s, full, meta, results[0].z0)


@dataclass(frozen=True)
class ConvergenceReport:
    K: int
    converged: bool
    residual: float
    history: tuple  # ((K, residual), ...)


def truncation_residual(s_lo: HarmonicSMatrix, s_hi: HarmonicSMatrix):
    """max |S(K_lo) - S(K_hi)| over the carrier-driven entries both share."""
    k = s_lo.K
    a = s_lo.s
    b = s_hi.s[:, :, s_hi.K - k:s_hi.K + k + 1]
    return float(np.max(np.abs(a - b)))


def converge_K(c: Circuit, omega0, omega_m=None, K_start=1, tol=1e-6, K_max=K_MAX,
               n_samples=DEFAULT_SAMPLES) -> int:
    """Smallest K in [K_start, K_max] with max |S(K) - S(K+2)| < tol.

    Raises NonConvergenceError carrying a ConvergenceReport otherwise.
    """
    if K_start < 1:
        raise ValidationError("K_start", f"must be >= 1, got {K_start}")
    cache = {}

    def at(k):
        if k not in cache:
            cache[k] = solve_harmonic_sparams(c, omega0, omega_m, k, n_samples=n_samples)
        return cache[k]

    history = []
    for k in range(K_start, K_max + 1):
        r = truncation_residual(at(k), at(k + 2))
        history.append((k, r))
        log.debug("converge_K: K=%d residual=%.3e", k, r)
        if r < tol:
            return k
    report = ConvergenceReport(K_max, False, history[-1][1], tuple(history))
    raise NonConvergenceError(
        f"truncation not converged to {tol:g} by K={K_max} (residual {report.residual:.3e})", report)
