"""Touchstone v1 (.sNp, carrier block) and sideband CSV emission and parsing."""

from __future__ import annotations

import csv
import datetime as _dt
import math

import numpy as np

from . import __version__
from .errors import ValidationError
from .solver import SweepResult

OPTION_LINE = "# HZ S RI R 50"
SIDEBAND_COLUMNS = ("f_hz", "i", "j", "k", "re", "im")
_FMT = "%.12e"


def _check(sweep: SweepResult):
    if len(sweep.freqs) == 0:
        raise ValidationError("sweep", "empty sweep")
    if np.any(np.diff(sweep.freqs) <= 0):
        raise ValidationError("freqs", "frequencies must be strictly increasing")
    if np.any(sweep.z0 != 50.0):
        raise ValidationError("z0", "Touchstone output assumes a 50 ohm reference on every port")


def header_lines(sweep: SweepResult, timestamp=None):
    """Comment header: tool version, K and modulation settings, optional timestamp."""
    lines = [f"! fbarcirc {__version__}", f"! K = {sweep.K}"]
    meta = {k: v for k, v in sweep.meta.items() if k not in ("K", "matching")}
    if meta:
        lines.append("! modulation: " + " ".join(f"{k}={_meta_value(v)}" for k, v in meta.items()))
    else:
        lines.append("! modulation: off")
    if "matching" in sweep.meta:
        lines.append("! matching: " + " ".join(f"({l:.6e},{c:.6e})" for l, c in sweep.meta["matching"]))
    if timestamp:
        if timestamp is True:
            timestamp = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
        lines.append(f"! generated {timestamp}")
    return lines


def _meta_value(v):
    if isinstance(v, (list, tuple)):
        return ",".join(_meta_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _open_for_write(path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_touchstone(sweep: SweepResult, path, timestamp=None):
    """Write the carrier (k = 0) block, one matrix row per line.

    ``timestamp`` (True or a string) adds a comment line; data lines never
    depend on it, so output without one is byte-reproducible.
    """
    _check(sweep)
    k0 = sweep.K
    P = sweep.n_ports
    with _open_for_write(path) as fh:
        for line in header_lines(sweep, timestamp):
            fh.write(line + "\n")
        fh.write(OPTION_LINE + "\n")
        for idx, f in enumerate(sweep.freqs):
            for i in range(P):
                row = sweep.s[idx, i, :, k0]
                cells = " ".join(f"{_FMT % z.real} {_FMT % z.imag}" for z in row)
                lead = _FMT % f if i == 0 else " " * len(_FMT % f)
                fh.write(f"{lead} {cells}\n")


def _parse_option_line(line, lineno):
    tok = line[1:].upper().split()
    want = ["HZ", "S", "RI", "R", "50"]
    try:
        ok = len(tok) == 5 and tok[:4] == want[:4] and float(tok[4]) == 50.0
    except ValueError:
        ok = False
    if not ok:
        raise ValidationError(f"line {lineno}", f"unsupported option line {line.strip()!r}, expected {OPTION_LINE!r}")


def read_touchstone(path, n_ports=None) -> SweepResult:
    """Parse a file written by :func:`write_touchstone` (or any HZ/S/RI/50 v1 file).

    The port count comes from ``n_ports`` or the ``.sNp`` suffix. Result has K = 0.
    """
    if n_ports is None:
        suffix = str(path).rsplit(".", 1)[-1].lower()
        if not (suffix.startswith("s") and suffix.endswith("p") and suffix[1:-1].isdigit()):
            raise ValidationError("path", f"cannot infer port count from {path!r}; pass n_ports")
        n_ports = int(suffix[1:-1])
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    numbers = []
    seen_option = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_option_line(line, lineno)
            seen_option = True
            continue
        try:
            numbers.extend(float(t) for t in line.split())
        except ValueError as exc:
            raise ValidationError(f"line {lineno}", f"non-numeric data: {raw.strip()!r}") from exc
    if not seen_option:
        raise ValidationError("option", "missing option line")
    per = 1 + 2 * n_ports * n_ports
    if not numbers or len(numbers) % per:
        raise ValidationError("data", f"{len(numbers)} values is not a multiple of {per} for {n_ports} ports")
    arr = np.array(numbers).reshape(-1, per)
    freqs = arr[:, 0]
    if np.any(np.diff(freqs) <= 0):
        raise ValidationError("freqs", "frequencies must be strictly increasing")
    ri = arr[:, 1:].reshape(-1, n_ports, n_ports, 2)
    s = (ri[..., 0] + 1j * ri[..., 1])[..., None]
    return SweepResult(freqs, 0, 0.0, s)


def write_sidebands_csv(sweep: SweepResult, path):
    """All carrier-driven sidebands: one row per (f, i, j, k), ports 1-based."""
    _check(sweep)
    K = sweep.K
    P = sweep.n_ports
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIDEBAND_COLUMNS)
        for idx, f in enumerate(sweep.freqs):
            for i in range(P):
                for j in range(P):
                    for k in range(-K, K + 1):
                        z = sweep.s[idx, i, j, k + K]
                        w.writerow([_FMT % f, i + 1, j + 1, k, _FMT % z.real, _FMT % z.imag])


def read_sidebands_csv(path) -> SweepResult:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SIDEBAND_COLUMNS:
        raise ValidationError("header", f"expected columns {','.join(SIDEBAND_COLUMNS)}")
    try:
        data = [(float(r[0]), int(r[1]), int(r[2]), int(r[3]), float(r[4]), float(r[5])) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise ValidationError("data", f"malformed sideband row: {exc}") from exc
    if not data:
        raise ValidationError("data", "no rows")
    freqs = sorted({d[0] for d in data})
    P = max(max(d[1], d[2]) for d in data)
    K = max(abs(d[3]) for d in data)
    expected = len(freqs) * P * P * (2 * K + 1)
    if len(data) != expected:
        raise ValidationError("data", f"{len(data)} rows, expected {expected} for {P} ports and K={K}")
    fi = {f: n for n, f in enumerate(freqs)}
    s = np.full((len(freqs), P, P, 2 * K + 1), np.nan + 0j)
    for f, i, j, k, re, im in data:
        s[fi[f], i - 1, j - 1, k + K] = complex(re, im)
    if np.any(np.isnan(s)):
        raise ValidationError("data", "missing (f, i, j, k) combinations")
    omega_m = math.nan
    return SweepResult(np.array(freqs), K, omega_m, s)
