"""Command-line entry point: ``fbarcirc {sim,match,validate,metrics}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (FbarCircError, NonConvergenceError, PassivityError, SolverError,
                     UnsupportedConfigurationError)
from .netlist import load_netlist
from .network import METRICS_COLUMNS, input_impedance, l_match, metrics, optimize_match, write_metrics_csv
from .solver import solve_harmonic_sparams, sweep
from .touchstone import read_sidebands_csv, read_touchstone, write_sidebands_csv, write_touchstone
from .transient import compare_oracle

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_MISMATCH = 3

VALIDATE_K = 96
# carrier offsets from fs in modulation periods: 2502, 2511, 2520, 2529, 2541 MHz at 3 MHz
VALIDATE_MULTIPLES = (834, 837, 840, 843, 847)

log = logging.getLogger("fbarcirc")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _metrics_line(m, level):
    return ",".join(f"{v:.6e}" for v in m.row(level))


def cmd_sim(args):
    doc = load_netlist(args.netlist)
    for note in doc.notes:
        log.info("note: %s", note)
    for p in doc.provenance:
        log.info("%s", p)
    c = doc.build(modulation=not args.no_modulation, with_match=not args.no_match)
    st = doc.sweep
    K = st.K if args.harmonics is None else args.harmonics
    result = sweep(c, st.f_start, st.f_stop, st.points, K=K, workers=args.workers)
    prefix = Path(args.out) if args.out else Path(args.netlist).with_suffix("")
    s3p = prefix.with_name(prefix.name + f".s{result.n_ports}p")
    csv_path = prefix.with_name(prefix.name + ".csv")
    met_path = prefix.with_name(prefix.name + "_metrics.csv")
    write_touchstone(result, s3p, timestamp=not args.no_timestamp)
    write_sidebands_csv(result, csv_path)
    m = metrics(result, *args.ports, levels=(args.level,))
    write_metrics_csv([m], met_path, level=args.level)
    print(",".join(METRICS_COLUMNS))
    print(_metrics_line(m, args.level))
    print(f"wrote {s3p}, {csv_path}, {met_path}", file=sys.stderr)
    return EXIT_OK


def cmd_match(args):
    doc = load_netlist(args.netlist)
    c = doc.build(with_match=False)
    drive, through, isolated = args.ports
    if args.optimize:
        res = optimize_match(c, args.freq, args.objective, K=doc.sweep.K, drive=drive, through=through,
                             isolated=isolated)
        net = res.network
        print(f"l_series_h = {net.l_series:.6e}")
        print(f"c_shunt_f = {net.c_shunt:.6e}")
        print(f"# objective {args.objective}: {res.objective:.4f} dB (start {res.start_objective:.4f} dB, "
              f"improved={res.improved}, evaluations={res.evaluations})")
        return EXIT_OK
    hs = solve_harmonic_sparams(c, 2 * math.pi * args.freq, None, doc.sweep.K)
    z = input_impedance(hs, drive)
    net = l_match(z, args.freq, hs.z0[drive - 1])
    print(f"# z_in = {z.real:.6g} {z.imag:+.6g}j ohm at {args.freq:.9g} Hz")
    print(f"l_series_h = {net.l_series:.6e}")
    print(f"c_shunt_f = {net.c_shunt:.6e}")
    return EXIT_OK


def cmd_validate(args):
    doc = load_netlist(args.netlist)
    c = doc.circuit
    fm = c.modulation_freq()
    if args.freqs:
        freqs = args.freqs
    elif fm is not None:
        freqs = [n * fm for n in VALIDATE_MULTIPLES]
    else:
        freqs = list(np.linspace(doc.sweep.f_start, doc.sweep.f_stop, 5))
    report = compare_oracle(c, freqs, K=args.harmonics, drive_ports=tuple(args.drive), sidebands=tuple(args.sidebands),
                            samples_per_cycle=args.samples_per_cycle, richardson=not args.no_richardson,
                            db_threshold=args.db_threshold, phase_threshold_deg=args.phase_threshold)
    for line in report.lines():
        print(line)
    n_fail = len(report.failures)
    print(f"{len(report.rows) - n_fail}/{len(report.rows)} entries within {args.db_threshold} dB / "
          f"{args.phase_threshold} deg (K={args.harmonics})")
    if any(r.error for r in report.rows):
        errors = [r.error for r in report.rows if r.error]
        if len(errors) == len(report.rows):
            print("every oracle run failed", file=sys.stderr)
            return EXIT_SOLVER
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_metrics(args):
    path = Path(args.file)
    if path.suffix.lower() == ".csv":
        data = read_sidebands_csv(path)
    else:
        data = read_touchstone(path)
    m = metrics(data, *args.ports, levels=(args.level,))
    print(",".join(METRICS_COLUMNS))
    print(_metrics_line(m, args.level))
    if args.out:
        write_metrics_csv([m], args.out, level=args.level)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="fbarcirc", description=__doc__.split(":")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log defaults, notes and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def ports(sp):
        sp.add_argument("--ports", type=int, nargs=3, default=(1, 2, 3), metavar=("DRIVE", "THROUGH", "ISOLATED"),
                        help="port roles for metrics (default 1 2 3)")

    s = sub.add_parser("sim", help="sweep a netlist, write .s3p, sideband CSV and a metrics row")
    s.add_argument("netlist")
    s.add_argument("--no-modulation", action="store_true", help="hold every varactor at its dc bias")
    s.add_argument("--no-match", action="store_true", help="ignore the [match] section")
    s.add_argument("--out", metavar="PREFIX", help="output prefix (default: netlist path without suffix)")
    s.add_argument("-K", "--harmonics", type=int, help="override sweep.harmonics_k")
    s.add_argument("--workers", type=int, default=None, help="parallel sweep threads")
    s.add_argument("--level", type=float, default=40.0, help="isolation level for the bandwidth column (dB)")
    s.add_argument("--no-timestamp", action="store_true", help="omit the timestamp comment in the .s3p header")
    ports(s)
    s.set_defaults(func=cmd_sim)

    m = sub.add_parser("match", help="L-section (series L, shunt C) for the unmatched circuit at --freq")
    m.add_argument("netlist")
    m.add_argument("--freq", type=float, required=True, help="design frequency (Hz)")
    m.add_argument("--optimize", action="store_true", help="refine with Nelder-Mead on the full harmonic model")
    m.add_argument("--objective", choices=("max_isolation", "min_return_loss"), default="max_isolation")
    ports(m)
    m.set_defaults(func=cmd_match)

    v = sub.add_parser("validate", help="compare the harmonic solver against the transient oracle")
    v.add_argument("netlist")
    v.add_argument("--freqs", type=_floats, help="comma-separated carrier frequencies (Hz)")
    v.add_argument("-K", "--harmonics", type=int, default=VALIDATE_K, help=f"harmonic order (default {VALIDATE_K})")
    v.add_argument("--drive", type=int, nargs="+", default=[1], help="drive port(s)")
    v.add_argument("--sidebands", type=int, nargs="+", default=[0], help="sideband indices to compare")
    v.add_argument("--samples-per-cycle", type=int, default=128)
    v.add_argument("--no-richardson", action="store_true", help="skip the half-step extrapolation")
    v.add_argument("--db-threshold", type=float, default=0.1)
    v.add_argument("--phase-threshold", type=float, default=1.0, help="degrees")
    v.set_defaults(func=cmd_validate)

    me = sub.add_parser("metrics", help="circulator metrics from a sideband CSV or Touchstone file")
    me.add_argument("file")
    me.add_argument("--level", type=float, default=40.0, help="isolation level for bandwidth (dB)")
    me.add_argument("--out", help="also write the metrics CSV here")
    ports(me)
    me.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (SolverError, NonConvergenceError, PassivityError, UnsupportedConfigurationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FbarCircError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
