"""INI-style netlist for the wye circulator.

Sections ``[fbar] [varactor] [modulation] [ports] [match] [sweep]`` hold
``key = value`` lines; ``#`` starts a comment. Units are bare SI as named by
the key suffix. Every key has a default; defaulted keys are listed in the
document's provenance log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .circuit import BranchSpec, Circuit, MatchingNetwork, ModSpec, VaractorSpec, build_wye, derive_bvd
from .errors import NetlistError, ValidationError

# bias-filter components of the modulation feed; checked, not simulated
BIAS_FILTER_L = 29e-9
BIAS_FILTER_C = 100e-9


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _shape(text):
    if text not in ("square", "sine", "off"):
        raise ValueError(f"must be one of square, sine, off; got {text!r}")
    return text


def _triple(text):
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    parts = [p for p in body.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected exactly 3 phases, got {len(parts)}")
    return tuple(_float(p) for p in parts)


def _pos(v):
    return v > 0 and math.isfinite(v)


def _nonneg(v):
    return v >= 0 and math.isfinite(v)


# section -> key -> (parser, default, check, requirement text)
SCHEMA = {
    "fbar": {
        "fs_hz": (_float, 2.5e9, _pos, "> 0"),
        "q": (_float, 1250.0, lambda v: v > 0, "> 0 (inf allowed)"),
        "kt2": (_float, 0.03, lambda v: 0 < v < 1, "in (0, 1)"),
        "c0_f": (_float, 1.0e-12, _pos, "> 0"),
    },
    "varactor": {
        "c_zero_bias_f": (_float, 1.0e-12, _pos, "> 0"),
        "c_reverse_off_f": (_float, 0.2e-12, _pos, "> 0"),
        "r_on_ohm": (_float, 1.0, _pos, "> 0"),
        "c_forward_f": (_float, 10e-12, _pos, "> 0"),
    },
    "modulation": {
        "shape": (_shape, "square", lambda v: True, ""),
        "freq_hz": (_float, 3e6, _pos, "> 0"),
        "vpp": (_float, 7.0, _nonneg, ">= 0"),
        "dc_bias_v": (_float, 0.0, math.isfinite, "finite"),
        "duty": (_float, 0.5, lambda v: 0 < v < 1, "in (0, 1)"),
        "rise_fraction": (_float, 0.05, lambda v: 0 <= v < 0.25, "in [0, 0.25)"),
        "phases_deg": (_triple, (0.0, 120.0, 240.0), lambda v: all(map(math.isfinite, v)), "finite"),
    },
    "ports": {
        "z0_ohm": (_float, 50.0, _pos, "> 0"),
        "hpf_loss_db": (_float, 0.0, _nonneg, ">= 0"),
    },
    "match": {
        "l_series_h": (_float, 0.0, _nonneg, ">= 0"),
        "c_shunt_f": (_float, 0.0, _nonneg, ">= 0"),
    },
    "sweep": {
        "f_start_hz": (_float, 2.40e9, _pos, "> 0"),
        "f_stop_hz": (_float, 2.60e9, _pos, "> 0"),
        "points": (_int, 201, lambda v: v >= 2, ">= 2"),
        "harmonics_k": (_int, 8, lambda v: 0 <= v <= 256, "in [0, 256]"),
    },
}
OPTIONAL_SECTIONS = ("match",)
_UNKNOWN = object()


@dataclass(frozen=True)
class SweepSettings:
    f_start: float
    f_stop: float
    points: int
    K: int


@dataclass(frozen=True)
class NetlistDocument:
    """Parsed netlist: the circuit plus everything needed to rebuild variants of it."""

    circuit: Circuit
    branch: BranchSpec
    phases: tuple
    sweep: SweepSettings
    match: MatchingNetwork | None
    values: dict
    provenance: tuple
    notes: tuple

    @property
    def defaulted_keys(self):
        return tuple(p.split(" ", 1)[0] for p in self.provenance)

    def build(self, modulation=True, with_match=True, phases=None) -> Circuit:
        """Rebuild the wye with modulation or matching toggled, or other phases."""
        b = self.branch
        if not modulation:
            b = replace(b, mod=replace(b.mod, shape="off"))
        if not with_match:
            b = replace(b, match=None)
        return build_wye(b, self.phases if phases is None else phases)


def _tokenize(text):
    """Yield (lineno, section, key, raw_value) and collect structural problems."""
    problems = []
    entries = []
    section = None
    seen_sections = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                problems.append((lineno, None, f"malformed section header {raw.strip()!r}"))
                section = None
                continue
            name = line[1:-1].strip().lower()
            if name not in SCHEMA:
                problems.append((lineno, None, f"unknown section [{name}]"))
                section = _UNKNOWN
                continue
            if name in seen_sections:
                problems.append((lineno, None, f"section [{name}] repeated (first at line {seen_sections[name]})"))
            seen_sections.setdefault(name, lineno)
            section = name
            continue
        if "=" not in line:
            problems.append((lineno, None, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if section is _UNKNOWN:
            continue  # already reported with the section header
        if section is None:
            problems.append((lineno, key, "key outside a known section"))
            continue
        entries.append((lineno, section, key.lower(), value))
    return entries, seen_sections, problems


def parse_netlist(text: str) -> NetlistDocument:
    """Parse and validate; all independent problems are reported together."""
    entries, sections, problems = _tokenize(text)
    values = {s: {} for s in SCHEMA}
    where = {}
    for lineno, section, key, raw in entries:
        spec = SCHEMA[section].get(key)
        name = f"{section}.{key}"
        if spec is None:
            problems.append((lineno, name, f"unknown key (allowed: {', '.join(SCHEMA[section])})"))
            continue
        if name in where:
            problems.append((lineno, name, f"duplicate key (first at line {where[name]})"))
            continue
        where[name] = lineno
        parser, _, check, req = spec
        try:
            v = parser(raw)
        except ValueError as exc:
            problems.append((lineno, name, f"cannot parse {raw!r}: {exc}"))
            continue
        if not check(v):
            problems.append((lineno, name, f"must be {req}, got {raw}"))
            continue
        values[section][key] = v

    provenance = []
    for section, keys in SCHEMA.items():
        if section in OPTIONAL_SECTIONS and section not in sections:
            continue
        for key, (_, default, _, _) in keys.items():
            if key not in values[section] and f"{section}.{key}" not in where:
                values[section][key] = default
                provenance.append(f"{section}.{key} = {default!r} (default)")

    def line_of(*names):
        for n in names:
            if n in where:
                return where[n]
        return 0

    if problems:
        raise NetlistError(sorted(problems, key=lambda p: p[0]))

    fb, var, mod, ports, sw = (values[s] for s in ("fbar", "varactor", "modulation", "ports", "sweep"))
    if not var["c_reverse_off_f"] <= var["c_zero_bias_f"]:
        problems.append((line_of("varactor.c_reverse_off_f", "varactor.c_zero_bias_f"), "varactor.c_reverse_off_f",
                         "must not exceed c_zero_bias_f"))
    if not sw["f_start_hz"] < sw["f_stop_hz"]:
        problems.append((line_of("sweep.f_stop_hz", "sweep.f_start_hz"), "sweep.f_stop_hz",
                         "must exceed f_start_hz"))
    elif mod["shape"] != "off" and sw["f_start_hz"] - sw["harmonics_k"] * mod["freq_hz"] <= 0:
        problems.append((line_of("sweep.harmonics_k"), "sweep.harmonics_k",
                         "lowest sideband falls at or below 0 Hz"))
    if problems:
        raise NetlistError(problems)

    try:
        bvd = derive_bvd(fb["fs_hz"], fb["q"], fb["kt2"], fb["c0_f"])
        varactor = VaractorSpec(c_reverse_off=var["c_reverse_off_f"], c_zero_bias=var["c_zero_bias_f"],
                                r_on=var["r_on_ohm"], c_forward=var["c_forward_f"])
        modspec = ModSpec(shape=mod["shape"], freq=mod["freq_hz"], amplitude_pp=mod["vpp"],
                          dc_bias=mod["dc_bias_v"], duty=mod["duty"], rise_fraction=mod["rise_fraction"])
    except ValidationError as exc:
        raise NetlistError([(0, exc.field, str(exc))]) from exc

    match = None
    if "match" in sections:
        match = MatchingNetwork(values["match"]["l_series_h"], values["match"]["c_shunt_f"])
    branch = BranchSpec(bvd, varactor, modspec, ports["z0_ohm"], match, ports["hpf_loss_db"])
    phases = mod["phases_deg"]
    circuit = build_wye(branch, phases)

    notes = [
        f"bias filter ({BIAS_FILTER_L * 1e9:g} nH, {BIAS_FILTER_C * 1e9:g} nF) resonates at "
        f"{bias_filter_resonance() / 1e6:.3f} MHz; modulation at {mod['freq_hz'] / 1e6:.3f} MHz "
        "(bias network idealized)",
    ]
    if varactor.c_reverse_off == varactor.c_zero_bias:
        notes.append("c_reverse_off_f equals c_zero_bias_f: no reverse-bias modulation depth")
    doc = NetlistDocument(
        circuit=circuit, branch=branch, phases=phases,
        sweep=SweepSettings(sw["f_start_hz"], sw["f_stop_hz"], sw["points"], sw["harmonics_k"]),
        match=match, values=values, provenance=tuple(provenance), notes=tuple(notes),
    )
    return doc


def bias_filter_resonance(l=BIAS_FILTER_L, c=BIAS_FILTER_C):
    """1 / (2 pi sqrt(L C)) in Hz."""
    return 1.0 / (2 * math.pi * math.sqrt(l * c))


def load_netlist(path) -> NetlistDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read netlist {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise NetlistError([(0, None, f"{path} is not UTF-8 text: {exc}")]) from exc
    return parse_netlist(text)
