"""Circuit elements, BVD resonator parameters and LTI branch admittances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import CircuitError, ContractError, ValidationError

GROUND = "gnd"


def _require_positive(name, value, allow_zero=False):
    if value is None or not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(name, f"must be finite and {bound}, got {value!r}")


@dataclass(frozen=True)
class BvdParams:
    """Butterworth-Van Dyke resonator: series Rm-Lm-Cm arm across plate capacitance C0."""

    rm: float
    lm: float
    cm: float
    c0: float

    def __post_init__(self):
        _require_positive("rm", self.rm, allow_zero=True)
        for name in ("lm", "cm", "c0"):
            _require_positive(name, getattr(self, name))

    @property
    def fs(self):
        return 1.0 / (2 * math.pi * math.sqrt(self.lm * self.cm))

    @property
    def fp(self):
        return self.fs * math.sqrt(1.0 + self.cm / self.c0)

    @property
    def q(self):
        if self.rm == 0:
            return math.inf
        return 2 * math.pi * self.fs * self.lm / self.rm

    @property
    def kt2(self):
        return (math.pi**2 / 8) * self.cm / (self.c0 + self.cm)


def derive_bvd(fs, q, kt2, c0):
    """BVD element values from series resonance, unloaded Q, coupling and C0.

    Uses kt2 = (pi^2/8) * cm / (c0 + cm). ``q=math.inf`` gives the lossless
    idealization rm = 0.
    """
    _require_positive("fs", fs)
    _require_positive("c0", c0)
    if q is None or not (q > 0):
        raise ValidationError("q", f"must be > 0, got {q!r}")
    if kt2 is None or not (0 < kt2 < 1):
        raise ValidationError("kt2", f"must lie in (0, 1), got {kt2!r}")
    ratio = 8.0 * kt2 / math.pi**2
    cm = ratio * c0 / (1.0 - ratio)
    w = 2 * math.pi * fs
    lm = 1.0 / (w * w * cm)
    rm = 0.0 if math.isinf(q) else w * lm / q
    return BvdParams(rm=rm, lm=lm, cm=cm, c0=c0)


def bvd_admittance(p: BvdParams, omega):
    """Y = j w c0 + 1 / (rm + j w lm + 1/(j w cm)); accepts scalar or array omega."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValidationError("omega", "must be > 0")
    motional = p.rm + 1j * w * p.lm + 1.0 / (1j * w * p.cm)
    with np.errstate(divide="ignore", invalid="ignore"):  # lossless arm at fs: non-finite, caught by the solver
        y = 1j * w * p.c0 + 1.0 / motional
    return y if y.ndim else complex(y)


@dataclass(frozen=True)
class VaractorSpec:
    c_reverse_off: float = 0.2e-12
    c_zero_bias: float = 1.0e-12
    r_on: float = 1.0
    c_forward: float = 10e-12
    # reverse drive is clamped here (warning flag on the waveform)
    breakdown_v: float = -13.0

    def __post_init__(self):
        _require_positive("c_reverse_off", self.c_reverse_off)
        _require_positive("c_zero_bias", self.c_zero_bias)
        _require_positive("r_on", self.r_on)
        _require_positive("c_forward", self.c_forward)
        if not self.c_reverse_off <= self.c_zero_bias:
            raise ValidationError("c_reverse_off", "must not exceed c_zero_bias")
        if not self.breakdown_v < 0:
            raise ValidationError("breakdown_v", "must be negative")


MOD_SHAPES = ("square", "sine", "off")


@dataclass(frozen=True)
class ModSpec:
    """Periodic varactor drive. ``phase`` is in degrees and advances the waveform."""

    shape: str = "square"
    freq: float = 3e6
    amplitude_pp: float = 7.0
    dc_bias: float = 0.0
    duty: float = 0.5
    phase: float = 0.0
    rise_fraction: float = 0.05

    def __post_init__(self):
        if self.shape not in MOD_SHAPES:
            raise ValidationError("shape", f"must be one of {MOD_SHAPES}, got {self.shape!r}")
        if not (0 < self.duty < 1):
            raise ValidationError("duty", f"must lie in (0, 1), got {self.duty!r}")
        if not (0 <= self.rise_fraction < 0.25):
            raise ValidationError("rise_fraction", f"must lie in [0, 0.25), got {self.rise_fraction!r}")
        if self.amplitude_pp < 0 or not np.isfinite(self.amplitude_pp):
            raise ValidationError("amplitude_pp", "must be finite and >= 0")
        if not np.isfinite(self.dc_bias) or not np.isfinite(self.phase):
            raise ValidationError("dc_bias", "must be finite")
        if self.shape != "off" and not (self.freq > 0 and np.isfinite(self.freq)):
            raise ValidationError("freq", f"must be > 0 when shape != off, got {self.freq!r}")

    @property
    def active(self):
        """True when the drive actually varies in time."""
        return self.shape != "off" and self.amplitude_pp > 0


class Kind(str, Enum):
    RESISTOR = "resistor"
    INDUCTOR = "inductor"
    CAPACITOR = "capacitor"
    BVD = "bvd_resonator"
    VARACTOR = "modulated_varactor"
    PORT = "port"


@dataclass(frozen=True)
class Element:
    """One two-terminal element.

    params by kind: resistor ``r``; inductor ``l``; capacitor ``c``;
    bvd_resonator ``bvd``; modulated_varactor ``varactor`` (plus ``mod``);
    port ``number``, ``z0`` and optional ``hpf_loss_db``.
    """

    kind: Kind
    nodes: tuple
    params: Mapping = field(default_factory=dict)
    mod: ModSpec | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if len(self.nodes) != 2 or self.nodes[0] == self.nodes[1]:
            raise CircuitError("nodes", f"element {self.name or self.kind.value} needs two distinct nodes, got {self.nodes!r}")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        k = self.kind
        p = self.params
        if k is Kind.RESISTOR:
            _require_positive("r", p.get("r"))
        elif k is Kind.INDUCTOR:
            _require_positive("l", p.get("l"))
        elif k is Kind.CAPACITOR:
            _require_positive("c", p.get("c"))
        elif k is Kind.BVD:
            if not isinstance(p.get("bvd"), BvdParams):
                raise ValidationError("bvd", "bvd_resonator needs a BvdParams")
        elif k is Kind.VARACTOR:
            if not isinstance(p.get("varactor"), VaractorSpec):
                raise ValidationError("varactor", "modulated_varactor needs a VaractorSpec")
            if self.mod is None:
                object.__setattr__(self, "mod", ModSpec(shape="off"))
        elif k is Kind.PORT:
            _require_positive("z0", p.get("z0"))
            n = p.get("number")
            if not isinstance(n, (int, np.integer)) or n < 1:
                raise ValidationError("number", f"port number must be a positive integer, got {n!r}")
            if p.get("hpf_loss_db", 0.0) < 0:
                raise ValidationError("hpf_loss_db", "must be >= 0")

    @property
    def is_modulated(self):
        return self.kind is Kind.VARACTOR and self.mod is not None and self.mod.active


def lti_admittance(e: Element, omega):
    """Branch admittance of an unmodulated R, L, C or BVD element at ``omega`` (rad/s)."""
    if e.kind is Kind.RESISTOR:
        return 1.0 / e.params["r"] + 0j
    if e.kind is Kind.INDUCTOR:
        return 1.0 / (1j * omega * e.params["l"])
    if e.kind is Kind.CAPACITOR:
        return 1j * omega * e.params["c"]
    if e.kind is Kind.BVD:
        return bvd_admittance(e.params["bvd"], omega)
    raise ContractError(f"lti_admittance: {e.kind.value} is not an LTI branch element")


@dataclass(frozen=True)
class Circuit:
    nodes: tuple
    elements: tuple
    ground: str | None = GROUND

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "elements", tuple(self.elements))
        self.validate()

    def validate(self):
        if self.ground is None or self.ground not in self.nodes:
            raise CircuitError("ground", "circuit has no ground node")
        if len(set(self.nodes)) != len(self.nodes):
            raise CircuitError("nodes", "duplicate node ids")
        known = set(self.nodes)
        degree = {n: 0 for n in self.nodes}
        for e in self.elements:
            for n in e.nodes:
                if n not in known:
                    raise CircuitError("nodes", f"element {e.name or e.kind.value} references unknown node {n!r}")
                degree[n] += 1
        dangling = sorted(str(n) for n, d in degree.items() if d < 2 and n != self.ground)
        if dangling:
            raise CircuitError("nodes", f"dangling node(s): {', '.join(dangling)}")

        parent = {n: n for n in self.nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for e in self.elements:
            a, b = find(e.nodes[0]), find(e.nodes[1])
            if a != b:
                parent[a] = b
        root = find(self.ground)
        islands = sorted(str(n) for n in self.nodes if find(n) != root)
        if islands:
            raise CircuitError("nodes", f"node(s) not connected to ground: {', '.join(islands)}")

        numbers = [e.params["number"] for e in self.elements if e.kind is Kind.PORT]
        if len(set(numbers)) != len(numbers):
            dup = sorted({n for n in numbers if numbers.count(n) > 1})
            raise CircuitError("ports", f"duplicate port number(s): {dup}")
        if sorted(numbers) != list(range(1, len(numbers) + 1)):
            raise CircuitError("ports", f"port numbers must be contiguous from 1, got {sorted(numbers)}")

    @property
    def ports(self):
        """Port elements ordered by port number."""
        ports = [e for e in self.elements if e.kind is Kind.PORT]
        return tuple(sorted(ports, key=lambda e: e.params["number"]))

    @property
    def unknown_nodes(self):
        return tuple(n for n in self.nodes if n != self.ground)

    @property
    def modulated(self):
        return tuple(e for e in self.elements if e.is_modulated)

    def modulation_freq(self):
        """Shared modulation frequency in Hz, or None when nothing is modulated."""
        freqs = sorted({e.mod.freq for e in self.modulated})
        if not freqs:
            return None
        if freqs[-1] - freqs[0] > 1e-12 * freqs[-1]:
            from .errors import UnsupportedConfigurationError

            raise UnsupportedConfigurationError(
                f"modulated elements use different modulation frequencies {freqs}; "
                "only a single shared period is supported"
            )
        return freqs[0]

    def without_modulation(self):
        """Copy with every varactor held at its dc bias (shape=off)."""
        elems = []
        for e in self.elements:
            if e.kind is Kind.VARACTOR and e.mod is not None:
                e = replace(e, mod=replace(e.mod, shape="off"))
            elems.append(e)
        return Circuit(self.nodes, tuple(elems), self.ground)


@dataclass(frozen=True)
class MatchingNetwork:
    """Lossless L-section: shunt C at the port, series L toward the device."""

    l_series: float = 0.0
    c_shunt: float = 0.0

    def __post_init__(self):
        _require_positive("l_series", self.l_series, allow_zero=True)
        _require_positive("c_shunt", self.c_shunt, allow_zero=True)

    @property
    def is_identity(self):
        return self.l_series == 0 and self.c_shunt == 0


@dataclass(frozen=True)
class BranchSpec:
    """Template for one wye arm: port -> [match] -> varactor -> FBAR -> star."""

    bvd: BvdParams
    varactor: VaractorSpec = VaractorSpec()
    mod: ModSpec = ModSpec()
    z0: float = 50.0
    match: MatchingNetwork | None = None
    hpf_loss_db: float = 0.0


def build_wye(branch, phases: Sequence[float] = (0.0, 120.0, 240.0)) -> Circuit:
    """Three-port wye: each arm ends on a common floating star node.

    ``branch`` is one BranchSpec used for all arms or a triple of them; arm m
    gets modulation phase ``phases[m]`` (degrees).
    """
    if isinstance(branch, BranchSpec):
        branches = (branch,) * 3
    else:
        branches = tuple(branch)
    if len(branches) != 3 or not all(isinstance(b, BranchSpec) for b in branches):
        raise ValidationError("branch", "expected one BranchSpec or a triple of them")
    phases = tuple(float(p) for p in phases)
    if len(phases) != 3:
        raise ValidationError("phases", f"expected three phases, got {len(phases)}")

    nodes = [GROUND, "star"]
    elements = []
    for m, (b, ph) in enumerate(zip(branches, phases), start=1):
        port, var_in, mid = f"p{m}", f"p{m}", f"a{m}"
        nodes += [port, mid]
        elements.append(Element(Kind.PORT, (port, GROUND),
                                {"number": m, "z0": b.z0, "hpf_loss_db": b.hpf_loss_db}, name=f"P{m}"))
        if b.match is not None and not b.match.is_identity:
            if b.match.c_shunt > 0:
                elements.append(Element(Kind.CAPACITOR, (port, GROUND), {"c": b.match.c_shunt}, name=f"Cm{m}"))
            if b.match.l_series > 0:
                var_in = f"d{m}"
                nodes.append(var_in)
                elements.append(Element(Kind.INDUCTOR, (port, var_in), {"l": b.match.l_series}, name=f"Lm{m}"))
        elements.append(Element(Kind.VARACTOR, (var_in, mid), {"varactor": b.varactor},
                                mod=replace(b.mod, phase=b.mod.phase + ph), name=f"V{m}"))
        elements.append(Element(Kind.BVD, (mid, "star"), {"bvd": b.bvd}, name=f"X{m}"))
    return Circuit(tuple(nodes), tuple(elements), GROUND)
