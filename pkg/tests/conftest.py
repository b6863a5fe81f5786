from pathlib import Path

import numpy as np
import pytest

from fbarcirc.circuit import BranchSpec, ModSpec, VaractorSpec, build_wye, derive_bvd
from fbarcirc.solver import SweepResult

ROOT = Path(__file__).resolve().parents[1]
DATA = Path(__file__).resolve().parent / "data"
NETLISTS = ROOT / "netlists"

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def identity_sweep():
    s = np.eye(3, dtype=complex)[None, :, :, None]
    return SweepResult([2.5e9], 0, 0.0, s, meta={"K": 0})


def synthetic_sweep():
    """Two frequencies, K = 1, entries built from exact decimal fractions."""
    f = np.array([2.4e9, 2.6e9])
    n = np.arange(2 * 3 * 3 * 3).reshape(2, 3, 3, 3)
    s = (n - 27) / 64 + 1j * (n % 5) / 8
    meta = {"K": 1, "shape": "square", "freq_hz": 3e6, "vpp": 7.0, "dc_bias_v": 0.0, "duty": 0.5,
            "rise_fraction": 0.05, "phases_deg": [0.0, 120.0, 240.0]}
    return SweepResult(f, 1, 2 * np.pi * 3e6, s, meta=meta)


@pytest.fixture(scope="session")
def ref_bvd():
    return derive_bvd(2.5e9, 1250, 0.03, 1e-12)


@pytest.fixture(scope="session")
def ref_branch(ref_bvd):
    return BranchSpec(ref_bvd, VaractorSpec(), ModSpec())


@pytest.fixture(scope="session")
def ref_circuit(ref_branch):
    return build_wye(ref_branch)


@pytest.fixture(scope="session")
def reverse_parked_branch(ref_bvd):
    """Unmodulated: varactor held at its 0.2 pF reverse state."""
    return BranchSpec(ref_bvd, VaractorSpec(), ModSpec(shape="off", dc_bias=-3.5))
