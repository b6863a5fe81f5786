import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbarcirc.circuit import (GROUND, BranchSpec, Circuit, Element, Kind, ModSpec, VaractorSpec, build_wye,
                              derive_bvd)
from fbarcirc.errors import NonConvergenceError, SolverError, UnsupportedConfigurationError, ValidationError
from fbarcirc.modulation import fourier_series, varactor_waveform
from fbarcirc.solver import assemble, converge_K, solve_harmonic_sparams, sweep

W = 2 * math.pi * 2.52e9


def _one_port(*branch):
    elems = (Element(Kind.PORT, ("p", GROUND), {"number": 1, "z0": 50.0}),) + branch
    return Circuit((GROUND, "p"), elems)


def test_lti_k0_matches_nodal_reflection():
    r, cap = 30.0, 2e-12
    c = _one_port(Element(Kind.RESISTOR, ("p", GROUND), {"r": r}),
                  Element(Kind.CAPACITOR, ("p", GROUND), {"c": cap}))
    z = 1.0 / (1.0 / r + 1j * W * cap)
    hs = solve_harmonic_sparams(c, W, K=0)
    assert hs.entry(1, 1) == pytest.approx((z - 50) / (z + 50), abs=1e-14)


def test_time_varying_capacitor_stamp():
    var = VaractorSpec()
    mod = ModSpec()
    c = _one_port(Element(Kind.VARACTOR, ("p", GROUND), {"varactor": var}, mod=mod))
    K = 3
    sys = assemble(c, W, K=K)
    fc = fourier_series(varactor_waveform(mod, var), 2 * K)
    for q in range(-K, K + 1):
        for p in range(-K, K + 1):
            expect = 1j * sys.omegas[q + K] * fc.ck(q - p) + fc.gk(q - p) + (1 / 50.0 if q == p else 0)
            assert sys.block(q, p)[0, 0] == pytest.approx(expect, rel=1e-14)


def test_block_sparsity(ref_circuit):
    sys = assemble(ref_circuit, W, K=2)
    touched = set()
    for e in ref_circuit.modulated:
        touched |= {sys.nodes.index(n) for n in e.nodes if n != GROUND}
    off = sys.block(1, 0)
    rows, cols = np.nonzero(off)
    assert set(rows) <= touched and set(cols) <= touched
    assert len(set(rows)) == len(touched)


def test_reciprocity_without_modulation(ref_circuit):
    c = ref_circuit.without_modulation()
    sw = sweep(c, 2.4e9, 2.6e9, 11, K=4)
    s0 = sw.s[..., 4]
    assert np.max(np.abs(s0 - np.transpose(s0, (0, 2, 1)))) < 1e-10
    assert np.max(np.abs(sw.trace(2, 1) - sw.trace(3, 1))) < 1e-10
    assert np.max(np.abs(np.delete(sw.s, 4, axis=3))) == 0


def test_zero_depth_reproduces_lti(ref_bvd):
    var = VaractorSpec(c_reverse_off=1e-12, c_zero_bias=1e-12)
    mod = ModSpec(shape="sine", amplitude_pp=2.0, dc_bias=-5.0)
    c = build_wye(BranchSpec(ref_bvd, var, mod))
    a = solve_harmonic_sparams(c, W, K=6)
    b = solve_harmonic_sparams(c, W, K=0)
    assert np.max(np.abs(a.s[..., 6] - b.s[..., 0])) < 1e-14
    assert np.max(np.abs(np.delete(a.s, 6, axis=2))) < 1e-14


def test_phase_reversal_swaps_ports(ref_branch):
    a = solve_harmonic_sparams(build_wye(ref_branch, (0, 120, 240)), W, K=8)
    b = solve_harmonic_sparams(build_wye(ref_branch, (0, 240, 120)), W, K=8)
    p = [0, 2, 1]
    assert np.max(np.abs(b.s - a.s[np.ix_(p, p)])) < 1e-9


def test_rotation_relabel_invariance(ref_branch):
    a = solve_harmonic_sparams(build_wye(ref_branch, (0, 120, 240)), W, K=8)
    b = solve_harmonic_sparams(build_wye(ref_branch, (120, 240, 0)), W, K=8)
    p = [1, 2, 0]
    assert np.max(np.abs(b.s - a.s[np.ix_(p, p)])) < 1e-9


def test_rotation_within_circuit(ref_circuit):
    a = solve_harmonic_sparams(ref_circuit, W, K=8)
    p = [1, 2, 0]
    k = np.arange(-8, 9)
    assert np.max(np.abs(a.s[np.ix_(p, p)][:, :, 8] - a.s[:, :, 8])) < 1e-9
    # sidebands carry the 120-degree pump delay
    assert np.max(np.abs(a.s[np.ix_(p, p)] - a.s * np.exp(1j * k * 2 * np.pi / 3))) < 1e-9


def _random_branch(draw):
    bvd = derive_bvd(draw(st.floats(2.3e9, 2.7e9)), draw(st.floats(50, 5000)), draw(st.floats(0.005, 0.1)),
                     draw(st.floats(0.2e-12, 5e-12)))
    czb = draw(st.floats(0.3e-12, 3e-12))
    var = VaractorSpec(c_reverse_off=czb * draw(st.floats(0.05, 1.0)), c_zero_bias=czb,
                       r_on=draw(st.floats(0.1, 50)), c_forward=draw(st.floats(1e-12, 30e-12)))
    mod = ModSpec(shape=draw(st.sampled_from(["square", "sine"])), amplitude_pp=draw(st.floats(0, 12)),
                  dc_bias=draw(st.floats(-4, 4)), duty=draw(st.floats(0.1, 0.9)),
                  rise_fraction=draw(st.floats(0, 0.24)), phase=draw(st.floats(0, 360)))
    return BranchSpec(bvd, var, mod, z0=draw(st.floats(10, 200)))


@settings(max_examples=30, deadline=None)
@given(data=st.data(), f=st.floats(2.4e9, 2.6e9), K=st.integers(0, 10))
def test_passivity(data, f, K):
    c = build_wye(_random_branch(data.draw), tuple(data.draw(st.floats(0, 360)) for _ in range(3)))
    hs = solve_harmonic_sparams(c, 2 * math.pi * f, K=K)
    assert np.all(np.sum(np.abs(hs.s) ** 2, axis=(0, 2)) <= 1 + 1e-9)


def test_sweep_matches_single_solves(ref_circuit):
    sw = sweep(ref_circuit, 2.45e9, 2.55e9, 2, K=4)
    for idx, f in enumerate((2.45e9, 2.55e9)):
        hs = solve_harmonic_sparams(ref_circuit, 2 * math.pi * f, K=4)
        assert np.array_equal(sw.s[idx], hs.s)
        assert np.array_equal(sw.point(idx).full, hs.full)


def test_parallel_sweep_bitwise(ref_circuit):
    a = sweep(ref_circuit, 2.4e9, 2.6e9, 16, K=6)
    b = sweep(ref_circuit, 2.4e9, 2.6e9, 16, K=6, workers=4)
    assert np.array_equal(a.full, b.full)
    assert a.meta == b.meta and a.meta["K"] == 6


def test_converge_k_trivial(ref_circuit):
    lti = ref_circuit.without_modulation()
    assert converge_K(lti, W, K_start=3) == 3
    assert converge_K(ref_circuit, W, K_start=2, tol=math.inf) == 2
    with pytest.raises(ValidationError):
        converge_K(ref_circuit, W, K_start=0)


def test_converge_k_reports_residual(ref_circuit):
    with pytest.raises(NonConvergenceError) as exc:
        converge_K(ref_circuit, W, K_start=4, tol=1e-6, K_max=8)
    rep = exc.value.report
    assert not rep.converged and [k for k, _ in rep.history] == list(range(4, 9))
    assert rep.residual == rep.history[-1][1] > 1e-6


def _resonant_trap():
    # node "a" is a lossless tank that is exactly resonant at 1 rad/s
    elems = (Element(Kind.PORT, ("p", GROUND), {"number": 1, "z0": 50.0}),
             Element(Kind.RESISTOR, ("p", GROUND), {"r": 50.0}),
             Element(Kind.INDUCTOR, ("a", GROUND), {"l": 1.0}),
             Element(Kind.CAPACITOR, ("a", GROUND), {"c": 1.0}))
    return Circuit((GROUND, "p", "a"), elems)


def test_singular_system_diagnostic():
    with pytest.raises(SolverError) as exc:
        solve_harmonic_sparams(_resonant_trap(), 1.0, K=0)
    assert exc.value.omega0 == 1.0 and exc.value.rcond is not None
    assert "w0=1 rad/s" in str(exc.value) and "condition" in str(exc.value)


def test_lossless_resonator_at_resonance_is_reported():
    bvd = derive_bvd(2.5e9, math.inf, 0.03, 1e-12)
    c = Circuit((GROUND, "p"), (Element(Kind.PORT, ("p", GROUND), {"number": 1, "z0": 50.0}),
                                Element(Kind.BVD, ("p", GROUND), {"bvd": bvd})))
    with pytest.raises(SolverError, match="lossless element is at resonance"):
        solve_harmonic_sparams(c, 2 * math.pi * 2.5e9, K=0)


def test_sweep_attaches_frequency():
    f = 1 / (2 * math.pi)
    with pytest.raises(SolverError) as exc:
        sweep(_resonant_trap(), f, 3 * f, 3, K=0)
    assert exc.value.freq_hz == pytest.approx(f)
    assert "sweep point" in str(exc.value)


@pytest.mark.parametrize("kwargs", [dict(omega0=0.0), dict(omega0=W, K=-1), dict(omega0=2 * math.pi * 10e6, K=8)])
def test_assemble_rejects(ref_circuit, kwargs):
    with pytest.raises(ValidationError):
        assemble(ref_circuit, **kwargs)


def test_modulation_frequency_mismatch(ref_circuit):
    with pytest.raises(UnsupportedConfigurationError):
        solve_harmonic_sparams(ref_circuit, W, omega_m=2 * math.pi * 4e6, K=2)


def test_sweep_rejects_bad_grid(ref_circuit):
    with pytest.raises(ValidationError):
        sweep(ref_circuit, 2.6e9, 2.4e9, 10)
    with pytest.raises(ValidationError):
        sweep(ref_circuit, 2.4e9, 2.6e9, 1)


def test_hpf_attenuator_scales_entries(ref_bvd):
    base = solve_harmonic_sparams(build_wye(BranchSpec(ref_bvd)), W, K=4)
    lossy = solve_harmonic_sparams(build_wye(BranchSpec(ref_bvd, hpf_loss_db=2.0)), W, K=4)
    alpha = 10 ** (-2.0 / 20)
    assert np.allclose(lossy.s, base.s * alpha**2, rtol=1e-13, atol=0)


def test_reference_impedance_override(ref_circuit):
    a = solve_harmonic_sparams(ref_circuit, W, K=2, z0=75.0)
    assert np.all(a.z0 == 75.0)
    assert not np.allclose(a.s, solve_harmonic_sparams(ref_circuit, W, K=2).s)
