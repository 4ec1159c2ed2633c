import cmath
import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinwave import cavity
from spinwave.cavity import ResonatorParams, SpinwaveAmplitude

betas = st.floats(0.0, 5.0, allow_nan=False)
conv_betas = st.floats(1e-3, 2.0)
gtaus = st.floats(0.0, 2.0)
phis = st.floats(-math.pi, math.pi)


# beamsplitter ---------------------------------------------------------------

def test_zero_depth_is_transparent():
    assert cavity.transmission_from_beta(0.0) == (1.0, 0.0)


def test_half_transmission_depth():
    t, r = cavity.transmission_from_beta(math.log(2) / (2 * math.pi))
    assert t == pytest.approx(0.5, rel=1e-15)
    assert r == pytest.approx(0.5, rel=1e-15)


def test_quarter_depth_against_high_precision():
    getcontext().prec = 40
    pi = Decimal("3.141592653589793238462643383279502884197")
    exact = (-(pi / 2)).exp()
    t, r = cavity.transmission_from_beta(0.25)
    assert t == pytest.approx(float(exact), rel=1e-15)
    assert r == pytest.approx(float(1 - exact), rel=1e-15)
    assert round(t, 5) == 0.20788


def test_negative_depth_rejected():
    with pytest.raises(cavity.DomainError):
        cavity.transmission_from_beta(-0.1)
    with pytest.raises(cavity.DomainError):
        ResonatorParams(beta=-1e-9)


@given(betas)
def test_event_conserves_energy(beta):
    t, r = cavity.transmission_from_beta(beta)
    assert t + r == 1.0
    assert 0.0 <= t <= 1.0


@given(st.floats(1e-300, 1.0))
def test_beta_transmission_inverse(t):
    assert cavity.transmission_from_beta(cavity.beta_from_transmission(t))[0] == pytest.approx(t, rel=1e-12)


# recursion ------------------------------------------------------------------

@given(conv_betas, gtaus, phis)
def test_first_storage_is_sqrt_r(beta, gtau, phi):
    p = ResonatorParams(beta=beta, gamma=gtau, phi=phi, a0=0.7 - 0.2j)
    s1 = cavity.step_recursion(SpinwaveAmplitude(0.0), p)
    assert s1.value == pytest.approx(math.sqrt(p.coupling) * p.a0, rel=1e-15)
    assert s1.index == 1


def test_perfect_mirror_returns_input():
    p = ResonatorParams(beta=1e3, gamma=0.0, a0=1.3)
    s = SpinwaveAmplitude(5.0)
    for _ in range(3):
        s = cavity.step_recursion(s, p)
        assert s.value == pytest.approx(1.3)


def test_worked_step():
    p = ResonatorParams.from_transmission(0.5, gamma_tau=0.1)
    s = cavity.step_recursion(SpinwaveAmplitude(math.sqrt(0.5)), p)
    expected = math.sqrt(0.5) * math.sqrt(0.5) * math.exp(-0.1) + math.sqrt(0.5)
    assert s.value.real == pytest.approx(expected, rel=1e-14)
    assert s.value.real == pytest.approx(1.15953, abs=1e-5)


@given(conv_betas, gtaus, phis)
def test_closed_form_equals_iteration(beta, gtau, phi):
    p = ResonatorParams(beta=beta, gamma=gtau, phi=phi)
    closed = cavity.steady_state(p).value
    iterated = cavity.iterate_recursion(p, tol=1e-14).value
    assert abs(closed - iterated) / abs(closed) < 1e-12


@given(conv_betas, gtaus)
def test_resonant_accumulation_is_monotone_and_bounded(beta, gtau):
    p = ResonatorParams(beta=beta, gamma=gtau, phi=0.0)
    seq = np.abs(cavity.recursion_sequence(p, 60))
    limit = abs(cavity.steady_state(p).value)
    # strictly rising while the increment is above rounding
    inc = p.survival ** np.arange(1, 60) * math.sqrt(p.coupling)
    live = inc > 1e-13 * limit
    assert np.all(np.diff(seq)[live] > 0)
    assert np.all(np.diff(seq) >= -1e-15 * limit)
    assert np.all(seq <= limit * (1 + 1e-14))


# steady state ---------------------------------------------------------------

def test_full_coupling_steady_state_is_input():
    p = ResonatorParams(beta=1e3, a0=0.8)
    assert cavity.steady_state(p).value == pytest.approx(0.8)


def test_anti_resonant_weak_coupling():
    for beta in (1e-4, 1e-6, 1e-8):
        p = ResonatorParams(beta=beta, gamma=0.0, phi=math.pi)
        s = cavity.steady_state(p).value
        assert s == pytest.approx(math.sqrt(p.coupling) / (1 + math.sqrt(p.transmission)), rel=1e-12)
        assert s == pytest.approx(math.sqrt(p.coupling) / 2, rel=p.coupling)
    assert abs(s) < 1e-3


def test_worked_steady_state():
    p = ResonatorParams.from_transmission(0.5, gamma_tau=0.1)
    s = cavity.steady_state(p)
    assert s.index is None
    oracle = cavity.iterate_recursion(p, n_steps=200).value
    assert s.value == pytest.approx(oracle, rel=1e-12)
    assert s.value.real == pytest.approx(1.9632, abs=5e-5)


def test_lossless_transparent_resonance_diverges():
    with pytest.raises(cavity.NonConvergenceError):
        cavity.steady_state(ResonatorParams(beta=0.0, gamma=0.0, phi=0.0))
    with pytest.raises(cavity.NonConvergenceError):
        cavity.steady_state(ResonatorParams(beta=0.0, gamma=0.0, phi=2 * math.pi))


# transmission ----------------------------------------------------------------

def test_empty_transparent_memory_passes_input():
    p = ResonatorParams(beta=0.0, a0=0.6 + 0.1j)
    assert cavity.transmitted_amplitude(SpinwaveAmplitude(0.0), p) == pytest.approx(0.6 + 0.1j)


@given(st.floats(1e-6, 1 - 1e-6))
def test_lossless_resonance_returns_full_amplitude(t):
    # gamma = 0, phi = 0: A_t = (sqrt(T) - 1) / (1 - sqrt(T)) = -a0 for every T
    p = ResonatorParams.from_transmission(t)
    at = cavity.transmitted_amplitude(cavity.steady_state(p), p)
    assert at == pytest.approx(-1.0, abs=1e-9)


@given(st.floats(0.39, 0.999))
def test_critical_coupling_is_impedance_matched(t):
    # A_t = 0 when the round-trip loss balances the coupling: exp(-gamma tau) = (sqrt(T) - R) / T
    r = 1 - t
    p = ResonatorParams.from_transmission(t, gamma_tau=-math.log((math.sqrt(t) - r) / t))
    at = cavity.transmitted_amplitude(cavity.steady_state(p), p)
    assert abs(at) < 1e-9


def test_worked_transmission():
    p = ResonatorParams.from_transmission(0.5, gamma_tau=0.1)
    at = cavity.transmitted_amplitude(cavity.steady_state(p), p)
    s = cavity.steady_state(p).value
    assert at == pytest.approx(math.sqrt(0.5) - math.sqrt(0.5) * s, rel=1e-14)
    assert at.real == pytest.approx(-0.6811, abs=1e-4)


# Airy spectrum ----------------------------------------------------------------

@given(conv_betas, st.floats(0.01, 2.0), st.lists(phis, min_size=1, max_size=20))
def test_airy_periodic_and_symmetric(beta, gtau, grid):
    p = ResonatorParams(beta=beta, gamma=gtau)
    a = cavity.airy_spectrum(p, grid)
    np.testing.assert_allclose(cavity.airy_spectrum(p, np.add(grid, 2 * np.pi)), a, rtol=1e-12)
    np.testing.assert_allclose(cavity.airy_spectrum(p, np.negative(grid)), a, rtol=1e-12)


def test_airy_matches_steady_state():
    p = ResonatorParams(beta=0.08, gamma=0.2)
    for phi in (-2.0, 0.0, 0.7):
        s = cavity.steady_state(ResonatorParams(beta=0.08, gamma=0.2, phi=phi)).value
        assert cavity.airy_spectrum(p, [phi])[0] == pytest.approx(abs(s) ** 2, rel=1e-13)


def test_airy_empty_grid_and_divergence():
    with pytest.raises(cavity.DomainError):
        cavity.airy_spectrum(ResonatorParams(beta=0.1), [])
    with pytest.raises(cavity.NonConvergenceError):
        cavity.airy_spectrum(ResonatorParams(beta=0.0), [0.0, 1.0])


def test_linewidth_formula_matches_half_max_crossing():
    p = ResonatorParams(beta=0.03, gamma=0.05, tau=12e-6)
    fwhm = cavity.airy_linewidth(p)
    half = fwhm / 2
    phi_half = 2 * math.pi * half * p.tau
    peak = cavity.airy_spectrum(p, [0.0])[0]
    assert cavity.airy_spectrum(p, [phi_half])[0] == pytest.approx(peak / 2, rel=1e-12)


@given(st.lists(st.floats(0.2, 0.999), min_size=2, max_size=8, unique=True))
def test_linewidth_shrinks_as_survival_rises(survivals):
    g = np.sort(survivals)
    widths = np.array([cavity.airy_linewidth(ResonatorParams.from_transmission(1.0, -math.log(x)))
                       for x in g])
    ok = np.isfinite(widths)
    g, widths = g[ok], widths[ok]
    assert np.all(np.diff(widths) <= 0)
    # strictly narrower once the survivals differ by more than rounding
    apart = np.diff(g) > 1e-9 * g[1:]
    assert np.all(np.diff(widths)[apart] < 0)


def test_intensity_lifetime():
    p = ResonatorParams.from_transmission(0.9, gamma_tau=0.05, tau=12e-6)
    assert cavity.intensity_lifetime(p) == pytest.approx(-12e-6 / math.log(0.9 * math.exp(-0.1)))


# figures of merit ---------------------------------------------------------------

def test_spinwave_figures():
    f = cavity.figures_of_merit(83.33e3, 11.5e3, 6.8e9)
    assert f.finesse == pytest.approx(7.246, abs=1e-3)
    assert f.q_factor == pytest.approx(5.913e5, rel=1e-3)
    assert f.equivalent_length == pytest.approx(3597.6, abs=0.5)


def test_optical_q():
    assert cavity.PROBE_FREQUENCY == pytest.approx(3.771e14, rel=1e-3)
    f = cavity.figures_of_merit(83.33e3, 11.5e3, cavity.PROBE_FREQUENCY)
    assert f.q_factor == pytest.approx(3.3e10, rel=0.01)


@given(st.floats(1.0, 1e12))
def test_figures_identity(x):
    f = cavity.figures_of_merit(x, x, x)
    assert f.finesse == 1.0 and f.q_factor == 1.0


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_figures_reject_non_positive(args):
    with pytest.raises(cavity.DomainError):
        cavity.figures_of_merit(*args)


# phase ----------------------------------------------------------------------------

def test_phase_examples():
    assert cavity.phase_from_detuning(0.0, 12e-6) == 0.0
    assert cavity.phase_from_detuning(1 / 12e-6, 12e-6) == pytest.approx(0.0, abs=1e-12)
    assert cavity.phase_from_detuning(0.5 / 12e-6, 12e-6) == pytest.approx(math.pi, abs=1e-12)


@given(st.floats(-1e3, 1e3))
def test_wrap_phase_canonical(phi):
    w = cavity.wrap_phase(phi)
    assert -math.pi < w <= math.pi
    assert cmath.exp(1j * w) == pytest.approx(cmath.exp(1j * phi), abs=1e-9)
