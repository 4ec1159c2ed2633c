"""
Closed-form discrete resonator model of the atomic spinwave cavity.

Each storage/recall event acts as a beamsplitter with transmission
``T = exp(-2*pi*beta)`` and coupling ``R = 1 - T``. Injecting a pulse of
amplitude ``a0`` while the previous spinwave rephases gives

    S[n+1] = sqrt(T) * S[n] * exp(-gamma*tau) * exp(i*phi) + sqrt(R) * a0

whose fixed point is the usual Airy resonator amplitude

    S_inf = sqrt(R) * a0 / (1 - sqrt(T) * exp(-gamma*tau) * exp(i*phi)).

All amplitudes are complex; intensities only appear in ``airy_spectrum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

C_LIGHT = 299_792_458.0  # [m/s]
PROBE_WAVELENGTH = 795e-9  # Rb D1 [m]
PROBE_FREQUENCY = C_LIGHT / PROBE_WAVELENGTH  # [Hz]
GROUND_SPLITTING = 6.8e9  # 87Rb hyperfine splitting, spinwave carrier [Hz]

DIVERGENCE_MARGIN = 1e-12


class DomainError(ValueError):
    """Input outside the physical domain of a closed-form relation."""


class NonConvergenceError(ArithmeticError):
    """Resonator configuration without a finite steady state."""


def transmission_from_beta(beta: float) -> tuple[float, float]:
    """Single-event transmission and coupling ``(T, R)`` for optical depth ``beta``."""
    if not beta >= 0:
        raise DomainError(f"optical depth beta must be >= 0, got {beta}")
    t = math.exp(-2.0 * math.pi * beta)
    return t, 1.0 - t


def beta_from_transmission(t: float) -> float:
    if not 0.0 < t <= 1.0:
        raise DomainError(f"transmission must lie in (0, 1], got {t}")
    return -math.log(t) / (2.0 * math.pi)


def wrap_phase(phi: float) -> float:
    """Reduce a phase to the canonical interval (-pi, pi]."""
    return math.pi - (math.pi - phi) % (2.0 * math.pi)


@dataclass(frozen=True)
class ResonatorParams:
    """
    Parameters of the discrete recursion.

    Parameters
    ----------
    beta : float
        Effective optical depth per beamsplitter event (>= 0).
    gamma : float
        Spinwave amplitude decay rate [1/s] (>= 0).
    tau : float
        Interference cycle time [s] (> 0).
    phi : float
        Phase picked up by the stored spinwave per cycle [rad].
    a0 : complex
        Input mode amplitude.
    """

    beta: float
    gamma: float = 0.0
    tau: float = 1.0
    phi: float = 0.0
    a0: complex = 1.0

    def __post_init__(self) -> None:
        if not self.beta >= 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if not self.gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if not self.tau > 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")

    @classmethod
    def from_transmission(
        cls, t: float, gamma_tau: float = 0.0, phi: float = 0.0,
        a0: complex = 1.0, tau: float = 1.0,
    ) -> "ResonatorParams":
        """Build from ``T`` and the dimensionless per-cycle decay ``gamma*tau``."""
        return cls(beta=beta_from_transmission(t), gamma=gamma_tau / tau,
                   tau=tau, phi=phi, a0=a0)

    @property
    def transmission(self) -> float:
        return transmission_from_beta(self.beta)[0]

    @property
    def coupling(self) -> float:
        return transmission_from_beta(self.beta)[1]

    @property
    def survival(self) -> float:
        """Per-cycle amplitude survival ``sqrt(T) * exp(-gamma*tau)``."""
        return math.sqrt(self.transmission) * math.exp(-self.gamma * self.tau)

    def feedback(self, phi: Optional[float] = None) -> complex:
        phi = self.phi if phi is None else phi
        return self.survival * complex(math.cos(phi), math.sin(phi))


@dataclass(frozen=True)
class SpinwaveAmplitude:
    """Spinwave amplitude after ``index`` pulses; ``index`` is None for the n -> inf limit."""

    value: complex
    index: Optional[int] = 0


@dataclass(frozen=True)
class CavityFigures:
    """Cavity figures of merit with optional 1-sigma uncertainties."""

    fsr: float
    linewidth_fwhm: float
    finesse: float
    q_factor: float
    equivalent_length: float
    carrier: float
    fsr_err: float = 0.0
    linewidth_err: float = 0.0
    finesse_err: float = 0.0
    q_factor_err: float = 0.0
    equivalent_length_err: float = 0.0


def step_recursion(s_prev: SpinwaveAmplitude, p: ResonatorParams) -> SpinwaveAmplitude:
    t, r = transmission_from_beta(p.beta)
    value = (math.sqrt(t) * s_prev.value * math.exp(-p.gamma * p.tau)
             * complex(math.cos(p.phi), math.sin(p.phi)) + math.sqrt(r) * p.a0)
    index = None if s_prev.index is None else s_prev.index + 1
    return SpinwaveAmplitude(value, index)


def _check_convergent(p: ResonatorParams) -> None:
    on_resonance = abs(wrap_phase(p.phi)) == 0.0
    if on_resonance and p.survival >= 1.0 - DIVERGENCE_MARGIN:
        raise NonConvergenceError(
            "no steady state: lossless, fully transmissive resonator on resonance "
            f"(survival={p.survival!r}, phi={p.phi!r})"
        )


def steady_state(p: ResonatorParams) -> SpinwaveAmplitude:
    _check_convergent(p)
    r = p.coupling
    return SpinwaveAmplitude(math.sqrt(r) * p.a0 / (1.0 - p.feedback()), None)


def iterate_recursion(
    p: ResonatorParams,
    n_steps: Optional[int] = None,
    s0: complex = 0.0,
    tol: float = 1e-14,
    max_steps: int = 10**6,
) -> SpinwaveAmplitude:
    """
    Apply ``step_recursion`` repeatedly.

    With ``n_steps`` given, exactly that many steps are taken. Otherwise the
    recursion runs until successive values differ by less than ``tol``
    (absolute), which is the iteration oracle for ``steady_state``.
    """
    s = SpinwaveAmplitude(s0, 0)
    if n_steps is not None:
        for _ in range(n_steps):
            s = step_recursion(s, p)
        return s
    for _ in range(max_steps):
        nxt = step_recursion(s, p)
        if abs(nxt.value - s.value) < tol:
            return nxt
        s = nxt
    raise NonConvergenceError(f"recursion did not converge in {max_steps} steps")


def recursion_sequence(p: ResonatorParams, n: int, s0: complex = 0.0) -> np.ndarray:
    """Complex amplitudes ``S_1 .. S_n`` starting from ``S_0 = s0``."""
    out = np.empty(n, dtype=complex)
    s = SpinwaveAmplitude(s0, 0)
    for i in range(n):
        s = step_recursion(s, p)
        out[i] = s.value
    return out


def transmitted_amplitude(s: SpinwaveAmplitude, p: ResonatorParams) -> complex:
    """Output amplitude ``sqrt(T)*a0 - sqrt(R)*S``; the minus sign conserves energy."""
    t, r = transmission_from_beta(p.beta)
    return math.sqrt(t) * p.a0 - math.sqrt(r) * s.value


def airy_spectrum(p: ResonatorParams, phi_grid) -> np.ndarray:
    """Steady-state spinwave intensity ``|S_inf(phi)|**2`` over a grid of cycle phases."""
    phi = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    if phi.size == 0:
        raise DomainError("phi_grid must be non-empty")
    g = p.survival
    resonant = np.isclose(np.mod(phi + np.pi, 2 * np.pi) - np.pi, 0.0, atol=0.0)
    if g >= 1.0 - DIVERGENCE_MARGIN and resonant.any():
        raise NonConvergenceError("Airy spectrum diverges on resonance for survival -> 1")
    s = math.sqrt(p.coupling) * p.a0 / (1.0 - g * np.exp(1j * phi))
    return np.abs(s) ** 2


def coefficient_of_finesse(survival: float) -> float:
    """``F = 4g / (1-g)**2`` for per-cycle amplitude survival ``g``."""
    return 4.0 * survival / (1.0 - survival) ** 2


def airy_linewidth(p: ResonatorParams) -> float:
    """
    FWHM [Hz] of the intensity Airy peak when the cycle phase is swept by
    detuning, i.e. with FSR = 1/tau. Valid at any finesse; NaN if the peak
    never drops to half maximum.
    """
    f = coefficient_of_finesse(p.survival)
    if f <= 1.0:
        return math.nan
    return (2.0 / (math.pi * p.tau)) * math.asin(1.0 / math.sqrt(f))


def intensity_lifetime(p: ResonatorParams) -> float:
    """1/e lifetime [s] of the intensity under repeated recall with no input."""
    g = p.survival
    if g <= 0.0:
        return 0.0
    if g >= 1.0:
        return math.inf
    return -p.tau / math.log(g**2)


def figures_of_merit(fsr: float, linewidth: float, carrier: float) -> CavityFigures:
    for name, val in (("fsr", fsr), ("linewidth", linewidth), ("carrier", carrier)):
        if not val > 0:
            raise DomainError(f"{name} must be > 0, got {val}")
    return CavityFigures(
        fsr=fsr,
        linewidth_fwhm=linewidth,
        finesse=fsr / linewidth,
        q_factor=carrier / linewidth,
        equivalent_length=C_LIGHT / fsr,
        carrier=carrier,
    )


def phase_from_detuning(delta_f: float, tau: float) -> float:
    """Per-cycle phase ``2*pi*delta_f*tau`` reduced to (-pi, pi]."""
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    return wrap_phase(2.0 * math.pi * delta_f * tau)
