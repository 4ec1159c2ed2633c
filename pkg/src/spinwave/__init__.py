"""Atomic spinwave resonator: closed-form model, GEM integrator, protocols and fits."""

__version__ = "0.1.0"

from .cavity import (  # noqa: E402
    CavityFigures, DomainError, NonConvergenceError, ResonatorParams, SpinwaveAmplitude,
    airy_spectrum, figures_of_merit, iterate_recursion, steady_state, step_recursion,
    transmitted_amplitude,
)
from .gem import (  # noqa: E402
    EchoSeries, FieldState, GemConfig, GradientSchedule, PulseTrain, evolve,
    run_accumulation, run_ringdown, run_spectrum_scan,
)
from .analysis import FitResult, fit_airy, fit_exponential, peak_spacing_fsr, q_and_finesse  # noqa: E402
from .protocol import Scenario, SweepAxis, build_timeline, run_scenario  # noqa: E402
