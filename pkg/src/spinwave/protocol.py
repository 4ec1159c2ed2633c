"""
Scenario scheduling: turns a named experiment (accumulation, ring-down,
spectrum scan, FSR sweep, linewidth sweep, absorption, closed form) into a
deterministic run plan, executes it on the engine, and normalizes the output
the way the figures of the experiment do.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from . import analysis, cavity, gem
from .cavity import ResonatorParams
from .gem import ConfigurationError, ControlPowerMap, EchoSeries, GemConfig

KINDS = ("accumulate", "ringdown", "spectrum", "fsr_sweep", "linewidth_sweep",
         "absorption", "closed_form")
NORMALIZATIONS = ("first_echo", "none", "input_energy")
EQUILIBRIUM_WINDOWS = 3
EQUILIBRIUM_SPREAD = 0.02


class ScenarioError(ValueError):
    """Scenario fails validation; the message names the offending field."""


@dataclass(frozen=True)
class SweepAxis:
    """Values for one parameter path (``kappa``, ``beta``, ``period``, ``power``, ``pulses.width``, ...)."""

    path: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0:
            raise ScenarioError(f"sweep.values for '{self.path}' is empty")
        if not np.all(np.isfinite(vals)):
            raise ScenarioError(f"sweep.values for '{self.path}' must be finite")
        d = np.diff(vals)
        if vals.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ScenarioError(f"sweep.values for '{self.path}' must be strictly monotone")


@dataclass(frozen=True)
class Scenario:
    """
    A named experiment.

    ``offsets`` are carrier offsets [Hz] for spectrum-type kinds and probe
    offsets for ``absorption``; ``phi_grid`` [rad] serves ``closed_form``.
    ``noise`` adds relative Gaussian amplitude noise to scanned spectra,
    drawn from ``seed``.
    """

    kind: str
    base: Union[GemConfig, ResonatorParams]
    sweep: Optional[SweepAxis] = None
    normalization: str = "first_echo"
    offsets: tuple[float, ...] = ()
    n_fill: int = 15
    n_decay: int = 10
    phi_grid: tuple[float, ...] = ()
    power_map: Optional[ControlPowerMap] = None
    noise: float = 0.0
    seed: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ScenarioError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ScenarioError(
                f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")
        if self.kind == "closed_form":
            if not isinstance(self.base, ResonatorParams):
                raise ScenarioError("closed_form scenarios need ResonatorParams as base")
        elif not isinstance(self.base, GemConfig):
            raise ScenarioError(f"{self.kind} scenarios need a GemConfig as base")
        if self.kind in ("fsr_sweep", "linewidth_sweep") and self.sweep is None:
            raise ScenarioError(f"{self.kind} needs a sweep axis")
        if self.kind == "fsr_sweep" and self.sweep.path != "period":
            raise ScenarioError("fsr_sweep sweeps 'period'")
        if self.kind == "linewidth_sweep" and self.sweep.path not in ("kappa", "beta", "power"):
            raise ScenarioError("linewidth_sweep sweeps 'kappa', 'beta' or 'power'")
        if self.kind == "linewidth_sweep" and len(self.sweep.values) < 3:
            raise ScenarioError("linewidth_sweep needs >= 3 sweep values")
        if self.kind in ("spectrum", "fsr_sweep", "absorption") and not self.offsets:
            raise ScenarioError(f"{self.kind} needs a non-empty offsets list")
        if self.n_fill < 0 or self.n_decay < 0:
            raise ScenarioError("ringdown n_fill and n_decay must be >= 0")
        if self.sweep is not None and self.sweep.path == "power" and self.power_map is None:
            raise ScenarioError("sweeping 'power' needs a power_map")
        if self.noise < 0:
            raise ScenarioError("noise must be >= 0")


# ---------------------------------------------------------------------------
# parameter paths
# ---------------------------------------------------------------------------

def apply_axis(config: GemConfig, path: str, value: float,
               power_map: Optional[ControlPowerMap] = None) -> GemConfig:
    """Return ``config`` with one parameter set; pulse period and gradient stay locked."""
    if path == "period":
        return config.with_period(value)
    if path == "beta":
        return config.with_beta(value)
    if path == "power":
        if power_map is None:
            raise ScenarioError("path 'power' needs a power_map")
        return power_map.apply(config, value)
    if path in ("schedule.half_period", "pulses.period"):
        period = value * 2.0 if path == "schedule.half_period" else value
        return config.with_period(period)
    head, _, tail = path.partition(".")
    names = {f.name for f in fields(config)}
    if head not in names:
        raise ScenarioError(f"unknown sweep path '{path}'")
    if tail:
        sub = getattr(config, head)
        if not is_dataclass(sub) or tail not in {f.name for f in fields(sub)}:
            raise ScenarioError(f"unknown sweep path '{path}'")
        cast = int if tail == "count" else float
        return replace(config, **{head: replace(sub, **{tail: cast(value)})})
    cast = int if head == "n_z" else float
    return replace(config, **{head: cast(value)})


# ---------------------------------------------------------------------------
# run plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlannedRun:
    axis_value: Optional[float]
    config: GemConfig
    n_windows: int
    pulse_times: tuple[float, ...]
    segments: tuple[tuple[float, float, float, str], ...]
    offsets: tuple[float, ...] = ()

    @property
    def flip_times(self) -> tuple[float, ...]:
        return tuple(s[1] for s in self.segments)

    def to_dict(self) -> dict:
        return {
            "axis_value": self.axis_value,
            "n_windows": self.n_windows,
            "pulse_times_s": list(self.pulse_times),
            "segments": [
                {"t_start_s": a, "t_end_s": b, "gradient_factor": g, "kind": k}
                for a, b, g, k in self.segments
            ],
            "offsets_hz": list(self.offsets),
        }


@dataclass(frozen=True)
class RunPlan:
    kind: str
    runs: tuple[PlannedRun, ...]
    sweep_path: Optional[str] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sweep_path": self.sweep_path,
                "runs": [r.to_dict() for r in self.runs]}


def _segments(config: GemConfig, n_windows: int, pulses: gem.PulseTrain):
    sch = config.schedule
    out = []
    for j in range(n_windows):
        a, b = sch.segment_bounds(j)
        out.append((a, b, sch.factor(j), gem._window_kind(a, b, pulses)))
    return tuple(out)


def _plan_one(s: Scenario, config: GemConfig, value: Optional[float]) -> PlannedRun:
    if s.kind == "ringdown":
        pulses = replace(config.pulses, count=s.n_fill)
        n = 0 if s.n_fill == 0 else 2 * (s.n_fill + s.n_decay)
    elif s.kind == "absorption":
        return PlannedRun(value, config, 1, (0.0,), (), tuple(s.offsets))
    else:
        if config.pulses.count < 1:
            raise ScenarioError("pulses.count must be >= 1")
        pulses = config.pulses
        n = 2 * pulses.count
    return PlannedRun(value, config, n, tuple(pulses.centers().tolist()),
                      _segments(config, n, pulses), tuple(s.offsets))


def build_timeline(s: Scenario) -> RunPlan:
    """Deterministic, serializable run plan for a scenario."""
    if s.kind == "closed_form":
        return RunPlan(s.kind, ())
    if s.sweep is None:
        return RunPlan(s.kind, (_plan_one(s, s.base, None),))
    runs = []
    for v in s.sweep.values:
        try:
            cfg = apply_axis(s.base, s.sweep.path, v, s.power_map)
        except ConfigurationError as exc:
            raise ScenarioError(f"sweep value {s.sweep.path}={v}: {exc}") from exc
        runs.append(_plan_one(s, cfg, float(v)))
    return RunPlan(s.kind, tuple(runs), s.sweep.path)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def equilibrium(series: EchoSeries, n_last: int = EQUILIBRIUM_WINDOWS) -> tuple[float, bool]:
    """
    Mean of the last ``n_last`` echo energies and a flag raised when their
    relative spread exceeds 2%.
    """
    e = series.echo_energies()
    if e.size == 0:
        return math.nan, True
    tail = e[-n_last:]
    mean = float(tail.mean())
    spread = float(np.ptp(tail)) / mean if mean > 0 else math.inf
    return mean, spread > EQUILIBRIUM_SPREAD


def normalize(series: EchoSeries, mode: str) -> np.ndarray:
    """Echo energies scaled to the first echo, to the input pulse energy, or raw."""
    e = series.echo_energies()
    if mode == "none":
        return e
    if mode == "input_energy":
        return e / series.input_energy
    if mode == "first_echo":
        if e.size == 0:
            raise ScenarioError("first_echo normalization needs at least one echo window")
        return e / e[0]
    raise ScenarioError(f"unknown normalization {mode!r}")


def central_offsets(period: float, n_coarse: int = 31, n_fine: int = 41,
                    fine_fraction: float = 1.0 / 12.0) -> np.ndarray:
    """Offsets [Hz] covering one FSR around resonance, dense near the center."""
    fsr = 1.0 / period
    coarse = np.linspace(-0.5 * fsr, 0.5 * fsr, n_coarse)
    fine = np.linspace(-fine_fraction * fsr, fine_fraction * fsr, n_fine)
    return np.unique(np.round(np.concatenate([coarse, fine]), 6))


def cycle_params(transmission: float, gamma_s: float, period: float,
                 phi: float = 0.0) -> ResonatorParams:
    """
    Per-period resonator parameters of the switched memory. One gradient
    cycle holds two recall events (the read window and the rephasing in the
    next write window), so the spinwave passes the atomic beamsplitter twice:
    ``T_cycle = T**2``.
    """
    return ResonatorParams.from_transmission(transmission**2, gamma_s * period, phi,
                                             tau=period)


def gamma_for_lifetime(beta: float, half_period: float, lifetime: float) -> float:
    """
    Coherence decay rate giving a ring-down intensity lifetime ``lifetime``.
    During ring-down every half period holds one recall, so the echo energy
    falls by ``T * exp(-2 gamma h)`` per window.
    """
    t, _ = cavity.transmission_from_beta(beta)
    gamma = 0.5 * (1.0 / lifetime + math.log(t) / half_period)
    if gamma < 0:
        raise ScenarioError(
            f"lifetime {lifetime} s exceeds the loss-free limit for beta={beta}")
    return gamma


def ringdown_lifetime(beta: float, gamma_s: float, half_period: float) -> float:
    """Implied echo-energy lifetime of a ring-down; inverse of ``gamma_for_lifetime``."""
    t, _ = cavity.transmission_from_beta(beta)
    return -half_period / (math.log(t) - 2.0 * gamma_s * half_period)


def measure_resonator(config: GemConfig, carrier_offset: Optional[float] = None) -> ResonatorParams:
    """
    Measure the per-period resonator parameters from the engine alone:
    single-pass transmission, coherence decay with the coupling off, and the
    echo phase advance over one cycle of a one-pulse ring-down.
    """
    off = config.pulses.carrier_offset if carrier_offset is None else carrier_offset
    cfg = config.with_pulses(carrier_offset=off)
    t_single, _ = gem.single_pass(cfg)

    dark = replace(cfg, kappa=0.0, pulses=replace(cfg.pulses, count=0))
    s0 = gem.FieldState.from_sigma(dark, 1.0)
    s1 = gem.evolve(s0, dark, s0.t + cfg.period)
    gamma_tau = -math.log(s1.coherence_norm() / s0.coherence_norm())

    rd = gem.run_ringdown(cfg, 1, 1)
    phi = gem.echo_phase_advance(rd, 1, 3)
    return cycle_params(t_single, gamma_tau / cfg.period, cfg.period, phi)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepPoint:
    value: float
    summary: dict
    fit: Optional[analysis.FitResult] = None
    series: Optional[EchoSeries] = None
    scan: Optional[gem.SpectrumScan] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True, eq=False)
class SweepResult:
    """One summary per axis value, in axis order; failures stay as explicit entries."""

    path: str
    values: np.ndarray
    points: tuple[SweepPoint, ...]

    def column(self, name: str) -> np.ndarray:
        return np.array([p.summary.get(name, math.nan) if p.summary.get(name) is not None
                         else math.nan for p in self.points], dtype=float)


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    scenario: Scenario
    plan: RunPlan
    series: tuple[EchoSeries, ...] = ()
    scan: Optional[gem.SpectrumScan] = None
    sweep: Optional[SweepResult] = None
    fits: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    closed_form: dict = field(default_factory=dict)
    absorption: Optional[np.ndarray] = None


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _noisy(s: Scenario, amps: np.ndarray, salt: int = 0) -> np.ndarray:
    if s.noise <= 0:
        return amps
    rng = np.random.default_rng([s.seed, salt])
    return amps * (1.0 + s.noise * rng.standard_normal(amps.shape))


def _empty_series(config: GemConfig) -> EchoSeries:
    return EchoSeries((), config.pulses.pulse_energy, config.pulses.carrier_offset,
                      gem.FieldState.zeros(config))


def _run_series(s: Scenario, run: PlannedRun) -> EchoSeries:
    if run.n_windows == 0:
        return _empty_series(run.config)
    if s.kind == "ringdown":
        if s.n_decay == 0:
            return gem.run_accumulation(run.config.with_pulses(count=s.n_fill))
        return gem.run_ringdown(run.config, s.n_fill, s.n_decay)
    return gem.run_accumulation(run.config)


def _ringdown_fit(s: Scenario, series: EchoSeries) -> analysis.FitResult:
    decay = [w for w in series.windows if w.index >= 2 * s.n_fill]
    t = np.array([0.5 * (w.t_start + w.t_end) for w in decay])
    y = np.array([w.energy for w in decay])
    return analysis.fit_exponential(t, y)


def _series_summary(s: Scenario, series: EchoSeries) -> dict:
    if not series.windows:
        return {"n_windows": 0}
    eq, flag = equilibrium(series)
    out = {"n_windows": len(series.windows), "equilibrium_echo": eq,
           "equilibrium_flag": flag, "first_echo": float(series.echo_energies()[0])}
    if out["first_echo"] > 0:
        out["equilibrium_over_first"] = eq / out["first_echo"]
    if s.kind == "ringdown" and s.n_decay >= 2:
        fit = _ringdown_fit(s, series)
        out["lifetime"] = float(fit.params["lifetime"])
        out["lifetime_err"] = fit.err("lifetime")
    return out


def _scan_point(args) -> SweepPoint:
    s, run, salt = args
    try:
        offsets = np.asarray(run.offsets if run.offsets else
                             central_offsets(run.config.period), dtype=float)
        if run.config.kappa == 0.0:
            return SweepPoint(run.axis_value, {"linewidth": None, "fsr": None},
                              error="no coupling: nothing stored, no resonance")
        scan = gem.run_spectrum_scan(run.config, offsets)
        amps = _noisy(s, scan.amplitudes, salt)
        scan = replace(scan, amplitudes=amps)
        if s.kind == "linewidth_sweep":
            fit = analysis.fit_airy(offsets, amps, domain="amplitude", single_peak=True,
                                    fsr=1.0 / run.config.period)
            summary = {"linewidth": fit.params["linewidth"], "linewidth_err": fit.err("linewidth"),
                       "F": fit.params["F"], "equilibrium_echo": float(amps.max())}
        else:
            fit = analysis.peak_spacing_fsr(offsets, amps)
            summary = {"fsr": fit.params["fsr"], "fsr_err": fit.err("fsr"),
                       "expected_fsr": 1.0 / run.config.period}
        err = "" if fit.converged else fit.message or "fit did not converge"
        return SweepPoint(run.axis_value, summary, fit, scan=scan, error=err)
    except (analysis.FitValidationError, ConfigurationError, ValueError) as exc:
        return SweepPoint(run.axis_value, {}, error=str(exc))


def linewidth_sweep(base: Scenario, kappa_values: Sequence[float], workers: int = 1) -> SweepResult:
    """Central-peak linewidth for each coupling; a failed fit is kept as a no-fit point."""
    s = replace(base, kind="linewidth_sweep", sweep=SweepAxis("kappa", tuple(kappa_values)))
    return run_scenario(s, workers).sweep


def fsr_sweep(base: Scenario, periods: Sequence[float], workers: int = 1) -> SweepResult:
    s = replace(base, kind="fsr_sweep", sweep=SweepAxis("period", tuple(periods)))
    return run_scenario(s, workers).sweep


def floor_linewidth(sweep: SweepResult, n_points: int = 3) -> float:
    """Linear extrapolation of linewidth against kappa**2 to zero coupling."""
    x = np.asarray(sweep.values, dtype=float) ** 2 if sweep.path == "kappa" else np.asarray(sweep.values)
    y = sweep.column("linewidth")
    ok = np.isfinite(y) & (x > 0)
    if ok.sum() < 2:
        return math.nan
    order = np.argsort(x[ok])[:n_points]
    xs, ys = x[ok][order], y[ok][order]
    slope, icpt = np.polyfit(xs, ys, 1)
    return float(icpt)


def run_scenario(s: Scenario, workers: int = 1) -> ScenarioResult:
    """Execute a scenario; sweep points are independent and keep axis order."""
    plan = build_timeline(s)

    if s.kind == "closed_form":
        p = s.base
        phi = np.asarray(s.phi_grid if s.phi_grid else np.linspace(-np.pi, np.pi, 361))
        out = {"phi": phi, "airy": cavity.airy_spectrum(p, phi)}
        try:
            ss = cavity.steady_state(p)
            out["steady_state"] = ss.value
            out["transmitted"] = cavity.transmitted_amplitude(ss, p)
        except cavity.NonConvergenceError as exc:
            out["error"] = str(exc)
        out["sequence"] = cavity.recursion_sequence(p, max(s.n_fill, 1))
        return ScenarioResult(s, plan, closed_form=out)

    if s.kind == "absorption":
        points = []
        for i, run in enumerate(plan.runs):
            tr = gem.absorption_spectrum(run.config, s.offsets)
            points.append(SweepPoint(run.axis_value if run.axis_value is not None else math.nan,
                                     {"min_transmission": float(tr.min()),
                                      "dip_width": analysis.dip_width(s.offsets, tr)},
                                     ))
            if s.sweep is None:
                return ScenarioResult(s, plan, summary=points[0].summary, absorption=tr)
        return ScenarioResult(s, plan, sweep=SweepResult(s.sweep.path,
                                                         np.asarray(s.sweep.values), tuple(points)))

    if s.kind in ("fsr_sweep", "linewidth_sweep"):
        pts = _map(_scan_point, [(s, r, i) for i, r in enumerate(plan.runs)], workers)
        sweep = SweepResult(s.sweep.path, np.asarray(s.sweep.values), tuple(pts))
        summary = {}
        if s.kind == "fsr_sweep":
            fsr = sweep.column("fsr")
            ok = np.isfinite(fsr)
            if ok.sum() >= 2:
                inv = 1.0 / np.asarray(s.sweep.values)[ok]
                summary["fsr_vs_inverse_period_slope"] = float(np.polyfit(inv, fsr[ok], 1)[0])
        else:
            summary["floor_linewidth"] = floor_linewidth(sweep)
        return ScenarioResult(s, plan, sweep=sweep, summary=summary)

    if s.kind == "spectrum":
        results = []
        for i, run in enumerate(plan.runs):
            scan = gem.run_spectrum_scan(run.config, s.offsets)
            scan = replace(scan, amplitudes=_noisy(s, scan.amplitudes, i))
            fits = {}
            try:
                fits["peak_spacing"] = analysis.peak_spacing_fsr(scan.offsets, scan.amplitudes)
            except analysis.FitValidationError as exc:
                fits["peak_spacing"] = analysis.FitResult(analysis.PEAK_SPACING, message=str(exc))
            try:
                fits["airy"] = analysis.fit_airy(scan.offsets, scan.amplitudes, envelope_on=True,
                                                 domain="amplitude")
            except analysis.FitValidationError as exc:
                fits["airy"] = analysis.FitResult(analysis.AIRY, message=str(exc))
            results.append((run, scan, fits))
        if s.sweep is None:
            run, scan, fits = results[0]
            summary = {k: v.params.get("fsr") for k, v in fits.items()}
            return ScenarioResult(s, plan, scan=scan, fits=fits, summary=summary)
        pts = tuple(SweepPoint(r.axis_value, {"fsr": f["peak_spacing"].params.get("fsr")},
                               f["peak_spacing"], scan=sc) for r, sc, f in results)
        return ScenarioResult(s, plan, sweep=SweepResult(s.sweep.path,
                                                         np.asarray(s.sweep.values), pts))

    # accumulate / ringdown
    series = _map(lambda r: _run_series(s, r), list(plan.runs), 1)
    if s.normalization == "first_echo":
        for ser in series:
            if ser.windows and ser.echo_energies().size == 0:
                raise ScenarioError("first_echo normalization needs at least one echo window")
    if s.sweep is None:
        ser = series[0]
        summary = _series_summary(s, ser)
        fits = {}
        if s.kind == "ringdown" and ser.windows and s.n_decay >= 2:
            fits["ringdown"] = _ringdown_fit(s, ser)
        return ScenarioResult(s, plan, series=(ser,), fits=fits, summary=summary)
    pts = tuple(SweepPoint(r.axis_value, _series_summary(s, ser), series=ser)
                for r, ser in zip(plan.runs, series))
    return ScenarioResult(s, plan, series=tuple(series),
                          sweep=SweepResult(s.sweep.path, np.asarray(s.sweep.values), pts))
