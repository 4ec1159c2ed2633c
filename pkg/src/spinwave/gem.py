"""
One-dimensional gradient echo memory integrator.

The optical envelope ``E(z, t)`` (moving frame, forward propagation only) and
the ground-state coherence ``sigma(z, t)`` obey

    d sigma / dt = -(gamma_s + i*(delta + eta(t)*z)) * sigma + i*kappa*E
    d E / dz     = i*kappa*sigma,          E(-1/2, t) = E_in(t)

on the normalized cell ``z in [-1/2, 1/2]``. ``E`` is slaved: at every
Runge-Kutta stage it is rebuilt from the stage coherence by trapezoidal
accumulation from the input face, and ``sigma`` is advanced with classical
RK4. The gradient ``eta(t)`` is piecewise constant (``+-eta0``) and flips
every ``half_period``.

With ``beta = kappa**2 / eta0`` a pulse inside the memory bandwidth
``eta0 / 2pi`` is transmitted with intensity ``exp(-2*pi*beta)``; this is an
emergent property of the equations, not an input.

Time origin: the first input pulse is centered at ``t = 0`` and the run starts
half a segment earlier, so pulses sit at the middle of the write windows.
All runs are vectorized over a batch of two-photon detunings; rows never
interact, so a batch is equivalent to independent runs at the same ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DEFAULT_DT_FACTOR = 0.1  # dt * (eta0/2 + |delta|)
MAX_DT_FACTOR = 0.5
MIN_NZ = 64
DEFAULT_BANDWIDTH_RATIO = 0.5

LEAK = "input-leak"
ECHO = "echo"


class ConfigurationError(ValueError):
    """Invalid engine configuration, raised before any time stepping."""


def matched_width(bandwidth: float, ratio: float = DEFAULT_BANDWIDTH_RATIO) -> float:
    """
    Temporal 1/e^2 intensity half-width [s] of a Gaussian pulse whose full
    1/e^2 spectral intensity width is ``ratio * bandwidth``.
    """
    return 2.0 / (math.pi * ratio * bandwidth)


@dataclass(frozen=True)
class GradientSchedule:
    """
    Piecewise-constant gradient. Segment ``j`` spans
    ``[(j - 1/2) * half_period, (j + 1/2) * half_period)`` and carries
    ``initial_sign * (-1)**j * eta0`` unless ``overrides`` maps ``j`` to
    another multiplier of ``eta0`` (e.g. 0 to switch a coil off).
    """

    half_period: float
    initial_sign: int = 1
    overrides: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.half_period > 0:
            raise ConfigurationError(f"schedule.half_period must be > 0, got {self.half_period}")
        if self.initial_sign not in (1, -1):
            raise ConfigurationError(f"schedule.initial_sign must be +1 or -1, got {self.initial_sign}")

    @property
    def origin(self) -> float:
        return -0.5 * self.half_period

    def factor(self, segment: int) -> float:
        for idx, val in self.overrides:
            if idx == segment:
                return float(val)
        return float(self.initial_sign * (1 if segment % 2 == 0 else -1))

    def segment_at(self, t: float) -> int:
        return int(math.floor((t - self.origin) / self.half_period + 1e-9))

    def segment_bounds(self, segment: int) -> tuple[float, float]:
        t0 = self.origin + segment * self.half_period
        return t0, t0 + self.half_period


@dataclass(frozen=True)
class PulseTrain:
    """
    Gaussian input pulses ``amplitude * exp(-((t - k*period)/width)**2)``.

    ``width`` is the 1/e^2 intensity half-width. ``carrier_offset`` [Hz] is the
    probe-control two-photon offset; it advances the per-cycle phase by
    ``2*pi*carrier_offset*period``.
    """

    period: float
    width: float
    count: int = 1
    amplitude: complex = 1.0
    carrier_offset: float = 0.0

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ConfigurationError(f"pulses.period must be > 0, got {self.period}")
        if not self.width > 0:
            raise ConfigurationError(f"pulses.width must be > 0, got {self.width}")
        if self.count < 0:
            raise ConfigurationError(f"pulses.count must be >= 0, got {self.count}")

    def centers(self) -> np.ndarray:
        return np.arange(self.count) * self.period

    @property
    def pulse_energy(self) -> float:
        """``int |E_in|^2 dt`` of one pulse."""
        return abs(self.amplitude) ** 2 * self.width * math.sqrt(math.pi / 2.0)

    def waveform(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        if self.count == 0:
            return out
        k = np.clip(np.rint(t / self.period), 0, self.count - 1)
        # pulses further than one period away are below double precision
        for shift in (-1, 0, 1):
            kk = k + shift
            ok = (kk >= 0) & (kk < self.count)
            arg = (t - kk * self.period) / self.width
            out += np.where(ok, np.exp(-np.minimum(arg * arg, 700.0)), 0.0)
        return self.amplitude * out


@dataclass(frozen=True)
class GemConfig:
    """
    Engine configuration. Rates are angular (rad/s); ``eta0`` is per unit
    normalized length so the memory bandwidth is ``eta0 / 2pi`` Hz.

    Parameters
    ----------
    kappa : float
        Effective Raman coupling, ``beta = kappa**2 / eta0``.
    eta0 : float
        Gradient magnitude [rad/s per normalized length].
    schedule, pulses
        Gradient switching and input pulse train. The pulse period must be
        one full gradient cycle.
    gamma_s : float
        Coherence amplitude decay rate [1/s].
    delta : float
        Static two-photon detuning [rad/s].
    n_z : int
        Spatial grid points.
    dt : float, optional
        Time step [s]; default ``dt_factor / (eta0/2 + |delta_eff|)``.
    cell_length : float
        Physical cell length [m]; informational, the math is normalized.
    coupling_off_after : float, optional
        Gate the coupling off (``kappa = 0``) from this time on.
    """

    kappa: float
    eta0: float
    schedule: GradientSchedule
    pulses: PulseTrain
    gamma_s: float = 0.0
    delta: float = 0.0
    n_z: int = 512
    dt: Optional[float] = None
    dt_factor: float = DEFAULT_DT_FACTOR
    cell_length: float = 0.2
    coupling_off_after: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_z < MIN_NZ:
            raise ConfigurationError(f"n_z must be >= {MIN_NZ}, got {self.n_z}")
        if not self.kappa >= 0:
            raise ConfigurationError(f"kappa must be >= 0, got {self.kappa}")
        if not self.eta0 > 0:
            raise ConfigurationError(f"eta0 must be > 0, got {self.eta0}")
        if not self.gamma_s >= 0:
            raise ConfigurationError(f"gamma_s must be >= 0, got {self.gamma_s}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not 0 < self.dt_factor < MAX_DT_FACTOR:
            raise ConfigurationError(f"dt_factor must lie in (0, {MAX_DT_FACTOR}), got {self.dt_factor}")
        if not math.isclose(self.pulses.period, 2.0 * self.schedule.half_period, rel_tol=1e-9):
            raise ConfigurationError(
                f"pulses.period ({self.pulses.period}) must equal 2 * schedule.half_period "
                f"({2.0 * self.schedule.half_period}): one input per full gradient cycle"
            )

    @classmethod
    def from_beta(
        cls,
        beta: float,
        bandwidth: float = 1.0e6,
        period: float = 12e-6,
        count: int = 1,
        width: Optional[float] = None,
        gamma_s: float = 0.0,
        carrier_offset: float = 0.0,
        **kwargs,
    ) -> "GemConfig":
        """Convenience constructor from optical depth and bandwidth [Hz]."""
        eta0 = 2.0 * math.pi * bandwidth
        if width is None:
            width = matched_width(bandwidth)
        return cls(
            kappa=math.sqrt(beta * eta0),
            eta0=eta0,
            schedule=GradientSchedule(half_period=period / 2.0),
            pulses=PulseTrain(period=period, width=width, count=count,
                              carrier_offset=carrier_offset),
            gamma_s=gamma_s,
            **kwargs,
        )

    @property
    def beta(self) -> float:
        return self.kappa**2 / self.eta0

    @property
    def bandwidth(self) -> float:
        """Memory bandwidth [Hz]."""
        return self.eta0 / (2.0 * math.pi)

    @property
    def period(self) -> float:
        return self.pulses.period

    @property
    def z(self) -> np.ndarray:
        return np.linspace(-0.5, 0.5, self.n_z)

    def with_(self, **changes) -> "GemConfig":
        return replace(self, **changes)

    def with_period(self, period: float) -> "GemConfig":
        return replace(
            self,
            schedule=replace(self.schedule, half_period=period / 2.0),
            pulses=replace(self.pulses, period=period),
        )

    def with_pulses(self, **changes) -> "GemConfig":
        return replace(self, pulses=replace(self.pulses, **changes))

    def with_beta(self, beta: float) -> "GemConfig":
        return replace(self, kappa=math.sqrt(beta * self.eta0))

    def detuning(self, carrier_offset: Optional[float] = None) -> float:
        """Effective two-photon detuning [rad/s] seen by the coherence."""
        off = self.pulses.carrier_offset if carrier_offset is None else carrier_offset
        return self.delta - 2.0 * math.pi * off

    def resolve_dt(self, offsets: Optional[Sequence[float]] = None) -> float:
        if self.dt is not None:
            return self.dt
        offs = [self.pulses.carrier_offset] if offsets is None else list(offsets)
        dmax = max(abs(self.detuning(o)) for o in offs)
        return self.dt_factor / (0.5 * self.eta0 + dmax)


@dataclass(frozen=True)
class ControlPowerMap:
    """
    Optional control-power calibration: ``kappa**2 = kappa_sq_per_power * P``
    and ``gamma_s = gamma_floor + gamma_per_power * P``. The constants are
    user inputs; no calibration is implied.
    """

    kappa_sq_per_power: float
    gamma_per_power: float = 0.0
    gamma_floor: float = 0.0

    def apply(self, config: GemConfig, power: float) -> GemConfig:
        if power < 0:
            raise ConfigurationError(f"control power must be >= 0, got {power}")
        return replace(
            config,
            kappa=math.sqrt(self.kappa_sq_per_power * power),
            gamma_s=self.gamma_floor + self.gamma_per_power * power,
        )


@dataclass(frozen=True, eq=False)
class FieldState:
    """Fields on the z grid at time ``t``; arrays may carry a leading batch axis."""

    e_field: np.ndarray
    sigma: np.ndarray
    t: float

    @classmethod
    def zeros(cls, config: GemConfig, t: Optional[float] = None) -> "FieldState":
        t = config.schedule.origin if t is None else t
        return cls(np.zeros(config.n_z, complex), np.zeros(config.n_z, complex), t)

    @classmethod
    def from_sigma(cls, config: GemConfig, sigma, t: Optional[float] = None) -> "FieldState":
        t = config.schedule.origin if t is None else t
        sigma = np.broadcast_to(np.asarray(sigma, dtype=complex), (config.n_z,)).copy()
        kappa = _kappa_at(config, t)
        e = _slaved_field(sigma[None, :], kappa, config.z[1] - config.z[0],
                          complex(config.pulses.waveform(t)))[0]
        return cls(e, sigma, t)

    def coherence_norm(self) -> float:
        """``sqrt(int |sigma|^2 dz)``, the stored excitation amplitude."""
        return float(np.sqrt(_norm2(self.sigma, 1.0 / (self.sigma.shape[-1] - 1))))


@dataclass(frozen=True)
class EchoWindow:
    index: int
    t_start: float
    t_end: float
    kind: str
    energy: float
    peak_amplitude: float
    center_amplitude: float = math.nan  # |E_out| at the refocusing time


@dataclass(frozen=True, eq=False)
class EchoSeries:
    """
    Per-window output of one run. Windows are the gradient segments; a window
    is ``input-leak`` if an input pulse is centered inside it, else ``echo``.
    Energies are ``int |E_out|^2 dt`` in units where one input pulse carries
    ``input_energy``. Traces are kept unless the run discarded them.
    """

    windows: tuple[EchoWindow, ...]
    input_energy: float
    carrier_offset: float
    final_state: FieldState
    bounds: tuple[int, ...] = ()
    t: Optional[np.ndarray] = None
    e_out: Optional[np.ndarray] = None
    e_in: Optional[np.ndarray] = None
    coherence: Optional[np.ndarray] = None
    snapshots: tuple[FieldState, ...] = ()

    def __len__(self) -> int:
        return len(self.windows)

    def echoes(self) -> list[EchoWindow]:
        return [w for w in self.windows if w.kind == ECHO]

    def leaks(self) -> list[EchoWindow]:
        return [w for w in self.windows if w.kind == LEAK]

    def echo_energies(self) -> np.ndarray:
        return np.array([w.energy for w in self.echoes()])

    def echo_times(self) -> np.ndarray:
        return np.array([0.5 * (w.t_start + w.t_end) for w in self.echoes()])

    def leak_energies(self) -> np.ndarray:
        return np.array([w.energy for w in self.leaks()])

    def trace(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Sample times and complex output field inside window ``index``."""
        if self.t is None:
            raise ValueError("traces were not kept for this run")
        a, b = self.bounds[index], self.bounds[index + 1]
        return self.t[a:b + 1], self.e_out[a:b + 1]

    def stored_excitation(self) -> np.ndarray:
        """``int |sigma|^2 dz`` at the end of every window."""
        if self.coherence is None:
            raise ValueError("traces were not kept for this run")
        return self.coherence[list(self.bounds[1:])] ** 2


@dataclass(frozen=True, eq=False)
class SpectrumScan:
    offsets: np.ndarray
    amplitudes: np.ndarray
    energies: np.ndarray
    series: tuple[EchoSeries, ...]

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.offsets.tolist(), self.amplitudes.tolist()))


# ---------------------------------------------------------------------------
# numerical core
# ---------------------------------------------------------------------------

def _norm2(sigma: np.ndarray, dz: float) -> np.ndarray:
    a = np.abs(sigma) ** 2
    return dz * (a.sum(axis=-1) - 0.5 * (a[..., 0] + a[..., -1]))


def _slaved_field(sigma: np.ndarray, kappa: float, dz: float, e_in) -> np.ndarray:
    e = np.empty_like(sigma)
    e[:, 0] = 0.0
    np.cumsum(sigma[:, 1:] + sigma[:, :-1], axis=1, out=e[:, 1:])
    e *= 0.5j * kappa * dz
    e += np.reshape(e_in, (-1, 1)) if np.ndim(e_in) else e_in
    return e


def _kappa_at(config: GemConfig, t: float) -> float:
    off = config.coupling_off_after
    return 0.0 if (off is not None and t >= off - 1e-15) else config.kappa


@dataclass(frozen=True)
class _Piece:
    t_start: float
    t_end: float
    eta: float
    kappa: float
    segment: int


def _pieces(config: GemConfig, t_start: float, t_end: float,
            extra_breaks: Sequence[float] = ()) -> list[_Piece]:
    """Split ``[t_start, t_end]`` where eta, kappa, or a requested snapshot changes."""
    sch = config.schedule
    breaks = {t_start, t_end}
    seg = sch.segment_at(t_start)
    while True:
        tb = sch.segment_bounds(seg)[1]
        if tb >= t_end - 1e-15:
            break
        breaks.add(tb)
        seg += 1
    if config.coupling_off_after is not None and t_start < config.coupling_off_after < t_end:
        breaks.add(config.coupling_off_after)
    for tb in extra_breaks:
        if t_start < tb < t_end:
            breaks.add(float(tb))
    edges = sorted(breaks)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-15:
            continue
        mid = 0.5 * (a + b)
        s = sch.segment_at(mid)
        out.append(_Piece(a, b, sch.factor(s) * config.eta0, _kappa_at(config, mid), s))
    return out


def _check_resolution(config: GemConfig, pieces: Sequence[_Piece], dt: float,
                      detunings: np.ndarray) -> None:
    worst = dt * (0.5 * config.eta0 + float(np.max(np.abs(detunings))))
    if worst >= MAX_DT_FACTOR:
        raise ConfigurationError(
            f"time step too coarse: dt*(eta0/2 + |delta|) = {worst:.3g} >= {MAX_DT_FACTOR}"
        )
    # longest stretch of same-sign gradient bounds the spatial phase ramp
    dz = 1.0 / (config.n_z - 1)
    ramp = run = 0.0
    last = 0.0
    for p in pieces:
        sgn = math.copysign(1.0, p.eta) if p.eta else 0.0
        run = run + (p.t_end - p.t_start) * abs(p.eta) if sgn == last else (p.t_end - p.t_start) * abs(p.eta)
        last = sgn
        ramp = max(ramp, run)
    if ramp * dz >= math.pi:
        raise ConfigurationError(
            f"n_z={config.n_z} aliases the spatial phase ramp: eta0*dz*t = {ramp * dz:.3g} >= pi"
        )


@dataclass
class _Trace:
    t: list = field(default_factory=list)
    e_out: list = field(default_factory=list)
    e_in: list = field(default_factory=list)
    coh: list = field(default_factory=list)


def _integrate(config: GemConfig, pulses: PulseTrain, detunings: np.ndarray,
               sigma: np.ndarray, pieces: Sequence[_Piece], dt_target: float,
               record: Optional[_Trace], snapshot_times: Sequence[float] = ()):
    """
    Advance a batch of coherences through ``pieces``. Returns the final sigma,
    the sample index at the start of every piece, and any snapshots.
    """
    z = config.z
    dz = z[1] - z[0]
    gamma = config.gamma_s
    det = detunings[:, None]
    starts = []
    snaps = []
    wanted = sorted(snapshot_times)
    n_recorded = 0

    for piece in pieces:
        n = max(1, math.ceil((piece.t_end - piece.t_start) / dt_target - 1e-9))
        dt = (piece.t_end - piece.t_start) / n
        rate = -(gamma + 1j * (det + piece.eta * z[None, :]))
        kappa = piece.kappa
        coupling = -0.5 * kappa * kappa * dz
        times = piece.t_start + 0.5 * dt * np.arange(2 * n + 1)
        drive = 1j * kappa * pulses.waveform(times)
        e_in_samples = pulses.waveform(times[::2])
        starts.append(n_recorded)

        def deriv(s, d):
            acc = np.empty_like(s)
            acc[:, 0] = 0.0
            np.cumsum(s[:, 1:] + s[:, :-1], axis=1, out=acc[:, 1:])
            acc *= coupling
            acc += d
            acc += rate * s
            return acc

        for j in range(n):
            t = times[2 * j]
            while wanted and wanted[0] <= t + 1e-15:
                snaps.append((wanted.pop(0), sigma.copy(), kappa, complex(e_in_samples[j])))
            if record is not None:
                tot = (sigma[:, 1:] + sigma[:, :-1]).sum(axis=1)
                record.t.append(t)
                record.e_out.append(e_in_samples[j] + 0.5j * kappa * dz * tot)
                record.e_in.append(e_in_samples[j])
                record.coh.append(np.sqrt(_norm2(sigma, dz)))
                n_recorded += 1
            d1, d2, d3 = drive[2 * j], drive[2 * j + 1], drive[2 * j + 2]
            k1 = deriv(sigma, d1)
            k2 = deriv(sigma + (0.5 * dt) * k1, d2)
            k3 = deriv(sigma + (0.5 * dt) * k2, d2)
            k4 = deriv(sigma + dt * k3, d3)
            sigma = sigma + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    t_final = pieces[-1].t_end if pieces else None
    if t_final is not None:
        while wanted and wanted[0] <= t_final + 1e-15:
            snaps.append((wanted.pop(0), sigma.copy(), _kappa_at(config, t_final),
                          complex(pulses.waveform(t_final))))
        if record is not None:
            kappa = _kappa_at(config, t_final)
            e_in = complex(pulses.waveform(t_final))
            tot = (sigma[:, 1:] + sigma[:, :-1]).sum(axis=1)
            record.t.append(t_final)
            record.e_out.append(e_in + 0.5j * kappa * dz * tot)
            record.e_in.append(e_in)
            record.coh.append(np.sqrt(_norm2(sigma, dz)))
    starts.append(n_recorded)
    return sigma, starts, snaps


def _window_kind(t0: float, t1: float, pulses: PulseTrain) -> str:
    c = pulses.centers()
    return LEAK if np.any((c >= t0) & (c < t1)) else ECHO


def _simulate(config: GemConfig, pulses: PulseTrain, offsets: Sequence[float],
              n_windows: int, keep_traces: bool = True,
              snapshot_times: Sequence[float] = (),
              sigma0: Optional[np.ndarray] = None) -> list[EchoSeries]:
    """Run ``n_windows`` gradient segments for every carrier offset in the batch."""
    offsets = np.asarray(offsets, dtype=float)
    detunings = np.array([config.detuning(o) for o in offsets])
    sch = config.schedule
    t_start = sch.origin
    t_end = t_start + n_windows * sch.half_period
    seg_edges = [t_start + k * sch.half_period for k in range(n_windows + 1)]
    pieces = _pieces(config, t_start, t_end, extra_breaks=snapshot_times)
    dt = config.resolve_dt(offsets)
    _check_resolution(config, pieces, dt, detunings)

    n_b = len(offsets)
    if sigma0 is None:
        sigma = np.zeros((n_b, config.n_z), dtype=complex)
    else:
        sigma = np.broadcast_to(np.asarray(sigma0, complex), (n_b, config.n_z)).copy()
    rec = _Trace()
    sigma, starts, snaps = _integrate(config, pulses, detunings, sigma, pieces, dt, rec,
                                      snapshot_times)

    t = np.asarray(rec.t)
    e_out = np.stack(rec.e_out, axis=1) if rec.e_out else np.zeros((n_b, 0), complex)
    e_in = np.asarray(rec.e_in, dtype=complex)
    coh = np.stack(rec.coh, axis=1) if rec.coh else np.zeros((n_b, 0))
    piece_t = [p.t_start for p in pieces] + [t_end]
    # map gradient-segment edges onto sample indices
    bounds = []
    for te in seg_edges:
        k = int(np.argmin(np.abs(np.asarray(piece_t) - te)))
        bounds.append(starts[k])
    bounds = tuple(bounds)

    dz = config.z[1] - config.z[0]
    e_final = _slaved_field(sigma, _kappa_at(config, t_end), dz,
                            complex(pulses.waveform(t_end)))
    out = []
    for b in range(n_b):
        power = np.abs(e_out[b]) ** 2
        windows = []
        for w in range(n_windows):
            a, c = bounds[w], bounds[w + 1]
            energy = float(np.trapezoid(power[a:c + 1], t[a:c + 1]))
            peak = float(np.sqrt(power[a:c + 1].max()))
            mid = 0.5 * (seg_edges[w] + seg_edges[w + 1])
            seg = e_out[b, a:c + 1]
            centre = abs(complex(np.interp(mid, t[a:c + 1], seg.real),
                                 np.interp(mid, t[a:c + 1], seg.imag)))
            windows.append(EchoWindow(w, seg_edges[w], seg_edges[w + 1],
                                      _window_kind(seg_edges[w], seg_edges[w + 1], pulses),
                                      energy, peak, centre))
        final = FieldState(e_final[b].copy(), sigma[b].copy(), t_end)
        snapshots = tuple(
            FieldState(_slaved_field(s[b:b + 1], k, dz, ein)[0], s[b].copy(), ts)
            for ts, s, k, ein in snaps
        )
        series = EchoSeries(
            windows=tuple(windows),
            input_energy=pulses.pulse_energy,
            carrier_offset=float(offsets[b]),
            final_state=final,
            bounds=bounds,
            t=t if keep_traces else None,
            e_out=e_out[b] if keep_traces else None,
            e_in=e_in if keep_traces else None,
            coherence=coh[b] if keep_traces else None,
            snapshots=snapshots,
        )
        out.append(series)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def evolve(state: FieldState, config: GemConfig, t_end: float) -> FieldState:
    """Integrate from ``state.t`` to ``t_end`` under the configured schedule and input."""
    if t_end < state.t:
        raise ValueError(f"t_end ({t_end}) precedes state.t ({state.t})")
    if np.shape(state.sigma) != (config.n_z,):
        raise ConfigurationError(
            f"state grid {np.shape(state.sigma)} does not match n_z={config.n_z}")
    if t_end == state.t:
        return state
    pieces = _pieces(config, state.t, t_end)
    dt = config.resolve_dt()
    det = np.array([config.detuning()])
    _check_resolution(config, pieces, dt, det)
    sigma, _, _ = _integrate(config, config.pulses, det,
                             np.asarray(state.sigma, complex)[None, :].copy(),
                             pieces, dt, None)
    dz = config.z[1] - config.z[0]
    e = _slaved_field(sigma, _kappa_at(config, t_end), dz,
                      complex(config.pulses.waveform(t_end)))
    return FieldState(e[0], sigma[0], t_end)


def run_accumulation(config: GemConfig, keep_traces: bool = True,
                     snapshot_times: Sequence[float] = ()) -> EchoSeries:
    """Full pulse-train protocol: every pulse gets a write window and a read window."""
    if config.pulses.count < 1:
        raise ConfigurationError("run_accumulation needs pulses.count >= 1")
    return _simulate(config, config.pulses, [config.pulses.carrier_offset],
                     2 * config.pulses.count, keep_traces, snapshot_times)[0]


def run_ringdown(config: GemConfig, n_fill: int, n_decay: int,
                 keep_traces: bool = True) -> EchoSeries:
    """
    Inject ``n_fill`` pulses, then keep switching the gradient with no input
    for ``n_decay`` full cycles. Every segment of the decay phase is an echo.
    """
    if n_fill < 1 or n_decay < 1:
        raise ConfigurationError(f"need n_fill >= 1 and n_decay >= 1, got {n_fill}, {n_decay}")
    pulses = replace(config.pulses, count=n_fill)
    return _simulate(config, pulses, [pulses.carrier_offset],
                     2 * (n_fill + n_decay), keep_traces)[0]


def run_batch(config: GemConfig, offsets: Sequence[float],
              keep_traces: bool = False) -> list[EchoSeries]:
    """``run_accumulation`` for each carrier offset [Hz], vectorized over offsets."""
    if config.pulses.count < 1:
        raise ConfigurationError("accumulation needs pulses.count >= 1")
    return _simulate(config, config.pulses, offsets, 2 * config.pulses.count, keep_traces)


def run_spectrum_scan(config: GemConfig, offsets: Sequence[float],
                      keep_traces: bool = False, chunk: int = 256) -> SpectrumScan:
    """
    Equilibrium echo versus carrier offset [Hz]. Each point is an independent
    accumulation run; the reported amplitude is the last echo at its
    refocusing time (window center), where the tail of the transmitted input
    pulse has died away.
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.size == 0:
        raise ValueError("offsets must be non-empty")
    # one dt for the whole scan so subsets reproduce the same numbers
    cfg = replace(config, dt=config.resolve_dt(offsets))
    series: list[EchoSeries] = []
    for i in range(0, offsets.size, chunk):
        series.extend(run_batch(cfg, offsets[i:i + chunk], keep_traces))
    amps = np.array([s.echoes()[-1].center_amplitude for s in series])
    energies = np.array([s.echoes()[-1].energy for s in series])
    return SpectrumScan(offsets, amps, energies, tuple(series))


def absorption_spectrum(config: GemConfig, probe_offsets: Sequence[float],
                        probe_width: Optional[float] = None) -> np.ndarray:
    """
    Intensity transmission of a weak narrowband probe through a static
    gradient (one coil on), for each probe offset [Hz] from the two-photon
    resonance. The probe is a single long Gaussian pulse.
    """
    offs = np.asarray(probe_offsets, dtype=float)
    if offs.size == 0:
        raise ValueError("probe_offsets must be non-empty")
    w = 8.0 / config.bandwidth if probe_width is None else probe_width
    duration = 8.0 * w
    sign = config.schedule.initial_sign
    static = GradientSchedule(half_period=duration, initial_sign=sign)
    probe = PulseTrain(period=2.0 * duration, width=w, count=1,
                       amplitude=config.pulses.amplitude)
    cfg = replace(config, schedule=static, pulses=probe, coupling_off_after=None)
    series = _simulate(cfg, probe, offs, 1, keep_traces=False)
    return np.array([s.windows[0].energy for s in series]) / probe.pulse_energy


def single_pass(config: GemConfig) -> tuple[float, float]:
    """
    Single bandwidth-matched pulse through one write and one read window.
    Returns ``(transmission, echo_efficiency)`` as energy fractions.
    """
    s = _simulate(config, replace(config.pulses, count=1),
                  [config.pulses.carrier_offset], 2, keep_traces=False)[0]
    return s.windows[0].energy / s.input_energy, s.windows[1].energy / s.input_energy


def echo_phase_advance(series: EchoSeries, first: int, second: int) -> float:
    """
    Phase [rad] of the overlap between two echo windows whose traces are one
    or more whole gradient cycles apart (complex echo overlap).
    """
    t1, e1 = series.trace(first)
    t2, e2 = series.trace(second)
    n = min(len(e1), len(e2))
    return float(np.angle(np.sum(e2[:n] * np.conj(e1[:n]))))
