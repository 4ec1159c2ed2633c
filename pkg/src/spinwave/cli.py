"""
Command-line front end: scenario documents (YAML or JSON), shipped presets,
run manifests, and serialization of results to JSON plus CSV tables.

Output layout of one run::

    <out>/results.json     summaries, fits, run plan (no timestamp)
    <out>/manifest.json    resolved config, output list, seed, version, timestamp
    <out>/<table>.csv      one table per plotted series, units in headers
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from . import __version__, analysis, cavity, gem, protocol
from .cavity import ResonatorParams
from .gem import ControlPowerMap, GemConfig, GradientSchedule, PulseTrain
from .protocol import Scenario, ScenarioError, SweepAxis

OUTPUT_ENV = "SPINWAVE_OUTPUT_DIR"
DEFAULT_OUTPUT = "results"
MANIFEST_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE, EXIT_FIT, EXIT_IO = 0, 2, 3, 4, 5


# ---------------------------------------------------------------------------
# scenario documents
# ---------------------------------------------------------------------------

_TOP_KEYS = {"kind", "name", "base", "sweep", "normalization", "offsets", "n_fill",
             "n_decay", "phi_grid", "power_map", "noise", "seed"}
_GEM_KEYS = {"kappa", "beta", "eta0", "bandwidth", "period", "half_period", "initial_sign",
             "count", "width", "amplitude", "carrier_offset", "gamma_s", "delta", "n_z",
             "dt", "dt_factor", "cell_length", "coupling_off_after"}
_MODEL_KEYS = {"beta", "transmission", "gamma", "gamma_tau", "tau", "phi", "a0"}
_SWEEP_KEYS = {"path", "values", "start", "stop", "step"}
_RANGE_KEYS = {"start", "stop", "step"}
_POWER_KEYS = {"kappa_sq_per_power", "gamma_per_power", "gamma_floor"}


def _reject_unknown(doc: dict, allowed: set, where: str) -> None:
    for key in doc:
        if key not in allowed:
            path = f"{where}.{key}" if where else str(key)
            raise ScenarioError(f"unknown key '{path}' (allowed: {', '.join(sorted(allowed))})")


def _num(doc: dict, key: str, where: str, default=None, cast=float, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise ScenarioError(f"missing required key '{where}.{key}'")
        return default
    try:
        val = cast(doc[key])
    except (TypeError, ValueError):
        raise ScenarioError(f"'{where}.{key}' must be a {cast.__name__}, got {doc[key]!r}") from None
    if cast is float and not math.isfinite(val):
        raise ScenarioError(f"'{where}.{key}' must be finite, got {val}")
    return val


def _one_of(doc: dict, a: str, b: str, where: str) -> str:
    if a in doc and b in doc:
        raise ScenarioError(f"give only one of '{where}.{a}' and '{where}.{b}'")
    if a not in doc and b not in doc:
        raise ScenarioError(f"missing '{where}.{a}' (or '{where}.{b}')")
    return a if a in doc else b


def _grid(grid, where: str) -> tuple[float, ...]:
    """A list of numbers, or ``{start, stop, step}`` with ``stop`` included."""
    if grid is None:
        return ()
    if isinstance(grid, dict):
        _reject_unknown(grid, _RANGE_KEYS, where)
        start = _num(grid, "start", where, required=True)
        stop = _num(grid, "stop", where, required=True)
        step = _num(grid, "step", where, required=True)
        if step <= 0 or stop < start:
            raise ScenarioError(f"'{where}' needs step > 0 and stop >= start")
        n = int(round((stop - start) / step)) + 1
        return tuple(float(v) for v in np.round(start + step * np.arange(n), 9))
    if not isinstance(grid, (list, tuple)):
        raise ScenarioError(f"'{where}' must be a list or a {{start, stop, step}} mapping")
    try:
        vals = tuple(float(v) for v in grid)
    except (TypeError, ValueError):
        raise ScenarioError(f"'{where}' must contain numbers") from None
    return vals


def _gem_from_doc(doc: dict) -> GemConfig:
    w = "base"
    _reject_unknown(doc, _GEM_KEYS, w)
    pkey = _one_of(doc, "period", "half_period", w) if not (
        "period" in doc and "half_period" in doc) else None
    if pkey is None:
        period = _num(doc, "period", w)
        half = _num(doc, "half_period", w)
        if not math.isclose(period, 2.0 * half, rel_tol=1e-9):
            raise ScenarioError(
                f"'{w}.period' ({period}) must equal 2 * '{w}.half_period' ({2 * half}): "
                "one input pulse per full gradient cycle")
    else:
        val = _num(doc, pkey, w)
        period = val if pkey == "period" else 2.0 * val
    ekey = _one_of(doc, "eta0", "bandwidth", w)
    eta0 = _num(doc, ekey, w)
    eta0 = eta0 if ekey == "eta0" else 2.0 * math.pi * eta0
    if not eta0 > 0:
        raise ScenarioError(f"'{w}.{ekey}' must be > 0")
    ckey = _one_of(doc, "kappa", "beta", w)
    cval = _num(doc, ckey, w)
    if cval < 0:
        raise ScenarioError(f"'{w}.{ckey}' must be >= 0")
    kappa = cval if ckey == "kappa" else math.sqrt(cval * eta0)
    width = _num(doc, "width", w)
    if width is None:
        width = gem.matched_width(eta0 / (2.0 * math.pi))
    try:
        return GemConfig(
            kappa=kappa, eta0=eta0,
            schedule=GradientSchedule(half_period=period / 2.0,
                                      initial_sign=_num(doc, "initial_sign", w, 1, int)),
            pulses=PulseTrain(period=period, width=width,
                              count=_num(doc, "count", w, 1, int),
                              amplitude=_num(doc, "amplitude", w, 1.0),
                              carrier_offset=_num(doc, "carrier_offset", w, 0.0)),
            gamma_s=_num(doc, "gamma_s", w, 0.0),
            delta=_num(doc, "delta", w, 0.0),
            n_z=_num(doc, "n_z", w, 512, int),
            dt=_num(doc, "dt", w),
            dt_factor=_num(doc, "dt_factor", w, gem.DEFAULT_DT_FACTOR),
            cell_length=_num(doc, "cell_length", w, 0.2),
            coupling_off_after=_num(doc, "coupling_off_after", w),
        )
    except gem.ConfigurationError as exc:
        raise ScenarioError(f"invalid '{w}': {exc}") from exc


def _complex(v, where: str) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"'{where}' must be a number or [re, im]") from None


def _model_from_doc(doc: dict) -> ResonatorParams:
    w = "base"
    _reject_unknown(doc, _MODEL_KEYS, w)
    bkey = _one_of(doc, "beta", "transmission", w)
    tau = _num(doc, "tau", w, 1.0)
    if "gamma" in doc and "gamma_tau" in doc:
        raise ScenarioError(f"give only one of '{w}.gamma' and '{w}.gamma_tau'")
    gamma = _num(doc, "gamma", w)
    if gamma is None:
        gamma = _num(doc, "gamma_tau", w, 0.0) / tau
    try:
        beta = _num(doc, bkey, w)
        if bkey == "transmission":
            beta = cavity.beta_from_transmission(beta)
        return ResonatorParams(beta=beta, gamma=gamma, tau=tau, phi=_num(doc, "phi", w, 0.0),
                               a0=_complex(doc.get("a0", 1.0), f"{w}.a0"))
    except cavity.DomainError as exc:
        raise ScenarioError(f"invalid '{w}': {exc}") from exc


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a parsed document; errors name the offending key path."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    if "config" in doc and "manifest_version" in doc:
        doc = doc["config"]
    _reject_unknown(doc, _TOP_KEYS, "")
    if "kind" not in doc:
        raise ScenarioError("missing required key 'kind'")
    kind = doc["kind"]
    base_doc = doc.get("base") or {}
    if not isinstance(base_doc, dict):
        raise ScenarioError("'base' must be a mapping")
    base = _model_from_doc(base_doc) if kind == "closed_form" else _gem_from_doc(base_doc)

    sweep = None
    if doc.get("sweep") is not None:
        sd = doc["sweep"]
        if not isinstance(sd, dict) or "path" not in sd:
            raise ScenarioError("'sweep' must be a mapping with 'path'")
        _reject_unknown(sd, _SWEEP_KEYS, "sweep")
        rng = {k: sd[k] for k in _RANGE_KEYS if k in sd}
        if rng and "values" in sd:
            raise ScenarioError("give either 'sweep.values' or 'sweep.start/stop/step'")
        values = _grid(rng if rng else sd.get("values"), "sweep.values")
        sweep = SweepAxis(str(sd["path"]), values)

    power_map = None
    if doc.get("power_map") is not None:
        pm = doc["power_map"]
        _reject_unknown(pm, _POWER_KEYS, "power_map")
        power_map = ControlPowerMap(
            _num(pm, "kappa_sq_per_power", "power_map", required=True),
            _num(pm, "gamma_per_power", "power_map", 0.0),
            _num(pm, "gamma_floor", "power_map", 0.0))

    s = Scenario(
        kind=kind, base=base, sweep=sweep,
        normalization=doc.get("normalization", "first_echo"),
        offsets=_grid(doc.get("offsets"), "offsets"),
        n_fill=_num(doc, "n_fill", "", 15, int),
        n_decay=_num(doc, "n_decay", "", 10, int),
        phi_grid=_grid(doc.get("phi_grid"), "phi_grid"),
        power_map=power_map,
        noise=_num(doc, "noise", "", 0.0),
        seed=_num(doc, "seed", "", 0, int),
        name=str(doc.get("name", "")),
    )
    # surface sweep values the engine would reject now, with the key path
    protocol.build_timeline(s) if s.kind != "closed_form" else None
    return s


def load_scenario(path) -> Scenario:
    """Load a YAML/JSON scenario or a run manifest (its resolved config is used)."""
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse {p}: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(s: Scenario) -> dict:
    """Fully resolved document; ``scenario_from_dict`` of it gives back ``s``."""
    if isinstance(s.base, ResonatorParams):
        b = s.base
        base = {"beta": b.beta, "gamma": b.gamma, "tau": b.tau, "phi": b.phi,
                "a0": [complex(b.a0).real, complex(b.a0).imag]}
    else:
        c = s.base
        base = {"kappa": c.kappa, "eta0": c.eta0, "period": c.pulses.period,
                "initial_sign": c.schedule.initial_sign, "count": c.pulses.count,
                "width": c.pulses.width, "amplitude": c.pulses.amplitude,
                "carrier_offset": c.pulses.carrier_offset, "gamma_s": c.gamma_s,
                "delta": c.delta, "n_z": c.n_z, "dt": c.dt, "dt_factor": c.dt_factor,
                "cell_length": c.cell_length, "coupling_off_after": c.coupling_off_after}
    pm = None
    if s.power_map is not None:
        pm = {"kappa_sq_per_power": s.power_map.kappa_sq_per_power,
              "gamma_per_power": s.power_map.gamma_per_power,
              "gamma_floor": s.power_map.gamma_floor}
    return {
        "kind": s.kind, "name": s.name, "base": base,
        "sweep": None if s.sweep is None else {"path": s.sweep.path,
                                               "values": list(s.sweep.values)},
        "normalization": s.normalization, "offsets": list(s.offsets),
        "n_fill": s.n_fill, "n_decay": s.n_decay, "phi_grid": list(s.phi_grid),
        "power_map": pm, "noise": s.noise, "seed": s.seed,
    }


# ---------------------------------------------------------------------------
# presets (desk-scale versions of the measured figures)
# ---------------------------------------------------------------------------

def _presets() -> dict[str, dict]:
    p12 = 12e-6
    slow_beta = 0.005
    gamma_87 = protocol.gamma_for_lifetime(slow_beta, p12 / 2, 87e-6)
    return {
        "paper_fig2b": {
            "kind": "accumulate", "name": "echo build-up over 15 input pulses",
            "base": {"beta": 0.0568, "bandwidth": 1e6, "period": p12, "count": 15,
                     "gamma_s": 1 / 87e-6, "n_z": 256},
        },
        "paper_fig2c": {
            "kind": "ringdown", "name": "ring-down after filling, 87 us lifetime",
            "base": {"beta": slow_beta, "bandwidth": 1e6, "period": p12,
                     "gamma_s": gamma_87, "n_z": 256},
            "n_fill": 15, "n_decay": 15,
        },
        "paper_fig2e": {
            "kind": "accumulate", "name": "equilibrium echo against control power",
            "base": {"beta": 0.05, "bandwidth": 1e6, "period": p12, "count": 15,
                     "gamma_s": 1 / 87e-6, "n_z": 256},
            "power_map": {"kappa_sq_per_power": 2 * math.pi * 1e6 * 0.01,
                          "gamma_per_power": 0.0, "gamma_floor": 1 / 87e-6},
            "sweep": {"path": "power", "values": [1.0, 2.0, 4.0, 6.0, 8.0, 10.0]},
        },
        "paper_fig3a": {
            "kind": "spectrum", "name": "transmission spectrum, 12 us period",
            "base": {"beta": 0.05, "bandwidth": 1e6, "period": p12, "count": 15,
                     "gamma_s": 1 / 87e-6, "n_z": 256},
            "offsets": {"start": -400e3, "stop": 400e3, "step": 2e3},
        },
        "paper_fig3b": {
            "kind": "fsr_sweep", "name": "FSR against pulse period",
            "base": {"beta": 0.05, "bandwidth": 1e6, "period": p12, "count": 15,
                     "gamma_s": 1 / 87e-6, "n_z": 256},
            "offsets": {"start": -300e3, "stop": 300e3, "step": 3e3},
            "sweep": {"path": "period", "values": [8e-6, 10e-6, 12e-6, 14e-6, 16e-6]},
        },
        "paper_fig3c": {
            "kind": "absorption", "name": "static-gradient absorption band",
            "base": {"beta": 0.5, "bandwidth": 1e6, "period": p12, "n_z": 256},
            "offsets": {"start": -1.5e6, "stop": 1.5e6, "step": 25e3},
        },
        "paper_fig3d": {
            "kind": "linewidth_sweep", "name": "central-peak linewidth against coupling",
            "base": {"beta": 0.02, "bandwidth": 1e6, "period": p12, "count": 40,
                     "gamma_s": 1 / 87e-6, "n_z": 128},
            "sweep": {"path": "beta", "values": [0.0002, 0.005, 0.02, 0.04, 0.08]},
        },
        "closed_form_demo": {
            "kind": "closed_form", "name": "steady state at T = 0.5",
            "base": {"transmission": 0.5, "gamma_tau": 0.1, "phi": 0.0},
            "n_fill": 20,
        },
    }


PRESETS = _presets()


def preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})")
    return scenario_from_dict(PRESETS[name])


# ---------------------------------------------------------------------------
# tables and results
# ---------------------------------------------------------------------------

@dataclass
class Table:
    """Column headers carry units, e.g. ``offset [Hz]``."""

    name: str
    columns: list[str]
    rows: list[Sequence[Any]]

    def write(self, directory: Path) -> Path:
        path = directory / f"{self.name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_cell(v) for v in row])
        return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _clean(v.real), "im": _clean(v.imag)}
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, analysis.FitResult):
        return _clean(v.to_dict())
    return v


def _series_tables(series: gem.EchoSeries, norm: str, prefix: str = "") -> list[Table]:
    if not series.windows:
        return [Table(prefix + "echoes", ["window [1]", "t_start [s]", "t_end [s]", "kind",
                                          "energy [arb]", "normalized [1]"], [])]
    echoes = series.echoes()
    normed = dict(zip((w.index for w in echoes), protocol.normalize(series, norm)))
    stored = series.stored_excitation()
    rows = [(w.index, w.t_start, w.t_end, w.kind, w.energy, normed.get(w.index, math.nan),
             stored[i] if i < len(stored) else math.nan)
            for i, w in enumerate(series.windows)]
    out = [Table(prefix + "echoes", ["window [1]", "t_start [s]", "t_end [s]", "kind",
                                     "energy [arb]", "normalized [1]",
                                     "stored_excitation [arb]"], rows)]
    if series.t is not None:
        out.append(Table(prefix + "trace", ["t [s]", "output_amplitude [arb]",
                                            "input_amplitude [arb]", "coherence_norm [arb]"],
                         list(zip(series.t, np.abs(series.e_out), np.abs(series.e_in),
                                  series.coherence))))
    return out


def _sweep_rows(sweep: protocol.SweepResult, keys: Sequence[str]) -> list:
    rows = []
    for p in sweep.points:
        rows.append([p.value] + [p.summary.get(k) if p.summary.get(k) is not None else math.nan
                                 for k in keys] + [p.error])
    return rows


_SWEEP_UNITS = {"period": "s", "kappa": "rad/s", "beta": "1", "power": "arb",
                "gamma_s": "1/s", "delta": "rad/s", "carrier_offset": "Hz"}
_SUMMARY_UNITS = {"fsr": "Hz", "fsr_err": "Hz", "expected_fsr": "Hz", "linewidth": "Hz",
                  "linewidth_err": "Hz", "F": "1", "equilibrium_echo": "arb",
                  "equilibrium_over_first": "1", "first_echo": "arb", "lifetime": "s",
                  "lifetime_err": "s", "min_transmission": "1", "dip_width": "Hz"}


def result_tables(res: protocol.ScenarioResult) -> list[Table]:
    s = res.scenario
    tables: list[Table] = []
    if s.kind == "closed_form":
        cf = res.closed_form
        tables.append(Table("airy", ["phi [rad]", "intensity [arb]"],
                            list(zip(cf["phi"], cf["airy"]))))
        seq = cf["sequence"]
        tables.append(Table("recursion", ["n [1]", "re [arb]", "im [arb]", "abs [arb]"],
                            [(i + 1, z.real, z.imag, abs(z)) for i, z in enumerate(seq)]))
        return tables
    if res.sweep is not None:
        sw = res.sweep
        keys = sorted({k for p in sw.points for k in p.summary if k in _SUMMARY_UNITS})
        unit = _SWEEP_UNITS.get(sw.path, "arb")
        tables.append(Table(f"{s.kind}_vs_{sw.path.replace('.', '_')}",
                            [f"{sw.path} [{unit}]"] + [f"{k} [{_SUMMARY_UNITS[k]}]" for k in keys]
                            + ["error"], _sweep_rows(sw, keys)))
        spectra = [(p.value, p.scan) for p in sw.points if p.scan is not None]
        if spectra:
            tables.append(Table("spectra", [f"{sw.path} [{unit}]", "offset [Hz]",
                                            "amplitude [arb]", "energy [arb]"],
                                [(v, o, a, e) for v, sc in spectra
                                 for o, a, e in zip(sc.offsets, sc.amplitudes, sc.energies)]))
        for p in sw.points:
            if p.series is not None and p.series.windows:
                e = p.series.echo_energies()
                tables.append(Table(f"echoes_{len(tables)}", ["echo [1]", "energy [arb]",
                                                              "normalized [1]"],
                                    list(zip(range(1, e.size + 1), e,
                                             protocol.normalize(p.series, s.normalization)))))
        return tables
    if s.kind in ("accumulate", "ringdown"):
        return _series_tables(res.series[0], s.normalization)
    if s.kind == "spectrum":
        sc = res.scan
        cols = ["offset [Hz]", "amplitude [arb]", "energy [arb]"]
        rows = list(zip(sc.offsets, sc.amplitudes, sc.energies))
        fit = res.fits.get("airy")
        if fit is not None and fit.converged:
            model = np.sqrt(np.clip(analysis.model_from_fit(fit)(sc.offsets), 0, None))
            cols.append("airy_fit_amplitude [arb]")
            rows = [r + (m,) for r, m in zip(rows, model)]
        return [Table("spectrum", cols, rows)]
    if s.kind == "absorption":
        return [Table("absorption", ["offset [Hz]", "transmission [1]"],
                      list(zip(s.offsets, res.absorption)))]
    return tables


def results_document(res: protocol.ScenarioResult) -> dict:
    s = res.scenario
    doc: dict[str, Any] = {
        "kind": s.kind, "name": s.name, "tool_version": __version__,
        "units": {"time": "s", "frequency": "Hz", "energy": "arb (|E|^2 * s)",
                  "phase": "rad", "rates": "rad/s (kappa, eta0, delta), 1/s (gamma_s)"},
        "summary": res.summary, "fits": {k: v for k, v in res.fits.items()},
        "plan": res.plan.to_dict(),
    }
    if s.kind == "closed_form":
        cf = res.closed_form
        doc["closed_form"] = {k: cf[k] for k in ("steady_state", "transmitted", "error")
                              if k in cf}
        doc["closed_form"]["sequence"] = cf["sequence"]
    if res.sweep is not None:
        doc["sweep"] = {"path": res.sweep.path, "values": res.sweep.values,
                        "points": [{"value": p.value, "summary": p.summary, "fit": p.fit,
                                    "error": p.error} for p in res.sweep.points]}
    return _clean(doc)


@dataclass
class RunManifest:
    scenario_path: Optional[str]
    output_dir: str
    seed: int
    config: dict
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {"manifest_version": MANIFEST_VERSION, "scenario_path": self.scenario_path,
                "output_dir": self.output_dir, "seed": self.seed,
                "tool_version": self.tool_version, "timestamp": self.timestamp,
                "outputs": list(self.outputs), "config": self.config}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d.get("scenario_path"), d["output_dir"], int(d.get("seed", 0)),
                   d["config"], list(d.get("outputs", [])), d.get("tool_version", __version__),
                   d.get("timestamp", ""))

    def scenario(self) -> Scenario:
        return scenario_from_dict(self.config)


def _dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run(manifest: RunManifest, workers: int = 1) -> tuple[protocol.ScenarioResult, RunManifest]:
    """Execute the manifest's scenario and write results, tables and manifest."""
    s = manifest.scenario()
    res = protocol.run_scenario(s, workers=workers)
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _dump(out / "results.json", results_document(res))
    written.append("results.json")
    for t in result_tables(res):
        written.append(t.write(out).name)
    manifest.outputs = written + ["manifest.json"]
    manifest.config = scenario_to_dict(s)
    manifest.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    _dump(out / "manifest.json", manifest.to_dict())
    return res, manifest


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

_KIND_OF = {"accumulate": "accumulate", "ringdown": "ringdown", "spectrum": "spectrum",
            "fsr-sweep": "fsr_sweep", "linewidth-sweep": "linewidth_sweep",
            "absorption": "absorption"}
_DEFAULT_PRESET = {"accumulate": "paper_fig2b", "ringdown": "paper_fig2c",
                   "spectrum": "paper_fig3a", "fsr-sweep": "paper_fig3b",
                   "linewidth-sweep": "paper_fig3d", "absorption": "paper_fig3c"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinwave", description="Atomic spinwave resonator toolkit")
    ap.add_argument("--version", action="version", version=f"spinwave {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("model", help="closed-form steady state and transmission")
    g = m.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=float)
    g.add_argument("--transmission", type=float)
    m.add_argument("--gamma-tau", type=float, default=0.0)
    m.add_argument("--phi", type=float, default=0.0)
    m.add_argument("--a0", type=float, default=1.0)
    m.add_argument("--steps", type=int, default=0, help="also print S_1..S_n")

    for name in _KIND_OF:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="scenario YAML/JSON or a manifest.json to replay")
        src.add_argument("--preset", help=f"shipped preset (default {_DEFAULT_PRESET[name]})")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, help="noise seed")
        p.add_argument("--noise", type=float, help="relative amplitude noise on spectra")
        p.add_argument("--beta", type=float, help="override base beta")
        p.add_argument("--period", type=float, help="override pulse period [s]")
        p.add_argument("--count", type=int, help="override number of input pulses")
        p.add_argument("--n-z", type=int, help="override grid size")

    f = sub.add_parser("fit", help="fit a model to a CSV table")
    f.add_argument("model", choices=["airy", "exponential", "peaks"])
    f.add_argument("csv")
    f.add_argument("--x", help="x column header (default: first column)")
    f.add_argument("--y", help="y column header (default: second column)")
    f.add_argument("--domain", choices=["amplitude", "intensity"],
                   help="default: amplitude if the y header says so")
    f.add_argument("--envelope", action="store_true", help="Gaussian envelope (airy)")
    f.add_argument("--carrier", type=float, help="carrier [Hz] for Q/finesse (airy)")

    pr = sub.add_parser("presets", help="list presets or show one")
    pr.add_argument("name", nargs="?")
    return ap


def _output_dir(arg: Optional[str], command: str) -> str:
    if arg:
        return arg
    return str(Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)) / command)


def _overrides(doc: dict, a: argparse.Namespace) -> dict:
    base = dict(doc.get("base") or {})
    if a.beta is not None:
        base.pop("kappa", None)
        base["beta"] = a.beta
    if a.period is not None:
        base.pop("half_period", None)
        base["period"] = a.period
    if a.count is not None:
        base["count"] = a.count
    if a.n_z is not None:
        base["n_z"] = a.n_z
    doc = dict(doc, base=base)
    if a.seed is not None:
        doc["seed"] = a.seed
    if a.noise is not None:
        doc["noise"] = a.noise
    return doc


def _cmd_model(a: argparse.Namespace) -> int:
    beta = a.beta if a.beta is not None else cavity.beta_from_transmission(a.transmission)
    p = ResonatorParams(beta=beta, gamma=a.gamma_tau, tau=1.0, phi=a.phi, a0=a.a0)
    s = cavity.steady_state(p)
    at = cavity.transmitted_amplitude(s, p)
    print(f"T      = {p.transmission:.6g}")
    print(f"R      = {p.coupling:.6g}")
    print(f"S_inf  = {s.value.real:.6g} {s.value.imag:+.6g}j   |S_inf| = {abs(s.value):.6g}")
    print(f"A_t    = {at.real:.6g} {at.imag:+.6g}j   |A_t| = {abs(at):.6g}")
    for i, z in enumerate(cavity.recursion_sequence(p, a.steps), start=1):
        print(f"S_{i:<4d} = {z.real:.6g} {z.imag:+.6g}j")
    return EXIT_OK


def _cmd_scenario(a: argparse.Namespace) -> int:
    kind = _KIND_OF[a.command]
    if a.config:
        raw = yaml.safe_load(Path(a.config).read_text()) if Path(a.config).exists() else None
        if raw is None:
            raise ScenarioError(f"scenario file not found or empty: {a.config}")
        if isinstance(raw, dict) and "manifest_version" in raw:
            raw = raw["config"]
        src = a.config
    else:
        name = a.preset or _DEFAULT_PRESET[a.command]
        if name not in PRESETS:
            raise ScenarioError(f"unknown preset '{name}'")
        raw, src = PRESETS[name], f"preset:{name}"
    doc = _overrides(raw, a)
    if doc.get("kind") != kind:
        raise ScenarioError(f"'kind' is {doc.get('kind')!r} but the command runs {kind!r}")
    s = scenario_from_dict(doc)
    man = RunManifest(src, _output_dir(a.out, a.command), s.seed, scenario_to_dict(s))
    res, man = run(man, workers=a.workers)
    _report(res, man)
    return EXIT_OK


def _report(res: protocol.ScenarioResult, man: RunManifest) -> None:
    if res.sweep is not None:
        for p in res.sweep.points:
            vals = ", ".join(f"{k}={v:.6g}" for k, v in p.summary.items()
                             if isinstance(v, (float, int)) and not isinstance(v, bool))
            print(f"{res.sweep.path}={p.value:.6g}: {vals}" + (f"  [{p.error}]" if p.error else ""))
    elif res.series:
        ser = res.series[0]
        if ser.windows:
            print("echo  energy[arb]  normalized")
            for i, (e, n) in enumerate(zip(ser.echo_energies(),
                                           protocol.normalize(ser, res.scenario.normalization)), 1):
                print(f"{i:4d}  {e:.6e}  {n:.4f}")
    for k, v in res.summary.items():
        print(f"{k}: {v}")
    for name, fit in res.fits.items():
        print(f"fit {name}: " + ", ".join(f"{k}={v:.6g} +/- {fit.err(k):.2g}"
                                           for k, v in fit.params.items()))
    print(f"wrote {len(man.outputs)} files to {man.output_dir}")


def _read_columns(path: str, xname: Optional[str], yname: Optional[str]):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ScenarioError(f"{path}: no data rows")
    head = rows[0]
    ix = head.index(xname) if xname else 0
    iy = head.index(yname) if yname else 1
    data = np.array([[float(r[ix]), float(r[iy])] for r in rows[1:] if r], dtype=float)
    return head[ix], head[iy], data[:, 0], data[:, 1]


def _cmd_fit(a: argparse.Namespace) -> int:
    try:
        xh, yh, x, y = _read_columns(a.csv, a.x, a.y)
    except ValueError as exc:
        raise ScenarioError(f"{a.csv}: {exc}") from exc
    if a.model == "exponential":
        fit = analysis.fit_exponential(x, y)
    elif a.model == "peaks":
        fit = analysis.peak_spacing_fsr(x, y)
    else:
        domain = a.domain or ("amplitude" if "amplitude" in yh else "intensity")
        fit = analysis.fit_airy(x, y, envelope_on=a.envelope, domain=domain)
    doc = {"fit": fit}
    if a.model == "airy" and a.carrier and fit.converged:
        doc["figures"] = analysis.q_and_finesse(fit, a.carrier).__dict__
    print(json.dumps(_clean(doc), indent=2, sort_keys=True))
    return EXIT_OK if fit.converged else EXIT_FIT


def _cmd_presets(a: argparse.Namespace) -> int:
    if a.name:
        if a.name not in PRESETS:
            raise ScenarioError(f"unknown preset '{a.name}'")
        print(yaml.safe_dump(PRESETS[a.name], sort_keys=False), end="")
    else:
        for name, doc in PRESETS.items():
            print(f"{name:18s} {doc['kind']:16s} {doc.get('name', '')}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    a = _parser().parse_args(argv)
    handlers = {"model": _cmd_model, "fit": _cmd_fit, "presets": _cmd_presets}
    handler = handlers.get(a.command, _cmd_scenario)
    try:
        return handler(a)
    except (ScenarioError, gem.ConfigurationError, cavity.DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except analysis.FitValidationError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (cavity.NonConvergenceError, ArithmeticError, FloatingPointError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
