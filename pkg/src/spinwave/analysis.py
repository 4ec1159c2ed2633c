"""
Fitting and extraction: ring-down exponentials, low-finesse Airy spectra,
peak-spacing FSR, and cavity figures with propagated uncertainties.

Least squares uses Levenberg-Marquardt (``scipy.optimize.least_squares``
with ``method="lm"``) driven by analytic Jacobians. Parameter uncertainties
are ``sqrt(diag(s**2 * (J^T J)^-1))`` with ``s**2`` the residual variance,
so they come from the scatter of the residuals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, signal

from .cavity import CavityFigures, figures_of_merit

EXPONENTIAL = "exponential"
AIRY = "airy"
PEAK_SPACING = "linear_peak_spacing"


class FitValidationError(ValueError):
    """Data do not satisfy a fit's preconditions (e.g. too few peaks)."""


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict = field(default_factory=dict)
    uncertainties: dict = field(default_factory=dict)
    residual_rms: float = math.nan
    converged: bool = False
    n_points: int = 0
    domain: str = ""
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def err(self, name: str) -> float:
        return self.uncertainties.get(name, math.nan)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {k: _jsonable(v) for k, v in self.params.items()}
        d["uncertainties"] = {k: _jsonable(v) for k, v in self.uncertainties.items()}
        d["residual_rms"] = _jsonable(self.residual_rms)
        return d


def _jsonable(v: float):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _failed(model: str, n: int, message: str, **params) -> FitResult:
    return FitResult(model, dict(params), {k: math.nan for k in params}, math.nan,
                     False, n, message=message)


def _covariance(jac: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """
    Heteroscedasticity-robust (HC3 sandwich) parameter covariance. Relative
    amplitude noise makes the residual variance follow the signal, where the
    pooled ``s^2 (J^T J)^-1`` misstates the errors.
    """
    n, p = jac.shape
    dof = n - p
    if dof <= 0:
        return np.zeros((p, p))
    jtj = jac.T @ jac
    try:
        bread = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        bread = np.linalg.pinv(jtj)
    # HC3: inflate each residual by its leverage
    lev = np.einsum("ij,jk,ik->i", jac, bread, jac)
    w = resid**2 / np.clip(1.0 - lev, 1e-12, None) ** 2
    meat = (jac * w[:, None]).T @ jac
    return bread @ meat @ bread


# ---------------------------------------------------------------------------
# exponential ring-down
# ---------------------------------------------------------------------------

def fit_exponential(t, y) -> FitResult:
    """
    Fit ``y = a * exp(-t / lifetime)``. Returns params ``amplitude`` and
    ``lifetime``; flat or growing data come back non-converged with
    ``lifetime = inf``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    if n < 3 or y.size != n:
        return _failed(EXPONENTIAL, n, "need >= 3 points", amplitude=math.nan, lifetime=math.nan)
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        return _failed(EXPONENTIAL, n, "data must be finite and > 0",
                       amplitude=math.nan, lifetime=math.nan)

    # normalized units keep the normal equations well conditioned
    t0 = t[0]
    ts = float(np.ptp(t)) or 1.0
    ys = float(y.max())
    u = (t - t0) / ts
    v = y / ys
    slope, icpt = np.polyfit(u, np.log(v), 1)
    if not slope < -1e-12:
        return _failed(EXPONENTIAL, n, "no decay: lifetime is infinite",
                       amplitude=float(y.mean()), lifetime=math.inf)

    def resid(p):
        return p[0] * np.exp(-p[1] * u) - v

    def jac(p):
        e = np.exp(-p[1] * u)
        return np.column_stack([e, -p[0] * u * e])

    sol = optimize.least_squares(resid, [math.exp(icpt), -slope], jac=jac, method="lm",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    a_u, k_u = sol.x
    if not (sol.success and k_u > 0 and np.isfinite(sol.x).all()):
        return _failed(EXPONENTIAL, n, f"optimizer failed: {sol.message}",
                       amplitude=math.nan, lifetime=math.nan)
    cov = _covariance(jac(sol.x), sol.fun)
    lifetime = ts / k_u
    amplitude = ys * a_u * math.exp(k_u * t0 / ts)
    # d lifetime / d k = -ts/k^2 ; d amplitude / d(a, k) from the t0 shift
    g_tau = np.array([0.0, -ts / k_u**2])
    g_amp = ys * math.exp(k_u * t0 / ts) * np.array([1.0, a_u * t0 / ts])
    return FitResult(
        EXPONENTIAL,
        {"amplitude": amplitude, "lifetime": lifetime},
        {"amplitude": math.sqrt(max(g_amp @ cov @ g_amp, 0.0)),
         "lifetime": math.sqrt(max(g_tau @ cov @ g_tau, 0.0))},
        float(np.sqrt(np.mean((sol.fun * ys) ** 2))),
        True,
        n,
    )


# ---------------------------------------------------------------------------
# peaks
# ---------------------------------------------------------------------------

def noise_rms(y) -> float:
    """Robust noise estimate from the MAD of second differences (trend removed)."""
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        return 0.0
    d2 = np.diff(y, 2)
    return float(1.4826 * np.median(np.abs(d2 - np.median(d2))) / math.sqrt(6.0))


def detect_peaks(f, y, window: int = 5, prominence_factor: float = 3.0,
                 rel_floor: float = 0.05) -> np.ndarray:
    """
    Indices of local maxima over ``window`` samples whose prominence is at
    least ``prominence_factor`` times the noise RMS (and ``rel_floor`` of the
    data range). Plateaus resolve to their lowest-frequency sample.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(f, kind="stable")
    ys = y[order]
    thresh = max(prominence_factor * noise_rms(ys), rel_floor * float(np.ptp(ys)))
    cand, _ = signal.find_peaks(ys, prominence=thresh if thresh > 0 else None)
    half = window // 2
    keep = []
    for i in cand:
        lo, hi = max(0, i - half), min(ys.size, i + half + 1)
        seg = ys[lo:hi]
        j = lo + int(np.argmax(seg))  # argmax picks the first (lowest f) of ties
        if j == i or ys[j] == ys[i]:
            if not keep or keep[-1] != j:
                keep.append(j)
    return order[np.array(sorted(set(keep)), dtype=int)]


def _refine(f, y, i) -> float:
    """Parabolic sub-sample position of the maximum at sample ``i``."""
    if i <= 0 or i >= len(y) - 1:
        return float(f[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return float(f[i])
    x = 0.5 * (y0 - y2) / den
    h = 0.5 * (f[i + 1] - f[i - 1])
    return float(f[i] + x * h)


def peak_positions(f, y, refine: bool = True, **kw) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(f, kind="stable")
    fs, ys = f[order], y[order]
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    idx = sorted(inv[detect_peaks(f, y, **kw)])
    if refine:
        return np.array([_refine(fs, ys, i) for i in idx])
    return fs[idx]


def peak_spacing_fsr(f, y, refine: bool = True, **kw) -> FitResult:
    """
    Least-squares line through (peak order, peak frequency); the slope is the
    free spectral range. Orders are assigned from the median spacing so a
    missed peak does not shift the index.
    """
    pos = peak_positions(f, y, refine=refine, **kw)
    n = pos.size
    if n < 3:
        raise FitValidationError(f"peak_spacing_fsr needs >= 3 peaks, found {n}")
    spacing = float(np.median(np.diff(pos)))
    k = np.rint((pos - pos[0]) / spacing)
    k -= np.rint(np.median(k))
    a = np.column_stack([k, np.ones_like(k)])
    coef, *_ = np.linalg.lstsq(a, pos, rcond=None)
    resid = a @ coef - pos
    cov = _covariance(a, resid)
    return FitResult(
        PEAK_SPACING,
        {"fsr": float(coef[0]), "center": float(coef[1])},
        {"fsr": float(math.sqrt(max(cov[0, 0], 0.0))),
         "center": float(math.sqrt(max(cov[1, 1], 0.0)))},
        float(np.sqrt(np.mean(resid**2))),
        True,
        n,
    )


# ---------------------------------------------------------------------------
# Airy lineshape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumModel:
    """
    ``I(f) = background + envelope(f) * i0 / (1 + F sin^2(pi (f - center) / fsr))``
    with an optional Gaussian envelope ``exp(-(f - env_center)^2 / (2 env_width^2))``.
    """

    i0: float
    fsr: float
    coefficient_of_finesse: float
    center: float = 0.0
    background: float = 0.0
    env_center: Optional[float] = None
    env_width: Optional[float] = None

    def __call__(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        x = np.pi * (f - self.center) / self.fsr
        out = self.i0 / (1.0 + self.coefficient_of_finesse * np.sin(x) ** 2)
        if self.env_width is not None:
            out = out * np.exp(-((f - self.env_center) ** 2) / (2.0 * self.env_width**2))
        return self.background + out

    @property
    def linewidth(self) -> float:
        return airy_fwhm(self.fsr, self.coefficient_of_finesse)


def airy_fwhm(fsr: float, coefficient: float) -> float:
    """Exact FWHM of the Airy peak, ``(2 fsr/pi) asin(1/sqrt(F))``; NaN for F <= 1."""
    if coefficient <= 1.0:
        return math.nan
    return (2.0 * fsr / math.pi) * math.asin(1.0 / math.sqrt(coefficient))


def _airy_parts(p, u, fixed_fsr, envelope):
    if fixed_fsr is None:
        i0, fsr, cf, c, bg = p[:5]
        rest = p[5:]
    else:
        i0, cf, c, bg = p[:4]
        fsr = fixed_fsr
        rest = p[4:]
    x = np.pi * (u - c) / fsr
    s = np.sin(x)
    d = 1.0 + cf * s * s
    if envelope:
        ec, ew = rest
        env = np.exp(-((u - ec) ** 2) / (2.0 * ew * ew))
    else:
        ec = ew = None
        env = np.ones_like(u)
    return i0, fsr, cf, c, bg, ec, ew, x, s, d, env


def _airy_residual(p, u, v, fixed_fsr, envelope):
    i0, fsr, cf, c, bg, ec, ew, x, s, d, env = _airy_parts(p, u, fixed_fsr, envelope)
    return bg + env * i0 / d - v


def _airy_jacobian(p, u, v, fixed_fsr, envelope):
    i0, fsr, cf, c, bg, ec, ew, x, s, d, env = _airy_parts(p, u, fixed_fsr, envelope)
    s2x = np.sin(2.0 * x)
    a = env * i0 / d
    cols = [env / d]
    if fixed_fsr is None:
        cols.append(env * i0 * cf * s2x * np.pi * (u - c) / (fsr * fsr * d * d))
    cols.append(-env * i0 * s * s / (d * d))
    cols.append(env * i0 * cf * s2x * (np.pi / fsr) / (d * d))
    cols.append(np.ones_like(u))
    if envelope:
        cols.append(a * (u - ec) / (ew * ew))
        cols.append(a * (u - ec) ** 2 / ew**3)
    return np.column_stack(cols)


def _width_at(x, y, i, level) -> Optional[float]:
    """Width of the excursion of ``y`` above ``level`` that contains sample ``i``."""
    lo = i
    while lo > 0 and y[lo] > level:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > level:
        hi += 1
    if y[lo] > level or y[hi] > level:
        return None

    def cross(a, b):
        return x[a] + (level - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    return float(cross(hi - 1, hi) - cross(lo, lo + 1))


def fit_airy(f, y, envelope_on: bool = False, domain: str = "intensity",
             single_peak: bool = False, fsr: Optional[float] = None,
             **peak_kw) -> FitResult:
    """
    Fit the low-finesse Airy lineshape.

    Parameters
    ----------
    f, y : array_like
        Frequencies [Hz] and measured amplitude or intensity.
    envelope_on : bool
        Multiply by a Gaussian envelope (full-bandwidth scans).
    domain : {"intensity", "amplitude"}
        Amplitudes are squared before fitting.
    single_peak : bool
        Central-peak mode: ``fsr`` is held fixed and only the linewidth,
        center, height and background are fitted.
    fsr : float, optional
        Required in single-peak mode.

    Returns ``fsr``, ``linewidth`` (FWHM), ``finesse``, ``F``, ``center``,
    ``i0`` and ``background`` with 1-sigma uncertainties.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    if domain not in ("intensity", "amplitude"):
        raise ValueError(f"domain must be 'intensity' or 'amplitude', got {domain!r}")
    order = np.argsort(f, kind="stable")
    f, y = f[order], y[order]
    v_raw = y**2 if domain == "amplitude" else y
    n = f.size

    peaks = peak_positions(f, v_raw, refine=True, **peak_kw)
    idx = detect_peaks(f, v_raw, **peak_kw)
    if single_peak:
        if fsr is None or not fsr > 0:
            raise FitValidationError("single-peak mode needs a positive fsr")
        if peaks.size < 1:
            raise FitValidationError("single-peak mode needs a visible peak")
    elif peaks.size < 2:
        raise FitValidationError(f"fit_airy needs >= 2 visible peaks, found {peaks.size}")

    ys = float(np.max(np.abs(v_raw))) or 1.0
    v = v_raw / ys
    fsr0 = fsr if single_peak else float(np.median(np.diff(peaks)))
    fscale = fsr0
    u = f / fscale

    i_top = int(idx[np.argmax(v[idx])])
    c0 = _refine(u, v, i_top)
    bg0 = float(v.min())
    w = _width_at(u, v, i_top, bg0 + 0.5 * (v[i_top] - bg0))
    if w is None or not w > 0:
        w = 0.1
    w = min(w, 0.9)
    cf0 = 1.0 / math.sin(0.5 * math.pi * w) ** 2
    i0 = float(v[i_top] - bg0)
    # Airy minimum sits at i0/(1+F) above the background
    bg0 = max(bg0 - i0 / (1.0 + cf0), 0.0) if bg0 >= 0 else bg0
    i0 = float(v[i_top] - bg0)

    fixed = 1.0 if single_peak else None
    p0 = [i0] + ([] if single_peak else [1.0]) + [cf0, c0, bg0]
    if envelope_on:
        heights = v[idx]
        uc = u[idx]
        ec0 = float(np.sum(uc * heights) / np.sum(heights))
        ew0 = max(float(np.ptp(u)) / 2.0, 1.0)
        p0 += [ec0, ew0]

    args = (u, v, fixed, envelope_on)
    try:
        sol = optimize.least_squares(_airy_residual, p0, jac=_airy_jacobian, args=args,
                                     method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                     max_nfev=20000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return _failed(AIRY, n, f"optimizer error: {exc}", fsr=math.nan, linewidth=math.nan)
    p = sol.x
    cov = _covariance(_airy_jacobian(p, *args), sol.fun)

    names = ["i0"] + ([] if single_peak else ["fsr"]) + ["F", "center", "background"]
    if envelope_on:
        names += ["env_center", "env_width"]
    raw = dict(zip(names, p))
    raw_err = {k: math.sqrt(max(cov[i, i], 0.0)) for i, k in enumerate(names)}

    fsr_u = 1.0 if single_peak else raw["fsr"]
    cf = raw["F"]
    # the comb is periodic: report the peak nearest the middle of the scan
    mid_u = 0.5 * (u[0] + u[-1])
    center_u = raw["center"] - fsr_u * round((raw["center"] - mid_u) / fsr_u)
    params = {
        "i0": raw["i0"] * ys,
        "fsr": fsr_u * fscale,
        "F": cf,
        "center": center_u * fscale,
        "background": raw["background"] * ys,
    }
    errs = {
        "i0": raw_err["i0"] * ys,
        "fsr": 0.0 if single_peak else raw_err["fsr"] * fscale,
        "F": raw_err["F"],
        "center": raw_err["center"] * fscale,
        "background": raw_err["background"] * ys,
    }
    if envelope_on:
        params["env_center"] = raw["env_center"] * fscale
        params["env_width"] = abs(raw["env_width"]) * fscale
        errs["env_center"] = raw_err["env_center"] * fscale
        errs["env_width"] = raw_err["env_width"] * fscale

    lw = airy_fwhm(params["fsr"], cf)
    # gradient of the FWHM with respect to (fsr, F) for error propagation
    if math.isfinite(lw):
        dlw_dfsr = lw / params["fsr"]
        dlw_dcf = (2.0 * params["fsr"] / math.pi) * (-0.5 * cf**-1.5) / math.sqrt(1.0 - 1.0 / cf)
        i_f = names.index("F")
        var = dlw_dcf**2 * cov[i_f, i_f]
        if not single_peak:
            i_s = names.index("fsr")
            var += (dlw_dfsr * fscale) ** 2 * cov[i_s, i_s]
            var += 2.0 * dlw_dfsr * fscale * dlw_dcf * cov[i_s, i_f]
        lw_err = math.sqrt(max(var, 0.0))
        fin = params["fsr"] / lw
        fin_err = fin * math.hypot(errs["fsr"] / params["fsr"], lw_err / lw)
    else:
        lw_err = fin = fin_err = math.nan
    params.update(linewidth=lw, finesse=fin)
    errs.update(linewidth=lw_err, finesse=fin_err)

    ok = bool(sol.success and np.all(np.isfinite(p)) and math.isfinite(lw)
              and all(math.isfinite(e) and e >= 0 for e in errs.values()))
    return FitResult(AIRY, params, errs, float(np.sqrt(np.mean((sol.fun * ys) ** 2))),
                     ok, n, domain=domain,
                     message="" if ok else f"fit did not converge: {sol.message}")


def model_from_fit(fit: FitResult) -> SpectrumModel:
    p = fit.params
    return SpectrumModel(p["i0"], p["fsr"], p["F"], p["center"], p["background"],
                         p.get("env_center"), p.get("env_width"))


# ---------------------------------------------------------------------------
# figures of merit
# ---------------------------------------------------------------------------

def q_and_finesse(fit: FitResult, carrier: float,
                  linewidth_fit: Optional[FitResult] = None) -> CavityFigures:
    """
    Cavity figures from a converged fit carrying ``fsr`` and ``linewidth``
    (or ``fsr`` here and ``linewidth`` from ``linewidth_fit``). Relative
    errors of FSR and linewidth add in quadrature.
    """
    if not fit.converged:
        raise FitValidationError("fit did not converge")
    src = linewidth_fit if linewidth_fit is not None else fit
    if not src.converged:
        raise FitValidationError("linewidth fit did not converge")
    if "fsr" not in fit.params or "linewidth" not in src.params:
        raise FitValidationError("fit must provide 'fsr' and 'linewidth'")
    fsr, lw = fit.params["fsr"], src.params["linewidth"]
    s_fsr, s_lw = fit.err("fsr"), src.err("linewidth")
    base = figures_of_merit(fsr, lw, carrier)
    rel_fsr, rel_lw = s_fsr / fsr, s_lw / lw
    return CavityFigures(
        fsr=base.fsr,
        linewidth_fwhm=base.linewidth_fwhm,
        finesse=base.finesse,
        q_factor=base.q_factor,
        equivalent_length=base.equivalent_length,
        carrier=carrier,
        fsr_err=s_fsr,
        linewidth_err=s_lw,
        finesse_err=base.finesse * math.hypot(rel_fsr, rel_lw),
        q_factor_err=base.q_factor * rel_lw,
        equivalent_length_err=base.equivalent_length * rel_fsr,
    )


def measured_fit(model: str, **values: tuple[float, float]) -> FitResult:
    """Wrap externally measured ``name=(value, sigma)`` pairs as a converged FitResult."""
    return FitResult(model, {k: v[0] for k, v in values.items()},
                     {k: v[1] for k, v in values.items()}, 0.0, True, 0)


def dip_width(f, transmission) -> float:
    """Full width [Hz] of a transmission dip at half its depth."""
    f = np.asarray(f, dtype=float)
    tr = np.asarray(transmission, dtype=float)
    order = np.argsort(f)
    f, tr = f[order], tr[order]
    depth = 1.0 - tr
    i = int(np.argmax(depth))
    w = _width_at(f, depth, i, 0.5 * depth[i])
    return math.nan if w is None else w
