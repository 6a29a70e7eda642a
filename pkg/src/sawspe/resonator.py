"""One-port acoustic resonator reflection: model, synthesis, dip search, fitting.

The reflection coefficient of a single mode probed through one port is

    S11(f) = [ (qe - qi)/qe + 2j qi (f - f_n)/f ]
             / [ (qe + qi)/qe + 2j qi (f - f_n)/f ]

with intrinsic quality factor qi (material and radiation losses) and extrinsic
quality factor qe (coupling to the measurement port).  On resonance the
reflection is real, S11(f_n) = (qe - qi)/(qe + qi): an undercoupled mode
(qe > qi) keeps most of the incident power, a critically coupled one (qe = qi)
nulls completely, and an overcoupled one flips the phase.  The detuning enters
as (f - f_n)/f; some conventions use (f - f_n)/f_n instead, which differs by
O(1/q) far below fit tolerances for q above ~1e3, but the convention here is
fixed so that fitted parameters are reproducible.

A spectrum containing several modes of the same cavity is modeled as the
product of the single-mode reflections, optionally times a slowly varying
complex affine background.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import (
    as_1d_complex,
    as_1d_float,
    check_nonnegative,
    check_positive,
    check_same_length,
    check_strictly_increasing,
)
from .errors import ConvergenceError
from .report import FitReport, Parameter, digest_arrays

LN10 = np.log(10.0)


@dataclass(frozen=True)
class ResonatorMode:
    """A single cavity mode: resonance frequency (Hz) and quality factors."""

    f_n: float
    q_i: float
    q_e: float

    def __post_init__(self):
        check_positive(self.f_n, "f_n")
        check_positive(self.q_i, "q_i")
        check_positive(self.q_e, "q_e")

    @property
    def q_loaded(self) -> float:
        """Loaded quality factor, 1/q_l = 1/q_i + 1/q_e."""
        return 1.0 / (1.0 / self.q_i + 1.0 / self.q_e)

    @property
    def linewidth(self) -> float:
        """Loaded full linewidth f_n / q_l in Hz."""
        return self.f_n / self.q_loaded


@dataclass(frozen=True)
class MirrorBand:
    """Frequency stop band of the acoustic mirrors (Hz)."""

    f_low: float
    f_high: float

    def __post_init__(self):
        check_positive(self.f_low, "f_low")
        check_positive(self.f_high, "f_high")
        if self.f_low >= self.f_high:
            raise ValueError("f_low must be below f_high")

    def contains(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return (f >= self.f_low) & (f <= self.f_high)


@dataclass(frozen=True)
class CavityGeometry:
    """Planar cavity geometry: spacing d and mirror width w in um, mirror
    reflectivity per strip r_s as a fraction (0.004 for 0.4 %).

    d = 0 is allowed (mirrors back to back); w and r_s must be positive.
    """

    d: float
    w: float
    r_s: float

    def __post_init__(self):
        check_nonnegative(self.d, "d")
        check_positive(self.w, "w")
        check_positive(self.r_s, "r_s")
        if self.r_s >= 1.0:
            raise ValueError("r_s is a fraction and must be below 1")


def cavity_length(geometry: CavityGeometry) -> float:
    """Effective cavity length L = d + 2 L_m in um, with L_m = w / r_s.

    L_m is the mirror penetration depth in the weak-reflector limit, where the
    wave penetrates of order 1/r_s strips of width w before being fully
    reflected.  Penetration-depth conventions differ between authors by O(1)
    prefactors; this function implements the plain w / r_s estimate.
    """
    return geometry.d + 2.0 * geometry.w / geometry.r_s


@dataclass
class S11Spectrum:
    """A sampled one-port reflection trace: frequencies (Hz) and complex S11."""

    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.frequencies = as_1d_float(self.frequencies, "frequencies")
        self.values = as_1d_complex(self.values, "values")
        check_same_length(self.frequencies, self.values, "frequencies", "values")
        check_strictly_increasing(self.frequencies, "frequencies")
        if len(self.frequencies) < 2:
            raise ValueError("spectrum needs at least 2 points")
        if self.frequencies[0] <= 0:
            raise ValueError("frequencies must be positive")

    def __len__(self) -> int:
        return len(self.frequencies)


def s11_model(f, mode: ResonatorMode) -> np.ndarray:
    """Complex S11 of a single mode evaluated at frequencies f (Hz)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequencies must be positive")
    detuning = (f - mode.f_n) / f
    num = (mode.q_e - mode.q_i) / mode.q_e + 2j * mode.q_i * detuning
    den = (mode.q_e + mode.q_i) / mode.q_e + 2j * mode.q_i * detuning
    return num / den


def _s11_product(f: np.ndarray, modes) -> np.ndarray:
    out = np.ones(len(f), dtype=complex)
    for mode in modes:
        out *= s11_model(f, mode)
    return out


def synthesize_s11(modes, grid, noise_sigma: float = 0.0, seed=None) -> S11Spectrum:
    """Product of single-mode reflections on a frequency grid, plus optional
    complex Gaussian noise of standard deviation noise_sigma per quadrature.

    An empty mode list gives the unit (all-ones) spectrum.  Two modes sharing
    the same resonance frequency are allowed but warned about, since a fit to
    the result is degenerate.
    """
    grid = as_1d_float(grid, "grid")
    check_strictly_increasing(grid, "grid")
    if np.any(grid <= 0):
        raise ValueError("grid frequencies must be positive")
    modes = list(modes)
    f_ns = [m.f_n for m in modes]
    if len(set(f_ns)) != len(f_ns):
        warnings.warn("synthesize_s11: multiple modes share a resonance frequency; "
                      "the combined dip is degenerate for fitting", UserWarning)
    values = _s11_product(grid, modes)
    if noise_sigma:
        check_positive(noise_sigma, "noise_sigma")
        rng = np.random.default_rng(seed)
        re, im = rng.standard_normal((2, len(grid)))
        values = values + noise_sigma * (re + 1j * im)
    return S11Spectrum(grid, values)


def find_dips(spectrum: S11Spectrum, prominence: float = 0.05) -> list[ResonatorMode]:
    """Detect reflection dips in |S11| and seed ResonatorMode guesses.

    Dips are minima of |S11| with at least the given prominence (in magnitude
    units, where the off-resonance level is ~1).  The loaded q is seeded from
    the dip's full width at half prominence; the split into q_i and q_e
    assumes an undercoupled dip, q_i = 2 q_l / (1 + s0) and
    q_e = 2 q_l / (1 - s0) with s0 = |S11| at the dip.  The sign ambiguity of
    s0 (under vs over coupled dips look identical in magnitude) is resolved by
    the complex fit afterwards.
    """
    mag = np.abs(spectrum.values)
    peaks, props = find_peaks(-mag, prominence=prominence)
    if len(peaks) == 0:
        return []
    widths, _, left_ips, right_ips = peak_widths(-mag, peaks, rel_height=0.5)
    idx = np.arange(len(mag), dtype=float)
    modes = []
    for k, p in enumerate(peaks):
        f_n = float(spectrum.frequencies[p])
        f_left = float(np.interp(left_ips[k], idx, spectrum.frequencies))
        f_right = float(np.interp(right_ips[k], idx, spectrum.frequencies))
        width = max(f_right - f_left, np.finfo(float).tiny)
        q_l = f_n / width
        s0 = min(float(mag[p]), 0.99)
        q_i = 2.0 * q_l / (1.0 + s0)
        q_e = 2.0 * q_l / (1.0 - s0)
        modes.append(ResonatorMode(f_n, q_i, q_e))
    return modes


def classify_coupling(mode: ResonatorMode, tol: float = 1e-3) -> str:
    """'undercoupled', 'critically_coupled', or 'overcoupled' from the qs.

    Critical means |q_e - q_i| <= tol * (q_e + q_i), so the label is invariant
    under a common rescaling of both quality factors.
    """
    check_positive(tol, "tol")
    if abs(mode.q_e - mode.q_i) <= tol * (mode.q_e + mode.q_i):
        return "critically_coupled"
    return "undercoupled" if mode.q_e > mode.q_i else "overcoupled"


class S11ModeFitter(BaseEstimator):
    """Least-squares fit of one or more reflection modes to a complex S11 trace.

    Fits all modes jointly (product model) on the union of per-mode windows of
    +/- window_linewidths loaded linewidths around each starting frequency;
    joint fitting matters because neighboring windows overlap for closely
    spaced modes.  Residuals stack real and imaginary parts.  Quality factors
    are optimized in log10 space to keep them positive and well scaled;
    standard errors come from the Jacobian via the usual (J^T J)^-1 covariance
    scaled by the residual variance.

    Parameters
    ----------
    window_linewidths : half-width of each fit window in loaded linewidths.
    background : if True, multiply the model by a complex affine background
        a + b (f - f_mid)/span with 4 free real parameters.
    dip_prominence : prominence passed to the automatic dip seeding when no
        initial modes are supplied.
    param_tol : relative parameter tolerance (optimizer xtol).
    max_iter : iteration cap; exceeding it raises ConvergenceError with the
        last iterate attached.
    min_improvement : a mode is flagged "no resonance" when the full fit does
        not beat the same fit with that mode removed by this fraction of the
        summed squared residuals inside the mode's window.
    """

    def __init__(self, window_linewidths: float = 5.0, background: bool = False,
                 dip_prominence: float = 0.05, param_tol: float = 1e-8,
                 max_iter: int = 200, min_improvement: float = 0.5):
        self.window_linewidths = window_linewidths
        self.background = background
        self.dip_prominence = dip_prominence
        self.param_tol = param_tol
        self.max_iter = max_iter
        self.min_improvement = min_improvement

    # model evaluation over arbitrary frequencies, given packed parameters
    def _eval(self, f, params, n_modes, f_mid, f_span):
        out = np.ones(len(f), dtype=complex)
        for i in range(n_modes):
            f_n, lqi, lqe = params[3 * i:3 * i + 3]
            out *= s11_model(f, ResonatorMode(f_n, 10.0 ** lqi, 10.0 ** lqe))
        if self.background:
            a_re, a_im, b_re, b_im = params[3 * n_modes:3 * n_modes + 4]
            x = (f - f_mid) / f_span
            out *= (a_re + 1j * a_im) + (b_re + 1j * b_im) * x
        return out

    def fit(self, X, y, initial=None):
        """Fit to frequencies X (Hz) and complex reflection values y.

        initial: optional list of ResonatorMode starting points; when omitted,
        dips are detected automatically.  Sets modes_, stderrs_, flags_,
        report_, and (with background=True) background_.
        """
        f = as_1d_float(X, "X")
        check_strictly_increasing(f, "X")
        s11 = as_1d_complex(y, "y")
        check_same_length(f, s11, "X", "y")

        check_positive(self.window_linewidths, "window_linewidths")
        check_positive(self.param_tol, "param_tol")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

        digest = digest_arrays(f, s11)
        snapshot = {f"s11.{k}": v for k, v in self.get_params().items()}

        if initial is None:
            initial = find_dips(S11Spectrum(f, s11), prominence=self.dip_prominence)
        initial = list(initial)

        if not initial:
            self.modes_, self.stderrs_, self.flags_ = [], [], []
            self.background_ = None
            self.report_ = FitReport(
                model_name="s11_reflection", parameters=[],
                residual_norm=0.0, n_points=0, converged=False,
                warnings=["no resonance found"], input_digest=digest,
                config_snapshot=snapshot)
            return self

        for m, mode in enumerate(initial):
            if not (f[0] <= mode.f_n <= f[-1]):
                raise ValueError(f"initial f_n for mode {m} ({mode.f_n} Hz) lies "
                                 "outside the spectrum's frequency range")

        n_modes = len(initial)
        half_widths = [self.window_linewidths * m.linewidth for m in initial]
        win_masks = [np.abs(f - m.f_n) <= hw for m, hw in zip(initial, half_widths)]
        mask = np.logical_or.reduce(win_masks)
        n_params = 3 * n_modes + (4 if self.background else 0)
        if int(mask.sum()) < n_params + 1:
            raise ValueError("fit windows contain too few points "
                             f"({int(mask.sum())}) for {n_params} parameters")

        f_w, s_w = f[mask], s11[mask]
        f_mid = 0.5 * (f[0] + f[-1])
        f_span = max(f[-1] - f[0], np.finfo(float).tiny)

        p0, lo, hi = [], [], []
        for m, hw in zip(initial, half_widths):
            p0 += [m.f_n, np.log10(m.q_i), np.log10(m.q_e)]
            lo += [max(m.f_n - hw, f[0]), 0.0, 0.0]
            hi += [min(m.f_n + hw, f[-1]), 9.0, 9.0]
        if self.background:
            p0 += [1.0, 0.0, 0.0, 0.0]
            lo += [-np.inf] * 4
            hi += [np.inf] * 4

        def residuals(p):
            r = self._eval(f_w, p, n_modes, f_mid, f_span) - s_w
            return np.concatenate([r.real, r.imag])

        result = least_squares(
            residuals, np.asarray(p0), bounds=(np.asarray(lo), np.asarray(hi)),
            method="trf", x_scale="jac", xtol=self.param_tol, ftol=None, gtol=None,
            max_nfev=self.max_iter + 1)

        fitted = [ResonatorMode(result.x[3 * i],
                                10.0 ** result.x[3 * i + 1],
                                10.0 ** result.x[3 * i + 2])
                  for i in range(n_modes)]

        if result.status == 0:
            raise ConvergenceError(
                f"S11 fit hit the iteration cap ({self.max_iter}) before reaching "
                f"xtol={self.param_tol}", last_estimate=fitted)

        # covariance of the packed parameters, then delta method for the qs
        residual = residuals(result.x)
        ssr = float(residual @ residual)
        dof = max(len(residual) - n_params, 1)
        jtj = result.jac.T @ result.jac
        cov = np.linalg.pinv(jtj) * (ssr / dof)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))

        stderrs = []
        for i in range(n_modes):
            sf = float(sig[3 * i])
            sqi = float(fitted[i].q_i * LN10 * sig[3 * i + 1])
            sqe = float(fitted[i].q_e * LN10 * sig[3 * i + 2])
            stderrs.append((sf, sqi, sqe))

        # per-window quality gate: dropping a real mode must hurt the fit in
        # its window; a constant baseline would false-flag nothing here, but
        # it false-PASSES a spurious mode whenever a neighbor's tail puts a
        # smooth trend across the window, so compare leave-one-out instead
        model_w = self._eval(f_w, result.x, n_modes, f_mid, f_span)
        flags, warn_list = [], []
        for m, wm in enumerate(win_masks):
            sub = wm[mask]
            data = s_w[sub]
            ssr_fit = float(np.sum(np.abs(data - model_w[sub]) ** 2))
            parts = [result.x[3 * i:3 * i + 3] for i in range(n_modes) if i != m]
            if self.background:
                parts.append(result.x[3 * n_modes:3 * n_modes + 4])
            p_wo = np.concatenate(parts) if parts else np.empty(0)
            model_wo = self._eval(f_w[sub], p_wo, n_modes - 1, f_mid, f_span)
            ssr_wo = float(np.sum(np.abs(data - model_wo) ** 2))
            floor = len(data) * (1e-8 * max(1.0, float(np.abs(data).max()))) ** 2
            flat = ssr_wo <= floor
            weak = (not flat) and (ssr_fit > (1.0 - self.min_improvement) * ssr_wo)
            flagged = flat or weak
            flags.append(flagged)
            if flagged:
                warn_list.append(f"mode{m}: no resonance found in window")

        params = []
        for i, (mode, err) in enumerate(zip(fitted, stderrs)):
            params.append(Parameter(f"mode{i}.f_n", mode.f_n, err[0], "Hz"))
            params.append(Parameter(f"mode{i}.q_i", mode.q_i, err[1], ""))
            params.append(Parameter(f"mode{i}.q_e", mode.q_e, err[2], ""))
        model_name = "s11_reflection"
        background = None
        if self.background:
            a_re, a_im, b_re, b_im = result.x[3 * n_modes:3 * n_modes + 4]
            background = (complex(a_re, a_im), complex(b_re, b_im))
            for nm, v, s in [("background.a_re", a_re, sig[3 * n_modes]),
                             ("background.a_im", a_im, sig[3 * n_modes + 1]),
                             ("background.b_re", b_re, sig[3 * n_modes + 2]),
                             ("background.b_im", b_im, sig[3 * n_modes + 3])]:
                params.append(Parameter(nm, float(v), float(s), ""))
            model_name = "s11_reflection_with_background"

        converged = not all(flags)
        if not converged:
            warn_list.append("no resonance found")

        self.modes_ = fitted
        self.stderrs_ = stderrs
        self.flags_ = flags
        self.background_ = background
        self._fit_context_ = (n_modes, f_mid, f_span, result.x)
        self.report_ = FitReport(
            model_name=model_name, parameters=params,
            residual_norm=float(np.sqrt(ssr)), n_points=len(residual) // 2,
            converged=converged, warnings=warn_list, input_digest=digest,
            config_snapshot=snapshot)
        return self

    def predict(self, X) -> np.ndarray:
        """Fitted complex S11 at frequencies X (Hz)."""
        if not hasattr(self, "modes_"):
            raise NotFittedError("S11ModeFitter.predict called before fit")
        f = as_1d_float(X, "X")
        if not hasattr(self, "_fit_context_"):
            return np.ones(len(f), dtype=complex)
        n_modes, f_mid, f_span, x = self._fit_context_
        return self._eval(f, x, n_modes, f_mid, f_span)


def fit_s11(spectrum: S11Spectrum, initial=None, **options) -> FitReport:
    """Functional front end to S11ModeFitter; returns the FitReport."""
    est = S11ModeFitter(**options)
    est.fit(spectrum.frequencies, spectrum.values, initial=initial)
    return est.report_
