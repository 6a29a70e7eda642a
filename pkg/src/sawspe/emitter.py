"""Sinusoidally modulated emitter lineshapes and their steady-state spectra.

An emitter whose transition energy is swept as

    E(t) = omega0 + delta_e * sin(2 pi f_rf t + phase0)

emits, at every instant, a Lorentzian line of half-width gamma centered at
E(t).  A time-integrating spectrometer records the average of that line over
the modulation period.  Because the sweep spends most of its time near the
turning points (the arcsine time-weighting of a sinusoid), the averaged
spectrum develops two peaks near omega0 +/- delta_e; their exact maxima sit
slightly inside the turning points, by gamma/sqrt(3) in the narrow-line
limit, so quoted splittings should come from a fit of the full model rather
than from raw peak positions.

Energies are in meV throughout; f_rf in Hz; time in seconds.
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
    as_1d_float,
    check_nonnegative,
    check_positive,
    check_same_length,
    check_strictly_increasing,
)
from .errors import GridSpanWarning, NoPeakError
from .report import FitReport, Parameter, digest_arrays


@dataclass(frozen=True)
class ModulatedEmitter:
    """Emitter with sinusoidally modulated transition energy.

    omega0 and gamma (Lorentzian half-width at half-maximum) and the
    modulation depth delta_e are in meV; f_rf is the drive frequency in Hz;
    phase0 in radians; amplitude is the instantaneous peak height.
    """

    omega0: float
    gamma: float
    delta_e: float
    f_rf: float
    phase0: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        check_positive(self.gamma, "gamma")
        check_nonnegative(self.delta_e, "delta_e")
        check_positive(self.f_rf, "f_rf")
        check_nonnegative(self.amplitude, "amplitude")

    def center_at(self, t) -> np.ndarray:
        """Instantaneous line center omega0 + delta_e sin(2 pi f_rf t + phase0)."""
        t = np.asarray(t, dtype=float)
        return self.omega0 + self.delta_e * np.sin(
            2.0 * np.pi * self.f_rf * t + self.phase0)


@dataclass
class PLSpectrum:
    """Sampled emission spectrum: energies (meV, increasing) and counts >= 0.

    truncated marks spectra evaluated on a grid that clips the model's
    support (see time_averaged_spectrum).
    """

    energies: np.ndarray
    counts: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        self.energies = as_1d_float(self.energies, "energies")
        self.counts = as_1d_float(self.counts, "counts")
        check_same_length(self.energies, self.counts, "energies", "counts")
        check_strictly_increasing(self.energies, "energies")
        if len(self.energies) < 2:
            raise ValueError("spectrum needs at least 2 points")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    def __len__(self) -> int:
        return len(self.energies)


def instantaneous_lineshape(emitter: ModulatedEmitter, omega, t: float) -> np.ndarray:
    """Lorentzian snapshot at time t evaluated at energies omega (meV)."""
    omega = np.asarray(omega, dtype=float)
    g2 = emitter.gamma ** 2
    return emitter.amplitude * g2 / (g2 + (omega - emitter.center_at(t)) ** 2)


def _period_average(omega0, gamma, delta_e, amplitude, grid, phase_samples, phase0=0.0):
    # rectangle rule over one period; for a periodic analytic integrand the
    # error decays geometrically in phase_samples, so 512 points reach machine
    # precision for any gamma/delta_e ratio of practical interest
    if delta_e == 0.0:
        g2 = gamma ** 2
        return amplitude * g2 / (g2 + (grid - omega0) ** 2)
    theta = 2.0 * np.pi * np.arange(phase_samples) / phase_samples
    shifts = delta_e * np.sin(theta + phase0)
    g2 = gamma ** 2
    out = np.empty(len(grid))
    block = max(1, (1 << 22) // phase_samples)  # cap the temporary at ~32 MB
    for i in range(0, len(grid), block):
        diffs = grid[i:i + block, None] - omega0 - shifts[None, :]
        out[i:i + block] = np.mean(g2 / (g2 + diffs ** 2), axis=1)
    return amplitude * out


def time_averaged_spectrum(emitter: ModulatedEmitter, grid,
                           phase_samples: int = 512) -> PLSpectrum:
    """Average the instantaneous line over one full modulation period.

    The result is independent of phase0 and f_rf (one full period is always
    covered).  The grid should span at least omega0 +/- (delta_e + 10 gamma);
    a shorter grid clips tail weight, triggers GridSpanWarning, and marks the
    returned spectrum truncated.
    """
    grid = as_1d_float(grid, "grid")
    check_strictly_increasing(grid, "grid")
    if phase_samples < 8:
        raise ValueError("phase_samples must be >= 8")
    reach = emitter.delta_e + 10.0 * emitter.gamma
    truncated = bool(grid[0] > emitter.omega0 - reach
                     or grid[-1] < emitter.omega0 + reach)
    if truncated:
        warnings.warn("energy grid clips the modulated line "
                      f"(needs omega0 +/- {reach:g} meV)", GridSpanWarning)
    counts = _period_average(emitter.omega0, emitter.gamma, emitter.delta_e,
                             emitter.amplitude, grid, phase_samples,
                             emitter.phase0)
    return PLSpectrum(grid, counts, truncated=truncated)


@dataclass(frozen=True)
class FineStructureDoublet:
    """Cross-polarized doublet under common sinusoidal modulation.

    center is the doublet midpoint (meV), delta_fss the zero-drive fine
    structure splitting (meV), ratio the V/H amplitude ratio.  Both lines
    share the same modulation depth delta_e, drive frequency, and phase.
    """

    center: float
    delta_fss: float
    gamma_h: float
    gamma_v: float
    delta_e: float
    f_rf: float
    ratio: float = 1.0
    phase0: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        check_nonnegative(self.delta_fss, "delta_fss")
        check_positive(self.gamma_h, "gamma_h")
        check_positive(self.gamma_v, "gamma_v")
        check_nonnegative(self.delta_e, "delta_e")
        check_positive(self.f_rf, "f_rf")
        check_positive(self.ratio, "ratio")
        check_nonnegative(self.amplitude, "amplitude")

    @property
    def line_h(self) -> ModulatedEmitter:
        return ModulatedEmitter(self.center - 0.5 * self.delta_fss, self.gamma_h,
                                self.delta_e, self.f_rf, self.phase0,
                                self.amplitude)

    @property
    def line_v(self) -> ModulatedEmitter:
        return ModulatedEmitter(self.center + 0.5 * self.delta_fss, self.gamma_v,
                                self.delta_e, self.f_rf, self.phase0,
                                self.amplitude * self.ratio)


def doublet_spectrum(doublet: FineStructureDoublet, grid,
                     phase_samples: int = 512) -> PLSpectrum:
    """Time-averaged spectrum of both doublet lines (sum of the two)."""
    h = time_averaged_spectrum(doublet.line_h, grid, phase_samples)
    v = time_averaged_spectrum(doublet.line_v, grid, phase_samples)
    return PLSpectrum(h.energies, h.counts + v.counts,
                      truncated=h.truncated or v.truncated)


@dataclass(frozen=True)
class MixingAssessment:
    """Spectral-overlap verdict for a modulated doublet.

    label is one of 'separated', 'partially_mixed', 'fully_mixed'; inner_gap
    is delta_fss - 2 delta_e (meV), the distance between the inner peaks of
    the two swept lines; overlap is the Cauchy-Schwarz normalized overlap
    integral of two Lorentzians at that gap (1 = coincident).
    """

    label: str
    inner_gap: float
    overlap: float


def classify_mixing(doublet: FineStructureDoublet) -> MixingAssessment:
    """Classify how strongly modulation merges the doublet's inner peaks.

    The inner peaks of the two swept lines approach each other as the
    modulation deepens; their gap is g = delta_fss - 2 delta_e.  With
    mean_gamma = (gamma_h + gamma_v)/2, the label is 'separated' for
    |g| > 3 mean_gamma, 'fully_mixed' for |g| <= mean_gamma, and
    'partially_mixed' in between.  A degenerate doublet (delta_fss = 0) is
    always 'fully_mixed': the two spectra coincide identically whatever the
    modulation does.  The verdict is purely spectral (line positions and
    widths); it says nothing about the coherence of the emission.
    """
    gap = doublet.delta_fss - 2.0 * doublet.delta_e
    gam_sum = doublet.gamma_h + doublet.gamma_v
    overlap = (2.0 * np.sqrt(doublet.gamma_h * doublet.gamma_v) * gam_sum
               / (gap ** 2 + gam_sum ** 2))
    if doublet.delta_fss == 0.0:
        return MixingAssessment("fully_mixed", gap, float(overlap))
    mean_gamma = 0.5 * gam_sum
    if abs(gap) > 3.0 * mean_gamma:
        label = "separated"
    elif abs(gap) <= mean_gamma:
        label = "fully_mixed"
    else:
        label = "partially_mixed"
    return MixingAssessment(label, gap, float(overlap))


def _seed_guess(energies, counts):
    """Peak-based starting values: (omega0, gamma, delta_e, amplitude, bg)."""
    bg = float(counts.min())
    amp = float(counts.max() - bg)
    step = float(np.median(np.diff(energies)))
    peaks, _ = find_peaks(counts, prominence=0.1 * amp)
    if len(peaks) >= 2:
        # two tallest peaks bracket the sweep
        order = np.argsort(counts[peaks])[::-1]
        p1, p2 = sorted(peaks[order[:2]])
        omega0 = 0.5 * (energies[p1] + energies[p2])
        delta_e = 0.5 * (energies[p2] - energies[p1])
        ref = [p1, p2]
    elif len(peaks) == 1:
        omega0 = float(energies[peaks[0]])
        delta_e = 0.0
        ref = [peaks[0]]
    else:
        omega0 = float(energies[np.argmax(counts)])
        return omega0, max(3.0 * step, step), 0.0, amp, bg
    widths = peak_widths(counts, ref, rel_height=0.5)[0]
    gamma = max(0.5 * float(np.mean(widths)) * step, 0.25 * step)
    return float(omega0), gamma, float(delta_e), amp, bg


class ModulatedLineshapeFitter(BaseEstimator):
    """Fit a time-averaged modulated Lorentzian to a measured spectrum.

    Fits both the modulated model (omega0, gamma, delta_e, amplitude,
    background) and a plain Lorentzian (delta_e pinned to 0), then reports
    whichever wins: the modulated model must cut the summed squared residuals
    by at least select_margin and resolve delta_e beyond half a grid step,
    otherwise the simpler model is kept.  The steady-state spectrum carries no
    information about f_rf or phase0, so those are passed through from the
    initial guess (or default to 1 Hz / 0) and get no standard error.

    Parameters: phase_samples for the period average; linear_background adds
    a slope term; select_margin as above; param_tol / max_iter as elsewhere.
    """

    def __init__(self, phase_samples: int = 512, linear_background: bool = False,
                 select_margin: float = 0.05, param_tol: float = 1e-8,
                 max_iter: int = 200):
        self.phase_samples = phase_samples
        self.linear_background = linear_background
        self.select_margin = select_margin
        self.param_tol = param_tol
        self.max_iter = max_iter

    def _model(self, grid, p, modulated):
        if modulated:
            omega0, gamma, delta_e, amp, bg = p[:5]
        else:
            omega0, gamma, amp, bg = p[:4]
            delta_e = 0.0
        y = _period_average(omega0, gamma, delta_e, amp, grid,
                            self.phase_samples) + bg
        if self.linear_background:
            y = y + p[-1] * (grid - grid[len(grid) // 2])
        return y

    def _solve(self, grid, counts, p0, lo, hi, modulated):
        def residuals(p):
            return self._model(grid, p, modulated) - counts
        n_par = len(p0)
        res = least_squares(residuals, np.asarray(p0),
                            bounds=(np.asarray(lo), np.asarray(hi)),
                            method="trf", x_scale="jac", xtol=self.param_tol,
                            ftol=None, gtol=None,
                            max_nfev=self.max_iter + 1)
        r = residuals(res.x)
        return res, float(r @ r)

    def fit(self, X, y, initial: ModulatedEmitter | None = None):
        """Fit energies X (meV) and counts y; sets emitter_, report_, etc."""
        grid = as_1d_float(X, "X")
        check_strictly_increasing(grid, "X")
        counts = as_1d_float(y, "y")
        check_same_length(grid, counts, "X", "y")
        if self.phase_samples < 8:
            raise ValueError("phase_samples must be >= 8")
        check_positive(self.param_tol, "param_tol")

        n_par_mod = 5 + (1 if self.linear_background else 0)
        if len(counts) < n_par_mod + 1:
            raise ValueError(f"need at least {n_par_mod + 1} points to fit")
        if float(np.ptp(counts)) <= 1e-12 * max(1.0, float(np.abs(counts).max())):
            raise NoPeakError("no peak: spectrum is flat")

        step = float(np.median(np.diff(grid)))
        span = float(grid[-1] - grid[0])
        if initial is not None:
            seed = (initial.omega0, initial.gamma, initial.delta_e,
                    initial.amplitude, float(counts.min()))
            f_rf, phase0 = initial.f_rf, initial.phase0
        else:
            seed = _seed_guess(grid, counts)
            f_rf, phase0 = 1.0, 0.0
        omega0_0, gamma_0, delta_e_0, amp_0, bg_0 = seed
        gamma_0 = min(max(gamma_0, 0.05 * step), span)
        amp_0 = max(amp_0, 1e-12)

        bg_bounds = (-np.inf, np.inf)
        slope = [0.0] if self.linear_background else []
        slope_lo = [-np.inf] if self.linear_background else []
        slope_hi = [np.inf] if self.linear_background else []

        p0_mod = [omega0_0, gamma_0, min(delta_e_0, span), amp_0, bg_0] + slope
        lo_mod = [grid[0], 1e-4 * step, 0.0, 0.0, bg_bounds[0]] + slope_lo
        hi_mod = [grid[-1], 2.0 * span, span, np.inf, bg_bounds[1]] + slope_hi
        res_mod, ssr_mod = self._solve(grid, counts, p0_mod, lo_mod, hi_mod, True)

        p0_un = [omega0_0, gamma_0, amp_0, bg_0] + slope
        lo_un = [grid[0], 1e-4 * step, 0.0, bg_bounds[0]] + slope_lo
        hi_un = [grid[-1], 2.0 * span, np.inf, bg_bounds[1]] + slope_hi
        res_un, ssr_un = self._solve(grid, counts, p0_un, lo_un, hi_un, False)

        resolved = res_mod.x[2] > 0.5 * step
        improved = ssr_mod < (1.0 - self.select_margin) * ssr_un
        use_mod = bool(resolved and improved)

        res, ssr = (res_mod, ssr_mod) if use_mod else (res_un, ssr_un)
        n_par = len(res.x)
        dof = max(len(counts) - n_par, 1)
        cov = np.linalg.pinv(res.jac.T @ res.jac) * (ssr / dof)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))

        warn_list = []
        if res_mod.status == 0 or res_un.status == 0:
            warn_list.append(f"iteration cap ({self.max_iter}) reached")

        if use_mod:
            omega0, gamma, delta_e, amp, bg = res.x[:5]
            s_omega0, s_gamma, s_delta_e, s_amp, s_bg = sig[:5]
            model_name = "modulated_lineshape"
        else:
            omega0, gamma, amp, bg = res.x[:4]
            s_omega0, s_gamma, s_amp, s_bg = sig[:4]
            delta_e, s_delta_e = 0.0, 0.0
            model_name = "lorentzian"

        params = [
            Parameter("omega0", float(omega0), float(s_omega0), "meV"),
            Parameter("gamma", float(gamma), float(s_gamma), "meV"),
            Parameter("delta_e", float(delta_e), float(s_delta_e), "meV"),
            Parameter("amplitude", float(amp), float(s_amp), "counts"),
            Parameter("background", float(bg), float(s_bg), "counts"),
        ]
        if self.linear_background:
            params.append(Parameter("background_slope", float(res.x[-1]),
                                    float(sig[-1]), "counts/meV"))

        snapshot = {f"emitter.{k}": v for k, v in self.get_params().items()}
        snapshot["selection.ssr_modulated"] = ssr_mod
        snapshot["selection.ssr_unmodulated"] = ssr_un

        self.emitter_ = ModulatedEmitter(float(omega0), float(gamma),
                                         float(delta_e), f_rf, phase0, float(amp))
        self.background_ = float(bg)
        self.model_name_ = model_name
        self.report_ = FitReport(
            model_name=model_name, parameters=params,
            residual_norm=float(np.sqrt(ssr)), n_points=len(counts),
            converged=res.status != 0, warnings=warn_list,
            input_digest=digest_arrays(grid, counts), config_snapshot=snapshot)
        return self

    def predict(self, X) -> np.ndarray:
        """Fitted spectrum (including background) at energies X (meV)."""
        if not hasattr(self, "emitter_"):
            raise NotFittedError("ModulatedLineshapeFitter.predict called before fit")
        grid = as_1d_float(X, "X")
        e = self.emitter_
        y = _period_average(e.omega0, e.gamma, e.delta_e, e.amplitude, grid,
                            self.phase_samples) + self.background_
        return y


def fit_modulated_lineshape(spectrum: PLSpectrum,
                            initial: ModulatedEmitter | None = None,
                            **options) -> FitReport:
    """Functional front end to ModulatedLineshapeFitter; returns the FitReport."""
    est = ModulatedLineshapeFitter(**options)
    est.fit(spectrum.energies, spectrum.counts, initial=initial)
    return est.report_


def recenter_frames(energies, frames) -> np.ndarray:
    """Align spectral frames (rows) by shifting each intensity centroid onto
    the ensemble median; undoes slow spectral wandering between frames before
    they are stacked.  Shifting resamples each frame by linear interpolation
    (zero fill outside), so it is a display/stacking aid, not physics.
    """
    energies = as_1d_float(energies, "energies")
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    weights = frames - frames.min(axis=1, keepdims=True)
    norm = weights.sum(axis=1)
    norm[norm == 0] = 1.0
    centroids = (weights @ energies) / norm
    target = float(np.median(centroids))
    out = np.empty_like(frames)
    for i, frame in enumerate(frames):
        out[i] = np.interp(energies + (centroids[i] - target), energies, frame,
                           left=frame[0], right=frame[-1])
    return out


def fit_pl_map(energies, drive_frequencies, counts, recenter: bool = False,
               **options) -> list[FitReport]:
    """Fit every column of an energy x drive-frequency map independently.

    counts has shape (n_energies, n_frequencies).  With recenter=True the
    columns are first aligned with recenter_frames (treating columns as
    frames).  Returns one FitReport per drive frequency.
    """
    energies = as_1d_float(energies, "energies")
    drive_frequencies = as_1d_float(drive_frequencies, "drive_frequencies")
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(energies), len(drive_frequencies)):
        raise ValueError("counts must have shape (n_energies, n_frequencies)")
    cols = counts.T
    if recenter:
        cols = recenter_frames(energies, cols)
    reports = []
    for col in cols:
        est = ModulatedLineshapeFitter(**options)
        est.fit(energies, col)
        reports.append(est.report_)
    return reports
