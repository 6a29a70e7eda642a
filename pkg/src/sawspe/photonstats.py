"""Photon correlation statistics: g2(tau) histograms, antibunching fits,
pulsed-peak ratios, and lifetime extraction.

Timestamps are integer picoseconds on small integer channel ids.  The
correlator histograms all pair delays t_b - t_a within a window (no
start-stop conditioning), normalizes by the uncorrelated-rate expectation
r_a * r_b * T * bin_width, and cross-checks that normalization against the
far wings of the histogram.  For a continuous-wave single emitter the
normalized histogram dips below 1 around zero delay and is fit by

    g2(tau) = 1 - (1 - g2_0) * exp(-|tau| / tau0)

with g2_0 < 0.5 the usual single-emitter verdict.  Pulsed data is handled
separately by comparing pulse-peak areas (pulsed_g2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import as_1d_float, check_positive
from .errors import NoDecayError, NormalizationWarning
from .report import FitReport, Parameter, digest_arrays


@dataclass(frozen=True)
class PhotonRecord:
    """One detection: channel id and arrival time in integer picoseconds."""

    channel: int
    time: int

    def __post_init__(self):
        if self.channel < 0:
            raise ValueError("channel must be >= 0")
        if self.time < 0:
            raise ValueError("time must be >= 0 ps")


def channel_times(records, channel: int) -> np.ndarray:
    """Sorted float64 arrival times (ps) of one channel."""
    t = np.array([r.time for r in records if r.channel == channel], dtype=float)
    t.sort(kind="stable")
    return t


@dataclass
class CorrelationHistogram:
    """Pair-delay histogram with its uncorrelated normalization.

    tau_edges are in ps, symmetric about zero.  normalization is the expected
    counts per bin for uncorrelated streams; g2 = counts / normalization.
    wing_level is the mean normalized level of the outer 20 percent of the
    window, a self-test of the normalization (1 for uncorrelated wings).
    """

    tau_edges: np.ndarray
    counts: np.ndarray
    normalization: float
    n_a: int
    n_b: int
    t_total_ps: float
    wing_level: float | None = None

    def __post_init__(self):
        self.tau_edges = as_1d_float(self.tau_edges, "tau_edges")
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or len(counts) != len(self.tau_edges) - 1:
            raise ValueError("counts must have len(tau_edges) - 1 entries")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        self.counts = counts.astype(np.int64)
        check_positive(self.normalization, "normalization")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.tau_edges[:-1] + self.tau_edges[1:])

    @property
    def g2(self) -> np.ndarray:
        return self.counts / self.normalization


def correlate(records, channel_a: int, channel_b: int, window_ps: float,
              bin_width_ps: float) -> CorrelationHistogram:
    """Histogram all delays t_b - t_a with |delay| < window_ps.

    The window is rounded to a whole number of bins (m = round(window/bin)).
    Binning is mirror-symmetric: positive-delay bins are half-open
    [k w, (k+1) w) and negative-delay bins are their exact mirrors
    (-(k+1) w, -k w], so correlate(a, b) at +tau equals correlate(b, a) at
    -tau bin-exactly even when integer-ps delays land on bin edges.  For
    channel_a == channel_b the trivial self-pairs at zero delay are removed.
    Emits NormalizationWarning when the far wings deviate from the
    rate-product expectation by more than 10 percent.
    """
    check_positive(window_ps, "window_ps")
    check_positive(bin_width_ps, "bin_width_ps")
    if window_ps <= bin_width_ps:
        raise ValueError("window_ps must exceed bin_width_ps")
    m = int(round(window_ps / bin_width_ps))
    if m < 1:
        raise ValueError("window_ps must cover at least one bin")
    a = channel_times(records, channel_a)
    b = channel_times(records, channel_b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError(f"no records on channel {channel_a if len(a) == 0 else channel_b}")
    all_min = min(a[0], b[0])
    all_max = max(a[-1], b[-1])
    t_total = float(all_max - all_min)
    if t_total <= 0:
        raise ValueError("all timestamps coincide; zero observation span")

    w = float(bin_width_ps)
    half = m * w
    counts = np.zeros(2 * m, dtype=np.int64)
    block = 1 << 16
    for i0 in range(0, len(a), block):
        aa = a[i0:i0 + block]
        lo = np.searchsorted(b, aa - half, side="right")
        hi = np.searchsorted(b, aa + half, side="left")
        reps = hi - lo
        total = int(reps.sum())
        if total == 0:
            continue
        cum = np.cumsum(reps)
        pos = np.arange(total) - np.repeat(cum - reps, reps)
        deltas = b[pos + np.repeat(lo, reps)] - np.repeat(aa, reps)
        neg = deltas < 0
        idx = np.empty(total, dtype=np.int64)
        idx[~neg] = m + np.floor(deltas[~neg] / w).astype(np.int64)
        idx[neg] = m - 1 - np.floor(-deltas[neg] / w).astype(np.int64)
        np.clip(idx, 0, 2 * m - 1, out=idx)
        counts += np.bincount(idx, minlength=2 * m)
    if channel_a == channel_b:
        counts[m] -= len(a)  # self-pairs sit in the first positive bin

    rate_a = len(a) / t_total
    rate_b = len(b) / t_total
    norm = rate_a * rate_b * t_total * w
    edges = (np.arange(-m, m + 1)) * w

    wing_level = None
    centers = 0.5 * (edges[:-1] + edges[1:])
    wing = np.abs(centers) > 0.8 * half
    if wing.sum() >= 4:
        wing_level = float(counts[wing].mean() / norm)
        if abs(wing_level - 1.0) > 0.10:
            warnings.warn(
                f"far-wing level {wing_level:.3f} deviates from the rate-product "
                "normalization by more than 10 percent", NormalizationWarning)

    return CorrelationHistogram(edges, counts, norm, len(a), len(b), t_total,
                                wing_level)


class G2Fitter(BaseEstimator):
    """Fit the continuous-wave antibunching model to a normalized histogram.

    Model: g2(tau) = 1 - (1 - g2_0) exp(-|tau|/tau0), baseline pinned at 1
    because the input is already rate-normalized.  fit takes delay centers
    (ps) and normalized g2 values.  single_emitter_ reports g2_0 < 0.5.
    """

    def __init__(self, param_tol: float = 1e-8, max_iter: int = 200):
        self.param_tol = param_tol
        self.max_iter = max_iter

    @staticmethod
    def _model(tau, g2_0, tau0):
        return 1.0 - (1.0 - g2_0) * np.exp(-np.abs(tau) / tau0)

    def fit(self, X, y):
        tau = as_1d_float(X, "X")
        g2 = as_1d_float(y, "y")
        if len(tau) != len(g2):
            raise ValueError("X and y must have the same length")
        if len(tau) < 5:
            raise ValueError("need at least 5 bins to fit g2")
        check_positive(self.param_tol, "param_tol")

        half = float(np.abs(tau).max())
        central = g2[np.argsort(np.abs(tau))[:3]]
        g2_00 = float(np.clip(central.mean(), 0.0, 1.5))
        recover = 1.0 - (1.0 - g2_00) / np.e
        above = np.abs(tau)[g2 >= recover]
        tau00 = float(above.min()) if len(above) else half / 10.0
        tau00 = min(max(tau00, np.median(np.diff(np.sort(tau)))), half)

        def residuals(p):
            return self._model(tau, p[0], p[1]) - g2

        res = least_squares(residuals, np.array([g2_00, tau00]),
                            bounds=(np.array([0.0, 1e-6 * half]),
                                    np.array([2.0, 100.0 * half])),
                            method="trf", x_scale="jac", xtol=self.param_tol,
                            ftol=None, gtol=None, max_nfev=self.max_iter + 1)
        r = residuals(res.x)
        ssr = float(r @ r)
        dof = max(len(g2) - 2, 1)
        cov = np.linalg.pinv(res.jac.T @ res.jac) * (ssr / dof)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))

        warn_list = []
        if res.status == 0:
            warn_list.append(f"iteration cap ({self.max_iter}) reached")
        if 2.0 * half < 5.0 * res.x[1]:
            warn_list.append("window spans less than 5 fitted recovery times")
        if res.x[0] >= 0.5:
            warn_list.append("g2(0) >= 0.5: not a single emitter")

        self.g2_zero_ = float(res.x[0])
        self.tau0_ = float(res.x[1])
        self.single_emitter_ = bool(res.x[0] < 0.5)
        self.report_ = FitReport(
            model_name="antibunching_dip",
            parameters=[
                Parameter("g2_zero", self.g2_zero_, float(sig[0]), ""),
                Parameter("tau0", self.tau0_, float(sig[1]), "ps"),
            ],
            residual_norm=float(np.sqrt(ssr)), n_points=len(g2),
            converged=res.status != 0, warnings=warn_list,
            input_digest=digest_arrays(tau, g2),
            config_snapshot={"g2.param_tol": self.param_tol,
                             "g2.max_iter": self.max_iter,
                             "g2.single_emitter": self.single_emitter_})
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "g2_zero_"):
            raise NotFittedError("G2Fitter.predict called before fit")
        return self._model(as_1d_float(X, "X"), self.g2_zero_, self.tau0_)


def fit_g2(histogram: CorrelationHistogram, **options) -> FitReport:
    """Fit the antibunching model to a correlation histogram's g2 values."""
    est = G2Fitter(**options)
    est.fit(histogram.centers, histogram.g2)
    report = est.report_
    if histogram.wing_level is not None:
        report.config_snapshot["g2.wing_level"] = histogram.wing_level
    return report


def pulsed_g2(histogram: CorrelationHistogram, rep_period_ps: float):
    """Pulsed-mode g2(0): center-peak area over the mean side-peak area.

    Integrates counts in windows of one repetition period around each
    expected peak position k * rep_period_ps inside the histogram window.
    Returns (g2_value, poisson_stderr).  Needs at least two side peaks.
    """
    check_positive(rep_period_ps, "rep_period_ps")
    centers = histogram.centers
    half = float(np.abs(histogram.tau_edges).max())
    k_max = int(np.floor((half - 0.5 * rep_period_ps) / rep_period_ps))
    if k_max < 1:
        raise ValueError("window too short: no side peaks inside it")
    areas = {}
    for k in range(-k_max, k_max + 1):
        sel = np.abs(centers - k * rep_period_ps) < 0.5 * rep_period_ps
        areas[k] = float(histogram.counts[sel].sum())
    side = np.array([areas[k] for k in areas if k != 0])
    if side.sum() <= 0:
        raise ValueError("side peaks are empty; cannot normalize")
    center = areas[0]
    mean_side = side.mean()
    value = center / mean_side
    rel = np.sqrt(1.0 / max(center, 1.0) + 1.0 / side.sum())
    return value, value * rel if center > 0 else mean_side ** -0.5


class LifetimeFitter(BaseEstimator):
    """Exponential tail fit to an arrival-time histogram.

    Fits counts(t) = A exp(-(t - t_start)/tau) + B starting tail_offset bins
    after the histogram peak, which skips the instrument-response rise.  The
    spec of the decay requires at least min_tail_bins bins past the peak;
    flat or background-only histograms raise NoDecayError.
    """

    def __init__(self, tail_offset: int = 2, min_tail_bins: int = 10,
                 param_tol: float = 1e-8, max_iter: int = 200):
        self.tail_offset = tail_offset
        self.min_tail_bins = min_tail_bins
        self.param_tol = param_tol
        self.max_iter = max_iter

    def fit(self, X, y):
        """X: bin centers (ps, increasing); y: counts."""
        t = as_1d_float(X, "X")
        counts = as_1d_float(y, "y")
        if len(t) != len(counts):
            raise ValueError("X and y must have the same length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if self.tail_offset < 0:
            raise ValueError("tail_offset must be >= 0")

        peak = int(np.argmax(counts))
        peak_level = float(counts[peak])
        # significance first: a histogram whose peak does not clear the
        # background floor has no decay to fit, wherever argmax landed
        floor = float(np.median(np.sort(counts)[: max(3, len(counts) // 4)]))
        if np.ptp(counts) <= 0 or peak_level - floor < 5.0 * np.sqrt(floor + 1.0):
            raise NoDecayError("no decay detected above background")
        if len(counts) - peak - 1 < self.min_tail_bins:
            raise ValueError(
                f"need at least {self.min_tail_bins} bins past the peak, "
                f"got {len(counts) - peak - 1}")
        start = peak + self.tail_offset
        tt, cc = t[start:], counts[start:]
        if len(cc) < 4:
            raise ValueError("tail too short after the start offset")

        n_bg = max(3, len(cc) // 10)
        bg0 = float(cc[-n_bg:].mean())
        if np.ptp(cc) <= 0 or peak_level - bg0 < 5.0 * np.sqrt(bg0 + 1.0):
            raise NoDecayError("no decay detected above background")

        excess = np.clip(cc - bg0, 1e-12, None)
        head = slice(0, max(len(cc) // 2, 2))
        slope = np.polyfit(tt[head], np.log(excess[head]), 1)[0]
        tau0 = -1.0 / slope if slope < 0 else (tt[-1] - tt[0]) / 5.0
        tau0 = float(np.clip(tau0, (tt[1] - tt[0]) * 0.1, (tt[-1] - tt[0]) * 100))
        a0 = max(float(cc[0] - bg0), 1e-12)
        t0 = float(tt[0])

        def residuals(p):
            return p[0] * np.exp(-(tt - t0) / p[1]) + p[2] - cc

        res = least_squares(residuals, np.array([a0, tau0, max(bg0, 0.0)]),
                            bounds=(np.array([0.0, 1e-300, 0.0]),
                                    np.array([np.inf, np.inf, np.inf])),
                            method="trf", x_scale="jac", xtol=self.param_tol,
                            ftol=None, gtol=None, max_nfev=self.max_iter + 1)
        r = residuals(res.x)
        ssr = float(r @ r)
        dof = max(len(cc) - 3, 1)
        cov = np.linalg.pinv(res.jac.T @ res.jac) * (ssr / dof)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))

        warn_list = []
        if res.status == 0:
            warn_list.append(f"iteration cap ({self.max_iter}) reached")

        self.amplitude_ = float(res.x[0])
        self.tau_ = float(res.x[1])
        self.background_ = float(res.x[2])
        self.t_start_ = t0
        self.report_ = FitReport(
            model_name="exponential_tail",
            parameters=[
                Parameter("amplitude", self.amplitude_, float(sig[0]), "counts"),
                Parameter("tau", self.tau_, float(sig[1]), "ps"),
                Parameter("background", self.background_, float(sig[2]), "counts"),
            ],
            residual_norm=float(np.sqrt(ssr)), n_points=len(cc),
            converged=res.status != 0, warnings=warn_list,
            input_digest=digest_arrays(t, counts),
            config_snapshot={"lifetime.tail_offset": self.tail_offset,
                             "lifetime.min_tail_bins": self.min_tail_bins,
                             "lifetime.param_tol": self.param_tol,
                             "lifetime.max_iter": self.max_iter})
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "tau_"):
            raise NotFittedError("LifetimeFitter.predict called before fit")
        t = as_1d_float(X, "X")
        return (self.amplitude_ * np.exp(-(t - self.t_start_) / self.tau_)
                + self.background_)


def fit_lifetime(bin_centers_ps, counts, **options) -> FitReport:
    """Functional front end to LifetimeFitter; returns the FitReport."""
    est = LifetimeFitter(**options)
    est.fit(bin_centers_ps, counts)
    return est.report_
