"""Power-dependence and strain analysis for acoustically driven emitters.

A deformation-potential coupling makes the modulation depth scale with the
strain amplitude, which for a linear piezoelectric transducer grows as the
square root of the applied RF power: delta_e = s * sqrt(P_mW).  A Stark-type
coupling would instead scale linearly in P.  This module fits both laws,
reports which one the data prefers, measures the log-log exponent, detects
the onset of saturation (plateauing of delta_e at high drive), and converts
between strain and emitter energy shift.

Powers are handled in dBm at the interface and milliwatts internally,
P_mW = 10^(dBm/10).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import as_1d_float, check_nonnegative, check_positive
from .report import FitReport, Parameter, digest_arrays

DEFAULT_D_COUPLING = 30.0  # meV per % strain; a conservative lower bound for
                           # strained WSe2 emitters, always user-overridable


def dbm_to_mw(p_dbm) -> np.ndarray | float:
    """P_mW = 10^(dBm/10)."""
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw) -> np.ndarray | float:
    p_mw = np.asarray(p_mw, dtype=float)
    if np.any(p_mw <= 0):
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(p_mw)


@dataclass(frozen=True)
class PowerSweepPoint:
    """One sweep sample: applied power (dBm), fitted delta_e (meV) with its
    standard error, and optionally the drive frequency used (Hz)."""

    p_dbm: float
    delta_e: float
    delta_e_err: float = 0.0
    f_drive: float = 0.0

    def __post_init__(self):
        check_nonnegative(self.delta_e, "delta_e")
        check_nonnegative(self.delta_e_err, "delta_e_err")

    @property
    def p_mw(self) -> float:
        return float(dbm_to_mw(self.p_dbm))


def _arrays(points):
    points = list(points)
    if not points:
        raise ValueError("no sweep points")
    p_mw = np.array([pt.p_mw for pt in points])
    y = np.array([pt.delta_e for pt in points])
    err = np.array([pt.delta_e_err for pt in points])
    w = 1.0 / err ** 2 if np.all(err > 0) else np.ones_like(y)
    return p_mw, y, err, w


def _wls_through_origin(x, y, w):
    """Weighted least squares for y = s*x; returns (s, ssr, sum_wx2)."""
    sxx = float(np.sum(w * x * x))
    if sxx <= 0:
        raise ValueError("degenerate sweep: all powers are zero")
    s = float(np.sum(w * x * y)) / sxx
    r = y - s * x
    return s, float(np.sum(w * r * r)), sxx


def loglog_exponent(points) -> tuple[float, float]:
    """Slope of log(delta_e) vs log(P_mW) with its standard error.

    Requires strictly positive delta_e and power.  An exponent near 0.5
    indicates strain (sqrt-P) coupling; near 1.0, a linear-in-power effect.
    """
    p_mw, y, _, _ = _arrays(points)
    if np.any(y <= 0):
        raise ValueError("loglog_exponent requires all delta_e > 0")
    if len(y) < 3:
        raise ValueError("need at least 3 points")
    lx, ly = np.log(p_mw), np.log(y)
    x_c = lx - lx.mean()
    sxx = float(np.sum(x_c ** 2))
    if sxx == 0:
        raise ValueError("all powers identical; exponent undefined")
    slope = float(np.sum(x_c * ly)) / sxx
    resid = ly - (ly.mean() + slope * x_c)
    dof = max(len(y) - 2, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx))
    return slope, stderr


def detect_saturation(points, min_improvement: float = 0.20) -> float | None:
    """Breakpoint (dBm) where delta_e stops following sqrt(P), or None.

    Fits delta_e = s * sqrt(min(P, P_b)) (sqrt rise, then plateau) with the
    breakpoint scanned over the observed powers and refined continuously.
    The plateau model, costing one extra parameter, is accepted only when it
    cuts the summed squared residuals of the pure sqrt law by at least
    min_improvement (default 20 percent).  Pure sqrt data that already fits
    to numerical zero returns None; constant data returns the lowest power
    (fully degenerate plateau).  The breakpoint never lies outside the
    observed power range.
    """
    points = sorted(points, key=lambda pt: pt.p_dbm)
    if len(points) < 5:
        return None
    p_mw, y, _, w = _arrays(points)

    _, ssr_pure, _ = _wls_through_origin(np.sqrt(p_mw), y, w)
    scale = float(np.sum(w * y * y))
    if ssr_pure <= 1e-18 * max(scale, 1e-300):
        return None

    def ssr_at(pb):
        x = np.sqrt(np.minimum(p_mw, pb))
        try:
            return _wls_through_origin(x, y, w)[1]
        except ValueError:
            return np.inf

    cand = np.unique(p_mw)
    ssrs = np.array([ssr_at(pb) for pb in cand])
    k = int(np.argmin(ssrs))
    best_pb, best_ssr = float(cand[k]), float(ssrs[k])
    lo = cand[k - 1] if k > 0 else cand[0]
    hi = cand[k + 1] if k + 1 < len(cand) else cand[-1]
    if hi > lo:
        res = minimize_scalar(ssr_at, bounds=(lo, hi), method="bounded")
        if res.fun < best_ssr:
            best_pb, best_ssr = float(res.x), float(res.fun)

    if best_ssr > (1.0 - min_improvement) * ssr_pure:
        return None
    best_pb = float(np.clip(best_pb, p_mw.min(), p_mw.max()))
    return float(mw_to_dbm(best_pb))


class SqrtPowerFitter(BaseEstimator):
    """Weighted fit of delta_e against sqrt(P) with a linear-in-P alternative.

    Both one-parameter laws (delta_e = s sqrt(P_mW) and delta_e = c P_mW) are
    solved in closed form with inverse-variance weights when errors are given
    (unit weights otherwise); the smaller weighted SSR wins.  saturation_cut
    restricts the fit to powers at or below a cut: 'auto' runs
    detect_saturation, None uses everything, a number is a cut in dBm.
    """

    def __init__(self, saturation_cut="auto", min_improvement: float = 0.20):
        self.saturation_cut = saturation_cut
        self.min_improvement = min_improvement

    def fit(self, X, y, sample_err=None):
        """X: powers in dBm; y: delta_e in meV; sample_err: optional errors."""
        p_dbm = as_1d_float(X, "X")
        delta_e = as_1d_float(y, "y")
        if len(p_dbm) != len(delta_e):
            raise ValueError("X and y must have the same length")
        err = (np.zeros_like(delta_e) if sample_err is None
               else as_1d_float(sample_err, "sample_err"))
        if len(err) != len(delta_e):
            raise ValueError("sample_err must match y")
        points = [PowerSweepPoint(p, d, e)
                  for p, d, e in zip(p_dbm, delta_e, err)]

        if self.saturation_cut == "auto":
            cut = detect_saturation(points, self.min_improvement)
        elif self.saturation_cut is None:
            cut = None
        else:
            cut = float(self.saturation_cut)
        used = [pt for pt in points
                if cut is None or pt.p_dbm <= cut + 1e-9]
        if len(used) < 3:
            raise ValueError(f"need at least 3 points below the saturation cut, "
                             f"got {len(used)}")

        p_mw, yy, ee, w = _arrays(used)
        unit_weights = not np.all(ee > 0)
        s, ssr_sqrt, sxx_s = _wls_through_origin(np.sqrt(p_mw), yy, w)
        c, ssr_lin, sxx_c = _wls_through_origin(p_mw, yy, w)
        dof = max(len(yy) - 1, 1)
        if unit_weights:
            s_err = float(np.sqrt(ssr_sqrt / dof / sxx_s))
            c_err = float(np.sqrt(ssr_lin / dof / sxx_c))
        else:
            s_err = float(np.sqrt(1.0 / sxx_s))
            c_err = float(np.sqrt(1.0 / sxx_c))

        sqrt_wins = ssr_sqrt <= ssr_lin
        warn_list = []
        if not sqrt_wins:
            warn_list.append("not deformation-potential-like: linear power "
                             "scaling fits better than sqrt(P)")

        self.slope_ = s
        self.slope_stderr_ = s_err
        self.linear_coeff_ = c
        self.linear_coeff_stderr_ = c_err
        self.preferred_ = "sqrt_power" if sqrt_wins else "linear_power"
        self.saturation_cut_dbm_ = cut
        self.n_used_ = len(used)
        self.report_ = FitReport(
            model_name=f"delta_e_{self.preferred_}",
            parameters=[
                Parameter("slope", s, s_err, "meV/sqrt(mW)"),
                Parameter("linear_coeff", c, c_err, "meV/mW"),
            ],
            residual_norm=float(np.sqrt(ssr_sqrt if sqrt_wins else ssr_lin)),
            n_points=len(used), converged=True, warnings=warn_list,
            input_digest=digest_arrays(p_dbm, delta_e, err),
            config_snapshot={
                "sweep.saturation_cut_dbm": "none" if cut is None else cut,
                "sweep.min_improvement": self.min_improvement,
                "sweep.ssr_sqrt": ssr_sqrt,
                "sweep.ssr_linear": ssr_lin,
                "sweep.weighting": "unit" if unit_weights else "inverse_variance",
                "sweep.n_points_total": len(points),
            })
        return self

    def predict(self, X) -> np.ndarray:
        """delta_e of the preferred law at powers X (dBm), without plateau."""
        if not hasattr(self, "preferred_"):
            raise NotFittedError("SqrtPowerFitter.predict called before fit")
        p_mw = dbm_to_mw(as_1d_float(X, "X"))
        if self.preferred_ == "sqrt_power":
            return self.slope_ * np.sqrt(p_mw)
        return self.linear_coeff_ * p_mw


def fit_sqrtp(points, saturation_cut="auto", **options) -> FitReport:
    """Functional front end to SqrtPowerFitter; returns the FitReport."""
    points = list(points)
    est = SqrtPowerFitter(saturation_cut=saturation_cut, **options)
    err = np.array([pt.delta_e_err for pt in points]) if points else None
    est.fit([pt.p_dbm for pt in points], [pt.delta_e for pt in points],
            sample_err=err)
    return est.report_


@dataclass(frozen=True)
class StrainModel:
    """Linear deformation-potential model with an optional strain reference.

    d_coupling converts strain (%) to energy shift (meV); strain_ref and
    p_ref_dbm anchor the sqrt(P) extrapolation of strain_at_power.
    """

    d_coupling: float = DEFAULT_D_COUPLING
    strain_ref: float | None = None
    p_ref_dbm: float | None = None

    def __post_init__(self):
        check_positive(self.d_coupling, "d_coupling")
        if self.strain_ref is not None:
            check_nonnegative(self.strain_ref, "strain_ref")


def strain_to_shift(model: StrainModel, strain: float) -> float:
    """Energy shift (meV) of a strain amplitude (%): shift = D * strain."""
    check_nonnegative(strain, "strain")
    return model.d_coupling * strain


def shift_to_strain(model: StrainModel, shift: float) -> float:
    """Exact inverse of strain_to_shift."""
    check_nonnegative(shift, "shift")
    return shift / model.d_coupling


def strain_at_power(model: StrainModel, p_dbm: float) -> float:
    """Strain (%) at drive power p_dbm from the model's reference point.

    Linear piezoelectric response: amplitude scales as sqrt(power), so
    strain = strain_ref * sqrt(P_mW / P_ref_mW).
    """
    if model.strain_ref is None or model.p_ref_dbm is None:
        raise ValueError("strain_at_power needs strain_ref and p_ref_dbm")
    ratio = dbm_to_mw(p_dbm) / dbm_to_mw(model.p_ref_dbm)
    return model.strain_ref * float(np.sqrt(ratio))
