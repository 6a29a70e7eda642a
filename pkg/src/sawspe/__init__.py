"""Simulation and fitting toolkit for surface-acoustic-wave cavity
optomechanics with single-photon emitters: one-port resonator reflection,
acoustically modulated PL lineshapes, stroboscopic photon statistics,
correlation analysis, and power/strain calibration."""

from .config import DEFAULTS, RunConfig
from .emitter import (
    FineStructureDoublet,
    MixingAssessment,
    ModulatedEmitter,
    ModulatedLineshapeFitter,
    PLSpectrum,
    classify_mixing,
    doublet_spectrum,
    fit_modulated_lineshape,
    fit_pl_map,
    instantaneous_lineshape,
    recenter_frames,
    time_averaged_spectrum,
)
from .errors import (
    ConvergenceError,
    DataFormatError,
    FitError,
    GridSpanWarning,
    NoDecayError,
    NoPeakError,
    NormalizationWarning,
)
from .io import (
    NM_MEV,
    emit_curve,
    emit_report,
    parse_histogram_csv,
    parse_pl_map,
    parse_s11_any,
    parse_s11_csv,
    parse_spectrum_csv,
    parse_strobe_histogram,
    parse_sweep_csv,
    parse_timetags,
    parse_touchstone,
    write_histogram_csv,
    write_pl_map,
    write_s11_csv,
    write_spectrum_csv,
    write_strobe_histogram,
    write_sweep_csv,
    write_timetags,
    write_touchstone,
)
from .photonstats import (
    CorrelationHistogram,
    G2Fitter,
    LifetimeFitter,
    PhotonRecord,
    channel_times,
    correlate,
    fit_g2,
    fit_lifetime,
    pulsed_g2,
)
from .report import FitReport, Parameter, digest_arrays, digest_file
from .resonator import (
    CavityGeometry,
    MirrorBand,
    ResonatorMode,
    S11ModeFitter,
    S11Spectrum,
    cavity_length,
    classify_coupling,
    find_dips,
    fit_s11,
    s11_model,
    synthesize_s11,
)
from .strobe import (
    BandpassFilter,
    HarmonicReport,
    StrobeFitter,
    StrobeHistogram,
    StrobeSimConfig,
    analytic_count_rate,
    fit_strobe,
    harmonic_analysis,
    simulate_photon_stream,
)
from .sweep import (
    PowerSweepPoint,
    SqrtPowerFitter,
    StrainModel,
    dbm_to_mw,
    detect_saturation,
    fit_sqrtp,
    loglog_exponent,
    mw_to_dbm,
    shift_to_strain,
    strain_at_power,
    strain_to_shift,
)

__version__ = "0.1.0"

__all__ = [
    "BandpassFilter",
    "CavityGeometry",
    "ConvergenceError",
    "CorrelationHistogram",
    "DEFAULTS",
    "DataFormatError",
    "FineStructureDoublet",
    "FitError",
    "FitReport",
    "G2Fitter",
    "GridSpanWarning",
    "HarmonicReport",
    "LifetimeFitter",
    "MirrorBand",
    "MixingAssessment",
    "ModulatedEmitter",
    "NM_MEV",
    "ModulatedLineshapeFitter",
    "NoDecayError",
    "NoPeakError",
    "NormalizationWarning",
    "PLSpectrum",
    "Parameter",
    "PhotonRecord",
    "PowerSweepPoint",
    "ResonatorMode",
    "RunConfig",
    "S11ModeFitter",
    "S11Spectrum",
    "SqrtPowerFitter",
    "StrainModel",
    "StrobeFitter",
    "StrobeHistogram",
    "StrobeSimConfig",
    "analytic_count_rate",
    "cavity_length",
    "channel_times",
    "classify_coupling",
    "classify_mixing",
    "correlate",
    "dbm_to_mw",
    "detect_saturation",
    "digest_arrays",
    "digest_file",
    "doublet_spectrum",
    "emit_curve",
    "emit_report",
    "find_dips",
    "fit_g2",
    "fit_lifetime",
    "fit_modulated_lineshape",
    "fit_pl_map",
    "fit_s11",
    "fit_sqrtp",
    "fit_strobe",
    "harmonic_analysis",
    "instantaneous_lineshape",
    "loglog_exponent",
    "mw_to_dbm",
    "parse_histogram_csv",
    "parse_pl_map",
    "parse_s11_any",
    "parse_s11_csv",
    "parse_spectrum_csv",
    "parse_strobe_histogram",
    "parse_sweep_csv",
    "parse_timetags",
    "parse_touchstone",
    "pulsed_g2",
    "recenter_frames",
    "s11_model",
    "shift_to_strain",
    "simulate_photon_stream",
    "strain_at_power",
    "strain_to_shift",
    "synthesize_s11",
    "time_averaged_spectrum",
    "write_histogram_csv",
    "write_pl_map",
    "write_s11_csv",
    "write_spectrum_csv",
    "write_strobe_histogram",
    "write_sweep_csv",
    "write_timetags",
    "write_touchstone",
    "__version__",
]
