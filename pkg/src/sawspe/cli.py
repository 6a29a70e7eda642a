"""Command-line interface.

One subcommand per workflow step: synthesize or fit reflection spectra,
simulate or fit modulated PL lineshapes, run the stroboscopic Monte Carlo,
correlate photon streams, fit lifetimes, analyze power sweeps, and convert
strain.  Each command reads declared input files, writes a structured fit
report (stdout or --report) and optional CSV curves, and exits 0 on
success, 1 on usage errors, 2 on data or convergence errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as sio
from .config import RunConfig
from .emitter import ModulatedEmitter, ModulatedLineshapeFitter, \
    time_averaged_spectrum
from .errors import DataFormatError, FitError
from .photonstats import G2Fitter, LifetimeFitter, correlate
from .report import FLOAT_FMT
from .resonator import ResonatorMode, S11ModeFitter, synthesize_s11
from .strobe import BandpassFilter, StrobeFitter, StrobeHistogram, \
    StrobeSimConfig, simulate_photon_stream
from .sweep import SqrtPowerFitter, StrainModel, shift_to_strain, \
    strain_at_power, strain_to_shift


def _fmt9(x) -> str:
    return FLOAT_FMT % float(x)


def _load_config(args) -> RunConfig:
    overrides = {}
    for key in ("seed", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return RunConfig.load(path=getattr(args, "config", None),
                          overrides=overrides)


def _write_report(report, args) -> None:
    text = sio.emit_report(report, args.report)
    if args.report is None:
        sys.stdout.write(text)


def _report_exit(report, args) -> int:
    _write_report(report, args)
    return 0 if report.converged else 2


def _csv_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated numbers, got {text!r}")


def _filter_from_args(args, cfg) -> BandpassFilter:
    lo, hi = args.filter_low, args.filter_high
    if args.filter_unit == "nm":
        lo, hi = sio.NM_MEV / lo, sio.NM_MEV / hi
    lo, hi = min(lo, hi), max(lo, hi)
    edge = cfg["strobe.edge_width_mev"] if args.edge_width is None \
        else args.edge_width
    return BandpassFilter(lo, hi, edge_width=edge)


# -------------------------------------------------------------- resonator

def _cmd_fit_s11(args) -> int:
    cfg = _load_config(args)
    spectrum = sio.parse_s11_any(args.input)
    initial = None
    if args.guess:
        freqs = _csv_floats(args.guess, "--guess")
        initial = [ResonatorMode(f, args.qi, args.qe) for f in freqs]
    est = S11ModeFitter(window_linewidths=cfg["s11.window_linewidths"],
                        background=cfg["s11.background"],
                        dip_prominence=cfg["s11.dip_prominence"],
                        param_tol=cfg["fit.param_tol"],
                        max_iter=cfg["fit.max_iter"])
    est.fit(spectrum.frequencies, spectrum.values, initial=initial)
    if args.curve:
        pred = est.predict(spectrum.frequencies)
        sio.emit_curve(args.curve,
                       [spectrum.frequencies, spectrum.values.real,
                        spectrum.values.imag, pred.real, pred.imag,
                        np.abs(pred)],
                       ["freq_hz", "re", "im", "fit_re", "fit_im", "fit_abs"])
    return _report_exit(est.report_, args)


def _cmd_sim_s11(args) -> int:
    cfg = _load_config(args)
    modes = []
    for spec_str in args.mode:
        vals = _csv_floats(spec_str, "--mode")
        if len(vals) != 3:
            raise ValueError(f"--mode expects f_hz,qi,qe, got {spec_str!r}")
        modes.append(ResonatorMode(*vals))
    grid = np.linspace(args.start, args.stop, args.points)
    spectrum = synthesize_s11(modes, grid, noise_sigma=args.noise,
                              seed=cfg["seed"])
    if args.output.lower().endswith(".s1p"):
        sio.write_touchstone(args.output, spectrum)
    else:
        sio.write_s11_csv(args.output, spectrum)
    return 0


# ---------------------------------------------------------------- emitter

def _cmd_sim_spectrum(args) -> int:
    cfg = _load_config(args)
    emitter = ModulatedEmitter(args.omega0, args.gamma, args.delta_e,
                               args.f_rf, amplitude=args.amplitude)
    reach = args.delta_e + 12.0 * args.gamma
    start = args.start if args.start is not None else args.omega0 - reach
    stop = args.stop if args.stop is not None else args.omega0 + reach
    grid = np.linspace(start, stop, args.points)
    spectrum = time_averaged_spectrum(emitter, grid,
                                      phase_samples=cfg["emitter.phase_samples"])
    unit = args.unit or cfg["io.spectrum_unit"]
    sio.write_spectrum_csv(args.output, spectrum, unit=unit)
    return 0


def _cmd_fit_spectrum(args) -> int:
    cfg = _load_config(args)
    spectrum = sio.parse_spectrum_csv(args.input)
    initial = None
    if args.omega0 is not None:
        if args.gamma is None:
            raise ValueError("--omega0 initial guess also needs --gamma")
        initial = ModulatedEmitter(args.omega0, args.gamma,
                                   args.delta_e or 0.0, args.f_rf)
    est = ModulatedLineshapeFitter(phase_samples=cfg["emitter.phase_samples"],
                                   param_tol=cfg["fit.param_tol"],
                                   max_iter=cfg["fit.max_iter"])
    est.fit(spectrum.energies, spectrum.counts, initial=initial)
    if args.curve:
        pred = est.predict(spectrum.energies)
        sio.emit_curve(args.curve,
                       [spectrum.energies, spectrum.counts, pred],
                       ["energy_mev", "counts", "fit"])
    return _report_exit(est.report_, args)


# ----------------------------------------------------------------- strobe

def _cmd_sim_strobe(args) -> int:
    cfg = _load_config(args)
    if args.records is None and args.histogram is None:
        raise ValueError("nothing to write: give --records and/or --histogram")
    emitter = ModulatedEmitter(args.omega0, args.gamma, args.delta_e,
                               args.f_rf)
    passband = _filter_from_args(args, cfg)
    sim = StrobeSimConfig(
        n_pulses=args.n_pulses,
        pulse_period=(args.pulse_period_ps
                      if args.pulse_period_ps is not None
                      else cfg["strobe.pulse_period_ps"]) * 1e-12,
        lifetime=(args.lifetime_ps if args.lifetime_ps is not None
                  else cfg["strobe.lifetime_ps"]) * 1e-12,
        seed=cfg["seed"],
        bins=args.bins if args.bins is not None else cfg["strobe.bins"],
        jitter_sigma=(args.jitter_sigma_ps
                      if args.jitter_sigma_ps is not None
                      else cfg["strobe.jitter_sigma_ps"]) * 1e-12,
        keep_records=args.records is not None,
        chunk_size=cfg["strobe.chunk_size"],
        n_workers=cfg["threads"])
    records, hist = simulate_photon_stream(emitter, passband, sim)
    if args.records is not None:
        sio.write_timetags(args.records, records)
    if args.histogram is not None:
        sio.write_strobe_histogram(args.histogram, hist)
    return 0


def _cmd_fit_strobe(args) -> int:
    cfg = _load_config(args)
    edges_ps, counts, total_emitted = sio.parse_histogram_csv(args.input)
    edges = edges_ps * 1e-12
    period = float(edges[-1] - edges[0])
    if abs(period * args.f_rf - 1.0) > 1e-6:
        raise ValueError("histogram span does not cover one period of --f-rf")
    hist = StrobeHistogram(
        edges, counts,
        total_emitted=(int(counts.sum()) if total_emitted is None
                       else total_emitted),
        total_detected=int(counts.sum()))
    guess_de = args.delta_e if args.delta_e is not None else args.gamma
    emitter = ModulatedEmitter(args.omega0, args.gamma, guess_de, args.f_rf)
    passband = _filter_from_args(args, cfg)
    est = StrobeFitter(emitter_guess=emitter, passband=passband,
                       param_tol=cfg["fit.param_tol"],
                       max_iter=cfg["fit.max_iter"])
    est.fit(hist.centers, hist.counts.astype(float))
    if args.curve:
        pred = est.predict(hist.centers)
        sio.emit_curve(args.curve,
                       [hist.centers * 1e12, hist.counts, pred],
                       ["bin_center_ps", "counts", "fit"])
    return _report_exit(est.report_, args)


# ------------------------------------------------------------ photon stats

def _cmd_g2(args) -> int:
    cfg = _load_config(args)
    records = sio.parse_timetags(args.input)
    window = args.window_ps if args.window_ps is not None \
        else cfg["g2.window_ps"]
    bin_width = args.bin_width_ps if args.bin_width_ps is not None \
        else cfg["g2.bin_width_ps"]
    hist = correlate(records, args.ch_a, args.ch_b, window, bin_width)
    est = G2Fitter(param_tol=cfg["fit.param_tol"], max_iter=cfg["fit.max_iter"])
    est.fit(hist.centers, hist.g2)
    if hist.wing_level is not None:
        est.report_.config_snapshot["g2.wing_level"] = hist.wing_level
    if args.curve:
        pred = est.predict(hist.centers)
        sio.emit_curve(args.curve, [hist.centers, hist.g2, pred],
                       ["tau_ps", "g2", "fit"])
    return _report_exit(est.report_, args)


def _cmd_lifetime(args) -> int:
    cfg = _load_config(args)
    edges_ps, counts, _ = sio.parse_histogram_csv(args.input)
    centers = 0.5 * (edges_ps[:-1] + edges_ps[1:])
    est = LifetimeFitter(param_tol=cfg["fit.param_tol"],
                         max_iter=cfg["fit.max_iter"])
    est.fit(centers, counts.astype(float))
    if args.curve:
        pred = est.predict(centers)
        sio.emit_curve(args.curve, [centers, counts, pred],
                       ["delay_ps", "counts", "fit"])
    return _report_exit(est.report_, args)


# ------------------------------------------------------------------- sweep

def _cmd_power_sweep(args) -> int:
    cfg = _load_config(args)
    points = sio.parse_sweep_csv(args.input)
    cut = args.saturation_cut
    if cut not in ("auto", None):
        cut = None if cut.lower() == "none" else float(cut)
    est = SqrtPowerFitter(saturation_cut=cut,
                          min_improvement=cfg["sweep.min_improvement"])
    err = [pt.delta_e_err for pt in points]
    est.fit([pt.p_dbm for pt in points], [pt.delta_e for pt in points],
            sample_err=err if any(e > 0 for e in err) else None)
    if args.curve:
        p = np.array([pt.p_dbm for pt in points])
        d = np.array([pt.delta_e for pt in points])
        sio.emit_curve(args.curve, [p, d, est.predict(p)],
                       ["p_dbm", "delta_e_mev", "fit"])
    return _report_exit(est.report_, args)


def _cmd_strain(args) -> int:
    cfg = _load_config(args)
    d = args.d_coupling if args.d_coupling is not None \
        else cfg["strain.d_coupling"]
    model = StrainModel(d_coupling=d, strain_ref=args.strain_ref,
                        p_ref_dbm=args.p_ref)
    if args.to_shift is not None:
        text = f"shift_mev = {_fmt9(strain_to_shift(model, args.to_shift))}\n"
    elif args.to_strain is not None:
        text = f"strain_pct = {_fmt9(shift_to_strain(model, args.to_strain))}\n"
    else:
        text = f"strain_pct = {_fmt9(strain_at_power(model, args.at_power))}\n"
    if args.report:
        sio._write_text(args.report, text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ parser

def _add_common(p, curve: bool = True) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="override the RNG seed")
    p.add_argument("--threads", type=int, help="override the worker count")
    p.add_argument("--report", help="write the fit report here instead of stdout")
    if curve:
        p.add_argument("--curve", help="write a plot-ready CSV curve here")


def _add_emitter_args(p, require_delta_e: bool) -> None:
    p.add_argument("--omega0", type=float, required=True,
                   help="line center (meV)")
    p.add_argument("--gamma", type=float, required=True,
                   help="Lorentzian HWHM (meV)")
    p.add_argument("--delta-e", type=float, required=require_delta_e,
                   help="modulation depth (meV)")
    p.add_argument("--f-rf", type=float, required=True,
                   help="drive frequency (Hz)")


def _add_filter_args(p) -> None:
    p.add_argument("--filter-low", type=float, required=True,
                   help="passband edge (meV relative, or nm)")
    p.add_argument("--filter-high", type=float, required=True,
                   help="other passband edge")
    p.add_argument("--filter-unit", choices=("mev", "nm"), default="mev")
    p.add_argument("--edge-width", type=float,
                   help="raised-cosine edge softening (meV)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sawspe",
        description="Simulation and fitting for acoustically modulated "
                    "single-photon emitters and one-port SAW resonators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-s11", help="fit resonator modes to S11 data")
    p.add_argument("--input", required=True, help=".s1p or 3-column CSV")
    p.add_argument("--guess", help="comma-separated mode frequencies (Hz)")
    p.add_argument("--qi", type=float, default=2000.0,
                   help="initial internal Q for every guess")
    p.add_argument("--qe", type=float, default=2000.0,
                   help="initial external Q for every guess")
    _add_common(p)
    p.set_defaults(func=_cmd_fit_s11)

    p = sub.add_parser("sim-s11", help="synthesize a one-port S11 spectrum")
    p.add_argument("--mode", action="append", required=True,
                   metavar="F_HZ,QI,QE", help="repeatable mode definition")
    p.add_argument("--start", type=float, required=True, help="grid start (Hz)")
    p.add_argument("--stop", type=float, required=True, help="grid stop (Hz)")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--noise", type=float, default=0.0,
                   help="complex noise sigma")
    p.add_argument("--output", required=True, help=".s1p or CSV destination")
    _add_common(p, curve=False)
    p.set_defaults(func=_cmd_sim_s11)

    p = sub.add_parser("sim-spectrum",
                       help="time-averaged modulated PL lineshape")
    _add_emitter_args(p, require_delta_e=True)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--start", type=float, help="grid start (meV)")
    p.add_argument("--stop", type=float, help="grid stop (meV)")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--unit", choices=("mev", "nm"),
                   help="output axis unit (default from config)")
    p.add_argument("--output", required=True, help="spectrum CSV destination")
    _add_common(p, curve=False)
    p.set_defaults(func=_cmd_sim_spectrum)

    p = sub.add_parser("fit-spectrum", help="fit a modulated PL lineshape")
    p.add_argument("--input", required=True, help="spectrum CSV")
    p.add_argument("--omega0", type=float, help="initial line center (meV)")
    p.add_argument("--gamma", type=float, help="initial HWHM (meV)")
    p.add_argument("--delta-e", type=float, help="initial modulation depth")
    p.add_argument("--f-rf", type=float, default=3.035e8,
                   help="drive frequency label (Hz)")
    _add_common(p)
    p.set_defaults(func=_cmd_fit_spectrum)

    p = sub.add_parser("sim-strobe",
                       help="stroboscopic photon-arrival Monte Carlo")
    _add_emitter_args(p, require_delta_e=True)
    _add_filter_args(p)
    p.add_argument("--n-pulses", type=int, required=True)
    p.add_argument("--pulse-period-ps", type=float)
    p.add_argument("--lifetime-ps", type=float)
    p.add_argument("--jitter-sigma-ps", type=float)
    p.add_argument("--bins", type=int)
    p.add_argument("--records", help="write detected time tags here")
    p.add_argument("--histogram", help="write the phase-folded histogram here")
    _add_common(p, curve=False)
    p.set_defaults(func=_cmd_sim_strobe)

    p = sub.add_parser("fit-strobe",
                       help="fit modulation depth to a folded histogram")
    p.add_argument("--input", required=True, help="histogram CSV")
    _add_emitter_args(p, require_delta_e=False)
    _add_filter_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fit_strobe)

    p = sub.add_parser("g2", help="cross-correlate photon channels and fit g2")
    p.add_argument("--input", required=True, help="time tags (CSV or binary)")
    p.add_argument("--ch-a", type=int, default=0)
    p.add_argument("--ch-b", type=int, default=1)
    p.add_argument("--window-ps", type=float)
    p.add_argument("--bin-width-ps", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_g2)

    p = sub.add_parser("lifetime", help="fit an exponential decay tail")
    p.add_argument("--input", required=True, help="delay histogram CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_lifetime)

    p = sub.add_parser("power-sweep",
                       help="sqrt-power law fit and model discrimination")
    p.add_argument("--input", required=True, help="sweep CSV")
    p.add_argument("--saturation-cut", default="auto",
                   help="'auto', 'none', or a cut in dBm")
    _add_common(p)
    p.set_defaults(func=_cmd_power_sweep)

    p = sub.add_parser("strain", help="strain / energy-shift conversion")
    p.add_argument("--d-coupling", type=float,
                   help="deformation coupling (meV per %% strain)")
    p.add_argument("--strain-ref", type=float,
                   help="reference strain (%%) for --at-power")
    p.add_argument("--p-ref", type=float,
                   help="reference power (dBm) for --at-power")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--to-shift", type=float, metavar="STRAIN_PCT",
                   help="convert strain (%%) to energy shift (meV)")
    g.add_argument("--to-strain", type=float, metavar="SHIFT_MEV",
                   help="convert energy shift (meV) to strain (%%)")
    g.add_argument("--at-power", type=float, metavar="P_DBM",
                   help="extrapolate strain to a drive power")
    _add_common(p, curve=False)
    p.set_defaults(func=_cmd_strain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses status 2 for usage problems; this tool reserves 2
        # for data errors and reports usage problems as 1
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (DataFormatError, FitError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
