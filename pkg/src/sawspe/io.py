"""File formats: Touchstone .s1p, CSV spectra/maps/sweeps/histograms,
time-tag streams (CSV and packed binary), and deterministic report/curve
emission.

All parsers are strict: malformed input raises DataFormatError carrying the
path and 1-based line number.  All writers are atomic (temp file + rename in
the destination directory) and deterministic, so identical data produces
byte-identical files.  Numeric data is written with 12 significant digits,
which round-trips well inside 1e-9 relative; report text uses the report
module's own 9-digit formatting.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import DataFormatError
from .emitter import PLSpectrum
from .photonstats import PhotonRecord
from .report import FitReport
from .resonator import S11Spectrum
from .strobe import StrobeHistogram
from .sweep import PowerSweepPoint

DATA_FMT = "%.12g"
NM_MEV = 1.23984193e6  # E[meV] = NM_MEV / lambda[nm]

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}

_TIMETAG_DTYPE = np.dtype([("channel", "u1"), ("time", "<u8")])
assert _TIMETAG_DTYPE.itemsize == 9


def _atomic_write(path, data: bytes) -> None:
    """Write bytes to path via a same-directory temp file and atomic rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def _fmt(x: float) -> str:
    return DATA_FMT % float(x)


def _read_lines(path):
    """Yield (line_no, stripped_line) for non-empty lines; IO errors pass up."""
    with open(path, "r", encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield i, line


def _floats(fields, n, path, line_no):
    if len(fields) != n:
        raise DataFormatError(f"expected {n} columns, got {len(fields)}",
                              path, line_no)
    try:
        return [float(f) for f in fields]
    except ValueError as exc:
        raise DataFormatError(f"non-numeric value: {exc}", path, line_no)


# ---------------------------------------------------------------- touchstone

def parse_touchstone(path) -> S11Spectrum:
    """Read a Touchstone v1 single-port file.

    Requires an option line "# <unit> S RI R <z0>" before the data; "!"
    starts a comment (whole-line or trailing).  Only the S-parameter RI
    format is supported.  Frequencies are normalized to Hz.
    """
    scale = None
    freqs, vals = [], []
    for line_no, line in _read_lines(path):
        bang = line.find("!")
        if bang >= 0:
            line = line[:bang].strip()
            if not line:
                continue
        if line.startswith("#"):
            if scale is not None:
                raise DataFormatError("duplicate option line", path, line_no)
            tokens = [t.upper() for t in line[1:].split()]
            unit = tokens[0] if tokens else ""
            if unit not in _FREQ_UNITS:
                raise DataFormatError(
                    f"unknown frequency unit {unit!r} in option line",
                    path, line_no)
            if len(tokens) < 3 or tokens[1] != "S" or tokens[2] != "RI":
                raise DataFormatError(
                    "only 'S RI' Touchstone data is supported", path, line_no)
            scale = _FREQ_UNITS[unit]
            continue
        if scale is None:
            raise DataFormatError("data before the '#' option line",
                                  path, line_no)
        f, re_, im = _floats(line.split(), 3, path, line_no)
        freqs.append(f * scale)
        vals.append(complex(re_, im))
    if scale is None:
        raise DataFormatError("missing Touchstone option line", path, 0)
    if not freqs:
        raise DataFormatError("no data rows", path, 0)
    try:
        return S11Spectrum(np.array(freqs), np.array(vals, dtype=complex))
    except ValueError as exc:
        raise DataFormatError(str(exc), path, 0)


def write_touchstone(path, spectrum: S11Spectrum) -> None:
    lines = ["! one-port reflection data", "# HZ S RI R 50"]
    for f, v in zip(spectrum.frequencies, spectrum.values):
        lines.append(f"{_fmt(f)} {_fmt(v.real)} {_fmt(v.imag)}")
    _write_text(path, "\n".join(lines) + "\n")


def parse_s11_csv(path) -> S11Spectrum:
    """Read a 3-column CSV: freq_hz, re, im.  '#' lines and an optional
    non-numeric column-header row are skipped."""
    freqs, vals = [], []
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not freqs:
            try:
                float(fields[0])
            except ValueError:
                continue  # column-name header row
        f, re_, im = _floats(fields, 3, path, line_no)
        freqs.append(f)
        vals.append(complex(re_, im))
    if not freqs:
        raise DataFormatError("no data rows", path, 0)
    try:
        return S11Spectrum(np.array(freqs), np.array(vals, dtype=complex))
    except ValueError as exc:
        raise DataFormatError(str(exc), path, 0)


def write_s11_csv(path, spectrum: S11Spectrum) -> None:
    lines = ["freq_hz,re,im"]
    for f, v in zip(spectrum.frequencies, spectrum.values):
        lines.append(f"{_fmt(f)},{_fmt(v.real)},{_fmt(v.imag)}")
    _write_text(path, "\n".join(lines) + "\n")


def parse_s11_any(path) -> S11Spectrum:
    """Dispatch on extension: .s1p -> Touchstone, anything else -> CSV."""
    if os.fspath(path).lower().endswith(".s1p"):
        return parse_touchstone(path)
    return parse_s11_csv(path)


# ------------------------------------------------------------------- spectra

def parse_spectrum_csv(path) -> PLSpectrum:
    """Read a 2-column spectrum (axis, counts).

    A "# unit=nm" or "# unit=mev" header line is mandatory and declares the
    first column.  Wavelengths are converted to meV (1.23984193e6 / nm) and
    the points are sorted by ascending energy.
    """
    unit = None
    xs, cs = [], []
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("unit="):
                u = body[5:].lower()
                if u not in ("nm", "mev"):
                    raise DataFormatError(f"unknown unit {u!r}", path, line_no)
                unit = u
            continue
        if unit is None:
            raise DataFormatError(
                "missing '# unit=nm|mev' header before data", path, line_no)
        fields = [f.strip() for f in line.split(",")]
        if not xs:
            try:
                float(fields[0])
            except ValueError:
                continue
        x, c = _floats(fields, 2, path, line_no)
        xs.append(x)
        cs.append(c)
    if unit is None:
        raise DataFormatError("missing '# unit=nm|mev' header", path, 0)
    if not xs:
        raise DataFormatError("no data rows", path, 0)
    x = np.array(xs)
    c = np.array(cs)
    if unit == "nm":
        if np.any(x <= 0):
            raise DataFormatError("nonpositive wavelength", path, 0)
        x = NM_MEV / x
    order = np.argsort(x)
    try:
        return PLSpectrum(x[order], c[order])
    except ValueError as exc:
        raise DataFormatError(str(exc), path, 0)


def write_spectrum_csv(path, spectrum: PLSpectrum, unit: str = "mev") -> None:
    if unit not in ("nm", "mev"):
        raise ValueError("unit must be 'nm' or 'mev'")
    x = np.asarray(spectrum.energies, dtype=float)
    label = "energy_mev"
    if unit == "nm":
        x = NM_MEV / x
        label = "wavelength_nm"
    lines = [f"# unit={unit}", f"{label},counts"]
    for xi, ci in zip(x, spectrum.counts):
        lines.append(f"{_fmt(xi)},{_fmt(ci)}")
    _write_text(path, "\n".join(lines) + "\n")


def parse_pl_map(path):
    """Read a drive-frequency PL map.

    Header row: "energy_mev" followed by the drive frequencies in Hz; each
    data row is an energy followed by one count per frequency.  Returns
    (energies meV, frequencies Hz, counts[n_energy, n_freq]).
    """
    freqs = None
    energies, rows = [], []
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if freqs is None:
            vals = _floats(fields[1:], len(fields) - 1, path, line_no)
            if not vals:
                raise DataFormatError("map header has no frequencies",
                                      path, line_no)
            freqs = np.array(vals)
            continue
        vals = _floats(fields, len(freqs) + 1, path, line_no)
        energies.append(vals[0])
        rows.append(vals[1:])
    if freqs is None or not rows:
        raise DataFormatError("empty PL map", path, 0)
    return np.array(energies), freqs, np.array(rows)


def write_pl_map(path, energies, freqs, counts) -> None:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(energies), len(freqs)):
        raise ValueError("counts must be (n_energy, n_freq)")
    lines = ["energy_mev," + ",".join(_fmt(f) for f in freqs)]
    for e, row in zip(energies, counts):
        lines.append(_fmt(e) + "," + ",".join(_fmt(c) for c in row))
    _write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------- time tags

def parse_timetags(path, fmt: str = "auto") -> list[PhotonRecord]:
    """Read photon records from CSV ("channel,time_ps") or the packed
    binary format (9-byte little-endian records: u8 channel, u64 time_ps).

    fmt 'auto' treats .csv files as CSV and everything else as binary.
    """
    if fmt == "auto":
        fmt = "csv" if os.fspath(path).lower().endswith(".csv") else "bin"
    if fmt == "bin":
        size = os.stat(path).st_size
        if size % _TIMETAG_DTYPE.itemsize != 0:
            raise DataFormatError(
                f"file size {size} is not a multiple of 9-byte records",
                path, 0)
        raw = np.fromfile(path, dtype=_TIMETAG_DTYPE)
        return [PhotonRecord(int(r["channel"]), int(r["time"])) for r in raw]
    if fmt != "csv":
        raise ValueError("fmt must be 'auto', 'csv', or 'bin'")
    records = []
    saw_header = False
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not saw_header and not records:
            saw_header = True
            if fields[0].lower() == "channel":
                continue
        ch, t = _floats(fields, 2, path, line_no)
        if ch != int(ch) or ch < 0:
            raise DataFormatError("channel must be a nonnegative integer",
                                  path, line_no)
        if t != int(t) or t < 0:
            raise DataFormatError("time_ps must be a nonnegative integer",
                                  path, line_no)
        records.append(PhotonRecord(int(ch), int(t)))
    return records


def write_timetags(path, records, fmt: str = "auto") -> None:
    if fmt == "auto":
        fmt = "csv" if os.fspath(path).lower().endswith(".csv") else "bin"
    if fmt == "bin":
        arr = np.empty(len(records), dtype=_TIMETAG_DTYPE)
        for i, r in enumerate(records):
            arr[i] = (r.channel, r.time)
        _atomic_write(path, arr.tobytes())
        return
    if fmt != "csv":
        raise ValueError("fmt must be 'auto', 'csv', or 'bin'")
    lines = ["channel,time_ps"]
    for r in records:
        lines.append(f"{r.channel},{r.time}")
    _write_text(path, "\n".join(lines) + "\n")


# -------------------------------------------------------------------- sweeps

SWEEP_HEADER = "p_dbm,delta_e_mev,delta_e_err_mev"


def parse_sweep_csv(path) -> list[PowerSweepPoint]:
    """Read a power sweep: header "p_dbm,delta_e_mev,delta_e_err_mev"
    (error column optional) then one row per point."""
    points = []
    saw_header = False
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not saw_header:
            saw_header = True
            if fields[0].lower() == "p_dbm":
                continue
        if len(fields) not in (2, 3):
            raise DataFormatError(f"expected 2 or 3 columns, got {len(fields)}",
                                  path, line_no)
        vals = _floats(fields, len(fields), path, line_no)
        err = vals[2] if len(vals) == 3 else 0.0
        try:
            points.append(PowerSweepPoint(vals[0], vals[1], err))
        except ValueError as exc:
            raise DataFormatError(str(exc), path, line_no)
    if not points:
        raise DataFormatError("no sweep points", path, 0)
    return points


def write_sweep_csv(path, points) -> None:
    lines = [SWEEP_HEADER]
    for pt in points:
        lines.append(f"{_fmt(pt.p_dbm)},{_fmt(pt.delta_e)},"
                     f"{_fmt(pt.delta_e_err)}")
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- histograms

HISTOGRAM_HEADER = "bin_start_ps,bin_end_ps,count"


def parse_histogram_csv(path):
    """Read a contiguous-bin count histogram.

    Format: optional "# total_emitted = N" comment, the
    "bin_start_ps,bin_end_ps,count" header, then one row per bin with
    bin_end[i] == bin_start[i+1].  Returns (edges_ps, counts, total_emitted)
    with total_emitted None when the comment is absent.
    """
    total_emitted = None
    starts, ends, counts = [], [], []
    saw_header = False
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("total_emitted="):
                try:
                    total_emitted = int(body.split("=", 1)[1])
                except ValueError:
                    raise DataFormatError("bad total_emitted value",
                                          path, line_no)
            continue
        fields = [f.strip() for f in line.split(",")]
        if not saw_header:
            saw_header = True
            if fields[0].lower() == "bin_start_ps":
                continue
        s, e, c = _floats(fields, 3, path, line_no)
        if e <= s:
            raise DataFormatError("bin_end_ps must exceed bin_start_ps",
                                  path, line_no)
        if c < 0 or c != int(c):
            raise DataFormatError("count must be a nonnegative integer",
                                  path, line_no)
        if starts:
            width = ends[-1] - starts[-1]
            if abs(s - ends[-1]) > 1e-9 * max(abs(ends[-1]), width):
                raise DataFormatError("bins are not contiguous", path, line_no)
        starts.append(s)
        ends.append(e)
        counts.append(int(c))
    if not counts:
        raise DataFormatError("no histogram rows", path, 0)
    edges = np.array(starts + [ends[-1]])
    return edges, np.array(counts, dtype=np.int64), total_emitted


def write_histogram_csv(path, edges_ps, counts,
                        total_emitted: int | None = None) -> None:
    edges_ps = np.asarray(edges_ps, dtype=float)
    counts = np.asarray(counts)
    if len(edges_ps) != len(counts) + 1:
        raise ValueError("need len(edges) == len(counts) + 1")
    lines = []
    if total_emitted is not None:
        lines.append(f"# total_emitted = {int(total_emitted)}")
    lines.append(HISTOGRAM_HEADER)
    for i, c in enumerate(counts):
        lines.append(f"{_fmt(edges_ps[i])},{_fmt(edges_ps[i + 1])},{int(c)}")
    _write_text(path, "\n".join(lines) + "\n")


def write_strobe_histogram(path, hist: StrobeHistogram) -> None:
    """StrobeHistogram with second-valued edges -> ps-valued histogram CSV."""
    write_histogram_csv(path, hist.bin_edges * 1e12, hist.counts,
                        total_emitted=hist.total_emitted)


def parse_strobe_histogram(path) -> StrobeHistogram:
    edges_ps, counts, total_emitted = parse_histogram_csv(path)
    if total_emitted is None:
        raise DataFormatError(
            "strobe histogram needs a '# total_emitted = N' line", path, 0)
    return StrobeHistogram(edges_ps * 1e-12, counts,
                           total_emitted=total_emitted,
                           total_detected=int(counts.sum()))


# ------------------------------------------------------------------ emission

def emit_report(report: FitReport, path=None) -> str:
    """Render a FitReport; write it to path when given.  Returns the text."""
    text = report.render()
    if path is not None:
        _write_text(path, text)
    return text


def emit_curve(path, columns, names) -> None:
    """Write named columns of equal length as a deterministic CSV."""
    columns = [np.asarray(c) for c in columns]
    if len(columns) != len(names):
        raise ValueError("one name per column")
    if columns and any(len(c) != len(columns[0]) for c in columns):
        raise ValueError("columns must share a length")
    lines = [",".join(names)]
    n = len(columns[0]) if columns else 0
    for i in range(n):
        cells = []
        for c in columns:
            v = c[i]
            if np.iscomplexobj(c):
                raise ValueError("split complex columns into re/im first")
            cells.append(_fmt(v))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")
