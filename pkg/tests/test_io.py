import numpy as np
import pytest
from numpy.testing import assert_allclose

from sawspe import (
    DataFormatError,
    FitReport,
    Parameter,
    PhotonRecord,
    PLSpectrum,
    PowerSweepPoint,
    S11Spectrum,
    StrobeHistogram,
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

NM_MEV = 1.23984193e6


def test_parse_touchstone_minimal_three_rows(tmp_path):
    p = tmp_path / "dev.s1p"
    p.write_text("! device A, cooldown 3\n"
                 "# HZ S RI R 50\n"
                 "298425000 0.61 0.02\n"
                 "299425000 -0.55 0.01 ! near the dip\n"
                 "300975000 0.17 -0.08\n")
    spec = parse_touchstone(p)
    assert len(spec) == 3
    assert_allclose(spec.frequencies, [298425000.0, 299425000.0, 300975000.0])
    assert_allclose(spec.values[1], -0.55 + 0.01j)


def test_parse_touchstone_scales_frequency_units(tmp_path):
    p = tmp_path / "dev.s1p"
    p.write_text("# MHZ S RI R 50\n298.425 0.5 0.0\n299.425 0.4 0.1\n")
    spec = parse_touchstone(p)
    assert_allclose(spec.frequencies, [298.425e6, 299.425e6], rtol=1e-12)


def test_parse_touchstone_errors_carry_line_numbers(tmp_path):
    before = tmp_path / "before.s1p"
    before.write_text("1e6 0.1 0.2\n# HZ S RI R 50\n")
    with pytest.raises(DataFormatError) as e1:
        parse_touchstone(before)
    assert "line 1" in str(e1.value) or ":1:" in str(e1.value)

    db = tmp_path / "db.s1p"
    db.write_text("# HZ S DB R 50\n1e6 0.1 0.2\n")
    with pytest.raises(DataFormatError):
        parse_touchstone(db)

    bad = tmp_path / "bad.s1p"
    bad.write_text("# HZ S RI R 50\n1e6 0.1 0.2\n2e6 oops 0.3\n")
    with pytest.raises(DataFormatError) as e2:
        parse_touchstone(bad)
    assert "3" in str(e2.value)

    dup = tmp_path / "dup.s1p"
    dup.write_text("# HZ S RI R 50\n# HZ S RI R 50\n1e6 0.1 0.2\n")
    with pytest.raises(DataFormatError):
        parse_touchstone(dup)

    empty = tmp_path / "empty.s1p"
    empty.write_text("# HZ S RI R 50\n")
    with pytest.raises(DataFormatError):
        parse_touchstone(empty)


def test_touchstone_round_trip(tmp_path):
    f = np.linspace(2.95e8, 3.05e8, 101)
    rng = np.random.default_rng(0)
    spec = S11Spectrum(f, rng.normal(size=101) + 1j * rng.normal(size=101))
    p = tmp_path / "rt.s1p"
    write_touchstone(p, spec)
    back = parse_touchstone(p)
    assert_allclose(back.frequencies, spec.frequencies, rtol=1e-9)
    assert_allclose(back.values, spec.values, rtol=1e-9, atol=1e-12)


def test_s11_csv_round_trip_and_dispatch(tmp_path):
    f = np.linspace(2.95e8, 3.05e8, 51)
    spec = S11Spectrum(f, np.exp(1j * np.linspace(0, 1, 51)))
    p = tmp_path / "trace.csv"
    write_s11_csv(p, spec)
    header = p.read_text().splitlines()[0]
    assert header == "freq_hz,re,im"
    back = parse_s11_any(p)
    assert_allclose(back.values, spec.values, rtol=1e-9, atol=1e-12)

    empty = tmp_path / "empty.csv"
    empty.write_text("freq_hz,re,im\n")
    with pytest.raises(DataFormatError):
        parse_s11_csv(empty)


def test_spectrum_csv_requires_unit_header(tmp_path):
    p = tmp_path / "spec.csv"
    p.write_text("energy_mev,counts\n1.0,10\n2.0,20\n")
    with pytest.raises(DataFormatError):
        parse_spectrum_csv(p)
    p.write_text("# unit=au\n1.0,10\n")
    with pytest.raises(DataFormatError):
        parse_spectrum_csv(p)


def test_spectrum_csv_nm_conversion_and_sorting(tmp_path):
    p = tmp_path / "spec.csv"
    # descending wavelength = ascending energy after conversion
    p.write_text("# unit=nm\nwavelength_nm,counts\n"
                 "776.0,5\n775.0,10\n774.0,7\n")
    spec = parse_spectrum_csv(p)
    assert_allclose(spec.energies[1], 1599.7960387096773, rtol=1e-12)
    assert np.all(np.diff(spec.energies) > 0)
    assert_allclose(spec.counts, [5.0, 10.0, 7.0])


def test_spectrum_csv_round_trip_both_units(tmp_path):
    grid = np.linspace(1599.0, 1601.0, 41)
    spec = PLSpectrum(grid, np.exp(-((grid - 1600.0) / 0.3) ** 2) * 100.0)
    for unit in ("mev", "nm"):
        p = tmp_path / f"spec_{unit}.csv"
        write_spectrum_csv(p, spec, unit=unit)
        back = parse_spectrum_csv(p)
        assert_allclose(back.energies, spec.energies, rtol=1e-9)
        assert_allclose(back.counts, spec.counts, rtol=1e-9)


def test_pl_map_round_trip(tmp_path):
    energies = np.linspace(-1.0, 1.0, 21)
    freqs = np.array([2.98e8, 3.0e8, 3.02e8])
    counts = np.outer(np.exp(-energies ** 2), [1.0, 2.0, 3.0]) * 50.0
    p = tmp_path / "map.csv"
    write_pl_map(p, energies, freqs, counts)
    e2, f2, c2 = parse_pl_map(p)
    assert_allclose(e2, energies, rtol=1e-9)
    assert_allclose(f2, freqs, rtol=1e-9)
    assert_allclose(c2, counts, rtol=1e-9)


def test_timetags_csv_round_trip(tmp_path):
    records = [PhotonRecord(0, 120), PhotonRecord(1, 360),
               PhotonRecord(0, 99991)]
    p = tmp_path / "tags.csv"
    write_timetags(p, records)
    assert p.read_text().splitlines()[0] == "channel,time_ps"
    assert parse_timetags(p) == records


def test_timetags_binary_is_nine_bytes_per_record(tmp_path):
    records = [PhotonRecord(0, 120), PhotonRecord(3, 2 ** 40)]
    p = tmp_path / "tags.bin"
    write_timetags(p, records)
    assert p.stat().st_size == 18
    assert parse_timetags(p) == records


def test_timetags_binary_size_check(tmp_path):
    p = tmp_path / "tags.bin"
    p.write_bytes(b"\x00" * 14)
    with pytest.raises(DataFormatError):
        parse_timetags(p)


def test_timetags_csv_rejects_fractional_times(tmp_path):
    p = tmp_path / "tags.csv"
    p.write_text("channel,time_ps\n0,100.5\n")
    with pytest.raises(DataFormatError):
        parse_timetags(p)


def test_sweep_csv_round_trip_and_optional_error_column(tmp_path):
    points = [PowerSweepPoint(-10.0, 0.31, 0.01),
              PowerSweepPoint(0.0, 0.9865, 0.02),
              PowerSweepPoint(6.0, 1.9683262737167997, 0.05)]
    p = tmp_path / "sweep.csv"
    write_sweep_csv(p, points)
    assert p.read_text().splitlines()[0] == "p_dbm,delta_e_mev,delta_e_err_mev"
    back = parse_sweep_csv(p)
    for a, b in zip(back, points):
        assert_allclose([a.p_dbm, a.delta_e, a.delta_e_err],
                        [b.p_dbm, b.delta_e, b.delta_e_err], rtol=1e-9)

    two = tmp_path / "two.csv"
    two.write_text("p_dbm,delta_e_mev\n0.0,0.5\n3.0,0.7\n")
    pts = parse_sweep_csv(two)
    assert pts[0].delta_e_err == 0.0

    bad = tmp_path / "bad.csv"
    bad.write_text("p_dbm,delta_e_mev,delta_e_err_mev,extra\n0,0.5,0.01,9\n")
    with pytest.raises(DataFormatError):
        parse_sweep_csv(bad)


def test_histogram_round_trip_with_total(tmp_path):
    edges = np.arange(0.0, 1300.0, 100.0)
    counts = np.arange(12) ** 2
    p = tmp_path / "hist.csv"
    write_histogram_csv(p, edges, counts, total_emitted=4000)
    e2, c2, total = parse_histogram_csv(p)
    assert_allclose(e2, edges, rtol=1e-9)
    assert np.array_equal(c2, counts)
    assert total == 4000

    q = tmp_path / "hist_nototal.csv"
    write_histogram_csv(q, edges, counts)
    assert parse_histogram_csv(q)[2] is None


def test_histogram_rejects_gaps(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text("bin_start_ps,bin_end_ps,count\n0,100,5\n150,250,6\n")
    with pytest.raises(DataFormatError) as exc:
        parse_histogram_csv(p)
    assert "contiguous" in str(exc.value)


def test_histogram_rejects_bad_counts(tmp_path):
    p = tmp_path / "frac.csv"
    p.write_text("bin_start_ps,bin_end_ps,count\n0,100,5.5\n")
    with pytest.raises(DataFormatError):
        parse_histogram_csv(p)


def test_strobe_histogram_round_trip(tmp_path):
    edges = np.linspace(0.0, 1.0 / 3.0e8, 17)
    counts = np.arange(16, dtype=np.int64) + 3
    hist = StrobeHistogram(edges, counts, 10_000, int(counts.sum()))
    p = tmp_path / "strobe.csv"
    write_strobe_histogram(p, hist)
    back = parse_strobe_histogram(p)
    assert_allclose(back.bin_edges, edges, rtol=1e-9)
    assert np.array_equal(back.counts, counts)
    assert back.total_emitted == 10_000
    assert back.total_detected == int(counts.sum())


def test_strobe_histogram_requires_total_emitted(tmp_path):
    p = tmp_path / "plain.csv"
    write_histogram_csv(p, np.arange(0.0, 900.0, 100.0), np.ones(8))
    with pytest.raises(DataFormatError):
        parse_strobe_histogram(p)


def sample_report():
    return FitReport(
        model_name="s11_reflection",
        parameters=[Parameter("mode0.f_n", 298425000.0, 120.0, "Hz"),
                    Parameter("mode0.q_i", 1300.0, 4.5, "")],
        residual_norm=0.0123, n_points=400, converged=True,
        warnings=["mode1: no resonance found in window"],
        input_digest="abc123", config_snapshot={"s11.background": False,
                                                "s11.max_iter": 200})


def test_emit_report_is_byte_deterministic(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    emit_report(sample_report(), a)
    emit_report(sample_report(), b)
    assert a.read_bytes() == b.read_bytes()


def test_emit_report_contains_warnings_verbatim(tmp_path):
    text = emit_report(sample_report())
    assert "  - mode1: no resonance found in window" in text
    assert "model: s11_reflection" in text
    assert "converged: true" in text
    assert "mode0.f_n = 298425000 +/- 120 Hz" in text


def test_emit_curve_rows_and_header(tmp_path):
    p = tmp_path / "curve.csv"
    x = np.linspace(0.0, 1.0, 512)
    emit_curve(p, [x, x ** 2], ["x", "x_squared"])
    lines = p.read_text().splitlines()
    assert len(lines) == 513
    assert lines[0] == "x,x_squared"


def test_emit_curve_rejects_bad_input_without_partial_file(tmp_path):
    p = tmp_path / "never.csv"
    with pytest.raises(ValueError):
        emit_curve(p, [np.arange(3), np.arange(4)], ["a", "b"])
    assert not p.exists()
    with pytest.raises(ValueError):
        emit_curve(p, [np.array([1 + 2j, 3 + 4j])], ["z"])
    assert not p.exists()
    assert list(tmp_path.iterdir()) == []


def test_write_touchstone_format_stability(tmp_path):
    spec = S11Spectrum(np.array([2.98425e8, 2.99425e8]),
                       np.array([0.5 + 0.25j, -0.1 - 0.2j]))
    p = tmp_path / "fmt.s1p"
    write_touchstone(p, spec)
    lines = p.read_text().splitlines()
    assert lines[1] == "# HZ S RI R 50"
    assert lines[2] == "298425000 0.5 0.25"
