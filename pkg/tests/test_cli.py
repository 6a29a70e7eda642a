import numpy as np
import pytest
from numpy.testing import assert_allclose

from sawspe import (
    PhotonRecord,
    dbm_to_mw,
    parse_spectrum_csv,
    write_histogram_csv,
    write_sweep_csv,
    write_timetags,
    PowerSweepPoint,
)
from sawspe.cli import main

TABLE_FREQS = "298.425e6,299.425e6,300.975e6,303.561e6"


def report_value(text, name):
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith(f"{name} = "):
            return float(stripped.split("=")[1].split("+/-")[0])
    raise AssertionError(f"{name} not found in report:\n{text}")


def test_help_exits_zero():
    assert main(["--help"]) == 0
    assert main(["fit-s11", "--help"]) == 0


def test_usage_errors_exit_one():
    assert main(["no-such-command"]) == 1
    assert main(["fit-s11"]) == 1  # --input is required
    assert main([]) == 1


def test_missing_input_file_exits_two(tmp_path, capsys):
    rc = main(["fit-s11", "--input", str(tmp_path / "nope.s1p")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def synth_table(tmp_path, noise="0", seed=None, name="table.s1p"):
    out = tmp_path / name
    argv = ["sim-s11",
            "--mode", "298.425e6,1300,5900",
            "--mode", "299.425e6,3000,800",
            "--mode", "300.975e6,1600,2300",
            "--mode", "303.561e6,1700,6000",
            "--start", "296e6", "--stop", "306e6",
            "--points", "6001", "--noise", noise,
            "--output", str(out)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    assert main(argv) == 0
    return out


def test_fit_s11_lists_four_modes(tmp_path, capsys):
    data = synth_table(tmp_path)
    curve = tmp_path / "curve.csv"
    rc = main(["fit-s11", "--input", str(data),
               "--guess", TABLE_FREQS, "--curve", str(curve)])
    out = capsys.readouterr().out
    assert rc == 0
    for i in range(4):
        assert f"mode{i}.f_n" in out
    assert_allclose(report_value(out, "mode0.q_i"), 1300.0, rtol=1e-3)
    assert_allclose(report_value(out, "mode1.q_e"), 800.0, rtol=1e-3)
    lines = curve.read_text().splitlines()
    assert lines[0] == "freq_hz,re,im,fit_re,fit_im,fit_abs"
    assert len(lines) == 6002


def test_fit_s11_report_file_instead_of_stdout(tmp_path, capsys):
    data = synth_table(tmp_path)
    report = tmp_path / "fit.txt"
    rc = main(["fit-s11", "--input", str(data), "--guess", TABLE_FREQS,
               "--report", str(report)])
    assert rc == 0
    assert capsys.readouterr().out == ""
    assert "mode3.q_i" in report.read_text()


def test_fit_s11_featureless_trace_exits_two(tmp_path, capsys):
    flat = tmp_path / "flat.csv"
    f = np.linspace(2.9e8, 3.1e8, 401)
    lines = ["freq_hz,re,im"] + [f"{x},1.0,0.0" for x in f]
    flat.write_text("\n".join(lines) + "\n")
    rc = main(["fit-s11", "--input", str(flat)])
    out = capsys.readouterr().out
    assert rc == 2
    assert "converged: false" in out
    assert "no resonance found" in out


def test_sim_s11_deterministic_for_same_seed(tmp_path):
    a = synth_table(tmp_path, noise="0.01", seed=5, name="a.s1p")
    b = synth_table(tmp_path, noise="0.01", seed=5, name="b.s1p")
    c = synth_table(tmp_path, noise="0.01", seed=6, name="c.s1p")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_sim_spectrum_zero_depth_is_plain_lorentzian(tmp_path):
    out = tmp_path / "line.csv"
    rc = main(["sim-spectrum", "--omega0", "1600", "--gamma", "0.05",
               "--delta-e", "0", "--f-rf", "3.035e8",
               "--amplitude", "220", "--output", str(out)])
    assert rc == 0
    spec = parse_spectrum_csv(out)
    lorentz = 220.0 * 0.05 ** 2 / (0.05 ** 2 + (spec.energies - 1600.0) ** 2)
    assert_allclose(spec.counts, lorentz, rtol=1e-8)


def test_sim_spectrum_nm_axis(tmp_path):
    out = tmp_path / "line_nm.csv"
    rc = main(["sim-spectrum", "--omega0", "1600", "--gamma", "0.05",
               "--delta-e", "0.2", "--f-rf", "3.035e8",
               "--unit", "nm", "--output", str(out)])
    assert rc == 0
    assert out.read_text().splitlines()[0] == "# unit=nm"
    spec = parse_spectrum_csv(out)  # parser converts back to meV
    assert abs(spec.energies[len(spec) // 2] - 1600.0) < 1.0


def test_fit_spectrum_recovers_modulation_depth(tmp_path, capsys):
    data = tmp_path / "mod.csv"
    assert main(["sim-spectrum", "--omega0", "1600", "--gamma", "0.05",
                 "--delta-e", "0.46", "--f-rf", "3.035e8",
                 "--amplitude", "150", "--output", str(data)]) == 0
    rc = main(["fit-spectrum", "--input", str(data)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "model: modulated_lineshape" in out
    assert_allclose(report_value(out, "delta_e"), 0.46, rtol=0.01)
    assert_allclose(report_value(out, "gamma"), 0.05, rtol=0.01)


def strobe_args(extra):
    # 299.79 MHz against the default 12.5 ns pulse spacing keeps the
    # phase fold uniform (the pulse train walks through 8000 drive phases)
    return (["sim-strobe", "--omega0", "0", "--gamma", "1.0",
             "--delta-e", "1.9683262737167997", "--f-rf", "2.9979e8",
             "--filter-low", "1.0", "--filter-high", "4.0",
             "--n-pulses", "200000", "--seed", "3"] + extra)


def test_sim_strobe_requires_an_output(tmp_path, capsys):
    assert main(strobe_args([])) == 2
    assert "nothing to write" in capsys.readouterr().err


def test_sim_strobe_then_fit_strobe_round_trip(tmp_path, capsys):
    hist = tmp_path / "fold.csv"
    tags = tmp_path / "tags.bin"
    assert main(strobe_args(["--histogram", str(hist),
                             "--records", str(tags)])) == 0
    assert hist.exists() and tags.exists()
    assert tags.stat().st_size % 9 == 0

    rc = main(["fit-strobe", "--input", str(hist),
               "--omega0", "0", "--gamma", "1.0", "--f-rf", "2.9979e8",
               "--filter-low", "1.0", "--filter-high", "4.0"])
    out = capsys.readouterr().out
    assert rc == 0
    fitted = report_value(out, "delta_e")
    assert abs(fitted - 1.9683262737167997) / 1.9683262737167997 < 0.05


def test_fit_strobe_rejects_wrong_drive_frequency(tmp_path, capsys):
    hist = tmp_path / "fold.csv"
    assert main(strobe_args(["--histogram", str(hist)])) == 0
    rc = main(["fit-strobe", "--input", str(hist),
               "--omega0", "0", "--gamma", "1.0", "--f-rf", "2.9e8",
               "--filter-low", "1.0", "--filter-high", "4.0"])
    assert rc == 2
    assert "one period" in capsys.readouterr().err


def test_sim_strobe_deterministic_across_threads(tmp_path):
    outs = []
    for name, threads in (("h1.csv", "1"), ("h2.csv", "4")):
        hist = tmp_path / name
        assert main(strobe_args(["--histogram", str(hist),
                                 "--threads", threads])) == 0
        outs.append(hist.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_feeds_the_simulator(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 3\nstrobe.bins = 64\n")
    with_cfg = tmp_path / "cfg.csv"
    assert main(["sim-strobe", "--omega0", "0", "--gamma", "1.0",
                 "--delta-e", "2.0", "--f-rf", "3e8",
                 "--filter-low", "1.0", "--filter-high", "4.0",
                 "--n-pulses", "50000", "--config", str(cfg),
                 "--histogram", str(with_cfg)]) == 0
    # 64 bins from config -> 64 data rows + header + total_emitted comment
    assert len(with_cfg.read_text().splitlines()) == 66
    # explicit --seed beats the config file
    direct = tmp_path / "direct.csv"
    assert main(["sim-strobe", "--omega0", "0", "--gamma", "1.0",
                 "--delta-e", "2.0", "--f-rf", "3e8",
                 "--filter-low", "1.0", "--filter-high", "4.0",
                 "--n-pulses", "50000", "--config", str(cfg),
                 "--seed", "3", "--bins", "64",
                 "--histogram", str(direct)]) == 0
    assert direct.read_bytes() == with_cfg.read_bytes()


def test_g2_command_on_uncorrelated_tags(tmp_path, capsys):
    rng = np.random.default_rng(7)
    records = []
    for ch in (0, 1):
        times = np.sort(rng.integers(0, 10 ** 10, 4000))
        records += [PhotonRecord(ch, int(t)) for t in times]
    tags = tmp_path / "tags.csv"
    write_timetags(tags, records)
    curve = tmp_path / "g2.csv"
    rc = main(["g2", "--input", str(tags), "--window-ps", "5e6",
               "--bin-width-ps", "2.5e5", "--curve", str(curve)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "model: antibunching_dip" in out
    assert curve.read_text().splitlines()[0] == "tau_ps,g2,fit"


def test_lifetime_command(tmp_path, capsys):
    edges = np.arange(0.0, 50_100.0, 100.0)
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = np.rint(4000.0 * np.exp(-centers / 2000.0)).astype(int)
    data = tmp_path / "decay.csv"
    write_histogram_csv(data, edges, counts)
    rc = main(["lifetime", "--input", str(data)])
    out = capsys.readouterr().out
    assert rc == 0
    assert_allclose(report_value(out, "tau"), 2000.0, rtol=0.01)


def test_power_sweep_recovers_generator_slope(tmp_path, capsys):
    p_dbm = np.arange(-10.0, 11.0, 1.0)
    points = [PowerSweepPoint(p, 0.9865 * np.sqrt(dbm_to_mw(p)), 0.01)
              for p in p_dbm]
    data = tmp_path / "sweep.csv"
    write_sweep_csv(data, points)
    rc = main(["power-sweep", "--input", str(data)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "model: delta_e_sqrt_power" in out
    assert_allclose(report_value(out, "slope"), 0.9865, rtol=1e-9)


def test_power_sweep_cut_flag_variants(tmp_path):
    p_dbm = np.arange(-10.0, 11.0, 1.0)
    points = [PowerSweepPoint(p, 0.9865 * np.sqrt(dbm_to_mw(p)))
              for p in p_dbm]
    data = tmp_path / "sweep.csv"
    write_sweep_csv(data, points)
    report = tmp_path / "r.txt"
    assert main(["power-sweep", "--input", str(data),
                 "--saturation-cut", "none", "--report", str(report)]) == 0
    assert main(["power-sweep", "--input", str(data),
                 "--saturation-cut", "4.0", "--report", str(report)]) == 0


def test_strain_conversions(tmp_path, capsys):
    assert main(["strain", "--d-coupling", "30", "--to-shift", "0.1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("shift_mev = ")
    assert_allclose(float(out.split("=")[1]), 3.0, rtol=1e-9)

    assert main(["strain", "--d-coupling", "30", "--to-strain", "3.0"]) == 0
    assert_allclose(float(capsys.readouterr().out.split("=")[1]), 0.1,
                    rtol=1e-9)

    assert main(["strain", "--strain-ref", "0.0119", "--p-ref", "0",
                 "--at-power", "10"]) == 0
    got = float(capsys.readouterr().out.split("=")[1])
    assert_allclose(got, 0.03763110415600372, rtol=1e-8)


def test_strain_at_power_without_reference_exits_two(capsys):
    assert main(["strain", "--at-power", "10"]) == 2
    assert "strain_at_power" in capsys.readouterr().err


def test_strain_flags_are_mutually_exclusive():
    assert main(["strain", "--to-shift", "0.1", "--to-strain", "3.0"]) == 1
