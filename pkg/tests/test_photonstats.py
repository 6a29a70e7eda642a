import numpy as np
import pytest
from numpy.testing import assert_allclose

from sawspe import (
    CorrelationHistogram,
    G2Fitter,
    LifetimeFitter,
    NoDecayError,
    NormalizationWarning,
    PhotonRecord,
    channel_times,
    correlate,
    fit_g2,
    fit_lifetime,
    pulsed_g2,
)


def records_from(ch_times):
    recs = []
    for ch, times in ch_times.items():
        recs += [PhotonRecord(ch, int(t)) for t in times]
    return recs


def test_photon_record_validation():
    with pytest.raises(ValueError):
        PhotonRecord(-1, 100)
    with pytest.raises(ValueError):
        PhotonRecord(0, -5)


def test_channel_times_filters_and_sorts():
    recs = records_from({0: [300, 100], 1: [200]})
    assert_allclose(channel_times(recs, 0), [100.0, 300.0])
    assert_allclose(channel_times(recs, 1), [200.0])
    assert len(channel_times(recs, 7)) == 0


def test_pair_counts_by_hand():
    # a = [100]; b = [150, 250, 1050]; delays 50, 150, 950
    recs = records_from({0: [100], 1: [150, 250, 1050]})
    hist = correlate(recs, 0, 1, window_ps=1000.0, bin_width_ps=500.0)
    assert_allclose(hist.tau_edges, [-1000.0, -500.0, 0.0, 500.0, 1000.0])
    assert list(hist.counts) == [0, 0, 2, 1]
    # span 950 ps, rates 1/950 and 3/950
    assert_allclose(hist.normalization, 3.0 * 500.0 / 950.0, rtol=1e-12)
    assert hist.n_a == 1 and hist.n_b == 3


def test_reversing_channels_mirrors_the_histogram():
    recs = records_from({0: [1000], 1: [1250, 1600]})
    ab = correlate(recs, 0, 1, window_ps=1000.0, bin_width_ps=500.0)
    ba = correlate(recs, 1, 0, window_ps=1000.0, bin_width_ps=500.0)
    assert list(ab.counts) == [0, 0, 1, 1]
    assert list(ba.counts) == list(ab.counts)[::-1]


def test_mirror_symmetry_with_delays_on_bin_edges():
    # +500 lands in [500, 1000); -500 lands in its mirror (-1000, -500]
    recs = records_from({0: [1000], 1: [500, 1500]})
    ab = correlate(recs, 0, 1, window_ps=1000.0, bin_width_ps=500.0)
    ba = correlate(recs, 1, 0, window_ps=1000.0, bin_width_ps=500.0)
    assert list(ab.counts) == [1, 0, 0, 1]
    assert list(ba.counts) == list(ab.counts)[::-1]


def test_autocorrelation_removes_self_pairs():
    recs = records_from({0: [1000, 2000, 3000]})
    hist = correlate(recs, 0, 0, window_ps=1500.0, bin_width_ps=500.0)
    assert list(hist.counts) == [2, 0, 0, 0, 0, 2]
    assert_allclose(hist.normalization, 9.0 * 500.0 / 2000.0, rtol=1e-12)


def test_correlate_validation():
    recs = records_from({0: [100, 200], 1: [150]})
    with pytest.raises(ValueError):
        correlate(recs, 0, 1, window_ps=100.0, bin_width_ps=100.0)
    with pytest.raises(ValueError):
        correlate(recs, 0, 3, window_ps=1000.0, bin_width_ps=100.0)
    same = records_from({0: [500, 500]})
    with pytest.raises(ValueError):
        correlate(same, 0, 0, window_ps=1000.0, bin_width_ps=100.0)


def test_uncorrelated_streams_normalize_to_unity():
    rng = np.random.default_rng(99)
    span = 1.0e12
    recs = []
    for ch in (0, 1):
        n = rng.poisson(10_000)
        times = np.sort(rng.integers(0, int(span), n))
        recs += [PhotonRecord(ch, int(t)) for t in times]
    hist = correlate(recs, 0, 1, window_ps=5.0e7, bin_width_ps=1.0e6)
    sigma = 1.0 / np.sqrt(hist.normalization)
    assert np.all(np.abs(hist.g2 - 1.0) < 3.0 * sigma + 3.0 * sigma ** 2)
    assert abs(hist.wing_level - 1.0) < 0.05


def test_correlated_stream_warns_about_normalization():
    base = np.arange(1, 2001) * 1_000_000
    recs = records_from({0: base, 1: base + 10})
    with pytest.warns(NormalizationWarning):
        correlate(recs, 0, 1, window_ps=4.0e5, bin_width_ps=1.0e4)


def synthetic_dip_histogram(g2_zero=0.22, tau0=2.0e6, seed=5, norm=5000.0):
    m = 50
    w = 1.0e5
    edges = np.arange(-m, m + 1) * w
    centers = 0.5 * (edges[:-1] + edges[1:])
    model = 1.0 - (1.0 - g2_zero) * np.exp(-np.abs(centers) / tau0)
    counts = np.random.default_rng(seed).poisson(norm * model)
    return CorrelationHistogram(edges, counts, norm, 10_000, 10_000, 1.0e12)


def test_fit_g2_recovers_antibunching_dip():
    hist = synthetic_dip_histogram()
    report = fit_g2(hist)
    assert report.converged
    assert report.model_name == "antibunching_dip"
    assert abs(report.value("g2_zero") - 0.22) < 0.02
    assert abs(report.value("tau0") - 2.0e6) / 2.0e6 < 0.05
    assert "g2(0) >= 0.5: not a single emitter" not in report.warnings


def test_fit_g2_flags_non_single_emitter():
    hist = synthetic_dip_histogram(g2_zero=0.7, seed=6)
    est = G2Fitter().fit(hist.centers, hist.g2)
    assert not est.single_emitter_
    assert any("not a single emitter" in w for w in est.report_.warnings)


def test_fit_g2_warns_on_short_window():
    hist = synthetic_dip_histogram(tau0=4.0e6, seed=7)
    report = fit_g2(hist)
    assert any("less than 5 fitted recovery times" in w
               for w in report.warnings)


def test_g2_fitter_validation():
    with pytest.raises(ValueError):
        G2Fitter().fit(np.arange(4.0), np.ones(4))
    with pytest.raises(ValueError):
        G2Fitter().fit(np.arange(6.0), np.ones(5))


def test_g2_fitter_predict():
    hist = synthetic_dip_histogram()
    est = G2Fitter().fit(hist.centers, hist.g2)
    tau = np.array([0.0, 1e6, 1e8])
    pred = est.predict(tau)
    assert_allclose(pred[0], est.g2_zero_, rtol=1e-10)
    assert_allclose(pred[2], 1.0, rtol=1e-6)


def pulsed_histogram(center_area=100, side_area=1000, period=1.0e6):
    m = 70
    w = 5.0e4
    edges = np.arange(-m, m + 1) * w
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = np.zeros(2 * m, dtype=np.int64)
    for k in range(-3, 4):
        idx = int(np.argmin(np.abs(centers - k * period)))
        counts[idx] = center_area if k == 0 else side_area
    return CorrelationHistogram(edges, counts, 1.0, 1000, 1000, 1.0e12)


def test_pulsed_g2_ratio_of_peak_areas():
    hist = pulsed_histogram()
    value, err = pulsed_g2(hist, rep_period_ps=1.0e6)
    assert_allclose(value, 0.1, rtol=1e-12)
    assert_allclose(err, 0.1 * np.sqrt(1.0 / 100.0 + 1.0 / 6000.0), rtol=1e-9)


def test_pulsed_g2_needs_side_peaks():
    hist = pulsed_histogram()
    with pytest.raises(ValueError):
        pulsed_g2(hist, rep_period_ps=1.0e7)


def test_lifetime_fit_exact_on_clean_decay():
    centers = np.arange(0.0, 50_000.0, 100.0) + 50.0
    counts = 1000.0 * np.exp(-centers / 2000.0)
    report = fit_lifetime(centers, counts)
    assert report.converged
    assert_allclose(report.value("tau"), 2000.0, rtol=1e-6)
    assert abs(report.value("background")) < 0.5


def test_lifetime_fit_with_background_and_noise():
    rng = np.random.default_rng(12)
    centers = np.arange(0.0, 40_000.0, 100.0) + 50.0
    model = 5000.0 * np.exp(-centers / 2000.0) + 50.0
    counts = rng.poisson(model).astype(float)
    est = LifetimeFitter().fit(centers, counts)
    assert abs(est.tau_ - 2000.0) / 2000.0 < 0.05
    assert abs(est.background_ - 50.0) < 10.0


def test_lifetime_fit_skips_rising_edge():
    centers = np.arange(0.0, 30_000.0, 100.0) + 50.0
    rise = 1.0 - np.exp(-centers / 150.0)
    counts = 2000.0 * rise * np.exp(-centers / 2000.0) + 10.0
    est = LifetimeFitter(tail_offset=4).fit(centers, counts)
    assert abs(est.tau_ - 2000.0) / 2000.0 < 0.02


def test_lifetime_flat_histogram_raises():
    centers = np.arange(0.0, 6000.0, 100.0)
    with pytest.raises(NoDecayError):
        fit_lifetime(centers, np.full(60, 100.0))


def test_lifetime_noise_only_histogram_raises():
    rng = np.random.default_rng(42)
    centers = np.arange(0.0, 6000.0, 100.0)
    with pytest.raises(NoDecayError):
        fit_lifetime(centers, rng.poisson(100, 60).astype(float))


def test_lifetime_needs_tail_bins_past_peak():
    centers = np.arange(0.0, 2000.0, 100.0)
    counts = np.linspace(10.0, 500.0, 20)  # peak in the last bin
    with pytest.raises(ValueError):
        fit_lifetime(centers, counts)


def test_lifetime_predict_matches_model():
    centers = np.arange(0.0, 50_000.0, 100.0) + 50.0
    counts = 1000.0 * np.exp(-centers / 2000.0) + 20.0
    est = LifetimeFitter().fit(centers, counts)
    tail = centers[centers >= est.t_start_]
    assert_allclose(est.predict(tail),
                    1000.0 * np.exp(-tail / 2000.0) + 20.0, rtol=1e-4)


def test_correlation_histogram_validation():
    edges = np.arange(-2, 3) * 100.0
    with pytest.raises(ValueError):
        CorrelationHistogram(edges, np.ones(3), 1.0, 1, 1, 100.0)
    with pytest.raises(ValueError):
        CorrelationHistogram(edges, -np.ones(4), 1.0, 1, 1, 100.0)
    with pytest.raises(ValueError):
        CorrelationHistogram(edges, np.ones(4), 0.0, 1, 1, 100.0)


def test_g2_property_is_counts_over_normalization():
    edges = np.arange(-2, 3) * 100.0
    hist = CorrelationHistogram(edges, np.array([2, 4, 6, 8]), 4.0, 5, 5, 1e6)
    assert_allclose(hist.g2, [0.5, 1.0, 1.5, 2.0])
    assert_allclose(hist.centers, [-150.0, -50.0, 50.0, 150.0])
