import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etfrmd.analysis import InterferenceQuery, interference_discrete, interference_exact
from etfrmd.kpa import (Boundary, KpaConfig, default_mu, encode, enhance, estimate_chirp_rate,
                        kernel_coefficients, kernel_phase, kpa_extract_mode, lag_window,
                        quarter_shift, refine_if, select_window_length)
from etfrmd.ridge import IFTrack, TrackSource, estimate_initial_ifs
from etfrmd.signals import (ModeKind, ModeSpec, NoiseSpec, TimeSeries, analytic,
                            synthesize_mode, synthesize_multimode)
from etfrmd.tfa import StftConfig, stft

FS = 1024.0
EDGE = math.ceil(3 * 0.04 * FS)


def tone(f, n=1024, amp=1.0, phase=0.0):
    return amp * np.cos(2 * np.pi * f * np.arange(n) / FS + phase)


def interior(x, k):
    return np.asarray(x)[k:len(x) - k]


# --------------------------------------------------------------- encode ---

def test_zero_signal_encodes_to_zero_phase():
    z = encode(TimeSeries(np.zeros(64), FS), mu=10.0)
    assert not np.any(z.phase)
    assert np.all(z.z == 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 100))
def test_encoded_signal_has_unit_modulus(seed, mu):
    x = np.random.default_rng(seed).uniform(-1, 1, 300)
    z = encode(TimeSeries(x, FS), mu)
    assert np.max(np.abs(np.abs(z.z) - 1)) < 1e-12


def test_encoded_if_equals_scaled_signal():
    x = tone(100.0)
    z = encode(TimeSeries(x, FS), mu=30.0)
    inst = np.diff(z.phase) * FS / (2 * np.pi)
    assert np.max(np.abs(inst - 30.0 * x[1:])) < 1e-9
    # stored unwrapped: the phase keeps growing past 2 pi
    big = encode(TimeSeries(np.ones(2000), FS), mu=100.0)
    assert big.phase[-1] > 100 * 2 * np.pi


def test_nyquist_violation_names_admissible_mu():
    x = TimeSeries(2 * tone(50.0), FS)
    with pytest.raises(ValueError, match="largest admissible mu is below 256"):
        encode(x, mu=300.0)


def test_default_mu_keeps_encoded_if_at_one_eighth_of_fs():
    x = TimeSeries(3 * tone(40.0), FS)
    assert default_mu(x) * 3 == pytest.approx(FS / 8)


# --------------------------------------------------------------- kernel ---

def test_quarter_shift():
    assert quarter_shift(256.0, FS) == 1
    assert quarter_shift(200.0, FS) == 1
    assert quarter_shift(100.0, FS) == 3
    assert quarter_shift(400.0, FS) == 1


def test_kernel_coefficients_textbook_form():
    a2, b1, b2 = kernel_coefficients(200.0, 3, FS, exact=False)
    c = math.pi * 200 * 3 / FS
    assert a2 == 1
    assert b1 == pytest.approx(c * math.sin(2 * math.pi * 200 * 3 / FS))
    assert b2 == pytest.approx(c * math.cos(2 * math.pi * 200 * 3 / FS))


def test_exact_coefficients_approach_textbook_at_low_frequency():
    # an exact quarter period (fs / 4f integer) and f T -> 0
    for f in (4.0, 8.0):
        for l in (1, 5, 16):
            _, b1, b2 = kernel_coefficients(f, l, FS, exact=True)
            _, t1, t2 = kernel_coefficients(f, l, FS, exact=False)
            assert b1 == pytest.approx(t1, rel=1e-3, abs=1e-6)
            assert b2 == pytest.approx(t2, rel=1e-3, abs=1e-6)


@pytest.mark.parametrize("f, theta", [(200.0, 0.3), (123.4, 1.9), (37.0, 4.0)])
@pytest.mark.parametrize("l", [1, 2, 7, 16, -5])
def test_kernel_phase_recovers_clean_tone(f, theta, l):
    x = 0.8 * tone(f, 2048, phase=theta)
    mu = 40.0
    z = encode(TimeSeries(x, FS), mu)
    n = np.arange(200, 1848)
    est = kernel_phase(z, n, l, f) / (2 * np.pi * l * mu / FS)
    assert np.max(np.abs(est - x[n])) < 1e-6


def test_kernel_ratio_is_even_in_lag():
    x = tone(150.0, 512, phase=0.4)
    z = encode(TimeSeries(x, FS), 20.0)
    n = np.arange(100, 400)
    scale = 2 * np.pi * 20.0 / FS
    for l in (1, 3, 9):
        pos = kernel_phase(z, n, l, 150.0) / (scale * l)
        neg = kernel_phase(z, n, -l, 150.0) / (scale * -l)
        assert np.max(np.abs(pos - neg)) < 1e-9
        assert np.max(np.abs(kernel_phase(z, n, l, 150.0) + kernel_phase(z, n, -l, 150.0))) < 1e-9


def test_kernel_phase_of_zero_signal():
    z = encode(TimeSeries(np.zeros(128), FS), 5.0)
    assert not np.any(kernel_phase(z, np.arange(128), 4, 77.0))


def test_kernel_phase_rejects_bad_arguments():
    z = encode(TimeSeries(tone(50.0, 64), FS), 5.0)
    with pytest.raises(ValueError):
        kernel_phase(z, 10, 2, 0.0)
    with pytest.raises(ValueError):
        kernel_phase(z, 10, 0, 50.0)


def test_lag_window_is_symmetric_without_zero():
    l = lag_window(8)
    assert l.tolist() == [-4, -3, -2, -1, 1, 2, 3, 4]
    assert 0 not in lag_window(32) and np.sum(lag_window(32)) == 0


# ------------------------------------------------------------ extraction ---

@pytest.mark.parametrize("L", [8, 16, 32, 64])
def test_clean_tone_is_extracted_exactly(L):
    x = tone(200.0, 1024, phase=0.6)
    z = encode(TimeSeries(x, FS))
    y = kpa_extract_mode(z, np.full(1024, 200.0), KpaConfig(L=L)).samples
    k = L // 2 + 2
    assert np.max(np.abs(interior(y - x, k))) < 1e-3


def test_generated_mode_is_extracted_with_its_track():
    ts, track = synthesize_mode(ModeSpec(ModeKind.LFM, f0=180.0), 1024, FS)
    y = kpa_extract_mode(encode(ts), IFTrack(track), KpaConfig(L=32)).samples
    assert np.max(np.abs(interior(y - ts.samples, 20))) < 1e-3


def test_extraction_is_independent_of_mu():
    ts, track = synthesize_mode(ModeSpec(ModeKind.SFM, carrier=150.0, depth=20.0,
                                         mod_rate=2.0), 1024, FS)
    a = kpa_extract_mode(encode(ts, 10.0), track, KpaConfig(L=32)).samples
    b = kpa_extract_mode(encode(ts, 20.0), track, KpaConfig(L=32)).samples
    assert np.max(np.abs(a - b)) < 1e-9


@pytest.mark.parametrize("L", [4, 6])
def test_cross_mode_error_stays_below_interference_prediction(L):
    # L ~ fs / f_delta for f_delta = 200 Hz
    n = np.arange(4096)
    x1 = np.cos(2 * np.pi * 200 * n / FS)
    x2 = np.cos(2 * np.pi * 400 * n / FS + 0.7)
    z = encode(TimeSeries(x1 + x2, FS))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        y = kpa_extract_mode(z, np.full(4096, 200.0), KpaConfig(L=L)).samples
    err = interior(y - x1, 300)
    ref = interior(x2, 300)
    gain = float(np.dot(err, ref) / np.dot(ref, ref))
    predicted = interference_exact(InterferenceQuery(200.0, 400.0, L=L))
    assert abs(gain) <= 1.1 * abs(predicted)
    # the discrete model of the extractor predicts the measured leakage exactly
    assert gain == pytest.approx(interference_discrete(InterferenceQuery(200.0, 400.0, L=L)),
                                 abs=1e-9)


def test_extraction_suppresses_noise():
    raw, kpa = [], []
    for seed in range(50):
        s, truth = synthesize_multimode([ModeSpec(ModeKind.LFM, f0=200.0)],
                                        NoiseSpec(0.0, seed), 1024, FS)
        y = kpa_extract_mode(encode(s), np.full(1024, 200.0), KpaConfig(L=32)).samples
        raw.append(np.mean((s.samples - truth.clean) ** 2))
        kpa.append(np.mean((y - truth.clean) ** 2))
    assert np.mean(kpa) < np.mean(raw)


def test_sum_of_extractions_is_consistent():
    s, truth = synthesize_multimode([ModeSpec(ModeKind.LFM, f0=120.0),
                                     ModeSpec(ModeKind.LFM, f0=240.0, amplitude=0.5)],
                                    NoiseSpec(5.0, 1), 1024, FS)
    z = encode(s)
    modes = [kpa_extract_mode(z, tr) for tr in truth.tracks]
    total = np.sum([m.samples for m in modes], axis=0)
    again = (kpa_extract_mode(z, truth.tracks[0]).samples
             + kpa_extract_mode(z, truth.tracks[1]).samples)
    assert np.array_equal(total, again)


def test_extraction_preconditions():
    z = encode(TimeSeries(tone(100.0, 256), FS))
    with pytest.raises(ValueError, match="non-positive"):
        kpa_extract_mode(z, np.r_[np.full(255, 100.0), 0.0])
    with pytest.raises(ValueError):
        kpa_extract_mode(z, np.full(100, 100.0))
    with pytest.raises(ValueError):
        kpa_extract_mode(z, np.full(256, 100.0), L=7)
    with pytest.warns(RuntimeWarning, match="fs/4"):
        kpa_extract_mode(z, np.full(256, 300.0))


@pytest.mark.parametrize("boundary", list(Boundary))
def test_boundary_policies_agree_in_the_interior(boundary):
    x = tone(90.0, 512, phase=1.0)
    z = encode(TimeSeries(x, FS))
    ref = kpa_extract_mode(z, np.full(512, 90.0), KpaConfig(L=16)).samples
    y = kpa_extract_mode(z, np.full(512, 90.0), KpaConfig(L=16, boundary=boundary)).samples
    assert np.all(np.isfinite(y))
    assert np.max(np.abs(interior(y - ref, 20))) < 1e-12


def test_config_validation():
    for bad in (dict(L=7), dict(L=0), dict(K=0), dict(epsilon2=0), dict(search_halfwidth=-1),
                dict(boundary="wrap")):
        with pytest.raises(ValueError):
            KpaConfig(**bad)
    cfg = KpaConfig()
    assert cfg.K == 3 and cfg.L == 32


# --------------------------------------------------------------- refine ---

def test_refined_track_of_clean_tone():
    tr = refine_if(TimeSeries(tone(200.0), FS))
    assert tr.source is TrackSource.REFINED
    assert np.all(np.abs(interior(tr.freqs_hz, EDGE) - 200.0) <= FS / 1024)


def test_zero_mode_is_pinned_to_bin_zero_with_warning():
    tr = refine_if(TimeSeries(np.zeros(256), FS))
    assert np.all(tr.bins == 0) and tr.warning


def test_banded_refinement_stays_near_previous_track():
    x = tone(100.0) + 3 * tone(300.0)
    around = IFTrack(np.full(1024, 110.0))
    tr = refine_if(TimeSeries(x, FS), StftConfig(), around, 20)
    assert np.all(np.abs(interior(tr.freqs_hz, EDGE) - 100.0) <= 1)
    assert np.all(np.abs(interior(refine_if(TimeSeries(x, FS)).freqs_hz, EDGE) - 300.0) <= 1)


def test_refined_clean_extraction_beats_noisy_initial_track():
    spec = ModeSpec(ModeKind.SFM, carrier=200.0, depth=40.0, mod_rate=1.5)
    clean, track = synthesize_mode(spec, 1024, FS)
    refined = refine_if(kpa_extract_mode(encode(clean), track))
    refined_rms = np.sqrt(np.mean(interior(refined.freqs_hz - track, EDGE) ** 2))
    initial_rms = []
    for seed in range(20):
        s, _ = synthesize_multimode([spec], NoiseSpec(0.0, seed), 1024, FS)
        tr = estimate_initial_ifs(stft(analytic(s), StftConfig(), FS))[0]
        initial_rms.append(np.sqrt(np.mean(interior(tr.freqs_hz - track, EDGE) ** 2)))
    assert refined_rms < np.mean(initial_rms)


# -------------------------------------------------------------- enhance ---

def test_single_round_equals_manual_extract_and_refine():
    s, truth = synthesize_multimode([ModeSpec(ModeKind.LFM, f0=150.0, rate=40.0)],
                                    NoiseSpec(5.0, 2), 1024, FS)
    init = estimate_initial_ifs(stft(analytic(s), StftConfig(), FS))
    cfg = KpaConfig(K=1)
    tracks, modes = enhance(s, init, cfg)
    manual_mode = kpa_extract_mode(encode(s, cfg.mu), init[0], cfg)
    manual_track = refine_if(manual_mode, StftConfig(), init[0], cfg.search_halfwidth)
    assert np.array_equal(modes[0].samples, manual_mode.samples)
    assert np.array_equal(tracks[0].bins, manual_track.bins)


def test_enhance_needs_a_track():
    with pytest.raises(ValueError):
        enhance(TimeSeries(tone(100.0), FS), [])


def test_enhance_lifts_tracks_off_dc():
    s = TimeSeries(tone(100.0), FS)
    start = IFTrack.from_bins(np.r_[np.zeros(10, int), np.full(1014, 100)], FS, 1024)
    tracks, modes = enhance(s, [start])
    assert np.all(tracks[0].bins >= 1)
    assert np.all(np.isfinite(modes[0].samples))


@pytest.mark.filterwarnings("ignore:pivot frequency above")
def test_enhancement_improves_crossing_tracks():
    from etfrmd.signals import synthesize_preset
    from etfrmd.pipeline import match_tracks
    for seed in range(3):
        s, truth = synthesize_preset("fig1b", 5.0, seed)
        init = estimate_initial_ifs(stft(analytic(s), StftConfig(), FS))
        enh, _ = enhance(s, init)
        pairs = match_tracks(enh, truth.tracks, 1024, EDGE)
        for i, k in enumerate(pairs):
            e0 = np.sqrt(np.mean(interior(init[i].freqs_hz - truth.tracks[k], EDGE) ** 2))
            e1 = np.sqrt(np.mean(interior(enh[i].freqs_hz - truth.tracks[k], EDGE) ** 2))
            assert e1 <= e0 + 0.5


# ------------------------------------------------------- window lengths ---

def test_window_length_for_ten_hz_per_second():
    assert select_window_length(10, 1e-2, 1024) == 36


def test_window_length_without_chirp_is_the_cap():
    assert select_window_length(0, 1e-2, 1024, cap=200) == 200


def test_window_length_for_one_hz_per_second_by_scan():
    # direct scan: largest even L whose max elementary phase stays under the budget
    ok = [L for L in range(2, 400, 2) if math.pi * 1 * (L / 2) ** 2 / 1024 ** 2 < 1e-2]
    assert max(ok) == 114
    assert select_window_length(1, 1e-2, 1024, cap=1000) == 114


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 500), st.floats(1e-4, 0.5), st.sampled_from([256.0, 1024.0, 8000.0]))
def test_window_length_is_largest_admissible(r0, eps2, fs):
    L = select_window_length(r0, eps2, fs, cap=1 << 20)
    assert L % 2 == 0 and L >= 2
    if L > 2:
        assert math.pi * r0 * (L / 2) ** 2 / fs ** 2 < eps2
    assert not math.pi * r0 * ((L + 2) / 2) ** 2 / fs ** 2 < eps2


def test_window_length_rejects_bad_budget():
    with pytest.raises(ValueError):
        select_window_length(1, 0, 1024)


def test_chirp_rate_of_constant_track():
    assert estimate_chirp_rate(np.full(200, 100.0), FS) == 0


def test_chirp_rate_of_linear_track():
    t = np.arange(1024) / FS
    assert estimate_chirp_rate(100 + 50 * t, FS) == pytest.approx(50, rel=0.1)


def test_chirp_rate_ignores_bin_jitter():
    rng = np.random.default_rng(8)
    bins = 200 + rng.integers(-2, 3, 1024)
    rate = estimate_chirp_rate(IFTrack.from_bins(bins, FS, 1024), FS)
    assert rate < 0.1 * FS ** 2 / 1024


def test_chirp_rate_needs_eight_samples():
    with pytest.raises(ValueError):
        estimate_chirp_rate(np.ones(5), FS)


def test_window_is_chosen_from_track_when_unset():
    from etfrmd.kpa import window_for
    t = np.arange(1024) / FS
    track = IFTrack(100 + 10 * t)
    assert window_for(track, KpaConfig(L=None), FS) == select_window_length(
        estimate_chirp_rate(track, FS), 1e-2, FS, 256)
    assert window_for(track, KpaConfig(L=20), FS) == 20
