import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import naive_delta, naive_logmel, naive_stft_energy
from subspec.audio_io import AudioClip
from subspec.dsp import (
    BandScheme,
    NormStats,
    SpectrogramConfig,
    baseline_features,
    build_mel_filterbank,
    compute_stats,
    count_frames,
    count_windows,
    delta_channels,
    denormalize_features,
    extract_features,
    hz_to_mel,
    logmel,
    mel_to_hz,
    normalize_features,
    stft_energy,
)
from subspec.errors import BandError, DegenerateBandError, SampleRateError, ShapeError, StatsError, WindowRangeError

CFG = SpectrogramConfig()
N_SAMPLES_60 = 59 * 512 + 1024  # exactly one 60-frame window


def test_cosine_lands_on_its_bin():
    T, m0 = 1024, 37
    t = np.arange(N_SAMPLES_60)
    E = stft_energy(np.cos(2 * np.pi * m0 * t / T), CFG).values
    assert E.shape == (60, 512)
    np.testing.assert_allclose(E[:, m0 - 1], (T / 2) ** 2, rtol=1e-9)
    others = np.delete(E, m0 - 1, axis=1)
    assert others.max() < 1e-12 * (T / 2) ** 2


def test_matches_direct_sum_dft(rng):
    x = rng.standard_normal(N_SAMPLES_60 + 512 * 30)
    fast = stft_energy(x, CFG, window_index=1).values
    slow = naive_stft_energy(x, start_frame=30)
    np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-9)


def test_window_out_of_range():
    with pytest.raises(WindowRangeError):
        stft_energy(np.zeros(N_SAMPLES_60), CFG, window_index=1)


@settings(max_examples=20, deadline=None)
@given(shift=st.integers(0, 511), seed=st.integers(0, 2**16))
def test_energy_is_parseval_consistent(shift, seed):
    # Parseval over a frame: sum_m |X_m|^2 (all bins) == T * sum x^2. The
    # kept bins 1..T/2 cover half the spectrum minus DC and Nyquist.
    x = np.random.default_rng(seed).standard_normal(N_SAMPLES_60 + shift)[shift:]
    E = stft_energy(x, CFG).values
    T = 1024
    for n in (0, 59):
        frame = x[n * 512:n * 512 + T]
        full = np.abs(np.fft.fft(frame)) ** 2
        expected = (T * np.sum(frame ** 2) - full[0] - full[T // 2]) / 2 + full[T // 2]
        assert E[n].sum() == pytest.approx(expected, rel=1e-9)


def test_mel_scale():
    assert float(hz_to_mel(700.0)) == pytest.approx(2595 * np.log10(2))
    f = np.linspace(0, 22050, 50)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)


def test_filterbank_structure():
    bank = build_mel_filterbank(CFG, 0, 22050)
    W = bank.weights
    assert W.shape == (60, 512)
    assert np.all(W >= 0) and np.all(W <= 1)
    np.testing.assert_allclose(W.max(axis=1), 1.0)
    mels = hz_to_mel(bank.center_freqs_hz)
    np.testing.assert_allclose(np.diff(mels), np.diff(mels)[0], rtol=1e-9)
    df = 44100 / 1024
    peaks = W.argmax(axis=1) + 1
    np.testing.assert_array_equal(peaks, np.clip(np.floor(bank.center_freqs_hz / df + 0.5), 1, 512))


@pytest.mark.parametrize("lo,hi", [(0, 10000), (10000, 22050), (3000, 6000), (6000, 10000)])
def test_filters_stay_inside_their_band(lo, hi):
    bank = build_mel_filterbank(CFG, lo, hi)
    freqs = CFG.bin_freqs() if callable(CFG.bin_freqs) else CFG.bin_freqs
    outside = (freqs <= lo) | (freqs >= hi)
    assert not bank.weights[:, outside].any()


def test_subbands_use_disjoint_bins():
    a = build_mel_filterbank(CFG, 0, 10000).weights.any(axis=0)
    b = build_mel_filterbank(CFG, 10000, 22050).weights.any(axis=0)
    assert not (a & b).any()


def test_narrow_band_is_degenerate():
    with pytest.raises(DegenerateBandError) as info:
        build_mel_filterbank(CFG, 0, 3000)
    assert list(info.value.filters) == [0]
    # the explicit policy keeps a one-bin filter instead of failing
    bank = build_mel_filterbank(SpectrogramConfig(empty_filter="nearest"), 0, 3000)
    assert np.count_nonzero(bank.weights[0]) == 1


def test_band_validation():
    with pytest.raises(BandError):
        BandScheme((0, 10000, 5000))
    with pytest.raises(BandError):
        BandScheme((0, 30000)).validate(CFG)
    with pytest.raises(BandError):
        build_mel_filterbank(CFG, 5000, 5000)
    assert BandScheme.from_khz(0, (3, 6, 10), 22.05).bands()[1] == (3000.0, 6000.0)


def test_logmel_matches_loop_oracle(rng):
    x = rng.standard_normal(N_SAMPLES_60)
    spec = stft_energy(x, CFG)
    bank = build_mel_filterbank(CFG, 0, 10000)
    sub = slice(0, 8)
    expected = naive_logmel(spec.values[sub], bank.weights)
    np.testing.assert_allclose(logmel(spec, bank, CFG)[sub], expected, rtol=1e-10)


def test_silence_hits_the_log_floor():
    spec = stft_energy(np.zeros(N_SAMPLES_60), CFG)
    out = logmel(spec, build_mel_filterbank(CFG, 0, 22050), CFG)
    np.testing.assert_allclose(out, np.log(1e-10))


def test_deltas_match_regression_formula(rng):
    x = rng.standard_normal((60, 60))
    t = delta_channels(x)
    assert t.data.shape == (60, 60, 3)
    np.testing.assert_array_equal(t.data[..., 0], x)
    d1 = naive_delta(x)
    np.testing.assert_allclose(t.data[..., 1], d1, atol=1e-12)
    np.testing.assert_allclose(t.data[..., 2], naive_delta(d1), atol=1e-12)


def test_deltas_of_a_ramp_and_a_constant():
    ramp = np.tile(np.arange(60.0)[:, None], (1, 4))
    t = delta_channels(ramp).data
    np.testing.assert_allclose(t[2:-2, :, 1], 1.0)
    const = delta_channels(np.full((10, 3), 4.2)).data
    assert not const[..., 1:].any()
    with pytest.raises(ShapeError):
        delta_channels(np.zeros((4, 3)))


@pytest.mark.parametrize("frames,windows", [(1, 1), (60, 1), (61, 2), (90, 2), (91, 3), (429, 14)])
def test_window_count(frames, windows):
    assert count_windows(frames, CFG) == windows


def test_five_second_clip_gives_14_windows(rng):
    clip = AudioClip(rng.uniform(-0.1, 0.1, 220500), 44100, "c")
    assert count_frames(220500, CFG) == 429
    feats = extract_features(clip, CFG, BandScheme((0, 10000, 22050)))
    assert len(feats) == 28
    assert [(f.window_index, f.band_index) for f in feats[:3]] == [(0, 0), (0, 1), (1, 0)]
    assert all(f.data.shape == (60, 60, 3) for f in feats)


def test_low_band_ignores_high_frequency_content():
    t = np.arange(N_SAMPLES_60) / 44100
    low = 0.3 * np.sin(2 * np.pi * 1000 * t)
    high = 0.3 * np.sin(2 * np.pi * 15000 * t)
    scheme = BandScheme((0, 10000, 22050))
    a = extract_features(AudioClip(low, 44100), CFG, scheme)
    b = extract_features(AudioClip(low + high, 44100), CFG, scheme)
    # rectangular-window leakage of the 15 kHz tone into the low band is a
    # negligible share of that band's energy, while it dominates the high band
    low_a, low_b = np.exp(a[0].data[..., 0]).sum(), np.exp(b[0].data[..., 0]).sum()
    high_a, high_b = np.exp(a[1].data[..., 0]).sum(), np.exp(b[1].data[..., 0]).sum()
    assert abs(low_b - low_a) / low_a < 1e-3
    assert high_b > 1e3 * high_a


def test_single_band_equals_baseline(rng):
    clip = AudioClip(rng.uniform(-0.5, 0.5, 80000), 44100, "c")
    seg = extract_features(clip, CFG, BandScheme.whole_band(CFG))
    base = baseline_features(clip, CFG)
    assert len(seg) == len(base)
    for s, b in zip(seg, base):
        assert s.data.tobytes() == b.data.tobytes()


def test_rate_mismatch():
    with pytest.raises(SampleRateError):
        baseline_features(AudioClip(np.zeros(50000), 22050), CFG)


def test_normalization(rng):
    x = rng.normal(3.0, 2.0, size=(20, 60, 60, 3))
    y, stats = normalize_features(x)
    np.testing.assert_allclose(y.reshape(-1, 3).mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(y.reshape(-1, 3).std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(denormalize_features(y, stats), x, atol=1e-12)
    again = NormStats.from_text(stats.to_text())
    np.testing.assert_array_equal(again.mean, stats.mean)
    np.testing.assert_array_equal(again.std, stats.std)
    z, _ = normalize_features(np.full((2, 4, 4, 3), 7.0))
    assert not z.any()
    with pytest.raises(StatsError):
        compute_stats([])


def test_short_fft_cosine_single_frame():
    cfg = SpectrogramConfig(fft_size=64, n_frames=1, sample_rate_hz=8000)
    m0 = 5
    E = stft_energy(np.cos(2 * np.pi * m0 * np.arange(64) / 64), cfg).values[0]
    assert E[m0 - 1] == pytest.approx(1024, abs=1e-9)
    assert np.max(np.delete(E, m0 - 1)) < 1e-9 * 1024


def test_zero_signal_zero_spectrum():
    assert not stft_energy(np.zeros(N_SAMPLES_60), CFG).values.any()


def test_filter_supports_increase():
    W = build_mel_filterbank(CFG, 0, 22050).weights
    first = np.array([np.flatnonzero(r)[0] for r in W])
    last = np.array([np.flatnonzero(r)[-1] for r in W])
    # the two lowest filters both start at the first bin (bins are wider than
    # the mel spacing there), so the bounds are monotone and the peaks strict
    assert np.all(np.diff(W.argmax(axis=1)) > 0)
    assert np.all(np.diff(first) >= 0) and np.all(np.diff(last) >= 0)
    assert np.all(last >= first)


def test_single_bin_impulse_spectrum():
    from subspec.dsp import EnergySpectrum

    bank = build_mel_filterbank(CFG, 0, 22050)
    E, m_star = 3.5, 200
    values = np.zeros((60, 512))
    values[:, m_star - 1] = E
    out = logmel(EnergySpectrum(values, 512), bank, CFG)
    np.testing.assert_allclose(out[0], np.log(E * bank.weights[:, m_star - 1] + 1e-10))
    with pytest.raises(ShapeError):
        logmel(EnergySpectrum(values[:, :100], 512), bank, CFG)


def test_low_pass_signal_leaves_the_high_band_at_the_floor():
    # bin-aligned tones below 8 kHz have no leakage with a rectangular window
    t = np.arange(N_SAMPLES_60)
    x = sum(0.1 * np.cos(2 * np.pi * m * t / 1024) for m in (12, 70, 150))
    feats = extract_features(AudioClip(x, 44100), CFG, BandScheme((0, 10000, 22050)))
    np.testing.assert_allclose(feats[1].data[..., 0], np.log(1e-10), atol=1e-6)
    assert feats[0].data[..., 0].max() > 0
