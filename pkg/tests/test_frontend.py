import numpy as np
import pytest

from audio_ingest import AudioClip
from frontend import FeatureFrame, FeatureMode, FramingConfig, build_frame_set, clip_features, \
    dft_real, extract_frames, feature_length, fft, frame_count, freq_features, hamming, ifft, \
    nyquist_value, read_frame_cache, reconstruct_frame, scale_spectral, write_frame_cache

N = 2400


def naive_dft(x):
    """O(N^2) reference transform along the first axis, evaluated a block of rows at a time."""
    n = x.shape[0]
    index = np.arange(n)
    out = np.empty(x.shape, dtype=np.complex128)
    for start in range(0, n, 256):
        k = index[start:start + 256, None]
        out[start:start + 256] = np.exp(-2j * np.pi * ((k * index[None, :]) % n) / n) @ x
    return out


class TestFramingConfig:

    def test_default_sizes(self):
        cfg = FramingConfig()
        assert cfg.window_samples == 2400
        assert cfg.step_samples == 80

    def test_window_shorter_than_step(self):
        with pytest.raises(ValueError):
            FramingConfig(window_ms=5, step_ms=10)

    def test_fractional_window(self):
        with pytest.raises(ValueError):
            FramingConfig(window_ms=150.03)


class TestExtractFrames:

    @pytest.mark.parametrize("length, expected", [(2400, 1), (2480, 2), (80000, 971)])
    def test_frame_counts(self, length, expected):
        frames = extract_frames(AudioClip(np.zeros(length), 16000), FramingConfig())
        assert frames.shape == (expected, N)

    def test_frames_are_windows_in_start_order(self):
        samples = np.random.default_rng(0).uniform(-1, 1, 3000)
        frames = extract_frames(AudioClip(samples, 16000), FramingConfig())
        for i, frame in enumerate(frames):
            np.testing.assert_array_equal(frame, samples[i * 80:i * 80 + N])

    def test_short_clip_is_padded(self):
        samples = np.linspace(-1, 1, 1000)
        frames = extract_frames(AudioClip(samples, 16000), FramingConfig())
        assert frames.shape == (1, N)
        np.testing.assert_array_equal(frames[0, :1000], samples)
        assert not frames[0, 1000:].any()

    def test_count_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            window = int(rng.integers(1, 200))
            step = int(rng.integers(1, window + 1))
            length = int(rng.integers(1, 1000))
            starts = [s for s in range(0, length, step) if s + window <= length]
            assert frame_count(length, window, step) == max(len(starts), 1)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError):
            extract_frames(AudioClip(np.zeros(4000), 8000), FramingConfig())


class TestHamming:

    def test_endpoint_and_centre(self):
        weights = hamming(np.ones(101))
        assert weights[0] == pytest.approx(0.08)
        assert weights[50] == pytest.approx(1.0)

    def test_identity_input_gives_coefficients(self):
        n = np.arange(N)
        np.testing.assert_allclose(hamming(np.ones(N)), 0.54 - 0.46 * np.cos(2 * np.pi * n / (N - 1)),
                                   atol=1e-12)


class TestTransform:

    def test_impulse(self):
        x = np.zeros(N)
        x[0] = 1.0
        np.testing.assert_allclose(dft_real(x), np.ones(N), atol=1e-9)

    def test_constant(self):
        spectrum = dft_real(np.ones(N))
        assert spectrum[0].real == pytest.approx(N)
        assert np.max(np.abs(spectrum[1:])) < 1e-8

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        frames = rng.uniform(-1, 1, (50, N))
        oracle = naive_dft(frames.T).T
        for frame, expected in zip(frames, oracle):
            assert np.max(np.abs(dft_real(frame) - expected)) < 1e-6

    @pytest.mark.parametrize("n", [1, 2, 3, 13, 17, 97, 194, 360, 1000, 1201])
    def test_other_lengths(self, n):
        x = np.random.default_rng(n).standard_normal(n) + 1j * np.random.default_rng(n + 1).standard_normal(n)
        np.testing.assert_allclose(fft(x), np.fft.fft(x), atol=1e-8 * n)

    def test_batched_rows(self):
        x = np.random.default_rng(3).standard_normal((4, 240))
        np.testing.assert_allclose(fft(x), np.fft.fft(x, axis=-1), atol=1e-9)

    def test_conjugate_symmetry(self):
        spectrum = dft_real(np.random.default_rng(4).standard_normal(N))
        np.testing.assert_allclose(spectrum[1:][::-1], np.conj(spectrum[1:]), atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal(N), rng.standard_normal(N)
        a, b = 0.7, -2.3
        lhs = dft_real(a * x + b * y)
        rhs = a * dft_real(x) + b * dft_real(y)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))

    def test_parseval(self):
        x = np.random.default_rng(6).standard_normal(N)
        energy = np.sum(x ** 2)
        assert np.sum(np.abs(dft_real(x)) ** 2) / N == pytest.approx(energy, rel=1e-6)

    def test_inverse(self):
        x = np.random.default_rng(7).standard_normal(N)
        np.testing.assert_allclose(ifft(fft(x)).real, x, atol=1e-10)

    def test_empty(self):
        with pytest.raises(ValueError):
            fft(np.zeros(0))


class TestFreqFeatures:

    def test_dc_window(self):
        frame = freq_features(np.ones(N))
        assert frame.values.shape == (N,)
        assert frame.values[0] == pytest.approx(N)
        assert np.max(frame.values[1:1200]) < 1e-8
        assert frame.values[1200] == pytest.approx(0.0, abs=1e-12)

    def test_silent_window(self):
        frame = freq_features(np.zeros(N))
        assert not frame.values.any()

    def test_sine_at_bin_ten(self):
        n = np.arange(N)
        frame = freq_features(np.sin(2 * np.pi * 10 * n / N))
        magnitude, phase = frame.values[:1200], frame.values[1200:]
        assert np.argmax(magnitude) == 10
        assert magnitude[10] == pytest.approx(1200)
        assert phase[10] == pytest.approx(-np.pi / 2)

    def test_phase_range(self):
        frame = freq_features(hamming(np.random.default_rng(8).uniform(-1, 1, N)))
        assert np.all(frame.values[1200:] > -np.pi)
        assert np.all(frame.values[1200:] <= np.pi)

    @pytest.mark.parametrize("mode, part", [("freq-mag-only", slice(0, 1200)),
                                            ("freq-phase-only", slice(1200, 2400))])
    def test_single_part_modes(self, mode, part):
        window = hamming(np.random.default_rng(9).uniform(-1, 1, N))
        full = freq_features(window)
        single = freq_features(window, mode, "clip", 3)
        assert single.mode.value == FeatureMode.parse(mode).value
        assert single.clip_id == "clip"
        assert single.frame_index == 3
        np.testing.assert_array_equal(single.values, full.values[part])

    def test_reconstruction(self):
        window = hamming(np.random.default_rng(10).uniform(-1, 1, N))
        values = freq_features(window).values
        rebuilt = reconstruct_frame(values, nyquist_value(window))
        assert np.max(np.abs(rebuilt - window)) < 1e-6

    def test_feature_lengths(self):
        assert feature_length("time", N) == 2400
        assert feature_length("freq", N) == 2400
        assert feature_length("freq-mag", N) == 1200
        assert feature_length("freq-phase-only", N) == 1200

    def test_frame_length_checked(self):
        with pytest.raises(ValueError):
            FeatureFrame(np.zeros(2400), "freq-mag")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            FeatureMode.parse("mel")


class TestClipFeatures:

    def test_time_mode_values_in_range(self):
        samples = np.random.default_rng(12).uniform(-1, 1, 4000)
        features = clip_features(AudioClip(samples, 16000), "time", FramingConfig())
        assert features.dtype == np.float32
        assert features.shape == (21, N)
        assert np.all(np.abs(features) <= 1.0)

    def test_freq_mode_matches_single_frame(self):
        samples = np.random.default_rng(13).uniform(-1, 1, 2560)
        features = clip_features(AudioClip(samples, 16000), "freq", FramingConfig())
        expected = scale_spectral(freq_features(hamming(samples[80:80 + N])).values, "freq", N)
        np.testing.assert_allclose(features[1], expected, rtol=1e-5, atol=1e-5)

    def test_spectral_scale(self):
        values = freq_features(np.ones(N)).values
        scaled = scale_spectral(values, "freq", N)
        assert scaled[0] == pytest.approx(np.sqrt(N))
        np.testing.assert_array_equal(scaled[1200:], values[1200:] / np.pi)
        np.testing.assert_allclose(scale_spectral(values[:1200], "freq-mag", N), scaled[:1200])
        np.testing.assert_allclose(scale_spectral(values[1200:], "freq-phase", N), scaled[1200:])
        with pytest.raises(ValueError):
            scale_spectral(values, "time", N)

    def test_scaled_features_are_bounded(self):
        # amplitudes in [-1, 1]: |X[k]| <= N, so scaled magnitudes stay below sqrt(N)
        samples = np.random.default_rng(14).uniform(-1, 1, 4000)
        features = clip_features(AudioClip(samples, 16000), "freq", FramingConfig())
        assert np.all(features[:, :1200] >= 0.0)
        assert np.max(features[:, :1200]) < np.sqrt(N)
        assert np.all(np.abs(features[:, 1200:]) <= 1.0)


class TestFrameSet:

    def test_build_from_corpus(self, small_corpus, short_framing):
        manifest, _ = small_corpus
        frame_set = build_frame_set(manifest.entries, "freq", short_framing)
        assert frame_set.num_clips == 12
        assert frame_set.feature_length == 960
        np.testing.assert_array_equal(frame_set.frame_counts(), np.full(12, 9))
        np.testing.assert_array_equal(frame_set.labels, np.repeat(frame_set.clip_labels, 9))

    def test_workers_do_not_change_output(self, small_corpus, short_framing):
        manifest, _ = small_corpus
        serial = build_frame_set(manifest.entries, "time", short_framing)
        threaded = build_frame_set(manifest.entries, "time", short_framing, workers=3)
        np.testing.assert_array_equal(serial.features, threaded.features)
        assert serial.clip_ids == threaded.clip_ids

    def test_empty_entries(self, short_framing):
        with pytest.raises(ValueError):
            build_frame_set([], "time", short_framing)

    def test_cache_file(self, small_corpus, short_framing, tmp_path):
        manifest, _ = small_corpus
        frame_set = build_frame_set(manifest.entries[:4], "freq-mag", short_framing)
        path = write_frame_cache(tmp_path / "train.aerf", frame_set)
        loaded = read_frame_cache(path)
        assert loaded.mode is FeatureMode.FREQ_MAG
        assert loaded.clip_ids == frame_set.clip_ids
        np.testing.assert_array_equal(loaded.features, frame_set.features)
        np.testing.assert_array_equal(loaded.clip_index, frame_set.clip_index)

    def test_cache_rejects_other_files(self, tmp_path):
        path = tmp_path / "bogus.aerf"
        path.write_bytes(b"XXXX" + bytes(32))
        with pytest.raises(ValueError):
            read_frame_cache(path)
