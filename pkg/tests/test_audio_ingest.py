import struct

import numpy as np
import pytest

from audio_ingest import AudioClip, decode_wav, encode_wav, load_clip, normalize, resample, to_mono
from errors import DecodeError, EmptyAudioError, UnsupportedFormatError


def wav_bytes(payload, channels=1, rate=16000, bits=16, fmt_code=1, extra_chunks=b"", extensible=False):
    """Hand-built RIFF/WAVE container around raw sample bytes."""
    block_align = channels * bits // 8
    if extensible:
        fmt_body = struct.pack("<HHIIHH", 0xFFFE, channels, rate, rate * block_align, block_align, bits)
        guid_tail = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
        fmt_body += struct.pack("<HHI", 22, bits, 0) + struct.pack("<H", fmt_code) + guid_tail
    else:
        fmt_body = struct.pack("<HHIIHH", fmt_code, channels, rate, rate * block_align, block_align, bits)
    body = (b"WAVE" + b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body + extra_chunks
            + b"data" + struct.pack("<I", len(payload)) + payload)
    return b"RIFF" + struct.pack("<I", len(body)) + body


def tone(frequency, seconds, rate, amplitude=0.5):
    t = np.arange(int(round(seconds * rate))) / rate
    return amplitude * np.sin(2 * np.pi * frequency * t)


class TestDecode:

    def test_16_bit_mono(self):
        payload = np.array([0, 16384, -32768, 32767], dtype="<i2").tobytes()
        clip = decode_wav(wav_bytes(payload), "a.wav")
        np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0, 32767 / 32768])
        assert clip.sample_rate == 16000
        assert clip.source_id == "a.wav"

    def test_24_bit(self):
        payload = b"".join(v.to_bytes(3, "little", signed=True) for v in (0, 0x400000, -0x800000))
        clip = decode_wav(wav_bytes(payload, bits=24))
        np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0])

    def test_32_bit_float(self):
        payload = np.array([0.25, -0.75], dtype="<f4").tobytes()
        clip = decode_wav(wav_bytes(payload, bits=32, fmt_code=3))
        np.testing.assert_array_equal(clip.samples, [0.25, -0.75])

    def test_8_bit_unsigned(self):
        payload = bytes([128, 192, 0, 255])
        clip = decode_wav(wav_bytes(payload, bits=8))
        np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0, 127 / 128])

    def test_64_bit_float(self):
        payload = np.array([0.1, -0.6, 1.0], dtype="<f8").tobytes()
        clip = decode_wav(wav_bytes(payload, bits=64, fmt_code=3))
        np.testing.assert_array_equal(clip.samples, [0.1, -0.6, 1.0])

    def test_extensible_header(self):
        payload = np.array([8192, -8192], dtype="<i2").tobytes()
        clip = decode_wav(wav_bytes(payload, extensible=True))
        np.testing.assert_array_equal(clip.samples, [0.25, -0.25])

    def test_stereo_frames_and_mono_mix(self):
        payload = np.array([16384, 0, -16384, -16384], dtype="<i2").tobytes()
        clip = decode_wav(wav_bytes(payload, channels=2))
        assert clip.samples.shape == (2, 2)
        np.testing.assert_array_equal(to_mono(clip).samples, [0.25, -0.5])

    def test_skips_unknown_chunks_with_padding(self):
        # odd-sized chunk followed by its pad byte
        extra = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\x00"
        payload = np.array([16384], dtype="<i2").tobytes()
        clip = decode_wav(wav_bytes(payload, extra_chunks=extra))
        np.testing.assert_array_equal(clip.samples, [0.5])

    def test_encode_is_read_back(self):
        original = AudioClip(np.array([0.0, 0.5, -0.25, -1.0]), 22050)
        clip = decode_wav(encode_wav(original))
        assert clip.sample_rate == 22050
        np.testing.assert_array_equal(clip.samples, original.samples)


class TestDecodeErrors:

    def test_missing_riff(self):
        with pytest.raises(DecodeError) as info:
            decode_wav(b"RIFX" + bytes(40))
        assert info.value.chunk == "RIFF"

    def test_not_wave(self):
        data = wav_bytes(np.zeros(2, dtype="<i2").tobytes())
        with pytest.raises(DecodeError):
            decode_wav(data[:8] + b"AVI " + data[12:])

    def test_truncated_data_chunk(self):
        data = wav_bytes(np.zeros(100, dtype="<i2").tobytes())
        with pytest.raises(DecodeError) as info:
            decode_wav(data[:-20])
        assert info.value.chunk == "data"

    def test_missing_fmt(self):
        data = b"RIFF" + struct.pack("<I", 12) + b"WAVE" + b"data" + struct.pack("<I", 0)
        with pytest.raises(DecodeError):
            decode_wav(data)

    @pytest.mark.parametrize("kwargs", [
        {"bits": 12},
        {"channels": 3},
        {"fmt_code": 2},
        {"bits": 16, "fmt_code": 3},
    ])
    def test_unsupported_formats(self, kwargs):
        with pytest.raises(UnsupportedFormatError):
            decode_wav(wav_bytes(bytes(24), **kwargs))

    def test_empty_data(self):
        with pytest.raises(EmptyAudioError):
            decode_wav(wav_bytes(b""))

    def test_partial_sample_frame(self):
        with pytest.raises(DecodeError):
            decode_wav(wav_bytes(b"\x00\x01\x02"))


class TestResample:

    def test_same_rate_is_identity(self):
        clip = AudioClip(tone(440, 0.1, 16000), 16000)
        assert resample(clip, 16000) is clip

    def test_length_and_passband_tone(self):
        clip = AudioClip(tone(1000, 1.0, 44100), 44100)
        out = resample(clip, 16000)
        assert out.sample_rate == 16000
        assert out.num_samples == 16000
        spectrum = np.abs(np.fft.rfft(out.samples))
        assert np.argmax(spectrum) == 1000
        middle = out.samples[2000:14000]
        amplitude = np.sqrt(2 * np.mean(middle ** 2))
        assert amplitude == pytest.approx(0.5, rel=0.01)

    def test_removes_content_above_new_nyquist(self):
        clip = AudioClip(tone(12000, 1.0, 48000), 48000)
        out = resample(clip, 16000)
        assert out.num_samples == 16000
        middle = out.samples[1000:15000]
        assert np.sqrt(np.mean(middle ** 2)) < 0.005

    def test_upsampling_keeps_tone(self):
        clip = AudioClip(tone(500, 0.5, 8000), 8000)
        out = resample(clip, 16000)
        assert out.num_samples == 8000
        assert np.argmax(np.abs(np.fft.rfft(out.samples))) == 250

    def test_multichannel(self):
        samples = np.stack([tone(300, 0.2, 22050), tone(600, 0.2, 22050)], axis=1)
        out = resample(AudioClip(samples, 22050), 16000)
        assert out.samples.shape == (int(np.floor(samples.shape[0] * 16000 / 22050 + 0.5)), 2)

    def test_rejects_non_positive_rate(self):
        with pytest.raises(ValueError):
            resample(AudioClip(np.zeros(10), 16000), 0)


class TestNormalizeAndLoad:

    def test_normalize_peak(self):
        clip = normalize(AudioClip(np.array([0.1, -0.4, 0.2]), 16000))
        np.testing.assert_allclose(clip.samples, [0.25, -1.0, 0.5])

    def test_normalize_is_idempotent(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            once = normalize(AudioClip(rng.uniform(-3, 3, 1000), 16000))
            twice = normalize(once)
            assert np.max(np.abs(once.samples)) == 1.0
            assert twice.samples.tobytes() == once.samples.tobytes()

    def test_normalize_silence(self):
        silent = AudioClip(np.zeros(5), 16000)
        assert normalize(silent) is silent

    def test_load_clip_chain(self, tmp_path):
        stereo = np.stack([tone(440, 0.5, 44100, 0.3), tone(440, 0.5, 44100, 0.1)], axis=1)
        path = tmp_path / "stereo.wav"
        path.write_bytes(encode_wav(AudioClip(stereo, 44100)))
        clip = load_clip(path)
        assert clip.channels == 1
        assert clip.sample_rate == 16000
        assert clip.num_samples == 8000
        assert np.max(np.abs(clip.samples)) == pytest.approx(1.0)

    def test_load_clip_reports_bad_file(self, tmp_path):
        path = tmp_path / "broken.wav"
        path.write_bytes(b"not a wav file at all")
        with pytest.raises(DecodeError):
            load_clip(path)
