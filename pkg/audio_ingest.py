"""
audio_ingest.py

This module decodes RIFF/WAVE files and brings them into the unified format every
later stage expects: a single channel, 16 000 Hz, floating-point amplitudes scaled
to the range [-1, 1].

Key Functions:
- decode_wav(data, source_id): Parse a WAV container into an AudioClip (channels kept).
- to_mono(clip): Average the channels of a clip.
- resample(clip, target_rate): Band-limited polyphase resampling.
- normalize(clip): Per-file peak normalization.
- encode_wav(clip): Write a clip as a 16-bit PCM WAV container.
- load_clip(path, target_rate): decode -> to_mono -> resample -> normalize.

Dependencies:
- numpy
- scipy.signal (firwin, resample_poly)
- struct
- logging

Usage:
This module is typically imported by the frontend and dataset modules. `load_clip`
is the canonical entry point; the individual steps are exposed so they can be
tested on their own.
"""
import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import firwin, resample_poly

from errors import DecodeError, EmptyAudioError, UnsupportedFormatError

TARGET_SAMPLE_RATE = 16000
KAISER_BETA = 8.0
TAPS_PER_PHASE = 64

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# sample width in bits -> (numpy dtype, full-scale divisor)
PCM_FORMATS = {
    16: ("<i2", 2.0 ** 15),
    32: ("<i4", 2.0 ** 31),
}


@dataclass
class AudioClip:
    """
    Decoded audio.

    Attributes:
        samples (np.ndarray): Shape (n,) for mono or (n, channels) for multi-channel audio.
        sample_rate (int): Samples per second.
        source_id (str): Identifier of the originating file.
    """
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def channels(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return self.num_samples / self.sample_rate


def _read_chunks(data):
    """Yield (chunk_id, body) pairs after the RIFF/WAVE header."""
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4].decode("latin-1")
        (size,) = struct.unpack_from("<I", data, offset + 4)
        start = offset + 8
        available = len(data) - start
        if size > available:
            raise DecodeError(chunk_id, f"truncated: declares {size} bytes, {available} available")
        yield chunk_id, data[start:start + size]
        # chunks are word aligned
        offset = start + size + (size & 1)


def _parse_fmt(body):
    if len(body) < 16:
        raise DecodeError("fmt ", f"too short ({len(body)} bytes)")
    audio_format, channels, sample_rate, _byte_rate, block_align, bits = \
        struct.unpack_from("<HHIIHH", body, 0)
    if audio_format == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise DecodeError("fmt ", "extensible header shorter than 40 bytes")
        # first two bytes of the sub-format GUID carry the actual format code
        (audio_format,) = struct.unpack_from("<H", body, 24)
    if sample_rate == 0:
        raise DecodeError("fmt ", "sample rate is zero")
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{channels} channels (only mono and stereo are read)")
    if audio_format == WAVE_FORMAT_PCM:
        if bits not in (8, 16, 24, 32):
            raise UnsupportedFormatError(f"{bits}-bit integer PCM")
    elif audio_format == WAVE_FORMAT_IEEE_FLOAT:
        if bits not in (32, 64):
            raise UnsupportedFormatError(f"{bits}-bit float samples")
    else:
        raise UnsupportedFormatError(f"format code 0x{audio_format:04x}")
    if block_align != channels * bits // 8:
        raise DecodeError("fmt ", f"block align {block_align} does not match "
                                  f"{channels} x {bits}-bit samples")
    return audio_format, channels, sample_rate, bits


def _samples_from_bytes(raw, audio_format, bits):
    if audio_format == WAVE_FORMAT_IEEE_FLOAT:
        return np.frombuffer(raw, dtype="<f4" if bits == 32 else "<f8").astype(np.float64)
    if bits == 8:
        # 8-bit PCM is unsigned with its zero at 128
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 2.0 ** 7
    if bits == 24:
        octets = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        values = octets[:, 0] | (octets[:, 1] << 8) | (octets[:, 2] << 16)
        values = np.where(values & 0x800000, values - 0x1000000, values)
        return values.astype(np.float64) / 2.0 ** 23
    dtype, scale = PCM_FORMATS[bits]
    return np.frombuffer(raw, dtype=dtype).astype(np.float64) / scale


def decode_wav(data, source_id=""):
    """
    Decode the contents of a WAV file.

    Args:
        data (bytes): Raw file contents.
        source_id (str): Identifier stored on the returned clip.

    Returns:
        AudioClip: Samples shaped (n,) for mono files or (n, 2) for stereo files.

    Raises:
        DecodeError: Malformed header or truncated chunk.
        UnsupportedFormatError: Codec, bit depth or channel count we do not read.
        EmptyAudioError: The data chunk holds no sample frames.
    """
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise DecodeError("RIFF", "missing RIFF header")
    if data[8:12] != b"WAVE":
        raise DecodeError("WAVE", "RIFF form type is not WAVE")

    fmt = None
    raw = None
    for chunk_id, body in _read_chunks(data):
        if chunk_id == "fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == "data":
            if fmt is None:
                raise DecodeError("data", "appears before the 'fmt ' chunk")
            raw = body
            break
    if fmt is None:
        raise DecodeError("fmt ", "missing")
    if raw is None:
        raise DecodeError("data", "missing")

    audio_format, channels, sample_rate, bits = fmt
    frame_bytes = channels * bits // 8
    if len(raw) % frame_bytes:
        raise DecodeError("data", f"{len(raw)} bytes is not a whole number of "
                                  f"{frame_bytes}-byte sample frames")
    if not raw:
        raise EmptyAudioError(f"{source_id or 'audio'} contains no samples")

    samples = _samples_from_bytes(raw, audio_format, bits)
    if channels > 1:
        samples = samples.reshape(-1, channels)
    logging.debug("Decoded %s: %d frames, %d channel(s), %d Hz, %d bit",
                  source_id, samples.shape[0], channels, sample_rate, bits)
    return AudioClip(samples, sample_rate, source_id)


def to_mono(clip):
    """Average all channels into one; mono clips come back unchanged."""
    if clip.samples.ndim == 1:
        return clip
    return AudioClip(clip.samples.mean(axis=1), clip.sample_rate, clip.source_id)


@lru_cache(maxsize=32)
def _polyphase_filter(up, down):
    # odd length keeps the filter symmetric around its centre tap (zero phase)
    numtaps = TAPS_PER_PHASE * up + 1
    return firwin(numtaps, 1.0 / max(up, down), window=("kaiser", KAISER_BETA))


def resample(clip, target_rate):
    """
    Resample a clip with a Kaiser-windowed sinc polyphase filter.

    Args:
        clip (AudioClip): Input clip (mono or multi-channel).
        target_rate (int): Output sample rate in Hz.

    Returns:
        AudioClip: Clip at `target_rate` with round(n * target_rate / rate) samples.
    """
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if clip.sample_rate == target_rate:
        return clip
    divisor = gcd(int(clip.sample_rate), int(target_rate))
    up, down = int(target_rate) // divisor, int(clip.sample_rate) // divisor
    out_len = int(np.floor(clip.num_samples * up / down + 0.5))
    logging.debug("Resampling %s from %d Hz to %d Hz (up %d, down %d)",
                  clip.source_id, clip.sample_rate, target_rate, up, down)

    samples = resample_poly(clip.samples, up, down, axis=0, window=_polyphase_filter(up, down))
    if samples.shape[0] >= out_len:
        samples = samples[:out_len]
    else:
        pad = [(0, out_len - samples.shape[0])] + [(0, 0)] * (samples.ndim - 1)
        samples = np.pad(samples, pad)
    return AudioClip(samples, int(target_rate), clip.source_id)


def normalize(clip):
    """Scale the clip so its peak magnitude is exactly 1.0; silent clips are returned as-is."""
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip
    return AudioClip(clip.samples / peak, clip.sample_rate, clip.source_id)


def encode_wav(clip):
    """
    Encode a clip as a 16-bit PCM WAV container.

    Args:
        clip (AudioClip): Mono or stereo clip with amplitudes in [-1, 1].

    Returns:
        bytes: Complete RIFF/WAVE file contents.
    """
    quantized = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    channels = clip.channels
    payload = quantized.tobytes()
    header = b"".join([
        b"RIFF", struct.pack("<I", 36 + len(payload)), b"WAVE",
        b"fmt ", struct.pack("<IHHIIHH", 16, WAVE_FORMAT_PCM, channels, clip.sample_rate,
                             clip.sample_rate * channels * 2, channels * 2, 16),
        b"data", struct.pack("<I", len(payload)),
    ])
    return header + payload


def load_clip(path, target_rate=TARGET_SAMPLE_RATE):
    """
    Read a WAV file and run the canonical preprocessing chain.

    Args:
        path (str | Path): WAV file.
        target_rate (int): Output sample rate.

    Returns:
        AudioClip: Mono, resampled, peak-normalized clip.
    """
    path = Path(path)
    try:
        clip = decode_wav(path.read_bytes(), source_id=str(path))
    except (DecodeError, UnsupportedFormatError, EmptyAudioError) as e:
        logging.error("Could not decode %s: %s", path, str(e))
        raise
    return normalize(resample(to_mono(clip), target_rate))
