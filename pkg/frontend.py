"""
frontend.py

This module turns preprocessed audio clips into fixed-length network inputs. A
rectangular sliding window cuts each clip into frames (150 ms windows, 5 ms hop
by default). In the time domain the frame samples are used directly; in the
frequency domain each frame is Hamming-weighted, transformed with a mixed-radix
FFT, and the first half of the magnitude and phase spectra are concatenated.

Key Classes:
- FeatureMode: time, freq, freq-mag and freq-phase representations.
- FramingConfig: window/hop durations and the sample rate they refer to.
- FeatureFrame: one network input with its clip id and frame position.
- FrameSet: all frames of a list of clips, stacked for training or evaluation.

Key Functions:
- extract_frames(clip, cfg): Sliding-window framing with end padding for short clips.
- hamming(window): Symmetric Hamming weighting.
- fft(x), ifft(x), dft_real(frame): Mixed-radix transform with a Bluestein path
  for large prime factors.
- freq_features(window, mode): Magnitude/phase feature frame of one window.
- reconstruct_frame(values, nyquist): Inverse of the frequency features.
- scale_spectral(values, mode, N): Fixed input scale of the frequency features.
- clip_features(clip, mode, cfg): Feature matrix of a whole clip.
- build_frame_set(entries, mode, cfg): Load, preprocess and frame a list of files.
- write_frame_cache(path, frame_set), read_frame_cache(path): Binary frame cache.

Dependencies:
- numpy
- audio_ingest
- struct, functools, concurrent.futures, logging

Usage:
`build_frame_set` is called by the command line layer for the train and test
splits; the smaller functions are the building blocks it is made of.
"""
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from audio_ingest import load_clip


class FeatureMode(str, Enum):
    TIME = "time"
    FREQ = "freq"
    FREQ_MAG = "freq-mag"
    FREQ_PHASE = "freq-phase"

    @classmethod
    def parse(cls, value):
        """Accept enum members, their values and the long '-only' spellings."""
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text.endswith("-only"):
            text = text[:-len("-only")]
        try:
            return cls(text)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown feature mode '{value}' (expected one of {choices})") from None

    @property
    def is_spectral(self):
        return self is not FeatureMode.TIME


def feature_length(mode, frame_length):
    """Number of values one frame of `frame_length` samples yields in `mode`."""
    mode = FeatureMode.parse(mode)
    half = frame_length // 2
    if mode is FeatureMode.TIME:
        return frame_length
    if mode is FeatureMode.FREQ:
        return 2 * half
    return half


@dataclass(frozen=True)
class FramingConfig:
    """
    Sliding-window parameters.

    Attributes:
        window_ms (float): Window duration in milliseconds.
        step_ms (float): Hop duration in milliseconds.
        sample_rate (int): Sample rate the durations are converted at.
    """
    window_ms: float = 150.0
    step_ms: float = 5.0
    sample_rate: int = 16000

    def __post_init__(self):
        if not self.window_ms >= self.step_ms > 0:
            raise ValueError(f"need window_ms >= step_ms > 0, got {self.window_ms}/{self.step_ms}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        for name in ("window_ms", "step_ms"):
            samples = getattr(self, name) * self.sample_rate / 1000.0
            if abs(samples - round(samples)) > 1e-9:
                raise ValueError(f"{name}={getattr(self, name)} is not a whole number of samples "
                                 f"at {self.sample_rate} Hz")

    @property
    def window_samples(self):
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def step_samples(self):
        return int(round(self.step_ms * self.sample_rate / 1000.0))

    def to_dict(self):
        return {"window_ms": self.window_ms, "step_ms": self.step_ms, "sample_rate": self.sample_rate}


@dataclass
class FeatureFrame:
    """
    One network input.

    Attributes:
        values (np.ndarray): Feature values.
        mode (FeatureMode): Representation the values are in.
        clip_id (str): Source clip identifier.
        frame_index (int): Position of the frame inside its clip.
        frame_length (int): Window length in samples the frame was cut with.
    """
    values: np.ndarray
    mode: FeatureMode
    clip_id: str = ""
    frame_index: int = 0
    frame_length: int = 2400

    def __post_init__(self):
        self.mode = FeatureMode.parse(self.mode)
        expected = feature_length(self.mode, self.frame_length)
        if self.values.shape != (expected,):
            raise ValueError(f"{self.mode.value} frame needs {expected} values, got {self.values.shape}")


def frame_count(length, window, step):
    """Frames produced for `length` samples; shorter clips still give one padded frame."""
    if length <= window:
        return 1
    return (length - window) // step + 1


def extract_frames(clip, cfg):
    """
    Cut a mono clip into overlapping rectangular windows.

    Args:
        clip (AudioClip): Mono clip at `cfg.sample_rate`.
        cfg (FramingConfig): Window and hop.

    Returns:
        np.ndarray: Shape (n_frames, window_samples), frames in ascending start offset.
    """
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(f"clip is at {clip.sample_rate} Hz, framing expects {cfg.sample_rate} Hz")
    if clip.samples.ndim != 1:
        raise ValueError("framing needs a mono clip")
    window, step = cfg.window_samples, cfg.step_samples
    samples = clip.samples
    if samples.shape[0] < window:
        samples = np.pad(samples, (0, window - samples.shape[0]))
    return np.ascontiguousarray(sliding_window_view(samples, window)[::step])


@lru_cache(maxsize=8)
def hamming_window(n):
    """Symmetric Hamming coefficients 0.54 - 0.46 cos(2 pi k / (n - 1))."""
    coefficients = np.hamming(n)
    coefficients.flags.writeable = False
    return coefficients


def hamming(window):
    """Weight a frame (or a stack of frames along the last axis) with a Hamming window."""
    window = np.asarray(window, dtype=np.float64)
    return window * hamming_window(window.shape[-1])


# --- Fourier transform ---

# prime lengths up to this size use a direct DFT matrix, larger ones Bluestein
DIRECT_PRIME_LIMIT = 16


def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    p = 3
    while p * p <= n:
        if n % p == 0:
            return p
        p += 2
    return n


@lru_cache(maxsize=64)
def _dft_matrix(p):
    k = np.arange(p)
    matrix = np.exp(-2j * np.pi * (np.outer(k, k) % p) / p)
    matrix.flags.writeable = False
    return matrix


@lru_cache(maxsize=64)
def _twiddles(n, p):
    m = n // p
    exponent = (np.arange(p)[:, None] * np.arange(m)[None, :]) % n
    twiddles = np.exp(-2j * np.pi * exponent / n)
    twiddles.flags.writeable = False
    return twiddles


def _bluestein(x):
    n = x.shape[-1]
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1 << (2 * n - 2).bit_length()
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[size - n + 1:] = np.conj(chirp[1:])[::-1]
    convolved = _ifft(_fft(a) * _fft(b))
    return chirp * convolved[..., :n]


def _fft(x):
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        if n <= DIRECT_PRIME_LIMIT:
            return x @ _dft_matrix(n)
        return _bluestein(x)
    m = n // p
    # decimation in time: sub[..., j, t] = x[..., t * p + j]
    sub = x.reshape(x.shape[:-1] + (m, p)).swapaxes(-1, -2)
    spectra = _fft(sub) * _twiddles(n, p)
    # X[q * m + k] = sum_j W_p^(jq) spectra[j, k]
    return np.matmul(_dft_matrix(p), spectra).reshape(x.shape[:-1] + (n,))


def _ifft(spectrum):
    n = spectrum.shape[-1]
    return np.conj(_fft(np.conj(spectrum))) / n


def fft(x):
    """Discrete Fourier transform along the last axis, X[k] = sum_n x[n] exp(-2 pi i k n / N)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[-1] == 0:
        raise ValueError("cannot transform an empty sequence")
    return _fft(x)


def ifft(spectrum):
    """Inverse of `fft` along the last axis."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if spectrum.shape[-1] == 0:
        raise ValueError("cannot transform an empty sequence")
    return _ifft(spectrum)


def dft_real(frame):
    """Full complex spectrum of a real frame."""
    return fft(np.asarray(frame, dtype=np.float64))


def phase_of(spectrum):
    """Phase in (-pi, pi]; bins with zero magnitude get phase 0."""
    # adding 0.0 turns -0.0 into +0.0 so atan2 never lands on -pi for signed zeros
    phase = np.arctan2(spectrum.imag + 0.0, spectrum.real + 0.0)
    phase[phase == -np.pi] = np.pi
    return phase


def spectral_features(windows, mode=FeatureMode.FREQ):
    """
    Magnitude/phase features of already-weighted windows.

    Args:
        windows (np.ndarray): Shape (..., N).
        mode (FeatureMode): freq, freq-mag or freq-phase.

    Returns:
        np.ndarray: Shape (..., N) for freq, (..., N // 2) for the single-part modes.
    """
    mode = FeatureMode.parse(mode)
    if not mode.is_spectral:
        raise ValueError("spectral_features needs a frequency mode")
    windows = np.asarray(windows, dtype=np.float64)
    half = windows.shape[-1] // 2
    spectrum = fft(windows)[..., :half]
    if mode is FeatureMode.FREQ_MAG:
        return np.abs(spectrum)
    if mode is FeatureMode.FREQ_PHASE:
        return phase_of(spectrum)
    return np.concatenate([np.abs(spectrum), phase_of(spectrum)], axis=-1)


def freq_features(window, mode=FeatureMode.FREQ, clip_id="", frame_index=0):
    """
    Frequency-domain feature frame of one Hamming-weighted window.

    Args:
        window (array-like): N weighted samples.
        mode (FeatureMode): freq, freq-mag or freq-phase.
        clip_id (str): Source clip identifier.
        frame_index (int): Frame position inside the clip.

    Returns:
        FeatureFrame
    """
    window = np.asarray(window, dtype=np.float64)
    values = spectral_features(window, mode)
    return FeatureFrame(values, FeatureMode.parse(mode), clip_id, frame_index, window.shape[0])


def nyquist_value(window):
    """Real value of the Nyquist bin, the one bin the half spectrum leaves out."""
    window = np.asarray(window, dtype=np.float64)
    return dft_real(window)[window.shape[-1] // 2].real


def reconstruct_frame(values, nyquist=0.0):
    """
    Rebuild a windowed frame from its concatenated magnitude/phase features.

    Args:
        values (array-like): 2 * (N // 2) values, magnitudes then phases, N even.
        nyquist (float): Real value of bin N / 2.

    Returns:
        np.ndarray: The N real samples.
    """
    values = np.asarray(values, dtype=np.float64)
    half = values.shape[0] // 2
    n = 2 * half
    spectrum = np.zeros(n, dtype=np.complex128)
    spectrum[:half] = values[:half] * np.exp(1j * values[half:])
    spectrum[half] = nyquist
    spectrum[half + 1:] = np.conj(spectrum[1:half][::-1])
    return ifft(spectrum).real


def scale_spectral(values, mode, frame_length):
    """
    Fixed network-input scale of spectral features.

    Magnitudes are multiplied by 1 / sqrt(N), the orthonormal DFT scaling, and
    phases by 1 / pi. The factors depend on the frame length only, so every clip,
    frame and frequency mode is scaled the same way.

    Args:
        values (np.ndarray): Output of `spectral_features`, shape (..., d).
        mode (FeatureMode): freq, freq-mag or freq-phase.
        frame_length (int): N, the window length the features came from.

    Returns:
        np.ndarray: Scaled copy of `values`.
    """
    mode = FeatureMode.parse(mode)
    if not mode.is_spectral:
        raise ValueError("scale_spectral needs a frequency mode")
    values = np.asarray(values, dtype=np.float64)
    magnitude_scale, phase_scale = 1.0 / np.sqrt(frame_length), 1.0 / np.pi
    if mode is FeatureMode.FREQ_MAG:
        return values * magnitude_scale
    if mode is FeatureMode.FREQ_PHASE:
        return values * phase_scale
    half = values.shape[-1] // 2
    return values * np.concatenate([np.full(half, magnitude_scale), np.full(half, phase_scale)])


def clip_features(clip, mode, cfg):
    """
    Feature matrix of a whole clip.

    Args:
        clip (AudioClip): Preprocessed mono clip.
        mode (FeatureMode): Representation.
        cfg (FramingConfig): Framing.

    Returns:
        np.ndarray: float32 array of shape (n_frames, feature_length); frequency
        modes carry the `scale_spectral` factors.
    """
    mode = FeatureMode.parse(mode)
    frames = extract_frames(clip, cfg)
    if mode is FeatureMode.TIME:
        return frames.astype(np.float32)
    values = spectral_features(hamming(frames), mode)
    return scale_spectral(values, mode, frames.shape[-1]).astype(np.float32)


@dataclass
class FrameSet:
    """
    Frames of several clips, stacked.

    Attributes:
        features (np.ndarray): (n_frames, d) float32.
        labels (np.ndarray): (n_frames,) class index of each frame (inherited from its clip).
        clip_index (np.ndarray): (n_frames,) position of the frame's clip in `clip_ids`.
        clip_ids (list[str]): Clip identifiers.
        clip_labels (np.ndarray): (n_clips,) class index of each clip.
        mode (FeatureMode): Representation of `features`.
    """
    features: np.ndarray
    labels: np.ndarray
    clip_index: np.ndarray
    clip_ids: list = field(default_factory=list)
    clip_labels: np.ndarray = None
    mode: FeatureMode = FeatureMode.TIME

    @property
    def num_frames(self):
        return self.features.shape[0]

    @property
    def num_clips(self):
        return len(self.clip_ids)

    @property
    def feature_length(self):
        return self.features.shape[1]

    def frame_counts(self):
        return np.bincount(self.clip_index, minlength=self.num_clips)


def build_frame_set(entries, mode, cfg, workers=1):
    """
    Load, preprocess and frame a list of labelled files.

    Args:
        entries (iterable): Objects with `path` and `label` attributes.
        mode (FeatureMode): Representation.
        cfg (FramingConfig): Framing.
        workers (int): Files processed concurrently; output order follows `entries`.

    Returns:
        FrameSet
    """
    mode = FeatureMode.parse(mode)
    entries = list(entries)
    if not entries:
        raise ValueError("cannot build a frame set from an empty entry list")

    def featurize(entry):
        return clip_features(load_clip(entry.path, cfg.sample_rate), mode, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_clip = list(pool.map(featurize, entries))
    else:
        per_clip = [featurize(entry) for entry in entries]

    counts = np.array([block.shape[0] for block in per_clip], dtype=np.int64)
    clip_labels = np.array([entry.label for entry in entries], dtype=np.int64)
    clip_index = np.repeat(np.arange(len(entries), dtype=np.int64), counts)
    logging.info("Framed %d clips into %d %s frames", len(entries), counts.sum(), mode.value)
    return FrameSet(
        features=np.concatenate(per_clip, axis=0),
        labels=clip_labels[clip_index],
        clip_index=clip_index,
        clip_ids=[str(entry.path) for entry in entries],
        clip_labels=clip_labels,
        mode=mode,
    )


# --- frame cache ---

CACHE_MAGIC = b"AERF"
CACHE_VERSION = 2
MODE_CODES = {FeatureMode.TIME: 0, FeatureMode.FREQ: 1, FeatureMode.FREQ_MAG: 2,
              FeatureMode.FREQ_PHASE: 3}
_HEADER = struct.Struct("<4sHBBIII")


def write_frame_cache(path, frame_set):
    """
    Write a FrameSet to the binary frame cache.

    Layout (little-endian): magic 'AERF', u16 version, u8 mode code, u8 reserved,
    u32 values per frame, u32 frame count, u32 clip count; then per clip a u16
    byte length, the UTF-8 clip id, an i32 label and a u32 frame count; then
    frame_count * values_per_frame float32 values, frames grouped by clip.
    """
    if np.any(np.diff(frame_set.clip_index) < 0):
        raise ValueError("frame cache needs frames grouped by clip in clip order")
    parts = [_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, MODE_CODES[frame_set.mode], 0,
                          frame_set.feature_length, frame_set.num_frames, frame_set.num_clips)]
    for clip_id, label, count in zip(frame_set.clip_ids, frame_set.clip_labels,
                                     frame_set.frame_counts()):
        encoded = clip_id.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded + struct.pack("<iI", int(label), int(count)))
    parts.append(np.ascontiguousarray(frame_set.features, dtype="<f4").tobytes())
    path = Path(path)
    path.write_bytes(b"".join(parts))
    logging.info("Frame cache written: %s (%d frames)", path, frame_set.num_frames)
    return path


def read_frame_cache(path):
    """Read a FrameSet written by `write_frame_cache`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: too short for a frame cache header")
    magic, version, mode_code, _, length, frames, clips = _HEADER.unpack_from(data, 0)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: not a frame cache (magic {magic!r})")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported frame cache version {version}")
    modes = {code: mode for mode, code in MODE_CODES.items()}
    if mode_code not in modes:
        raise ValueError(f"{path}: unknown mode code {mode_code}")

    offset = _HEADER.size
    clip_ids, clip_labels, counts = [], [], []
    for _ in range(clips):
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        clip_ids.append(data[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        label, count = struct.unpack_from("<iI", data, offset)
        offset += 8
        clip_labels.append(label)
        counts.append(count)
    if sum(counts) != frames:
        raise ValueError(f"{path}: clip table covers {sum(counts)} frames, header says {frames}")
    payload = np.frombuffer(data, dtype="<f4", count=frames * length, offset=offset)
    clip_labels = np.array(clip_labels, dtype=np.int64)
    clip_index = np.repeat(np.arange(clips, dtype=np.int64), np.array(counts, dtype=np.int64))
    return FrameSet(
        features=payload.astype(np.float32).reshape(frames, length),
        labels=clip_labels[clip_index],
        clip_index=clip_index,
        clip_ids=clip_ids,
        clip_labels=clip_labels,
        mode=modes[mode_code],
    )
