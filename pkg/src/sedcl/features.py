"""Waveform to log-mel energy feature extraction.

Frames are 40 ms with a 20 ms hop by default, Hamming windowed, and a
trailing partial frame is dropped rather than padded.  Band energies go
through log(x + 1e-10); no per-clip normalization happens here (global
train-split statistics are applied at the training level).
"""

from __future__ import annotations

import struct

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, DataError, NumericalError

LOG_FLOOR = 1e-10

__all__ = [
    "frame_params",
    "frame_count",
    "mel_filterbank",
    "logmel",
    "read_wav",
    "write_wav",
    "wav_duration",
    "save_features",
    "load_features",
    "feature_stats",
]


def frame_params(sample_rate: int, frame_len: float = 0.040, frame_hop: float = 0.020):
    """Frame/hop lengths in samples plus the FFT size (next power of two)."""
    if sample_rate <= 0:
        raise ConfigError(f"sample rate must be positive, got {sample_rate}")
    frame_samples = round(frame_len * sample_rate)
    hop_samples = round(frame_hop * sample_rate)
    if frame_samples < 2 or hop_samples < 1:
        raise ConfigError(
            f"frame {frame_len}s / hop {frame_hop}s too short at {sample_rate} Hz"
        )
    fft_size = 1
    while fft_size < frame_samples:
        fft_size *= 2
    return frame_samples, hop_samples, fft_size


def frame_count(num_samples: int, frame_samples: int, hop_samples: int) -> int:
    if num_samples < frame_samples:
        raise DataError(
            f"waveform of {num_samples} samples shorter than one {frame_samples}-sample frame"
        )
    return 1 + (num_samples - frame_samples) // hop_samples


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int = 64) -> np.ndarray:
    """Triangular mel filters, shape [n_mels, fft_size // 2 + 1].

    Filter edges are mel-spaced between 0 Hz and Nyquist; weights are the
    triangle heights evaluated at the FFT bin frequencies.
    """
    if n_mels < 1:
        raise ConfigError(f"n_mels must be >= 1, got {n_mels}")
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ConfigError(f"fft_size must be a power of two >= 2, got {fft_size}")
    nyquist = sample_rate / 2.0
    edges_hz = _mel_to_hz(np.linspace(0.0, _hz_to_mel(nyquist), n_mels + 2))
    bin_hz = np.arange(fft_size // 2 + 1, dtype=np.float64) * sample_rate / fft_size
    fb = np.zeros((n_mels, bin_hz.size), dtype=np.float64)
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not fb[m].any():
            raise ConfigError(
                f"mel filter {m} is empty: {n_mels} filters exceed the "
                f"resolution of a {fft_size}-point FFT at {sample_rate} Hz"
            )
    return fb


def logmel(
    samples: np.ndarray,
    sample_rate: int,
    frame_len: float = 0.040,
    frame_hop: float = 0.020,
    n_mels: int = 64,
) -> np.ndarray:
    """Log-mel energies, shape [T, n_mels], T from the closed-form count."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"expected a mono waveform, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("waveform contains non-finite samples")
    frame_samples, hop_samples, fft_size = frame_params(sample_rate, frame_len, frame_hop)
    n_frames = frame_count(x.size, frame_samples, hop_samples)
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_samples)[::hop_samples]
    frames = frames[:n_frames] * np.hamming(frame_samples)
    power = np.abs(np.fft.rfft(frames, n=fft_size, axis=1)) ** 2
    fb = mel_filterbank(sample_rate, fft_size, n_mels)
    return np.log(power @ fb.T + LOG_FLOOR)


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Mono float64 samples in [-1, 1] plus the sample rate.

    Accepts 16-bit PCM and 32-bit float WAV; channels are averaged.
    """
    try:
        sample_rate, data = wavfile.read(path)
    except ValueError as exc:
        raise DataError(f"{path}: unreadable WAV file ({exc})") from None
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return x, int(sample_rate)


def write_wav(path: str, samples: np.ndarray, sample_rate: int):
    """Write mono 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, sample_rate, np.round(x * 32767.0).astype(np.int16))


def wav_duration(path: str) -> float:
    """Clip duration in seconds (memory-mapped, samples stay on disk)."""
    try:
        sample_rate, data = wavfile.read(path, mmap=True)
    except ValueError as exc:
        raise DataError(f"{path}: unreadable WAV file ({exc})") from None
    return data.shape[0] / sample_rate


def save_features(path: str, feats: np.ndarray):
    """Cache layout: [u32 T][u32 bands][row-major float64], little-endian."""
    f = np.ascontiguousarray(feats, dtype=np.float64)
    if f.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {f.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", f.shape[0], f.shape[1]))
        fh.write(f.astype("<f8").tobytes())


def load_features(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise DataError(f"{path}: truncated feature cache header")
        n_frames, n_bands = struct.unpack("<II", header)
        body = fh.read()
    expected = n_frames * n_bands * 8
    if len(body) != expected:
        raise DataError(
            f"{path}: expected {expected} payload bytes for "
            f"[{n_frames} x {n_bands}], got {len(body)}"
        )
    feats = np.frombuffer(body, dtype="<f8").reshape(n_frames, n_bands)
    if not np.all(np.isfinite(feats)):
        raise DataError(f"{path}: non-finite feature values")
    return feats.astype(np.float64)


def feature_stats(matrices: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean and standard deviation over all frames of all clips.

    The std is floored at 1e-8 so constant bands normalize to zero
    instead of dividing by zero.
    """
    if not matrices:
        raise DataError("cannot compute feature statistics without clips")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-8)
    return mean, std
