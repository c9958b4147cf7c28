"""Spectrograms of a frame and their weighted-sum reduction.

Each frame is summarised by two scalars: the weighted sum of its STFT
magnitude spectrogram and of its (absolute) MFCC matrix, where row ``i``
is weighted by ``(i + 1) / n_rows`` and column ``j`` by the column's end
time ``(j + 1) * hop / sample_rate``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.signal

from .errors import FrameTooShort
from .framing import Frame

__all__ = [
    "DspConfig",
    "Spectrogram",
    "FeaturePair",
    "LOG_FLOOR",
    "FEATURE_CONVENTION_VERSION",
    "feature_convention",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "stft_magnitude",
    "mfcc_spectrogram",
    "weighted_sum",
    "frame_features",
]

LOG_FLOOR = 1e-10
FEATURE_CONVENTION_VERSION = "wsum-v1"

_WINDOWS = {"hann", "hamming", "blackman", "boxcar"}


@dataclass(frozen=True)
class DspConfig:
    fft_size: int = 512
    hop_size: int = 128
    mel_filters: int = 40
    mfcc_coeffs: int = 13
    window: str = "hann"

    def __post_init__(self):
        if not self.fft_size >= self.hop_size > 0:
            raise ValueError("require fft_size >= hop_size > 0")
        if not 0 < self.mfcc_coeffs <= self.mel_filters:
            raise ValueError("require 0 < mfcc_coeffs <= mel_filters")
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {sorted(_WINDOWS)}")


def feature_convention(dsp: DspConfig, frame_seconds: float = 0.3) -> str:
    """Identifier for everything that shapes the two frame features.

    Stored in every model file; models are only valid for features
    computed under the same string.
    """
    return (
        f"{FEATURE_CONVENTION_VERSION};f=(i+1)/n;t=(j+1)*hop/sr;mfcc=abs"
        f";frame={frame_seconds!r};fft={dsp.fft_size};hop={dsp.hop_size}"
        f";mel={dsp.mel_filters};mfcc={dsp.mfcc_coeffs};win={dsp.window}"
    )


@dataclass(frozen=True, eq=False)
class Spectrogram:
    intensity: np.ndarray  # (n rows, m columns), non-negative
    freq_axis: np.ndarray  # (n,)
    time_axis: np.ndarray  # (m,) seconds, strictly increasing

    def __post_init__(self):
        n, m = self.intensity.shape
        if self.freq_axis.shape != (n,) or self.time_axis.shape != (m,):
            raise ValueError("axis lengths must match intensity shape")


@dataclass(frozen=True)
class FeaturePair:
    mfcc_weighted_sum: float
    spec_weighted_sum: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mfcc_weighted_sum, self.spec_weighted_sum])


def hz_to_mel(f):
    return 1127.0 * np.log1p(np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * np.expm1(np.asarray(m, dtype=np.float64) / 1127.0)


@lru_cache(maxsize=16)
def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters evenly spaced on the HTK mel scale.

    Triangles are linear in mel, unnormalised (peak 1). Returns an array of
    shape (n_filters, fft_size // 2 + 1).
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    bin_hz = np.linspace(0.0, sample_rate / 2.0, fft_size // 2 + 1)
    bin_mel = hz_to_mel(bin_hz)
    edges = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_mel[None, :] - lower) / (center - lower)
    falling = (upper - bin_mel[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=16)
def _window(name: str, size: int) -> np.ndarray:
    w = scipy.signal.get_window(name, size, fftbins=True)
    w.setflags(write=False)
    return w


def _check_length(frame: Frame, cfg: DspConfig):
    if len(frame) < cfg.fft_size:
        raise FrameTooShort(f"frame has {len(frame)} samples, fft_size is {cfg.fft_size}")


def _time_axis(n_cols: int, cfg: DspConfig, sample_rate: int) -> np.ndarray:
    return np.arange(1, n_cols + 1) * cfg.hop_size / sample_rate


def _complex_stft(frame: Frame, cfg: DspConfig) -> np.ndarray:
    x = np.asarray(frame.samples, dtype=np.float64)
    segments = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size)[::cfg.hop_size]
    spectrum = np.fft.rfft(segments * _window(cfg.window, cfg.fft_size), axis=1)
    return spectrum.T  # (bins, columns)


def _magnitude(spectrum, cfg: DspConfig, sample_rate: int) -> Spectrogram:
    mag = np.abs(spectrum)
    n, m = mag.shape
    return Spectrogram(mag, np.arange(1, n + 1) / n, _time_axis(m, cfg, sample_rate))


def _mfcc(spectrum, cfg: DspConfig, sample_rate: int) -> Spectrogram:
    power = np.abs(spectrum) ** 2
    fb = mel_filterbank(cfg.mel_filters, cfg.fft_size, sample_rate)
    log_mel = np.log(np.maximum(fb @ power, LOG_FLOOR))
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=0)[: cfg.mfcc_coeffs]
    n, m = coeffs.shape
    return Spectrogram(np.abs(coeffs), np.arange(1, n + 1) / n, _time_axis(m, cfg, sample_rate))


def stft_magnitude(frame: Frame, cfg: DspConfig = DspConfig()) -> Spectrogram:
    _check_length(frame, cfg)
    return _magnitude(_complex_stft(frame, cfg), cfg, frame.sample_rate)


def mfcc_spectrogram(frame: Frame, cfg: DspConfig = DspConfig()) -> Spectrogram:
    """Absolute MFCCs, one column per STFT column.

    Power spectrum -> mel filterbank -> natural log (floored at LOG_FLOOR)
    -> orthonormal DCT-II, keeping the first ``mfcc_coeffs`` rows.
    """
    _check_length(frame, cfg)
    return _mfcc(_complex_stft(frame, cfg), cfg, frame.sample_rate)


def weighted_sum(spec: Spectrogram) -> float:
    """Sum over cells of row weight x column weight x intensity."""
    return float(spec.freq_axis @ spec.intensity @ spec.time_axis)


def frame_features(frame: Frame, cfg: DspConfig = DspConfig()) -> FeaturePair:
    _check_length(frame, cfg)
    spectrum = _complex_stft(frame, cfg)
    return FeaturePair(
        mfcc_weighted_sum=weighted_sum(_mfcc(spectrum, cfg, frame.sample_rate)),
        spec_weighted_sum=weighted_sum(_magnitude(spectrum, cfg, frame.sample_rate)),
    )
