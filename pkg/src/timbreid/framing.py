"""Cut a scaled stream into fixed 0.3 s frames and drop the silent ones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioStream
from .errors import StreamTooShort

__all__ = ["Frame", "FramingConfig", "frame_length", "partition", "frame_energy", "filter_silence"]


@dataclass(frozen=True)
class FramingConfig:
    frame_seconds: float = 0.3
    silence_threshold: float = 0.05

    def __post_init__(self):
        if not self.frame_seconds > 0:
            raise ValueError("frame_seconds must be positive")
        if not 0.0 <= self.silence_threshold < 1.0:
            raise ValueError("silence_threshold must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class Frame:
    samples: np.ndarray
    index: int
    start_time: float
    sample_rate: int

    def __len__(self):
        return self.samples.shape[0]


def frame_length(sample_rate: int, cfg: FramingConfig) -> int:
    return int(round(cfg.frame_seconds * sample_rate))


def partition(stream: AudioStream, cfg: FramingConfig = FramingConfig()) -> list[Frame]:
    """Split into contiguous non-overlapping frames; a short tail is dropped.

    The stream is expected to be peak-scaled already, but that is not
    enforced: feature generators call this on raw synthetic audio too.
    """
    n = frame_length(stream.sample_rate, cfg)
    count = len(stream) // n
    if count == 0:
        raise StreamTooShort(
            f"stream of {len(stream)} samples is shorter than one {n}-sample frame"
        )
    frames = []
    for k in range(count):
        chunk = stream.samples[k * n:(k + 1) * n]
        frames.append(Frame(chunk, k, k * cfg.frame_seconds, stream.sample_rate))
    return frames


def frame_energy(frame) -> float:
    """Mean absolute amplitude of a frame (a Frame or a bare array)."""
    samples = frame.samples if isinstance(frame, Frame) else np.asarray(frame)
    if samples.size == 0:
        return 0.0
    return float(np.mean(np.abs(samples)))


def filter_silence(frames, cfg: FramingConfig = FramingConfig()) -> list[Frame]:
    # inclusive: a frame exactly at the threshold is kept
    return [f for f in frames if frame_energy(f) >= cfg.silence_threshold]
