"""WAV loading and peak scaling of audio streams."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import EmptyAudio, IoError, SilentStream, UnsupportedFormat

__all__ = ["AudioStream", "read_wav", "write_wav", "scale_stream", "load_corpus", "write_corpus"]


@dataclass(frozen=True, eq=False)
class AudioStream:
    """Mono float64 samples plus sample rate.

    ``samples`` is stored read-only so a stream can be shared freely.
    """

    samples: np.ndarray
    sample_rate: int
    scaled: bool = False

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AudioStream samples must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _to_unit_float(data: np.ndarray) -> np.ndarray:
    # scipy returns integer PCM left-justified in the smallest fitting dtype,
    # so dividing by the dtype's full scale maps any depth to [-1, 1).
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.signedinteger):
        full_scale = float(2 ** (8 * data.dtype.itemsize - 1))
        return data.astype(np.float64) / full_scale
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise UnsupportedFormat(f"unsupported sample type {data.dtype}")


def read_wav(path) -> AudioStream:
    """Read a PCM or IEEE-float WAV file, averaging channels to mono."""
    path = os.fspath(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise IoError(f"{path}: file not found") from exc
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc

    samples = _to_unit_float(np.asarray(data))
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    return AudioStream(samples, int(rate), scaled=False)


def write_wav(path, stream: AudioStream, dtype="float32") -> None:
    """Write a mono stream as 32-bit float (default) or 16-bit PCM WAV."""
    x = np.asarray(stream.samples)
    if dtype == "float32":
        out = x.astype(np.float32)
    elif dtype == "int16":
        out = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unsupported output dtype {dtype!r}")
    try:
        wavfile.write(os.fspath(path), stream.sample_rate, out)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def scale_stream(stream: AudioStream) -> AudioStream:
    """Divide every sample by the stream's peak absolute amplitude."""
    peak = float(np.max(np.abs(stream.samples))) if len(stream) else 0.0
    if peak == 0.0:
        raise SilentStream("stream peak amplitude is zero")
    scaled = stream.samples / peak
    return AudioStream(scaled, stream.sample_rate, scaled=True)


def load_corpus(root) -> dict[str, list[tuple[str, AudioStream]]]:
    """Read a directory-per-speaker corpus.

    Returns speaker label (directory name) -> [(file name, stream), ...],
    both sorted by name. Directories without WAV files are skipped.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise IoError(f"{root}: not a directory")
    corpus = {}
    for label in sorted(os.listdir(root)):
        spk_dir = os.path.join(root, label)
        if not os.path.isdir(spk_dir):
            continue
        names = sorted(n for n in os.listdir(spk_dir) if n.lower().endswith(".wav"))
        if names:
            corpus[label] = [(n, read_wav(os.path.join(spk_dir, n))) for n in names]
    return corpus


def write_corpus(root, corpus: dict, dtype="int16") -> None:
    """Inverse of :func:`load_corpus` for label -> list of streams."""
    for label, streams in corpus.items():
        spk_dir = os.path.join(os.fspath(root), label)
        os.makedirs(spk_dir, exist_ok=True)
        for j, stream in enumerate(streams):
            write_wav(os.path.join(spk_dir, f"{label}_{j:03d}.wav"), stream, dtype=dtype)
