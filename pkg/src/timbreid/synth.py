"""Synthetic audio: harmonic tones mixed with band-limited noise.

Used in two places: frames for the synthetic timbre dataset, and
voice-like streams for synthetic "speakers", each with its own spectral
profile. Everything is a pure function of the seed passed in.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .audio_io import AudioStream

__all__ = [
    "VoiceParams",
    "random_voice",
    "render_voice",
    "speaker_profiles",
    "speaker_stream",
    "synth_corpus",
]


@dataclass(frozen=True)
class VoiceParams:
    f0: float  # fundamental, Hz
    n_harmonics: int
    tilt: float  # harmonic k has amplitude k ** -tilt
    noise_center: float  # Hz
    noise_width: float  # Hz, Gaussian band sd
    noise_mix: float  # 0 = pure harmonics, 1 = pure noise
    tremolo_hz: float
    tremolo_depth: float  # 0..1
    amplitude: float  # peak level of the rendered chunk


def random_voice(rng: np.random.Generator) -> VoiceParams:
    """Broad draw used for timbre-dataset frames."""
    return VoiceParams(
        f0=float(rng.uniform(80.0, 320.0)),
        n_harmonics=int(rng.integers(3, 25)),
        tilt=float(rng.uniform(0.3, 2.5)),
        noise_center=float(np.exp(rng.uniform(np.log(300.0), np.log(6000.0)))),
        noise_width=float(rng.uniform(100.0, 1500.0)),
        noise_mix=float(rng.uniform(0.0, 0.9)),
        tremolo_hz=float(rng.uniform(0.0, 40.0)),
        tremolo_depth=float(rng.uniform(0.0, 0.8)),
        amplitude=float(rng.uniform(0.3, 1.0)),
    )


def _band_noise(rng, n, sample_rate, center, width):
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum *= np.exp(-0.5 * ((freqs - center) / width) ** 2)
    out = np.fft.irfft(spectrum, n)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def render_voice(p: VoiceParams, n: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Render ``n`` samples with peak absolute value ``p.amplitude``."""
    t = np.arange(n) / sample_rate
    nyquist = sample_rate / 2.0
    tone = np.zeros(n)
    phases = rng.uniform(0.0, 2 * np.pi, size=p.n_harmonics)
    for k in range(1, p.n_harmonics + 1):
        if k * p.f0 >= nyquist:
            break
        tone += k ** -p.tilt * np.sin(2 * np.pi * k * p.f0 * t + phases[k - 1])
    tone /= max(np.max(np.abs(tone)), 1e-12)
    noise = _band_noise(rng, n, sample_rate, p.noise_center, p.noise_width)
    x = (1.0 - p.noise_mix) * tone + p.noise_mix * noise
    if p.tremolo_depth > 0:
        x *= 1.0 - p.tremolo_depth * 0.5 * (1.0 + np.sin(2 * np.pi * p.tremolo_hz * t))
    peak = np.max(np.abs(x))
    return x * (p.amplitude / peak) if peak > 0 else x


def speaker_profiles(n_speakers: int, seed: int) -> list[VoiceParams]:
    """Well-spread voice profiles: speakers differ in pitch, brightness and noisiness.

    Profile ``i`` sits at the ``i``-th point of a low-discrepancy sequence
    over the parameter box, jittered by the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0,)))
    golden = np.array([0.6180339887498949, 0.7548776662466927, 0.5698402909980532])
    profiles = []
    for i in range(n_speakers):
        u = (0.5 + (i + 1) * golden + rng.uniform(-0.04, 0.04, size=3)) % 1.0
        profiles.append(VoiceParams(
            f0=90.0 + 210.0 * u[0],
            n_harmonics=int(6 + round(14 * u[1])),
            tilt=2.2 - 1.6 * u[1],
            noise_center=float(np.exp(np.log(400.0) + u[2] * np.log(5000.0 / 400.0))),
            noise_width=300.0 + 600.0 * u[2],
            noise_mix=0.1 + 0.6 * u[2],
            tremolo_hz=4.0 + 20.0 * u[0],
            tremolo_depth=0.2,
            amplitude=1.0,
        ))
    return profiles


def speaker_stream(profile: VoiceParams, seconds: float, sample_rate: int,
                   rng: np.random.Generator, pause_prob: float = 0.15) -> AudioStream:
    """A voice-like stream: syllable-length chunks of the speaker's voice
    with small per-chunk jitter, separated now and then by near-silence."""
    total = int(round(seconds * sample_rate))
    out = np.zeros(total)
    pos = 0
    while pos < total:
        n = min(int(rng.uniform(0.15, 0.5) * sample_rate), total - pos)
        if rng.uniform() < pause_prob:
            out[pos:pos + n] = 0.002 * rng.standard_normal(n)
        else:
            p = replace(
                profile,
                f0=profile.f0 * float(rng.uniform(0.93, 1.07)),
                tilt=profile.tilt + float(rng.uniform(-0.1, 0.1)),
                noise_center=profile.noise_center * float(rng.uniform(0.92, 1.08)),
                amplitude=float(rng.uniform(0.5, 1.0)),
            )
            chunk = render_voice(p, n, sample_rate, rng)
            ramp = min(n // 2, int(0.02 * sample_rate))
            if ramp > 0:
                env = np.ones(n)
                env[:ramp] = np.linspace(0.0, 1.0, ramp)
                env[n - ramp:] = np.linspace(1.0, 0.0, ramp)
                chunk = chunk * env
            out[pos:pos + n] = chunk
        pos += n
    return AudioStream(out, sample_rate)


def synth_corpus(n_speakers: int, streams_per_speaker: int, stream_seconds: float,
                 seed: int, sample_rate: int = 16000) -> dict[str, list[AudioStream]]:
    """Speaker label -> list of streams. Labels are ``spk00``, ``spk01``, ..."""
    corpus = {}
    for i, profile in enumerate(speaker_profiles(n_speakers, seed)):
        label = f"spk{i:02d}"
        streams = []
        for j in range(streams_per_speaker):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))
            streams.append(speaker_stream(profile, stream_seconds, sample_rate, rng))
        corpus[label] = streams
    return corpus
