import os
import struct

import numpy as np
import pytest

from timbreid.audio_io import AudioStream


def write_pcm_wav(path, data, sample_rate=16000, bits=16, channels=1, fmt_tag=1):
    """Hand-rolled RIFF writer so WAV tests do not share code with scipy."""
    data = np.asarray(data)
    if bits == 8:
        payload = data.astype(np.uint8).tobytes()
    elif bits == 16:
        payload = data.astype("<i2").tobytes()
    elif bits == 24:
        v = data.astype("<i4").ravel()
        payload = b"".join(int(s).to_bytes(3, "little", signed=True) for s in v)
    elif bits == 32 and fmt_tag == 3:
        payload = data.astype("<f4").tobytes()
    elif bits == 32:
        payload = data.astype("<i4").tobytes()
    else:
        raise ValueError(bits)
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)
    return os.fspath(path)


def tone(freq, seconds, sample_rate=16000, amp=1.0, phase=0.0):
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


@pytest.fixture
def stream_factory():
    def make(samples, sample_rate=16000):
        return AudioStream(np.asarray(samples, dtype=np.float64), sample_rate)
    return make


@pytest.fixture(scope="session")
def tiny_extractor():
    from timbreid.forest import ForestConfig
    from timbreid.timbre import synth_timbre_dataset, train_timbre_regressors

    ds = synth_timbre_dataset(seed=1, n_rows=80, noise_sd=2.0)
    return train_timbre_regressors(ds, forest_cfg=ForestConfig(n_trees=10, features_per_split="all"))


@pytest.fixture(scope="session")
def tiny_corpus():
    from timbreid.synth import synth_corpus

    return synth_corpus(3, 4, 1.5, seed=7)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, title, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number} {status}: {title} ({detail})")
