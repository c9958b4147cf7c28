"""Seven timbral properties regressed from the two frame features.

Labelled data comes in as a CSV::

    path,boominess,brightness,depth,hardness,roughness,sharpness,warmth
    clips/a.wav,41.2,63.0,...

``path`` is relative to the CSV's directory and names a clip of at least
one frame. Only the first frame of a clip is used and clips are not
re-scaled, so cut them from streams that were already peak-scaled.
Labels live on a 0-100 scale.

Without labelled data, :func:`synth_timbre_dataset` builds a stand-in
whose labels are a fixed function of each frame's features (see
:func:`ground_truth_labels`) plus optional Gaussian noise.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import forest
from .audio_io import AudioStream, read_wav, write_wav
from .dsp import DspConfig, FeaturePair, feature_convention, frame_features
from .errors import (
    ConventionMismatch,
    CorruptModel,
    EmptyDataset,
    IoError,
    LabelOutOfRange,
    MissingAudioFile,
    MissingColumn,
    VersionMismatchWarning,
)
from .framing import Frame, FramingConfig, frame_length, partition
from .synth import random_voice, render_voice

__all__ = [
    "PROPERTIES",
    "TimbralVector",
    "TimbreRow",
    "TimbreDataset",
    "TimbreExtractor",
    "load_timbre_dataset",
    "write_timbre_dataset",
    "ground_truth_labels",
    "synth_timbre_dataset",
    "dataset_features",
    "train_timbre_regressors",
    "extract_timbre",
    "extract_timbre_batch",
    "save_extractor",
    "load_extractor",
]

PROPERTIES = ("boominess", "brightness", "depth", "hardness", "roughness", "sharpness", "warmth")
CSV_HEADER = ("path",) + PROPERTIES
LABEL_MIN, LABEL_MAX = 0.0, 100.0

EXTRACTOR_FORMAT = "timbreid-timbre-extractor"
EXTRACTOR_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimbralVector:
    boominess: float
    brightness: float
    depth: float
    hardness: float
    roughness: float
    sharpness: float
    warmth: float

    def __post_init__(self):
        for name in PROPERTIES:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, p) for p in PROPERTIES])

    @classmethod
    def from_array(cls, values, clamp: bool = True) -> "TimbralVector":
        values = np.asarray(values, dtype=np.float64)
        if clamp:
            values = np.clip(values, LABEL_MIN, LABEL_MAX)
        return cls(*(float(v) for v in values))


@dataclass(frozen=True, eq=False)
class TimbreRow:
    labels: TimbralVector
    path: str | None = None  # audio reference, resolved against the dataset's base_dir
    features: FeaturePair | None = None
    audio: np.ndarray | None = None  # synthetic rows keep their frame


@dataclass(eq=False)
class TimbreDataset:
    rows: list
    provenance: str  # "labeled" or "synthetic"
    base_dir: str = "."
    sample_rate: int = 16000

    def __len__(self):
        return len(self.rows)

    def labels(self) -> np.ndarray:
        return np.vstack([r.labels.as_array() for r in self.rows])


def _parse_label(raw, name, line):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise LabelOutOfRange(f"line {line}: {name}={raw!r} is not a number") from None
    if not (LABEL_MIN <= value <= LABEL_MAX):
        raise LabelOutOfRange(f"line {line}: {name}={value} outside [0, 100]")
    return value


def load_timbre_dataset(path) -> TimbreDataset:
    path = os.fspath(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise EmptyDataset(f"{path}: empty file")
            header = [h.strip() for h in header]
            if tuple(header) != CSV_HEADER:
                missing = [c for c in CSV_HEADER if c not in header]
                detail = f"missing {missing}" if missing else f"got {header}"
                raise MissingColumn(f"{path}: header must be {','.join(CSV_HEADER)} ({detail})")
            rows = []
            for line, rec in enumerate(reader, start=2):
                if not rec or all(not c.strip() for c in rec):
                    continue
                if len(rec) != len(CSV_HEADER):
                    raise MissingColumn(f"{path}:{line}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
                values = [_parse_label(v, n, line) for v, n in zip(rec[1:], PROPERTIES)]
                rows.append(TimbreRow(TimbralVector(*values), path=rec[0].strip()))
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    return TimbreDataset(rows, "labeled", base_dir=os.path.dirname(os.path.abspath(path)))


def write_timbre_dataset(ds: TimbreDataset, out_dir, csv_name: str = "timbre.csv") -> str:
    """Write a CSV plus one float32 WAV per row under ``out_dir/clips``."""
    os.makedirs(os.path.join(out_dir, "clips"), exist_ok=True)
    csv_path = os.path.join(out_dir, csv_name)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, row in enumerate(ds.rows):
            if row.audio is not None:
                rel = f"clips/row_{i:04d}.wav"
                write_wav(os.path.join(out_dir, rel), AudioStream(row.audio, ds.sample_rate))
            elif row.path is not None:
                rel = os.path.relpath(os.path.join(ds.base_dir, row.path), out_dir)
            else:
                raise ValueError(f"row {i} has neither audio nor a path")
            w.writerow([rel] + [repr(float(v)) for v in row.labels.as_array()])
    return csv_path


# Ground truth for synthetic labels. Each property is
#   50 + 45 * tanh(a * u + b * v + c)
# where u = (ln mfcc_ws - ln 150) / 0.4 and v = (ln spec_ws - ln 150) / 1.0.
# Each map leans on one feature with a small cross term.
_GT_CENTER = (math.log(150.0), math.log(150.0))
_GT_SCALE = (0.4, 1.0)
_GT_COEF = {
    "boominess": (0.0, -1.0, 0.1),
    "brightness": (0.1, 1.1, 0.0),
    "depth": (-1.0, 0.1, 0.2),
    "hardness": (0.9, 0.1, -0.1),
    "roughness": (0.6, -0.05, 0.3),
    "sharpness": (0.05, 0.7, -0.3),
    "warmth": (-0.1, -0.8, 0.4),
}


def ground_truth_labels(fp: FeaturePair) -> np.ndarray:
    """Noise-free synthetic labels for a frame, in PROPERTIES order."""
    u = (math.log(max(fp.mfcc_weighted_sum, 1e-12)) - _GT_CENTER[0]) / _GT_SCALE[0]
    v = (math.log(max(fp.spec_weighted_sum, 1e-12)) - _GT_CENTER[1]) / _GT_SCALE[1]
    return np.array([50.0 + 45.0 * math.tanh(a * u + b * v + c) for a, b, c in (_GT_COEF[p] for p in PROPERTIES)])


def synth_timbre_dataset(seed: int, n_rows: int = 400, noise_sd: float = 2.0,
                         sample_rate: int = 16000, dsp: DspConfig = DspConfig(),
                         framing: FramingConfig = FramingConfig()) -> TimbreDataset:
    """Random tone/noise frames labelled by :func:`ground_truth_labels`.

    Frames are rounded to float32 before features are taken, so writing
    them out as float WAV and reading them back reproduces the features.
    """
    n = frame_length(sample_rate, framing)
    rows = []
    for i in range(n_rows):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        x = render_voice(random_voice(rng), n, sample_rate, rng).astype(np.float32).astype(np.float64)
        fp = frame_features(Frame(x, 0, 0.0, sample_rate), dsp)
        labels = ground_truth_labels(fp)
        if noise_sd > 0:
            labels = labels + rng.normal(0.0, noise_sd, size=labels.shape)
        rows.append(TimbreRow(TimbralVector.from_array(labels), features=fp, audio=x))
    return TimbreDataset(rows, "synthetic", sample_rate=sample_rate)


def _row_features(row: TimbreRow, ds: TimbreDataset, dsp: DspConfig, framing: FramingConfig) -> FeaturePair:
    if row.audio is not None:
        frame = Frame(np.asarray(row.audio), 0, 0.0, ds.sample_rate)
        return frame_features(frame, dsp)
    full = os.path.join(ds.base_dir, row.path)
    if not os.path.exists(full):
        raise MissingAudioFile(f"{full}: referenced by timbre dataset but not found")
    return frame_features(partition(read_wav(full), framing)[0], dsp)


def dataset_features(ds: TimbreDataset, dsp: DspConfig = DspConfig(),
                     framing: FramingConfig = FramingConfig()) -> np.ndarray:
    """(n_rows, 2) feature matrix, computing features from audio when needed.

    Precomputed features are trusted only when no audio is attached.
    """
    out = np.empty((len(ds), 2))
    for i, row in enumerate(ds.rows):
        if row.features is not None and row.audio is None and row.path is None:
            fp = row.features
        else:
            fp = _row_features(row, ds, dsp, framing)
        out[i] = fp.as_array()
    return out


@dataclass(eq=False)
class TimbreExtractor:
    models: dict  # property name -> forest.RegressorModel
    feature_convention: str
    dsp: DspConfig = field(default_factory=DspConfig)
    framing: FramingConfig = field(default_factory=FramingConfig)


def train_timbre_regressors(ds: TimbreDataset, dsp: DspConfig = DspConfig(),
                            forest_cfg: forest.ForestConfig = forest.ForestConfig(),
                            framing: FramingConfig = FramingConfig(),
                            properties=PROPERTIES) -> TimbreExtractor:
    """One regressor per property, all on the same feature rows and config."""
    if len(ds) == 0:
        raise EmptyDataset("timbre dataset has no rows")
    X = dataset_features(ds, dsp, framing)
    Y = ds.labels()
    convention = feature_convention(dsp, framing.frame_seconds)
    models = {}
    for name in properties:
        col = PROPERTIES.index(name)
        models[name] = forest.fit_regressor(X, Y[:, col], forest_cfg, feature_convention=convention)
    return TimbreExtractor(models, convention, dsp, framing)


def _check_convention(ex: TimbreExtractor, convention):
    if convention is not None and convention != ex.feature_convention:
        raise ConventionMismatch(
            f"extractor expects features under {ex.feature_convention!r}, got {convention!r}"
        )


def extract_timbre_batch(ex: TimbreExtractor, X, convention: str | None = None) -> np.ndarray:
    """(n, 7) clamped predictions for an (n, 2) feature matrix."""
    _check_convention(ex, convention)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    missing = [p for p in PROPERTIES if p not in ex.models]
    if missing:
        raise ConventionMismatch(f"extractor lacks regressors for {missing}")
    out = np.column_stack([forest.predict(ex.models[p], X) for p in PROPERTIES])
    return np.clip(out, LABEL_MIN, LABEL_MAX)


def extract_timbre(ex: TimbreExtractor, fp: FeaturePair, convention: str | None = None) -> TimbralVector:
    return TimbralVector.from_array(extract_timbre_batch(ex, fp.as_array(), convention)[0])


def extractor_to_dict(ex: TimbreExtractor) -> dict:
    return {
        "format": EXTRACTOR_FORMAT,
        "format_version": EXTRACTOR_FORMAT_VERSION,
        "feature_convention": ex.feature_convention,
        "dsp": asdict(ex.dsp),
        "framing": asdict(ex.framing),
        "properties": [p for p in PROPERTIES if p in ex.models],
        "models": {p: forest.model_to_dict(m) for p, m in ex.models.items()},
    }


def save_extractor(ex: TimbreExtractor, path) -> None:
    forest.write_container(path, extractor_to_dict(ex))


def extractor_from_dict(d: dict, expected_convention=None, source="extractor") -> TimbreExtractor:
    try:
        dsp = DspConfig(**d["dsp"])
        framing = FramingConfig(**d["framing"])
        names = list(d["properties"])
        models = {p: forest.model_from_dict(d["models"][p], source=f"{source}[{p}]") for p in names}
        convention = d["feature_convention"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{source}: malformed extractor ({exc})") from exc
    ex = TimbreExtractor(models, convention, dsp, framing)
    if expected_convention is not None and convention != expected_convention:
        warnings.warn(
            f"VersionMismatch: {source} was trained under {convention!r}, pipeline uses {expected_convention!r}",
            VersionMismatchWarning,
            stacklevel=2,
        )
    return ex


def load_extractor(path, expected_convention: str | None = None) -> TimbreExtractor:
    d = forest.read_container(path, EXTRACTOR_FORMAT, EXTRACTOR_FORMAT_VERSION)
    return extractor_from_dict(d, expected_convention, source=os.fspath(path))
