"""Speaker identification and verification over per-frame timbral vectors.

A stream goes through: peak scaling -> 0.3 s frames -> silence filter ->
two weighted-sum features per frame -> seven timbral properties. The
classifier sees one timbral vector per accepted frame. A stream-level
identity is the argmax of the column sums of the frame probability
matrix; a stream-level verification score is the mean per-frame target
probability.

Ties in any argmax go to the lowest label index (labels are sorted).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import forest
from .audio_io import AudioStream, scale_stream
from .dsp import DspConfig, feature_convention, frame_features
from .errors import (
    CorruptModel,
    EmptyMatrix,
    InsufficientSpeakers,
    NoAcceptedFrames,
    SilentStream,
    StreamTooShort,
    VersionMismatch,
)
from .framing import FramingConfig, filter_silence, partition
from .timbre import TimbralVector, TimbreExtractor, extract_timbre_batch, load_extractor

__all__ = [
    "Pipeline",
    "SpeakerModel",
    "VerifierModel",
    "IdentifyResult",
    "VerifyResult",
    "train_identifier",
    "identify_frame",
    "aggregate",
    "identify_vectors",
    "identify_stream",
    "train_verifier",
    "verifier_frame_scores",
    "verify_vectors",
    "verify_stream",
    "ovr_stream_score",
    "save_speaker_model",
    "load_speaker_model",
]

SPEAKER_FORMAT = "timbreid-speaker-model"
SPEAKER_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Pipeline:
    extractor: TimbreExtractor
    framing: FramingConfig = field(default_factory=FramingConfig)
    dsp: DspConfig = field(default_factory=DspConfig)

    @property
    def convention(self) -> str:
        return feature_convention(self.dsp, self.framing.frame_seconds)

    def frame_features(self, stream: AudioStream) -> np.ndarray:
        """(n_accepted, 2) feature rows; zero rows if nothing survives."""
        try:
            frames = filter_silence(partition(scale_stream(stream), self.framing), self.framing)
        except (SilentStream, StreamTooShort):
            frames = []
        if not frames:
            return np.empty((0, 2))
        return np.vstack([frame_features(f, self.dsp).as_array() for f in frames])

    def frame_vectors(self, stream: AudioStream) -> np.ndarray:
        """(n_accepted, 7) timbral vectors for the stream's accepted frames."""
        X = self.frame_features(stream)
        if X.shape[0] == 0:
            return np.empty((0, 7))
        return extract_timbre_batch(self.extractor, X, self.convention)


def _stack_vectors(pipeline: Pipeline, streams, who) -> np.ndarray:
    mats = [pipeline.frame_vectors(s) for s in streams]
    V = np.vstack(mats) if mats else np.empty((0, 7))
    if V.shape[0] == 0:
        raise NoAcceptedFrames(who)
    return V


@dataclass(eq=False)
class SpeakerModel:
    classifier: forest.ClassifierModel
    pipeline: Pipeline

    @property
    def labels(self) -> list:
        return list(self.classifier.classes)


@dataclass(eq=False)
class VerifierModel:
    classifier: forest.ClassifierModel  # classes [0, 1]; 1 = target
    pipeline: Pipeline
    target: str
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class IdentifyResult:
    label: object
    scores: np.ndarray  # column sums of the frame probability matrix
    frames_used: int
    frame_probs: np.ndarray  # (frames_used, n_speakers)

    @property
    def mean_scores(self) -> np.ndarray:
        return self.scores / self.frames_used


@dataclass(frozen=True)
class VerifyResult:
    accept: bool
    score: float
    frames_used: int


def train_identifier(corpus: dict, pipeline: Pipeline,
                     forest_cfg: forest.ForestConfig = forest.ForestConfig()) -> SpeakerModel:
    """Fit the speaker classifier on every accepted frame of every stream.

    ``corpus`` maps speaker label -> list of AudioStream.
    """
    if len(corpus) < 2:
        raise InsufficientSpeakers(f"need at least 2 speakers, got {len(corpus)}")
    X, y = [], []
    for label in sorted(corpus):
        V = _stack_vectors(pipeline, corpus[label], label)
        X.append(V)
        y += [label] * V.shape[0]
    clf = forest.fit_classifier(np.vstack(X), y, forest_cfg, feature_convention=pipeline.convention)
    return SpeakerModel(clf, pipeline)


def identify_frame(model: SpeakerModel, tv) -> tuple:
    """(label, probability vector) for one timbral vector."""
    x = tv.as_array() if isinstance(tv, TimbralVector) else np.asarray(tv, dtype=np.float64)
    probs = forest.predict_proba(model.classifier, x)
    return model.labels[int(np.argmax(probs))], probs


def aggregate(matrix) -> np.ndarray:
    """Column sums of a (frames x speakers) probability matrix, unnormalised."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise EmptyMatrix("probability matrix has no rows")
    return m.sum(axis=0)


def identify_vectors(model: SpeakerModel, V) -> IdentifyResult:
    V = np.asarray(V, dtype=np.float64)
    if V.shape[0] == 0:
        raise NoAcceptedFrames()
    probs = forest.predict_proba(model.classifier, V)
    scores = aggregate(probs)
    return IdentifyResult(model.labels[int(np.argmax(scores))], scores, V.shape[0], probs)


def identify_stream(model: SpeakerModel, stream: AudioStream) -> IdentifyResult:
    return identify_vectors(model, model.pipeline.frame_vectors(stream))


def train_verifier(target_streams, impostor_streams, pipeline: Pipeline,
                   forest_cfg: forest.ForestConfig = forest.ForestConfig(),
                   target: str = "target", threshold: float = 0.5) -> VerifierModel:
    """Binary forest: target frames labelled 1, impostor frames 0."""
    Vt = _stack_vectors(pipeline, target_streams, "target")
    Vi = _stack_vectors(pipeline, impostor_streams, "impostor")
    X = np.vstack([Vt, Vi])
    y = [1] * Vt.shape[0] + [0] * Vi.shape[0]
    clf = forest.fit_classifier(X, y, forest_cfg, feature_convention=pipeline.convention)
    return VerifierModel(clf, pipeline, target, threshold)


def verifier_frame_scores(model: VerifierModel, V) -> np.ndarray:
    probs = forest.predict_proba(model.classifier, np.asarray(V, dtype=np.float64))
    return probs[:, model.classifier.classes.index(1)]


def verify_vectors(model: VerifierModel, V, threshold: float | None = None) -> VerifyResult:
    V = np.asarray(V, dtype=np.float64)
    if V.shape[0] == 0:
        raise NoAcceptedFrames()
    score = float(np.mean(verifier_frame_scores(model, V)))
    thr = model.threshold if threshold is None else threshold
    return VerifyResult(score >= thr, score, V.shape[0])


def verify_stream(model: VerifierModel, stream: AudioStream, threshold: float | None = None) -> VerifyResult:
    return verify_vectors(model, model.pipeline.frame_vectors(stream), threshold)


def ovr_stream_score(model: SpeakerModel, target, V) -> float:
    """One-vs-rest verification score from an identification model:
    mean per-frame probability of ``target``."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape[0] == 0:
        raise NoAcceptedFrames()
    probs = forest.predict_proba(model.classifier, V)
    return float(np.mean(probs[:, model.labels.index(target)]))


# ---------------------------------------------------------------- persistence


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def save_speaker_model(model, path, extractor_path) -> None:
    """Write an identifier or verifier model.

    The timbre extractor is referenced by path (relative to the model
    file) and pinned by its SHA-256 rather than embedded.
    """
    model_dir = os.path.dirname(os.path.abspath(path))
    ref = os.path.relpath(os.path.abspath(extractor_path), model_dir).replace(os.sep, "/")
    p = model.pipeline
    obj = {
        "format": SPEAKER_FORMAT,
        "format_version": SPEAKER_FORMAT_VERSION,
        "kind": "verifier" if isinstance(model, VerifierModel) else "identifier",
        "labels": model.classifier.classes,
        "classifier": forest.model_to_dict(model.classifier),
        "feature_convention": p.convention,
        "framing": asdict(p.framing),
        "dsp": asdict(p.dsp),
        "timbre_model": {"path": ref, "sha256": file_sha256(extractor_path)},
    }
    if isinstance(model, VerifierModel):
        obj["target"] = model.target
        obj["threshold"] = model.threshold
    forest.write_container(path, obj)


def load_speaker_model(path, expected_convention: str | None = None):
    """Load an identifier (SpeakerModel) or verifier (VerifierModel)."""
    path = os.fspath(path)
    d = forest.read_container(path, SPEAKER_FORMAT, SPEAKER_FORMAT_VERSION)
    try:
        ref = d["timbre_model"]
        ex_path = os.path.join(os.path.dirname(os.path.abspath(path)), ref["path"])
        framing = FramingConfig(**d["framing"])
        dsp = DspConfig(**d["dsp"])
        kind = d["kind"]
        clf = forest.model_from_dict(d["classifier"], expected_convention, source=path)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{path}: malformed speaker model ({exc})") from exc
    if not os.path.exists(ex_path):
        raise CorruptModel(f"{path}: referenced timbre model {ex_path} not found")
    if file_sha256(ex_path) != ref["sha256"]:
        raise VersionMismatch(f"{path}: timbre model {ex_path} changed since enrollment")
    pipeline = Pipeline(load_extractor(ex_path), framing, dsp)
    if kind == "identifier":
        return SpeakerModel(clf, pipeline)
    if kind == "verifier":
        return VerifierModel(clf, pipeline, d["target"], float(d["threshold"]))
    raise CorruptModel(f"{path}: unknown model kind {kind!r}")
