"""Random forests written from scratch: Gini classification trees and
variance-reduction regression trees, bagged, seeded, and serialisable.

Trees are stored as flat node arrays. Internal nodes send a sample left
when ``x[feature] <= threshold``. Classifier leaves hold the class counts
of the training samples that reached them, regressor leaves the mean
target.

Every tree draws from its own PCG64 stream, seeded from
``SeedSequence(rng_seed, spawn_key=(tree_index,))``, so a model is a pure
function of data and config no matter how trees are scheduled.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    EmptyTrainingSet,
    IoError,
    SingleClass,
    VersionMismatch,
    VersionMismatchWarning,
)

__all__ = [
    "ForestConfig",
    "Split",
    "DecisionTree",
    "ClassifierModel",
    "RegressorModel",
    "gini",
    "best_split",
    "fit_classifier",
    "fit_regressor",
    "predict_proba",
    "predict",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "dump_canonical",
    "read_container",
    "write_container",
]

MODEL_FORMAT = "timbreid-forest"
MODEL_FORMAT_VERSION = 1

# Gains closer than this (relative to the parent impurity) count as ties.
_TIE_TOL = 1e-12

CLASSIFY = "classify"
REGRESS = "regress"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    # None picks the task default: floor(sqrt(d)) to classify,
    # max(1, floor(d / 3)) to regress. Also accepts "all", "sqrt",
    # "third", or an explicit count.
    features_per_split: int | str | None = None
    bootstrap: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        fps = self.features_per_split
        if isinstance(fps, str) and fps not in ("all", "sqrt", "third"):
            raise ValueError(f"unknown features_per_split rule {fps!r}")
        if isinstance(fps, int) and not isinstance(fps, bool) and fps < 1:
            raise ValueError("features_per_split must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def n_split_features(self, n_features: int, task: str) -> int:
        fps = self.features_per_split
        if fps is None:
            fps = "sqrt" if task == CLASSIFY else "third"
        if fps == "all":
            k = n_features
        elif fps == "sqrt":
            k = int(math.isqrt(n_features))
        elif fps == "third":
            k = n_features // 3
        else:
            k = int(fps)
        return max(1, min(n_features, k))


def gini(probs) -> float:
    """Gini impurity: sum of p * (1 - p) over the class probabilities."""
    p = np.asarray(probs, dtype=np.float64)
    return float(np.sum(p * (1.0 - p)))


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float


class _Counts:
    """Grow-on-demand float ``arange`` and identity matrices for the split kernel."""

    def __init__(self):
        self.arange = np.arange(1024, dtype=np.float64)
        self.eye = {}

    def upto(self, n):
        if n > self.arange.shape[0]:
            self.arange = np.arange(2 * n, dtype=np.float64)
        return self.arange[1:n]

    def onehot(self, n_classes):
        if n_classes not in self.eye:
            self.eye[n_classes] = np.eye(n_classes)
        return self.eye[n_classes]


_COUNTS = _Counts()


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    # adjacent floats can round the midpoint up onto ``hi``
    return lo if mid >= hi else mid


def _feature_split(xf, y, task, n_classes, parent, tol):
    """Best (gain, threshold) for one feature column, or None."""
    order = xf.argsort(kind="stable")
    xs = xf[order]
    boundary = xs[1:] > xs[:-1]
    n = xs.shape[0]
    n_left = _COUNTS.upto(n)
    n_right = n - n_left
    if task == CLASSIFY:
        onehot = _COUNTS.onehot(n_classes)[y[order]]
        left = onehot.cumsum(axis=0)[:-1]
        right = left[-1] + onehot[-1] - left
        # n * Gini = n - sum(counts^2) / n, per side
        gains = parent - (n - (left * left).sum(axis=1) / n_left
                          - (right * right).sum(axis=1) / n_right) / n
    else:
        s_left = y[order].cumsum()
        total = s_left[-1]
        s_left = s_left[:-1]
        s_right = total - s_left
        gains = (s_left * s_left / n_left + s_right * s_right / n_right - total * total / n) / n
    gains[~boundary] = -np.inf
    i = int(gains.argmax())
    top = gains[i]
    if not top > tol:
        return None
    # lowest threshold among gains tied with the best
    i = int((gains >= top - tol).argmax())
    return float(gains[i]), _midpoint(float(xs[i]), float(xs[i + 1]))


def _impurity(y, task, n_classes):
    if task == CLASSIFY:
        counts = np.bincount(y, minlength=n_classes)
        return gini(counts / y.shape[0])
    return float(np.var(y))


def best_split(X, y, candidate_features: Sequence[int], task: str = CLASSIFY,
               n_classes: int | None = None) -> Split | None:
    """Best threshold split over ``candidate_features``.

    Thresholds are midpoints between consecutive distinct values. Gain is
    the decrease of weighted Gini impurity (classify; ``y`` holds class
    indices) or of weighted variance (regress). Ties go to the lowest
    feature index, then the lowest threshold. Returns None when no split
    has positive gain.
    """
    X = np.asarray(X, dtype=np.float64)
    if task == CLASSIFY:
        y = np.asarray(y, dtype=np.intp)
        if n_classes is None:
            n_classes = int(y.max()) + 1
    else:
        y = np.asarray(y, dtype=np.float64)
    parent = _impurity(y, task, n_classes)
    if task == REGRESS:
        y = y - y.mean()
    return _search(X, y, candidate_features, task, n_classes, parent, _TIE_TOL * max(parent, 1.0))


def _search(X, y, features, task, n_classes, parent, tol, rows=None):
    best = None
    for f in sorted(int(f) for f in features):
        col = X[:, f] if rows is None else X[rows, f]
        found = _feature_split(col, y, task, n_classes, parent, tol)
        if found is None:
            continue
        gain, thr = found
        if best is None or gain > best.gain + tol:
            best = Split(f, thr, gain)
    return best


@dataclass(eq=False)
class DecisionTree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, C) class counts, or (n_nodes, 1) mean

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            go_left = X[rows, np.where(active, feat, 0)] <= self.threshold[node]
            node = np.where(active, np.where(go_left, self.left[node], self.right[node]), node)


def _grow_tree(X, y, task, n_classes, cfg: ForestConfig, k_features: int, rng) -> DecisionTree:
    n_samples, n_features = X.shape
    feature, threshold, left, right, value = [], [], [], [], []
    # one tie tolerance per tree, scaled to the root impurity
    tol = _TIE_TOL * max(_impurity(y, task, n_classes), 1.0)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n_samples), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        n = idx.shape[0]
        if task == CLASSIFY:
            counts = np.bincount(yi, minlength=n_classes).astype(np.float64)
            value[node] = counts
            pure = np.count_nonzero(counts) == 1
            parent = 1.0 - float(counts @ counts) / (n * n)
        else:
            lo, hi = yi.min(), yi.max()
            pure = lo == hi
            # the clip keeps a rounded mean inside the node's target range
            mean = lo if pure else min(max(yi.sum() / n, lo), hi)
            value[node] = np.array([mean])
            yi = yi - mean
            parent = float(yi @ yi) / n
        if pure or n < cfg.min_samples_split:
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        # Evaluate k random features; if none of them splits, keep drawing
        # from the rest of the permutation until one does.
        perm = rng.permutation(n_features) if k_features < n_features else range(n_features)
        split = _search(X, yi, perm[:k_features], task, n_classes, parent, tol, idx)
        pos = k_features
        while split is None and pos < n_features:
            split = _search(X, yi, perm[pos:pos + 1], task, n_classes, parent, tol, idx)
            pos += 1
        if split is None:
            continue
        mask = X[idx, split.feature] <= split.threshold
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = new_node()
        right[node] = new_node()
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], idx[~mask], depth + 1))
        stack.append((left[node], idx[mask], depth + 1))

    return DecisionTree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.vstack(value),
    )


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(tree_index,))))


def _fit_trees(X, y, task, n_classes, cfg: ForestConfig):
    n = X.shape[0]
    k = cfg.n_split_features(X.shape[1], task)
    trees = []
    for t in range(cfg.n_trees):
        rng = _tree_rng(cfg.rng_seed, t)
        if cfg.bootstrap:
            sample = rng.integers(0, n, size=n)
            Xb, yb = X[sample], y[sample]
        else:
            Xb, yb = X, y
        trees.append(_grow_tree(Xb, yb, task, n_classes, cfg, k, rng))
    return trees


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch("training data must be a 2-D sample matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features must be finite")
    return X


@dataclass(eq=False)
class ClassifierModel:
    trees: list
    classes: list
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)
    feature_convention: str | None = None

    task = CLASSIFY


@dataclass(eq=False)
class RegressorModel:
    trees: list
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)
    feature_convention: str | None = None

    task = REGRESS


def fit_classifier(X, y, cfg: ForestConfig = ForestConfig(), feature_convention=None) -> ClassifierModel:
    X = _as_matrix(X)
    y = list(y)
    if X.shape[0] == 0:
        raise EmptyTrainingSet("no training samples")
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} samples but {len(y)} labels")
    classes = sorted(set(y))
    if len(classes) < 2:
        raise SingleClass(f"need at least two classes, got {classes}")
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[c] for c in y], dtype=np.intp)
    trees = _fit_trees(X, yi, CLASSIFY, len(classes), cfg)
    return ClassifierModel(trees, classes, X.shape[1], cfg, feature_convention)


def fit_regressor(X, y, cfg: ForestConfig = ForestConfig(), feature_convention=None) -> RegressorModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise EmptyTrainingSet("no training samples")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} samples but {y.shape[0]} targets")
    trees = _fit_trees(X, y, REGRESS, 0, cfg)
    return RegressorModel(trees, X.shape[1], cfg, feature_convention)


def _query(model, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got shape {np.shape(x)}")
    return X, single


def predict_proba(model: ClassifierModel, x) -> np.ndarray:
    """Mean over trees of the leaf class proportions.

    ``x`` may be one feature vector (returns shape (C,)) or a batch
    (returns (n, C)). Columns follow ``model.classes``.
    """
    X, single = _query(model, x)
    total = np.zeros((X.shape[0], len(model.classes)))
    for tree in model.trees:
        counts = tree.value[tree.apply(X)]
        total += counts / counts.sum(axis=1, keepdims=True)
    probs = total / len(model.trees)
    return probs[0] if single else probs


def predict(model: RegressorModel, x):
    """Mean over trees of the leaf target means; scalar for one vector."""
    X, single = _query(model, x)
    leaves = np.stack([tree.value[tree.apply(X), 0] for tree in model.trees])
    # the clip keeps a rounded mean inside the trees' range, so an
    # ensemble of identical leaves returns that value exactly
    out = np.clip(leaves.sum(axis=0) / len(model.trees), leaves.min(axis=0), leaves.max(axis=0))
    return float(out[0]) if single else out


# ---------------------------------------------------------------- serialisation


def dump_canonical(obj) -> bytes:
    """Sorted keys, no whitespace, trailing newline. Floats use repr, so they round-trip."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def write_container(path, obj) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(dump_canonical(obj))
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def read_container(path, kind: str, version: int) -> dict:
    """Load a canonical-JSON container and check its ``format`` header."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(obj, dict) or obj.get("format") != kind:
        raise CorruptModel(f"{path}: expected a {kind!r} container")
    if obj.get("format_version") != version:
        raise VersionMismatch(
            f"{path}: format version {obj.get('format_version')!r}, this build reads {version}"
        )
    return obj


def _label_to_json(label):
    if isinstance(label, (np.integer,)):
        return int(label)
    if isinstance(label, (np.str_,)):
        return str(label)
    return label


def _tree_to_dict(tree: DecisionTree, task: str) -> dict:
    if task == CLASSIFY:
        value = [[int(c) for c in row] for row in tree.value]
    else:
        value = [float(v) for v in tree.value[:, 0]]
    return {
        "feature": [int(v) for v in tree.feature],
        "threshold": [float(v) for v in tree.threshold],
        "left": [int(v) for v in tree.left],
        "right": [int(v) for v in tree.right],
        "value": value,
    }


def _tree_from_dict(d: dict, task: str, n_classes: int, n_features: int) -> DecisionTree:
    feature = np.array(d["feature"], dtype=np.intp)
    n = feature.shape[0]
    threshold = np.array(d["threshold"], dtype=np.float64)
    left = np.array(d["left"], dtype=np.intp)
    right = np.array(d["right"], dtype=np.intp)
    if task == CLASSIFY:
        value = np.array(d["value"], dtype=np.float64).reshape(n, n_classes)
    else:
        value = np.array(d["value"], dtype=np.float64).reshape(n, 1)
    if n == 0 or not (threshold.shape == left.shape == right.shape == (n,)):
        raise ValueError("inconsistent node arrays")
    internal = feature >= 0
    if np.any(feature >= n_features):
        raise ValueError("split feature out of range")
    for child in (left[internal], right[internal]):
        if np.any(child <= np.flatnonzero(internal)) or np.any(child >= n):
            raise ValueError("child index out of range")
    if task == CLASSIFY and np.any(value.sum(axis=1) <= 0):
        raise ValueError("empty leaf distribution")
    return DecisionTree(feature, threshold, left, right, value)


def model_to_dict(model) -> dict:
    task = model.task
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "task": task,
        "n_features": int(model.n_features),
        "feature_convention": model.feature_convention,
        "classes": [_label_to_json(c) for c in model.classes] if task == CLASSIFY else None,
        "config": asdict(model.config),
        "trees": [_tree_to_dict(t, task) for t in model.trees],
    }


def model_from_dict(d: dict, expected_convention: str | None = None, source="model"):
    if d.get("format") != MODEL_FORMAT:
        raise CorruptModel(f"{source}: not a forest model")
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"{source}: forest format version {d.get('format_version')!r}, "
            f"this build reads {MODEL_FORMAT_VERSION}"
        )
    try:
        task = d["task"]
        n_features = int(d["n_features"])
        cfg = ForestConfig(**d["config"])
        convention = d["feature_convention"]
        if task == CLASSIFY:
            classes = list(d["classes"])
            trees = [_tree_from_dict(t, task, len(classes), n_features) for t in d["trees"]]
            model = ClassifierModel(trees, classes, n_features, cfg, convention)
        elif task == REGRESS:
            trees = [_tree_from_dict(t, task, 0, n_features) for t in d["trees"]]
            model = RegressorModel(trees, n_features, cfg, convention)
        else:
            raise ValueError(f"unknown task {task!r}")
        if not trees:
            raise ValueError("model has no trees")
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{source}: malformed model ({exc})") from exc
    if expected_convention is not None and convention != expected_convention:
        warnings.warn(
            f"VersionMismatch: {source} was trained under feature convention "
            f"{convention!r}, pipeline uses {expected_convention!r}",
            VersionMismatchWarning,
            stacklevel=2,
        )
    return model


def save_model(model, path) -> None:
    write_container(path, model_to_dict(model))


def load_model(path, expected_convention: str | None = None):
    return model_from_dict(
        read_container(path, MODEL_FORMAT, MODEL_FORMAT_VERSION),
        expected_convention,
        source=os.fspath(path),
    )
