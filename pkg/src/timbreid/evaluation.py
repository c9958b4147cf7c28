"""Identification and verification experiments, and report files.

Streams, never frames, are split between training and testing. Per
speaker and seed the streams are shuffled and the first
``round(split * n)`` (at least one, and at most ``n - 1`` when ``n > 1``)
go to training. Timbral vectors are computed once per stream and reused
by every run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import forest
from .errors import CorpusTooSmall, IoError, NoAcceptedFrames, SingleClass, TimbreIdError
from .metrics import ConfusionCounts, accuracy, auc, eer, roc_curve
from .recognition import (
    Pipeline,
    SpeakerModel,
    VerifierModel,
    identify_vectors,
    ovr_stream_score,
    verify_vectors,
)

__all__ = [
    "EvalReport",
    "prepare_corpus",
    "split_streams",
    "run_identification_experiment",
    "run_verification_experiment",
    "population_trend",
    "emit_report",
    "report_to_dict",
]


@dataclass(eq=False)
class EvalReport:
    experiment_id: str
    mode: str  # "identify" or "verify"
    config: dict
    populations: list = field(default_factory=list)  # one dict per population size
    verification: dict = field(default_factory=dict)  # target -> metrics dict
    timings: dict = field(default_factory=dict)  # seconds; kept out of report.json

    @property
    def config_fingerprint(self) -> str:
        return hashlib.sha256(forest.dump_canonical(self.config)).hexdigest()


def prepare_corpus(corpus: dict, pipeline: Pipeline) -> dict[str, list[np.ndarray]]:
    """label -> per-stream timbral-vector matrices.

    ``corpus`` values may be AudioStreams or (name, AudioStream) pairs.
    """
    out = {}
    for label in sorted(corpus):
        mats = []
        for item in corpus[label]:
            stream = item[1] if isinstance(item, tuple) else item
            mats.append(pipeline.frame_vectors(stream))
        out[label] = mats
    return out


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key[0], spawn_key=tuple(key[1:])))


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence(key[0], spawn_key=tuple(key[1:])).generate_state(1, np.uint64)[0])


def split_streams(n_streams: int, split: float, seed: int, speaker_index: int):
    """(train indices, test indices) for one speaker, both sorted."""
    perm = _rng(seed, 0x5B, speaker_index).permutation(n_streams)
    n_train = int(round(split * n_streams))
    n_train = max(1, n_train)
    if n_streams > 1:
        n_train = min(n_train, n_streams - 1)
    return sorted(perm[:n_train].tolist()), sorted(perm[n_train:].tolist())


def _splits(vectors: dict, split: float, seed: int):
    labels = sorted(vectors)
    return {
        lab: split_streams(len(vectors[lab]), split, seed, i)
        for i, lab in enumerate(labels)
    }


def _train_matrix(vectors, labels, splits):
    X, y = [], []
    for lab in labels:
        for j in splits[lab][0]:
            V = vectors[lab][j]
            X.append(V)
            y += [lab] * V.shape[0]
    return np.vstack(X) if X else np.empty((0, 7)), y


def run_identification_experiment(vectors: dict, population_sizes, split: float = 0.7,
                                  seeds=(0,), forest_cfg: forest.ForestConfig = forest.ForestConfig(),
                                  pipeline: Pipeline | None = None,
                                  experiment_id: str = "identification",
                                  config: dict | None = None) -> EvalReport:
    """Stream-level identification accuracy for each population size.

    For each size ``k`` and seed, ``k`` speakers are drawn from the
    corpus, an identifier is trained on their training streams and scored
    on their test streams. Streams without accepted frames are skipped.
    """
    labels_all = sorted(vectors)
    for k in population_sizes:
        if k > len(labels_all):
            raise CorpusTooSmall(k, len(labels_all))
    report = EvalReport(experiment_id, "identify", dict(config or {}))
    started = time.perf_counter()
    for k in population_sizes:
        runs = []
        for seed in seeds:
            chosen = sorted(_rng(seed, 0x1D, k).choice(labels_all, size=k, replace=False).tolist())
            splits = _splits(vectors, split, seed)
            X, y = _train_matrix(vectors, chosen, splits)
            cfg = replace(forest_cfg, rng_seed=_derived_seed(seed, 0xC1, k))
            try:
                clf = forest.fit_classifier(X, y, cfg, feature_convention=pipeline.convention if pipeline else None)
            except (SingleClass, TimbreIdError) as exc:
                runs.append({"seed": seed, "speakers": chosen, "error": f"{type(exc).__name__}: {exc}"})
                continue
            model = SpeakerModel(clf, pipeline)
            stream_hits = stream_total = frame_hits = frame_total = skipped = 0
            for lab in chosen:
                for j in splits[lab][1]:
                    V = vectors[lab][j]
                    if V.shape[0] == 0:
                        skipped += 1
                        continue
                    res = identify_vectors(model, V)
                    stream_hits += res.label == lab
                    stream_total += 1
                    frame_pred = np.argmax(res.frame_probs, axis=1)
                    frame_hits += int(np.sum(frame_pred == model.labels.index(lab)))
                    frame_total += res.frames_used
            if stream_total == 0:
                runs.append({"seed": seed, "speakers": chosen, "error": "NoTestStreams"})
                continue
            runs.append({
                "seed": seed,
                "speakers": chosen,
                "test_streams": stream_total,
                "skipped_streams": skipped,
                "accuracy": accuracy(ConfusionCounts(tp=stream_hits, fp=stream_total - stream_hits)),
                "frame_accuracy": accuracy(ConfusionCounts(tp=frame_hits, fp=frame_total - frame_hits)),
            })
        accs = [r["accuracy"] for r in runs if "accuracy" in r]
        report.populations.append({
            "population": int(k),
            "runs": runs,
            "mean_accuracy": float(np.mean(accs)) if accs else None,
            "mean_frame_accuracy": float(np.mean([r["frame_accuracy"] for r in runs if "accuracy" in r])) if accs else None,
        })
    report.timings["identification_s"] = time.perf_counter() - started
    return report


def _pooled_roc(scores, truth):
    curve = roc_curve(scores, truth)
    return curve, auc(curve), eer(curve)


def run_verification_experiment(vectors: dict, targets, split: float = 0.7, seeds=(0,),
                                forest_cfg: forest.ForestConfig = forest.ForestConfig(),
                                pipeline: Pipeline | None = None, threshold: float = 0.5,
                                score_mode: str = "binary",
                                experiment_id: str = "verification",
                                config: dict | None = None) -> EvalReport:
    """Per target: stream accuracy at ``threshold`` plus ROC/AUC/EER.

    ``score_mode="binary"`` trains a target-vs-impostor forest per target;
    ``"ovr"`` trains one identifier over all speakers and scores each
    stream by its mean frame probability for the target. Impostors are
    every other speaker in the corpus. Scores are pooled over seeds for
    the ROC. A target that cannot be evaluated gets an ``error`` entry
    and the run moves on.
    """
    if score_mode not in ("binary", "ovr"):
        raise ValueError(f"unknown score_mode {score_mode!r}")
    labels_all = sorted(vectors)
    report = EvalReport(experiment_id, "verify", dict(config or {}))
    started = time.perf_counter()
    convention = pipeline.convention if pipeline else None
    ovr_models = {}
    if score_mode == "ovr":
        for seed in seeds:
            splits = _splits(vectors, split, seed)
            X, y = _train_matrix(vectors, labels_all, splits)
            cfg = replace(forest_cfg, rng_seed=_derived_seed(seed, 0x0F))
            ovr_models[seed] = SpeakerModel(forest.fit_classifier(X, y, cfg, feature_convention=convention), pipeline)

    for target in targets:
        entry = {"score_mode": score_mode, "threshold": threshold}
        try:
            if target not in vectors:
                raise KeyError(f"unknown target {target!r}")
            scores, truth, per_seed = [], [], []
            frame_hits = frame_total = 0
            for seed in seeds:
                splits = _splits(vectors, split, seed)
                if not splits[target][1]:
                    raise NoAcceptedFrames(target, f"target {target!r} has no test streams")
                if score_mode == "binary":
                    Xt, _ = _train_matrix(vectors, [target], splits)
                    impostors = [lab for lab in labels_all if lab != target]
                    Xi, _ = _train_matrix(vectors, impostors, splits)
                    if Xt.shape[0] == 0 or Xi.shape[0] == 0:
                        raise NoAcceptedFrames("target" if Xt.shape[0] == 0 else "impostor")
                    cfg = replace(forest_cfg, rng_seed=_derived_seed(seed, 0xE1, labels_all.index(target)))
                    clf = forest.fit_classifier(
                        np.vstack([Xt, Xi]), [1] * Xt.shape[0] + [0] * Xi.shape[0], cfg,
                        feature_convention=convention,
                    )
                    verifier = VerifierModel(clf, pipeline, target, threshold)
                    score_fn = lambda V: verify_vectors(verifier, V).score  # noqa: E731
                    frame_fn = lambda V: forest.predict_proba(verifier.classifier, V)[:, 1]  # noqa: E731
                else:
                    model = ovr_models[seed]
                    score_fn = lambda V: ovr_stream_score(model, target, V)  # noqa: E731
                    frame_fn = lambda V: forest.predict_proba(model.classifier, V)[:, model.labels.index(target)]  # noqa: E731
                s_seed, t_seed = [], []
                for lab in labels_all:
                    for j in splits[lab][1]:
                        V = vectors[lab][j]
                        if V.shape[0] == 0:
                            continue
                        s_seed.append(score_fn(V))
                        t_seed.append(lab == target)
                        frame_dec = frame_fn(V) >= threshold
                        frame_hits += int(np.sum(frame_dec == (lab == target)))
                        frame_total += V.shape[0]
                decisions = np.array(s_seed) >= threshold
                per_seed.append({
                    "seed": seed,
                    "accuracy": accuracy(ConfusionCounts.from_decisions(decisions, t_seed)),
                    "positives": int(np.sum(t_seed)),
                    "negatives": int(len(t_seed) - np.sum(t_seed)),
                })
                scores += s_seed
                truth += t_seed
            curve, area, err = _pooled_roc(scores, truth)
            entry.update({
                "runs": per_seed,
                "mean_accuracy": float(np.mean([r["accuracy"] for r in per_seed])),
                "frame_accuracy": frame_hits / frame_total if frame_total else None,
                "auc": area,
                "eer": err,
                "roc": {
                    "threshold": [float(v) if math.isfinite(v) else "inf" for v in curve.thresholds],
                    "fpr": curve.fpr.tolist(),
                    "tpr": curve.tpr.tolist(),
                },
            })
        except (TimbreIdError, KeyError) as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        report.verification[str(target)] = entry
    report.timings["verification_s"] = time.perf_counter() - started
    return report


def population_trend(report: EvalReport) -> float:
    """Spearman rank correlation of mean accuracy against population size.

    A constant accuracy series has no rank order; it is reported as 0.
    """
    pts = [(p["population"], p["mean_accuracy"]) for p in report.populations if p["mean_accuracy"] is not None]
    if len(pts) < 2:
        return 0.0
    ks, accs = zip(*pts)
    if len(set(accs)) == 1:
        return 0.0
    return float(stats.spearmanr(ks, accs).statistic)


# ---------------------------------------------------------------- output files


def report_to_dict(report: EvalReport) -> dict:
    """Canonical content of report.json. Timings are left out so the file
    is a pure function of inputs, configs and seeds."""
    return {
        "experiment_id": report.experiment_id,
        "mode": report.mode,
        "config": report.config,
        "config_fingerprint": report.config_fingerprint,
        "populations": report.populations,
        "population_trend_spearman": population_trend(report) if report.populations else None,
        "verification": report.verification,
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _svg_line_plot(title, xlabel, ylabel, xs, ys, xlim=None, ylim=None) -> bytes:
    """Minimal fixed-layout SVG polyline; no timestamps, so output is stable."""
    w, h, pad = 480, 360, 50
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    x0, x1 = xlim or (min(xs), max(xs))
    y0, y1 = ylim or (min(ys), max(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (w - 2 * pad)

    def py(y):
        return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
        f'<text x="{w / 2:.0f}" y="{h - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{h / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {h / 2:.0f})">{ylabel}</text>',
        f'<text x="{pad}" y="{h - pad + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{x0:g}</text>',
        f'<text x="{w - pad}" y="{h - pad + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{x1:g}</text>',
        f'<text x="{pad - 6}" y="{h - pad}" text-anchor="end" font-family="sans-serif" font-size="10">{y0:g}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{y1:g}</text>',
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>',
        "</svg>",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in str(label))


def emit_report(report: EvalReport, out_dir) -> list[str]:
    """Write report.json plus CSV and SVG artifacts; returns written paths.

    accuracy_vs_population.csv/.svg appear only when there are population
    results, roc_<target>.csv/.svg only for targets that produced a curve.
    """
    out_dir = os.fspath(out_dir)
    files = {"report.json": forest.dump_canonical(report_to_dict(report))}
    pops = [p for p in report.populations if p["mean_accuracy"] is not None]
    if report.populations:
        rows = []
        for p in report.populations:
            accs = [r["accuracy"] for r in p["runs"] if "accuracy" in r]
            rows.append([
                p["population"], p["mean_accuracy"],
                min(accs) if accs else None, max(accs) if accs else None,
                len(accs), p["mean_frame_accuracy"],
            ])
        files["accuracy_vs_population.csv"] = _csv_bytes(
            ["population", "mean_accuracy", "min_accuracy", "max_accuracy", "n_runs", "mean_frame_accuracy"], rows
        )
        if pops:
            files["accuracy_vs_population.svg"] = _svg_line_plot(
                "Identification accuracy vs population", "speakers", "accuracy",
                [p["population"] for p in pops], [p["mean_accuracy"] for p in pops], ylim=(0.0, 1.0),
            )
    for target, entry in sorted(report.verification.items()):
        if "roc" not in entry:
            continue
        roc = entry["roc"]
        name = _safe_name(target)
        files[f"roc_{name}.csv"] = _csv_bytes(
            ["threshold", "fpr", "tpr"], zip(roc["threshold"], roc["fpr"], roc["tpr"])
        )
        files[f"roc_{name}.svg"] = _svg_line_plot(
            f"ROC {target} (AUC {entry['auc']:.3f}, EER {entry['eer']:.3f})", "FPR", "TPR",
            roc["fpr"], roc["tpr"], xlim=(0.0, 1.0), ylim=(0.0, 1.0),
        )
    written = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, data in files.items():
            path = os.path.join(out_dir, name)
            with open(path, "wb") as fh:
                fh.write(data)
            written.append(path)
    except OSError as exc:
        raise IoError(f"{out_dir}: {exc}") from exc
    return written
