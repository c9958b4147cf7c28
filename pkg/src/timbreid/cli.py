"""Command-line entry point.

Exit codes: 0 success (``verify``: accepted), 1 ``verify`` rejected,
2 any error. Errors print as ``error: <ErrorName>: <message>``.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings

from . import __version__
from .audio_io import load_corpus, read_wav, write_corpus
from .config import DEFAULT_CONFIG_TOML, load_config
from .errors import TimbreIdError, VersionMismatchWarning
from .evaluation import (
    emit_report,
    population_trend,
    prepare_corpus,
    run_identification_experiment,
    run_verification_experiment,
)
from .recognition import (
    Pipeline,
    SpeakerModel,
    VerifierModel,
    identify_stream,
    load_speaker_model,
    save_speaker_model,
    train_identifier,
    train_verifier,
    verify_stream,
)
from .synth import synth_corpus
from .timbre import (
    load_extractor,
    load_timbre_dataset,
    save_extractor,
    synth_timbre_dataset,
    train_timbre_regressors,
    write_timbre_dataset,
)

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _out(msg: str = ""):
    print(msg, flush=True)


def _err(msg: str):
    print(msg, file=sys.stderr, flush=True)


def _pipeline_for(cfg, extractor) -> Pipeline:
    return Pipeline(extractor, cfg.framing, cfg.dsp)


# ---------------------------------------------------------------- commands


def cmd_synth_data(args) -> int:
    ds = synth_timbre_dataset(args.seed, args.rows, args.noise_sd, sample_rate=args.sample_rate)
    csv_path = write_timbre_dataset(ds, args.out)
    _out(f"wrote {len(ds)} rows to {csv_path}")
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    corpus = synth_corpus(args.speakers, args.streams, args.seconds, args.seed, args.sample_rate)
    write_corpus(args.out, corpus)
    _out(f"wrote {args.speakers} speakers x {args.streams} streams to {args.out}")
    return EXIT_OK


def cmd_train_timbre(args) -> int:
    cfg = load_config(args.config).override("timbre_forest", rng_seed=args.seed)
    ds = load_timbre_dataset(args.dataset)
    ex = train_timbre_regressors(ds, cfg.dsp, cfg.timbre_forest, cfg.framing)
    save_extractor(ex, args.out)
    _out(f"trained 7 regressors on {len(ds)} rows -> {args.out}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    cfg = load_config(args.config).override("speaker_forest", rng_seed=args.seed)
    pipeline = _pipeline_for(cfg, load_extractor(args.timbre_model, _convention(cfg)))
    corpus = {label: [s for _, s in items] for label, items in load_corpus(args.corpus).items()}
    if args.verify_target is None:
        model = train_identifier(corpus, pipeline, cfg.speaker_forest)
        what = f"identifier for {len(model.labels)} speakers"
    else:
        if args.verify_target not in corpus:
            raise TimbreIdError(f"target {args.verify_target!r} not in corpus")
        impostors = [s for label, streams in corpus.items() if label != args.verify_target for s in streams]
        threshold = cfg.experiment.threshold if args.threshold is None else args.threshold
        model = train_verifier(corpus[args.verify_target], impostors, pipeline, cfg.speaker_forest,
                               target=args.verify_target, threshold=threshold)
        what = f"verifier for {args.verify_target!r}"
    save_speaker_model(model, args.out, args.timbre_model)
    _out(f"enrolled {what} -> {args.out}")
    return EXIT_OK


def _convention(cfg):
    return Pipeline(None, cfg.framing, cfg.dsp).convention


def cmd_identify(args) -> int:
    model = load_speaker_model(args.model)
    if not isinstance(model, SpeakerModel):
        raise TimbreIdError(f"{args.model} is a verifier model; use 'verify'")
    res = identify_stream(model, read_wav(args.audio))
    _out(f"label\t{res.label}")
    _out(f"frames_used\t{res.frames_used}")
    for label, total, mean in zip(model.labels, res.scores, res.mean_scores):
        _out(f"score\t{label}\t{float(total)!r}\t{float(mean)!r}")
    if args.per_frame:
        for k, row in enumerate(res.frame_probs):
            best = int(row.argmax())
            _out(f"frame\t{k}\t{model.labels[best]}\t{float(row[best])!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_speaker_model(args.model)
    if not isinstance(model, VerifierModel):
        raise TimbreIdError(f"{args.model} is an identification model; enroll with --verify-target")
    res = verify_stream(model, read_wav(args.audio), args.threshold)
    _out("accept" if res.accept else "reject")
    _out(f"target\t{model.target}")
    _out(f"score\t{res.score!r}")
    _out(f"frames_used\t{res.frames_used}")
    return EXIT_OK if res.accept else EXIT_REJECT


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    cfg = cfg.override(
        "experiment",
        populations=tuple(args.populations) if args.populations is not None else None,
        seeds=tuple(args.seeds) if args.seeds is not None else None,
        split=args.split,
        score_mode=args.score_mode,
    )
    exp = cfg.experiment
    started = time.perf_counter()
    pipeline = _pipeline_for(cfg, load_extractor(args.timbre_model, _convention(cfg)))
    corpus = load_corpus(args.corpus)
    vectors = prepare_corpus(corpus, pipeline)
    prep_s = time.perf_counter() - started
    config = {"pipeline": cfg.to_dict(), "mode": args.mode, "timbre_model_convention": pipeline.convention,
              "speakers": sorted(vectors)}
    if args.mode == "identify":
        report = run_identification_experiment(
            vectors, exp.populations, exp.split, exp.seeds, cfg.speaker_forest, pipeline,
            experiment_id=args.experiment_id, config=config,
        )
    else:
        targets = args.targets.split(",") if args.targets else sorted(vectors)
        config["targets"] = targets
        report = run_verification_experiment(
            vectors, targets, exp.split, exp.seeds, cfg.speaker_forest, pipeline,
            threshold=exp.threshold, score_mode=exp.score_mode,
            experiment_id=args.experiment_id, config=config,
        )
    report.timings["feature_extraction_s"] = prep_s
    written = emit_report(report, args.out)
    for p in report.populations:
        _out(f"population\t{p['population']}\tmean_accuracy\t{p['mean_accuracy']!r}")
    if report.populations:
        _out(f"trend_spearman\t{population_trend(report)!r}")
    for target, entry in sorted(report.verification.items()):
        if "error" in entry:
            _out(f"target\t{target}\terror\t{entry['error']}")
        else:
            _out(f"target\t{target}\taccuracy\t{entry['mean_accuracy']!r}\tauc\t{entry['auc']!r}\teer\t{entry['eer']!r}")
    _out(f"wrote {len(written)} files to {args.out}")
    for name, secs in sorted(report.timings.items()):
        _err(f"timing\t{name}\t{secs:.2f}")
    return EXIT_OK


def cmd_init_config(args) -> int:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(DEFAULT_CONFIG_TOML)
    else:
        sys.stdout.write(DEFAULT_CONFIG_TOML)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="timbreid", description="Timbre-based speaker identification and verification.",
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth-data", help="generate a synthetic timbre dataset (CSV + WAV clips)", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=1, help="generator seed")
    p.add_argument("--rows", type=int, default=400, help="number of 0.3 s clips")
    p.add_argument("--noise-sd", type=float, default=2.0, help="label noise standard deviation")
    p.add_argument("--sample-rate", type=int, default=16000, help="sample rate in Hz")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("synth-corpus", help="generate a synthetic directory-per-speaker corpus", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=7, help="generator seed")
    p.add_argument("--speakers", type=int, default=5, help="number of synthetic speakers")
    p.add_argument("--streams", type=int, default=10, help="streams (WAV files) per speaker")
    p.add_argument("--seconds", type=float, default=2.0, help="length of each stream in seconds")
    p.add_argument("--sample-rate", type=int, default=16000, help="sample rate in Hz")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("train-timbre", help="train the seven timbral-property regressors", formatter_class=fmt)
    p.add_argument("--dataset", required=True, help="timbre CSV (path + seven label columns)")
    p.add_argument("--config", default=None, help="pipeline TOML config (built-in defaults if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override [timbre_forest] rng_seed (config value: 0)")
    p.add_argument("--out", required=True, help="output timbre model file")
    p.set_defaults(func=cmd_train_timbre)

    p = sub.add_parser("enroll", help="train an identifier (or a verifier with --verify-target)", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="directory with one sub-directory of WAV files per speaker")
    p.add_argument("--timbre-model", required=True, help="timbre model from train-timbre")
    p.add_argument("--config", default=None, help="pipeline TOML config (built-in defaults if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override [speaker_forest] rng_seed (config value: 0)")
    p.add_argument("--verify-target", default=None, help="train a target-vs-impostor verifier for this speaker")
    p.add_argument("--threshold", type=float, default=None,
                   help="verifier accept threshold (config value: 0.5)")
    p.add_argument("--out", required=True, help="output speaker model file")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="identify the speaker of a WAV stream", formatter_class=fmt)
    p.add_argument("--model", required=True, help="identifier model from enroll")
    p.add_argument("--audio", required=True, help="WAV file")
    p.add_argument("--per-frame", action="store_true", help="also print the per-frame decisions")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("verify", help="accept or reject a WAV stream against a verifier model", formatter_class=fmt)
    p.add_argument("--model", required=True, help="verifier model from enroll --verify-target")
    p.add_argument("--audio", required=True, help="WAV file")
    p.add_argument("--threshold", type=float, default=None, help="accept threshold (model value: 0.5)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="run an identification or verification experiment", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="directory with one sub-directory of WAV files per speaker")
    p.add_argument("--timbre-model", required=True, help="timbre model from train-timbre")
    p.add_argument("--mode", choices=("identify", "verify"), default="identify", help="experiment type")
    p.add_argument("--populations", type=_int_list, default=None,
                   help="comma-separated population sizes (config value: 2,4,6,8,10)")
    p.add_argument("--seeds", type=_int_list, default=None, help="comma-separated seeds (config value: 0,1,2)")
    p.add_argument("--split", type=float, default=None, help="training fraction of each speaker's streams (config value: 0.7)")
    p.add_argument("--targets", default=None, help="comma-separated verification targets (all speakers if omitted)")
    p.add_argument("--score-mode", choices=("binary", "ovr"), default=None,
                   help="verification scoring (config value: binary)")
    p.add_argument("--experiment-id", default="experiment", help="id recorded in report.json")
    p.add_argument("--config", default=None, help="pipeline TOML config (built-in defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("init-config", help="print (or write) the default config file", formatter_class=fmt)
    p.add_argument("--out", default=None, help="write here instead of stdout")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def show(message, category, filename, lineno, file=None, line=None):
        _err(f"warning: {message}")

    with warnings.catch_warnings():
        warnings.simplefilter("always", VersionMismatchWarning)
        warnings.showwarning = show
        try:
            return args.func(args)
        except TimbreIdError as exc:
            _err(f"error: {type(exc).__name__}: {exc}")
            return EXIT_ERROR
        except OSError as exc:
            _err(f"error: IoError: {exc}")
            return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
