import numpy as np
import pytest

from timbreid import forest
from timbreid.audio_io import AudioStream
from timbreid.errors import EmptyMatrix, InsufficientSpeakers, NoAcceptedFrames, VersionMismatch
from timbreid.forest import ClassifierModel, DecisionTree, ForestConfig
from timbreid.recognition import (
    Pipeline,
    SpeakerModel,
    VerifierModel,
    aggregate,
    identify_frame,
    identify_stream,
    identify_vectors,
    load_speaker_model,
    ovr_stream_score,
    save_speaker_model,
    train_identifier,
    train_verifier,
    verify_stream,
    verify_vectors,
)
from timbreid.timbre import TimbralVector, save_extractor

FAST = ForestConfig(n_trees=15, rng_seed=0)


def _leaf(counts):
    return DecisionTree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([counts], dtype=float))


def _stepped(leaves, thresholds):
    """Splits on feature 0: x <= t0 -> leaves[0], else x <= t1 -> leaves[1], ..., else leaves[-1]."""
    feature, threshold, left, right, value = [], [], [], [], []
    for k, leaf in enumerate(leaves[:-1]):
        base = len(feature)
        # split node, then its left leaf; the right child is the next split (or final leaf)
        feature += [0, -1]
        threshold += [thresholds[k], 0.0]
        left += [base + 1, -1]
        right += [base + 2, -1]
        value += [[1.0] * len(leaf), leaf]
    feature.append(-1)
    threshold.append(0.0)
    left.append(-1)
    right.append(-1)
    value.append(leaves[-1])
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value, dtype=float))


def _model(trees, classes, n_features=7):
    return ClassifierModel(trees, classes, n_features, ForestConfig(n_trees=len(trees)), None)


def _speakers(trees, classes=("s0", "s1")):
    return SpeakerModel(_model(trees, list(classes)), pipeline=None)


@pytest.mark.parametrize("counts, label", [([7, 3], "s0"), ([5, 5], "s0"), ([0, 4], "s1")])
def test_identify_frame_examples(counts, label):
    got, probs = identify_frame(_speakers([_leaf(counts)]), TimbralVector(*[50.0] * 7))
    assert got == label
    assert np.allclose(probs, np.array(counts) / sum(counts))


def test_aggregate_examples():
    assert aggregate([[0.6, 0.4], [0.2, 0.8]]).tolist() == pytest.approx([0.8, 1.2])
    assert int(np.argmax(aggregate([[0.6, 0.4], [0.2, 0.8]]))) == 1
    row = [0.3, 0.7]
    assert aggregate([row]).tolist() == row
    n_rows = aggregate([row] * 5)
    assert n_rows.tolist() == pytest.approx([1.5, 3.5]) and int(np.argmax(n_rows)) == 1
    with pytest.raises(EmptyMatrix):
        aggregate(np.empty((0, 2)))


def test_three_frame_stream_example():
    tree = _stepped([[9, 1], [1, 9], [4, 6]], [0.5, 1.5])
    model = _speakers([tree])
    V = np.zeros((3, 7))
    V[:, 0] = [0.0, 1.0, 2.0]
    res = identify_vectors(model, V)
    assert np.allclose(res.frame_probs, [[0.9, 0.1], [0.1, 0.9], [0.4, 0.6]], rtol=0, atol=1e-15)
    assert res.scores.tolist() == pytest.approx([1.4, 1.6])
    assert res.label == "s1" and res.frames_used == 3
    assert res.mean_scores.tolist() == pytest.approx([1.4 / 3, 1.6 / 3])


def test_unanimous_frames():
    res = identify_vectors(_speakers([_leaf([1, 3])]), np.zeros((4, 7)))
    assert res.label == "s1"
    with pytest.raises(NoAcceptedFrames):
        identify_vectors(_speakers([_leaf([1, 3])]), np.zeros((0, 7)))


def test_verify_examples():
    tree = _stepped([[1, 9], [2, 8], [3, 7]], [0.5, 1.5])
    ver = VerifierModel(_model([tree], [0, 1]), None, "t", 0.5)
    V = np.zeros((3, 7))
    V[:, 0] = [0.0, 1.0, 2.0]
    res = verify_vectors(ver, V)
    assert res.score == pytest.approx(0.8) and res.accept and res.frames_used == 3
    zero = VerifierModel(_model([_leaf([5, 0])], [0, 1]), None, "t", 0.5)
    res = verify_vectors(zero, np.zeros((2, 7)))
    assert res.score == 0.0 and not res.accept
    assert verify_vectors(zero, np.zeros((2, 7)), threshold=0.0).accept


def test_pipeline_silent_and_short_streams(tiny_extractor):
    pipe = Pipeline(tiny_extractor)
    assert pipe.frame_vectors(AudioStream(np.zeros(16000), 16000)).shape == (0, 7)
    assert pipe.frame_vectors(AudioStream(np.ones(100), 16000)).shape == (0, 7)


def test_train_identifier_errors(tiny_extractor, tiny_corpus):
    pipe = Pipeline(tiny_extractor)
    with pytest.raises(InsufficientSpeakers):
        train_identifier({"a": tiny_corpus["spk00"]}, pipe, FAST)
    silent = {"spk00": tiny_corpus["spk00"], "quiet": [AudioStream(np.zeros(16000), 16000)]}
    with pytest.raises(NoAcceptedFrames) as err:
        train_identifier(silent, pipe, FAST)
    assert err.value.who == "quiet" and "quiet" in str(err.value)


def test_frame_counts_bounded_by_duration(tiny_extractor):
    from timbreid.synth import synth_corpus

    corpus = synth_corpus(2, 1, 10.0, seed=3)
    pipe = Pipeline(tiny_extractor)
    for streams in corpus.values():
        n = pipe.frame_vectors(streams[0]).shape[0]
        assert 0 < n <= 33


def test_identify_stream_end_to_end(tiny_extractor, tiny_corpus):
    pipe = Pipeline(tiny_extractor)
    train = {k: v[:3] for k, v in tiny_corpus.items()}
    model = train_identifier(train, pipe, FAST)
    assert model.labels == ["spk00", "spk01", "spk02"]
    res = identify_stream(model, tiny_corpus["spk01"][3])
    assert res.frames_used == res.frame_probs.shape[0] > 0
    with pytest.raises(NoAcceptedFrames):
        identify_stream(model, AudioStream(np.zeros(8000), 16000))
    score = ovr_stream_score(model, "spk01", pipe.frame_vectors(tiny_corpus["spk01"][3]))
    assert 0.0 <= score <= 1.0


def test_verifier_degenerate_when_target_equals_impostor(tiny_extractor, tiny_corpus):
    pipe = Pipeline(tiny_extractor)
    streams = tiny_corpus["spk00"][:2]
    ver = train_verifier(streams, streams, pipe, ForestConfig(n_trees=25, rng_seed=1))
    res = verify_stream(ver, streams[0])
    assert abs(res.score - 0.5) < 0.2


def test_speaker_model_persistence(tmp_path, tiny_extractor, tiny_corpus):
    save_extractor(tiny_extractor, tmp_path / "timbre.json")
    pipe = Pipeline(tiny_extractor)
    train = {k: v[:3] for k, v in tiny_corpus.items()}
    model = train_identifier(train, pipe, FAST)
    save_speaker_model(model, tmp_path / "id.json", tmp_path / "timbre.json")
    again = train_identifier(train, pipe, FAST)
    save_speaker_model(again, tmp_path / "id2.json", tmp_path / "timbre.json")
    assert (tmp_path / "id.json").read_bytes() == (tmp_path / "id2.json").read_bytes()

    loaded = load_speaker_model(tmp_path / "id.json")
    probe = tiny_corpus["spk02"][3]
    assert np.array_equal(identify_stream(loaded, probe).scores, identify_stream(model, probe).scores)

    ver = train_verifier(tiny_corpus["spk00"][:3], tiny_corpus["spk01"][:3], pipe, FAST, target="spk00", threshold=0.4)
    save_speaker_model(ver, tmp_path / "ver.json", tmp_path / "timbre.json")
    vl = load_speaker_model(tmp_path / "ver.json")
    assert isinstance(vl, VerifierModel) and vl.target == "spk00" and vl.threshold == 0.4
    assert verify_stream(vl, probe).score == verify_stream(ver, probe).score

    # a retrained extractor at the same path invalidates enrolled models
    (tmp_path / "timbre.json").write_bytes((tmp_path / "timbre.json").read_bytes().replace(b'"rng_seed":0', b'"rng_seed":1', 1))
    with pytest.raises(VersionMismatch):
        load_speaker_model(tmp_path / "id.json")


def test_identifier_training_deterministic(tiny_extractor, tiny_corpus):
    pipe = Pipeline(tiny_extractor)
    a = train_identifier(tiny_corpus, pipe, FAST)
    b = train_identifier(tiny_corpus, pipe, FAST)
    assert forest.dump_canonical(forest.model_to_dict(a.classifier)) == forest.dump_canonical(forest.model_to_dict(b.classifier))
