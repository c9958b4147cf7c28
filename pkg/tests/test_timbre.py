import warnings

import numpy as np
import pytest

from timbreid import forest
from timbreid.dsp import DspConfig, feature_convention
from timbreid.errors import ConventionMismatch, EmptyDataset, LabelOutOfRange, MissingAudioFile, MissingColumn, VersionMismatchWarning
from timbreid.forest import ForestConfig
from timbreid.timbre import (
    CSV_HEADER,
    PROPERTIES,
    TimbralVector,
    TimbreDataset,
    TimbreRow,
    dataset_features,
    extract_timbre,
    extract_timbre_batch,
    extractor_to_dict,
    ground_truth_labels,
    load_extractor,
    load_timbre_dataset,
    save_extractor,
    synth_timbre_dataset,
    train_timbre_regressors,
    write_timbre_dataset,
)

SMALL = ForestConfig(n_trees=8, features_per_split="all", rng_seed=0)
MEMORIZE = ForestConfig(n_trees=1, bootstrap=False, features_per_split="all")


@pytest.fixture(scope="module")
def small_ds():
    return synth_timbre_dataset(seed=5, n_rows=40, noise_sd=2.0)


def _write_csv(path, rows, header=CSV_HEADER):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_csv_errors(tmp_path):
    with pytest.raises(EmptyDataset):
        load_timbre_dataset(_write_csv(tmp_path / "h.csv", []))
    with pytest.raises(LabelOutOfRange):
        load_timbre_dataset(_write_csv(tmp_path / "r.csv", [["a.wav", 101, 0, 0, 0, 0, 0, 0]]))
    with pytest.raises(LabelOutOfRange):
        load_timbre_dataset(_write_csv(tmp_path / "n.csv", [["a.wav", "x", 0, 0, 0, 0, 0, 0]]))
    with pytest.raises(MissingColumn):
        load_timbre_dataset(_write_csv(tmp_path / "m.csv", [["a.wav", 1, 2, 3, 4, 5, 6]], header=CSV_HEADER[:-1]))


def test_400_row_csv_and_lazy_audio(tmp_path):
    rows = [[f"clips/{i}.wav"] + [i % 101] * 7 for i in range(400)]
    ds = load_timbre_dataset(_write_csv(tmp_path / "t.csv", rows))
    assert len(ds) == 400 and ds.provenance == "labeled"
    assert ds.labels().shape == (400, 7)
    # audio is only needed when features are materialised
    with pytest.raises(MissingAudioFile):
        dataset_features(ds)


def test_synth_write_load_same_features(tmp_path, small_ds):
    csv_path = write_timbre_dataset(small_ds, tmp_path / "d")
    loaded = load_timbre_dataset(csv_path)
    assert np.array_equal(loaded.labels(), small_ds.labels())
    assert np.array_equal(dataset_features(loaded), dataset_features(small_ds))


def test_synth_determinism(small_ds):
    again = synth_timbre_dataset(seed=5, n_rows=40, noise_sd=2.0)
    assert np.array_equal(again.labels(), small_ds.labels())
    assert all(np.array_equal(a.audio, b.audio) for a, b in zip(again.rows, small_ds.rows))
    other = synth_timbre_dataset(seed=6, n_rows=40, noise_sd=2.0)
    assert not np.array_equal(other.labels(), small_ds.labels())


def test_noise_free_labels_equal_ground_truth():
    ds = synth_timbre_dataset(seed=2, n_rows=25, noise_sd=0.0)
    for row in ds.rows:
        expected = np.clip(ground_truth_labels(row.features), 0, 100)
        assert np.array_equal(row.labels.as_array(), expected)


def test_ground_truth_maps_are_distinct_and_in_range():
    ds = synth_timbre_dataset(seed=3, n_rows=60, noise_sd=0.0)
    Y = ds.labels()
    assert Y.min() >= 0 and Y.max() <= 100
    corr = np.corrcoef(Y.T)
    assert np.all(np.abs(corr[np.triu_indices(7, 1)]) < 0.9999)


def test_single_row_dataset(small_ds):
    row = small_ds.rows[0]
    ds = TimbreDataset([row], "synthetic")
    ex = train_timbre_regressors(ds, forest_cfg=SMALL)
    out = extract_timbre_batch(ex, np.random.default_rng(0).uniform(0, 1000, size=(20, 2)))
    assert np.all(out == row.labels.as_array())


def test_memorising_extractor_returns_training_labels(small_ds):
    ex = train_timbre_regressors(small_ds, forest_cfg=MEMORIZE)
    X = dataset_features(small_ds)
    for x, row in zip(X, small_ds.rows):
        assert np.array_equal(extract_timbre_batch(ex, x)[0], row.labels.as_array())


def test_outputs_clamped_and_deterministic(small_ds):
    ex = train_timbre_regressors(small_ds, forest_cfg=SMALL)
    rng = np.random.default_rng(1)
    X = rng.uniform(-1e4, 1e5, size=(300, 2))
    a = extract_timbre_batch(ex, X)
    assert a.min() >= 0 and a.max() <= 100
    assert np.array_equal(a, extract_timbre_batch(ex, X))
    fp = small_ds.rows[0].features
    v = extract_timbre(ex, fp)
    assert isinstance(v, TimbralVector) and v == extract_timbre(ex, fp)


def test_regressors_are_independent(small_ds):
    full = train_timbre_regressors(small_ds, forest_cfg=SMALL)
    no_warmth = train_timbre_regressors(small_ds, forest_cfg=SMALL, properties=PROPERTIES[:-1])
    X = dataset_features(small_ds)
    for p in PROPERTIES[:-1]:
        assert np.array_equal(forest.predict(full.models[p], X), forest.predict(no_warmth.models[p], X))


def test_convention_mismatch(small_ds):
    ex = train_timbre_regressors(small_ds, forest_cfg=SMALL)
    with pytest.raises(ConventionMismatch):
        extract_timbre_batch(ex, np.ones((1, 2)), convention=feature_convention(DspConfig(hop_size=64)))
    extract_timbre_batch(ex, np.ones((1, 2)), convention=ex.feature_convention)


def test_extractor_roundtrip(tmp_path, small_ds):
    ex = train_timbre_regressors(small_ds, forest_cfg=SMALL)
    save_extractor(ex, tmp_path / "e.json")
    back = load_extractor(tmp_path / "e.json")
    X = np.random.default_rng(3).uniform(0, 1000, size=(1000, 2))
    assert np.array_equal(extract_timbre_batch(ex, X), extract_timbre_batch(back, X))
    assert forest.dump_canonical(extractor_to_dict(back)) == (tmp_path / "e.json").read_bytes()
    with pytest.warns(VersionMismatchWarning):
        load_extractor(tmp_path / "e.json", expected_convention="other")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_extractor(tmp_path / "e.json", expected_convention=ex.feature_convention)


def test_training_is_deterministic(small_ds):
    a = forest.dump_canonical(extractor_to_dict(train_timbre_regressors(small_ds, forest_cfg=SMALL)))
    b = forest.dump_canonical(extractor_to_dict(train_timbre_regressors(small_ds, forest_cfg=SMALL)))
    assert a == b


def test_timbral_vector_validation():
    with pytest.raises(ValueError):
        TimbralVector(*([1.0] * 6 + [float("nan")]))
    assert TimbralVector.from_array([-5, 50, 50, 50, 50, 50, 150]).as_array().tolist() == [0, 50, 50, 50, 50, 50, 100]


def test_precomputed_features_used_without_audio(small_ds):
    row = small_ds.rows[0]
    bare = TimbreDataset([TimbreRow(row.labels, features=row.features)], "synthetic")
    assert np.array_equal(dataset_features(bare)[0], row.features.as_array())
