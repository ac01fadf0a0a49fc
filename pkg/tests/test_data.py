import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayeskan.data import (
    HEART_FEATURES,
    PIMA_FEATURES,
    DataError,
    Dataset,
    SplitSpec,
    Standardization,
    load_csv,
    load_dataset,
    load_heart,
    load_pima,
    read_table,
    standardize_apply,
    standardize_fit,
    stratified_split,
    stratified_split_indices,
)


def test_pima_loader(pima_path):
    ds = load_pima(pima_path)
    assert ds.features.shape == (768, 8)
    assert ds.feature_names == PIMA_FEATURES
    assert set(np.unique(ds.labels)) == {0, 1}
    assert int(ds.labels.sum()) == 268
    for name in ("glucose", "blood_pressure", "skin_thickness", "insulin", "bmi"):
        assert np.count_nonzero(ds.features[:, PIMA_FEATURES.index(name)] == 0) == 0
    # pregnancies legitimately contains zeros and is left alone
    assert np.count_nonzero(ds.features[:, 0] == 0) > 0


def test_heart_loader(heart_path):
    ds = load_heart(heart_path)
    assert ds.features.shape == (303, 13)
    assert ds.feature_names == HEART_FEATURES
    assert set(np.unique(ds.labels)) == {0, 1}
    assert int(ds.labels.sum()) == 139
    assert np.all(np.isfinite(ds.features))


def test_loader_dispatch(pima_path):
    assert len(load_dataset("pima", pima_path)) == 768
    with pytest.raises(DataError):
        load_dataset("iris", pima_path)


def test_bad_files(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("1,2,3\n4,5\n")
    with pytest.raises(DataError, match="line 2"):
        read_table(short)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,y\n1,2,0\n3,oops,1\n")
    with pytest.raises(DataError, match="column 2"):
        read_table(bad)
    missing = tmp_path / "missing.csv"
    missing.write_text("1,?,0\n")
    with pytest.raises(DataError):
        read_table(missing)
    with pytest.raises(DataError):
        read_table(tmp_path / "nope.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError):
        read_table(empty)
    with pytest.raises(DataError):
        load_pima(short)


def test_generic_csv_with_header_and_missing(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("age,weight,label\n30,?,1\n40,70,0\n50,90,1\n")
    ds = load_csv(path)
    assert ds.feature_names == ("age", "weight")
    assert ds.features[0, 1] == 80.0  # median of the observed values
    np.testing.assert_array_equal(ds.labels, [1, 0, 1])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), ("a", "b"))
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan, 1.0]]), np.array([0]), ("a", "b"))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([0, 1]), ("a",))


def test_standardize_example():
    ds = Dataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), np.array([0, 1, 0]), ("a", "const"))
    out = standardize_apply(standardize_fit(ds), ds)
    np.testing.assert_allclose(out.features[:, 0], [-1.224745, 0.0, 1.224745], atol=1e-6)
    np.testing.assert_array_equal(out.features[:, 1], 0.0)
    stats = standardize_fit(ds)
    assert Standardization.from_dict(stats.to_dict()).mean.tolist() == stats.mean.tolist()


def test_standardize_uses_train_statistics(pima_path):
    train, test = stratified_split(load_pima(pima_path), SplitSpec(0.2, 3))
    stats = standardize_fit(train)
    tr, te = standardize_apply(stats, train), standardize_apply(stats, test)
    assert np.max(np.abs(tr.features.mean(axis=0))) <= 1e-12
    assert np.max(np.abs(tr.features.std(axis=0) - 1.0)) <= 1e-12
    assert np.max(np.abs(te.features.mean(axis=0))) > 1e-3


def test_pima_split_sizes(pima_path):
    ds = load_pima(pima_path)
    train, test = stratified_split(ds, SplitSpec(0.2, 1))
    assert abs(len(test) - 154) <= 1
    assert len(train) + len(test) == 768
    for c in (0, 1):
        total = np.sum(ds.labels == c)
        assert abs(np.sum(test.labels == c) - 0.2 * total) <= 1


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.6), st.integers(0, 2**31))
def test_split_properties(n0, n1, fraction, seed):
    labels = np.array([0] * n0 + [1] * n1)
    tr, te = stratified_split_indices(labels, SplitSpec(fraction, seed))
    assert np.intersect1d(tr, te).size == 0
    assert np.union1d(tr, te).size == labels.size
    for c, n in ((0, n0), (1, n1)):
        assert abs(np.sum(labels[te] == c) - fraction * n) <= 1
    tr2, te2 = stratified_split_indices(labels, SplitSpec(fraction, seed))
    np.testing.assert_array_equal(te, te2)
    np.testing.assert_array_equal(tr, tr2)
