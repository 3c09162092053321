import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from anyloss.data import (
    Dataset,
    load_csv,
    random_undersample,
    resampling_rates,
    smote,
    smote_points,
    standardize,
    stratified_kfold,
    synth_imbalanced,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_small_csv(tmp_path):
    d = load_csv(write(tmp_path, "a,b,label\n1,2,0\n3,4,1\n5,6,1\n"))
    assert d.n == 3 and d.m == 2
    assert d.Y.tolist() == [0, 1, 1]
    assert d.name == "d"


def test_label_outside_binary_needs_map(tmp_path):
    path = write(tmp_path, "a,label\n1,0\n2,2\n")
    with pytest.raises(ValueError, match=":3"):
        load_csv(path)
    path = write(tmp_path, "a,label\n1,no\n2,yes\n", "m.csv")
    assert load_csv(path, label_map={"yes": 1, "no": 0}).Y.tolist() == [0, 1]


def test_missing_cell_dropped_with_warning(tmp_path, caplog):
    path = write(tmp_path, "a,b,label\n1,2,0\n3,,1\n5,6,1\n")
    with caplog.at_level(logging.WARNING):
        d = load_csv(path)
    assert d.n == 2
    assert "dropped 1" in caplog.text
    with pytest.raises(ValueError, match="missing value"):
        load_csv(path, drop_missing=False)


@pytest.mark.parametrize("text, message", [
    ("", "empty"),
    ("label\n1\n", "at least one feature"),
    ("a,label\n1,0,3\n", "expected 2 columns"),
    ("a,label\nx,0\n", "cannot parse"),
    ("a,label\n", "no usable rows"),
])
def test_csv_errors(tmp_path, text, message):
    with pytest.raises(ValueError, match=message):
        load_csv(write(tmp_path, text))


def test_bundled_csvs_load():
    from pathlib import Path

    files = sorted((Path(__file__).resolve().parent.parent / "data").glob("*.csv"))
    assert len(files) >= 3
    for f in files:
        d = load_csv(f)
        assert d.n > 0 and 0 < d.n_pos < d.n


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 1)), np.array([0, 2]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan], [1.0]]), np.array([0, 1]))
    with pytest.raises(ValueError):
        Dataset(np.ones(3), np.array([0, 1, 1]))
    d = Dataset(np.ones((4, 1)), np.array([0, 0, 0, 1]))
    assert d.imbalance_ratio == 3.0


def test_synthetic_generator():
    d = synth_imbalanced(10_000, 2, 0.1, 2.0, seed=5)
    assert d.n_pos == 1000
    e = synth_imbalanced(10_000, 2, 0.1, 2.0, seed=5)
    assert np.array_equal(d.X, e.X) and np.array_equal(d.Y, e.Y)
    with pytest.raises(ValueError):
        synth_imbalanced(100, 2, 1.0)


def test_zero_separation_is_not_learnable():
    # with identical class distributions the best any classifier can do
    # is predict the majority; a linear fit gains nothing out of sample
    d = synth_imbalanced(20_000, 2, 0.1, 0.0, seed=1)
    tr, te = np.arange(10_000), np.arange(10_000, 20_000)
    A = np.c_[d.X[tr], np.ones(len(tr))]
    w, *_ = np.linalg.lstsq(A, d.Y[tr].astype(float), rcond=None)
    pred = (np.c_[d.X[te], np.ones(len(te))] @ w >= 0.5).astype(int)
    majority = 1 - d.Y[te].mean()
    assert abs(np.mean(pred == d.Y[te]) - majority) < 0.01


def test_fold_examples():
    y = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
    folds = stratified_kfold(y, 2, seed=0)
    assert [int(y[f].sum()) for f in folds] == [1, 1]
    loo = stratified_kfold(y, 10, seed=0)
    assert sorted(len(f) for f in loo) == [1] * 10
    with pytest.raises(ValueError):
        stratified_kfold(y, 11)
    with pytest.raises(ValueError):
        stratified_kfold(y, 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(10, 300), st.integers(2, 10), st.floats(0.05, 0.5), st.integers(0, 10**6))
def test_folds_partition_and_stratify(n, k, frac, seed):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < frac).astype(int)
    folds = stratified_kfold(y, k, seed)
    joined = np.sort(np.concatenate(folds))
    assert np.array_equal(joined, np.arange(n))
    pos = [int(y[f].sum()) for f in folds]
    assert max(pos) - min(pos) <= 1
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert [f.tolist() for f in folds] == [f.tolist() for f in stratified_kfold(y, k, seed)]


def test_standardize_uses_train_statistics():
    tr = np.array([[1.0, 5.0], [3.0, 5.0]])
    te = np.array([[2.0, 6.0]])
    a, b = standardize(tr, te)
    assert a.tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    assert b.tolist() == [[0.0, 1.0]]


def test_undersample_examples():
    X = np.arange(100, dtype=float).reshape(-1, 1)
    y = np.r_[np.zeros(90), np.ones(10)].astype(int)
    d = Dataset(X, y)
    out = random_undersample(d, 1.0, seed=0)
    assert out.n == 20 and out.n_pos == 10
    assert set(out.X[:, 0]) <= set(X[:, 0])
    assert random_undersample(d, 9.0) is d
    with pytest.raises(ValueError):
        random_undersample(d, 12.0)


def test_smote_examples():
    pts = smote_points(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]), np.array([0.3]))
    assert pts.tolist() == [[0.3, 0.3]]
    base = np.array([[2.0, 3.0]])
    assert np.array_equal(smote_points(base, np.array([[5.0, 5.0]]), np.array([0.0])), base)
    d = Dataset(np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [7.0, 7.0]]),
                np.array([1, 1, 0, 0, 0]))
    out = smote(d, k_neighbors=1, target_ratio=1.0, seed=0)
    assert out.n == 6
    new = out.X[-1]
    assert new[0] == new[1] and 0.0 <= new[0] <= 1.0
    balanced = Dataset(np.arange(8.0).reshape(-1, 1), np.array([0, 1] * 4))
    assert smote(balanced, k_neighbors=2, target_ratio=1.0) is balanced


def test_smote_points_stay_in_minority_hull():
    d = synth_imbalanced(600, 2, 0.1, 2.0, seed=3)
    out = smote(d, k_neighbors=5, target_ratio=1.0, seed=4)
    assert out.n_pos == out.n - out.n_pos
    assert out.m == d.m and set(np.unique(out.Y)) == {0, 1}
    hull = Delaunay(d.X[d.Y == 1])
    synthetic = out.X[d.n:]
    assert np.all(hull.find_simplex(synthetic, tol=1e-9) >= 0)
    again = smote(d, k_neighbors=5, target_ratio=1.0, seed=4)
    assert np.array_equal(out.X, again.X)


def test_smote_needs_enough_minority_rows():
    d = Dataset(np.arange(6.0).reshape(-1, 1), np.array([1, 1, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        smote(d, k_neighbors=5)


def test_resampling_rates():
    rates = resampling_rates()
    assert len(rates) == 10
    assert rates[0] == 1.0 and rates[-1] == pytest.approx(10.0)
