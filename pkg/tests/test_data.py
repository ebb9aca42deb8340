import numpy as np
import pytest

from gradtree import DataError, Dataset, RowIndexSet, Task, load_csv, one_hot_encode

from conftest import write_csv


def test_load_numeric_classification(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b", "y"],
                     [[1.0, 2.0, 0], [3.5, -1.0, 1], [0.0, 0.5, 1]])
    ds = load_csv(path, "y", Task.CLASSIFICATION)
    assert ds.n_rows == 3 and ds.n_features == 2
    assert ds.task is Task.CLASSIFICATION
    assert ds.feature_names == ("a", "b")
    assert np.array_equal(ds.labels, [0.0, 1.0, 1.0])
    assert ds.features[1, 0] == 3.5


def test_load_expands_categoricals_in_place(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "color", "b", "y"],
                     [[1, "red", 10, 0.5], [2, "blue", 20, 1.5], [3, "red", 30, 2.5]])
    ds = load_csv(path, "y", Task.REGRESSION, categorical_columns=["color"])
    assert ds.feature_names == ("a", "color=red", "color=blue", "b")
    assert np.array_equal(ds.features[:, 1], [1, 0, 1])
    assert np.array_equal(ds.features[:, 2], [0, 1, 0])


def test_nan_cell_is_an_error_naming_the_cell(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "y"], [[1, 0], ["NaN", 1]])
    with pytest.raises(DataError, match=r"row 2.*'a'"):
        load_csv(path, "y", Task.CLASSIFICATION)


def test_missing_value_and_garbage_cells(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "y"], [[1, 0], ["", 1]])
    with pytest.raises(DataError, match="missing value"):
        load_csv(path, "y", Task.CLASSIFICATION)
    path = write_csv(tmp_path / "t2.csv", ["a", "y"], [[1, 0], ["oops", 1]])
    with pytest.raises(DataError, match=r"row 2.*'a'.*not a number"):
        load_csv(path, "y", Task.CLASSIFICATION)


def test_missing_file_and_missing_label_column(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "absent.csv", "y", Task.REGRESSION)
    path = write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 2]])
    with pytest.raises(DataError, match="label column"):
        load_csv(path, "y", Task.REGRESSION)


def test_classification_labels_must_be_binary(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "y"], [[1, 0], [2, 2]])
    with pytest.raises(DataError, match="0 or 1"):
        load_csv(path, "y", Task.CLASSIFICATION)


def test_string_labels_map_lexicographically(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "y"],
                     [[1, "yes"], [2, "no"], [3, "yes"]])
    ds = load_csv(path, "y", Task.CLASSIFICATION)
    # sorted: no < yes, so yes -> 1
    assert np.array_equal(ds.labels, [1.0, 0.0, 1.0])
    path = write_csv(tmp_path / "t3.csv", ["a", "y"], [[1, "a"], [2, "b"], [3, "c"]])
    with pytest.raises(DataError, match="distinct"):
        load_csv(path, "y", Task.CLASSIFICATION)


def test_one_hot_basic_and_degenerate():
    cats, mat = one_hot_encode(["red", "blue", "red"])
    assert cats == ["red", "blue"]
    assert np.array_equal(mat, [[1, 0], [0, 1], [1, 0]])

    cats, mat = one_hot_encode(["x", "x"])
    assert cats == ["x"]
    assert np.array_equal(mat, [[1], [1]])


def test_one_hot_rows_sum_to_one(rng):
    values = [f"c{v}" for v in rng.integers(0, 7, size=200)]
    _, mat = one_hot_encode(values)
    assert np.array_equal(mat.sum(axis=1), np.ones(200))
    assert set(np.unique(mat)) <= {0.0, 1.0}


def test_loading_is_deterministic(tmp_path, rng):
    rows = [[rng.normal(), rng.normal(), int(rng.integers(0, 2))] for _ in range(50)]
    path = write_csv(tmp_path / "t.csv", ["a", "b", "y"], rows)
    d1 = load_csv(path, "y", Task.CLASSIFICATION)
    d2 = load_csv(path, "y", Task.CLASSIFICATION)
    assert np.array_equal(d1.features, d2.features)
    assert np.array_equal(d1.labels, d2.labels)
    assert d1.feature_names == d2.feature_names


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.array([[1.0, np.nan]]), np.array([0.0]), ("a", "b"), Task.REGRESSION)
    with pytest.raises(DataError):
        Dataset(np.array([[1.0, 2.0]]), np.array([0.5]), ("a", "b"), Task.CLASSIFICATION)
    with pytest.raises(DataError):
        Dataset(np.array([[1.0, 2.0]]), np.array([0.0]), ("a", "a"), Task.REGRESSION)
    ds = Dataset(np.array([[1.0, 2.0]]), np.array([0.0]), ("a", "b"), Task.REGRESSION)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 9.0  # immutable


def test_row_index_set_validation():
    with pytest.raises(DataError):
        RowIndexSet(np.array([], dtype=np.int64))
    with pytest.raises(DataError):
        RowIndexSet(np.array([3, 3]))
    with pytest.raises(DataError):
        RowIndexSet(np.array([2, 1]))
    view = RowIndexSet.full(4)
    assert len(view) == 4 and view.indices[-1] == 3
