from collections import Counter

import numpy as np
import pytest

from gshap.core import FeatureMatrix
from gshap.fixtures import recidivism, species
from gshap.genfns import GroupAssignment, intergroup_g
from gshap.ingest import (
    Dataset,
    LoadError,
    Schema,
    SplitError,
    load_csv,
    shuffle_background,
    standardize,
    train_test_split,
    write_csv,
)
from gshap.models import fit_logistic_classifier


def test_load_small_file(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("a,b,label,grp\n1,2,x,0\n3,4,y,1\n5,6,x,1\n")
    ds = load_csv(path, Schema(target="label", group="grp"))
    assert ds.n == 3
    assert ds.features.feature_names == ("a", "b")
    assert list(ds.target) == ["x", "y", "x"]
    assert ds.group.tolist() == [0.0, 1.0, 1.0]


def test_load_error_names_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(LoadError, match=r"row 2, column 'b'"):
        load_csv(path)


@pytest.mark.parametrize(
    "text, schema, pattern",
    [
        ("a,b\n1,nan\n", None, "non-finite"),
        ("a,b\n1,2\n", Schema(target="y"), "not in header"),
        ("a,b\n1,2,3\n", None, "fields"),
        ("a,a\n1,2\n", None, "duplicate"),
        ("a,b\n", None, "no data"),
        ("a,b\n1,2\n", Schema(features=("a", "c")), "missing"),
    ],
)
def test_load_errors(tmp_path, text, schema, pattern):
    path = tmp_path / "f.csv"
    path.write_text(text)
    with pytest.raises(LoadError, match=pattern):
        load_csv(path, schema)


def test_load_missing_file(tmp_path):
    with pytest.raises(LoadError):
        load_csv(tmp_path / "absent.csv")


def test_schema_parse(tmp_path):
    assert Schema.parse('{"target": "y"}') == Schema(target="y")
    path = tmp_path / "s.json"
    path.write_text('{"target": "y", "group": "g", "group_is_feature": true}')
    assert Schema.parse(str(path)) == Schema(target="y", group="g", group_is_feature=True)
    with pytest.raises(LoadError):
        Schema.parse('{"colour": "red"}')
    with pytest.raises(LoadError):
        Schema.parse("{not json")


def test_group_column_excluded_unless_declared_feature(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("a,g,y\n1,0,1\n2,1,0\n")
    assert load_csv(path, Schema(target="y", group="g")).features.feature_names == ("a",)
    assert load_csv(path, Schema(target="y", group="g", group_is_feature=True)).features.feature_names == ("a", "g")


@pytest.mark.parametrize("make", [species, recidivism])
def test_write_then_load_is_identity(tmp_path, make):
    ds = make(seed=3)
    path = tmp_path / "round.csv"
    write_csv(ds, path)
    back = load_csv(path, ds.schema)
    assert back.features == ds.features
    assert list(back.target) == list(ds.target)
    if ds.group is not None:
        np.testing.assert_array_equal(back.group, ds.group)


def _numbered(n):
    return Dataset(FeatureMatrix.from_array(np.arange(n, dtype=float)[:, None]), np.arange(n, dtype=float))


def test_split_sizes_and_partition():
    ds = _numbered(100)
    train, test = train_test_split(ds, 0.25, seed=5)
    assert (train.n, test.n) == (75, 25)
    merged = Counter(train.features.values[:, 0].tolist() + test.features.values[:, 0].tolist())
    assert merged == Counter(range(100))
    np.testing.assert_array_equal(train.features.values[:, 0], train.target)


def test_split_deterministic_and_seeded():
    ds = _numbered(50)
    a = train_test_split(ds, 0.3, seed=1)
    b = train_test_split(ds, 0.3, seed=1)
    c = train_test_split(ds, 0.3, seed=2)
    assert a[1].features == b[1].features
    assert a[1].features != c[1].features


def test_split_ordered_keeps_tail_as_test():
    train, test = train_test_split(_numbered(10), 0.2, seed=0, shuffle=False)
    assert test.features.values[:, 0].tolist() == [8.0, 9.0]
    assert train.n == 8


def test_split_empty_side():
    with pytest.raises(SplitError):
        train_test_split(_numbered(3), 0.1, seed=0)
    with pytest.raises(SplitError):
        train_test_split(_numbered(3), 1.0, seed=0)


def test_shuffle_preserves_marginals_and_breaks_rows(rng):
    fm = FeatureMatrix.from_array(rng.normal(size=(200, 3)))
    out = shuffle_background(fm, seed=4)
    for j in range(3):
        assert sorted(out.values[:, j]) == sorted(fm.values[:, j])
    assert not np.array_equal(out.values, fm.values)
    assert shuffle_background(fm, seed=4) == out


def test_shuffle_single_row_identity():
    fm = FeatureMatrix.from_array([[1.0, 2.0, 3.0]])
    assert shuffle_background(fm, seed=9) == fm


def test_shuffle_rows_mode_keeps_rows(rng):
    fm = FeatureMatrix.from_array(rng.normal(size=(20, 3)))
    out = shuffle_background(fm, seed=1, per_column=False)
    assert sorted(map(tuple, out.values)) == sorted(map(tuple, fm.values))


def test_shuffled_recidivism_has_no_group_difference():
    ds = recidivism(n=3000, seed=0)
    train, test = train_test_split(ds, 0.25, seed=0)
    model = fit_logistic_classifier(train.features, train.target)
    # rows keep their group membership; shuffled features carry no group signal
    Z = shuffle_background(ds, seed=11)
    g = intergroup_g(model, Z, GroupAssignment(ds.group.astype(int)), positive_class="1", decision="probability")
    assert abs(g) <= 0.05


def test_standardize_properties(rng):
    train = FeatureMatrix.from_array(np.column_stack([rng.normal(3, 2, 50), np.full(50, 7.0)]))
    other = FeatureMatrix.from_array(rng.normal(size=(5, 2)))
    train_std, (other_std,), params = standardize(train, other)
    np.testing.assert_allclose(train_std.values[:, 0].mean(), 0, atol=1e-9)
    np.testing.assert_allclose(train_std.values[:, 0].std(), 1, atol=1e-9)
    # constant column: centered, scale 1
    assert params.scale[1] == 1.0
    np.testing.assert_array_equal(train_std.values[:, 1], 0.0)
    np.testing.assert_allclose(params.inverse_transform(other_std.values), other.values, atol=1e-9)
