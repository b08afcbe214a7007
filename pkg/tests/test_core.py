import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gshap.core import (
    Coalition,
    CompositionError,
    DataError,
    DomainError,
    Explanation,
    FeatureMatrix,
    check_probability_rows,
    coalition_weight,
    hybrid_compose,
    label_str,
)


@pytest.mark.parametrize("s, p, expected", [(0, 1, 1.0), (0, 2, 0.5), (1, 2, 0.5), (1, 3, 1 / 6), (0, 3, 1 / 3)])
def test_weight_examples(s, p, expected):
    assert coalition_weight(s, p) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("s, p", [(-1, 3), (3, 3), (0, 0), (5, 2)])
def test_weight_out_of_domain(s, p):
    with pytest.raises(DomainError):
        coalition_weight(s, p)


@given(st.integers(1, 16))
def test_weights_normalize(p):
    total = math.fsum(math.comb(p - 1, s) * coalition_weight(s, p) for s in range(p))
    assert abs(total - 1.0) <= 1e-12


def test_weight_log_space_matches_rational_path():
    # p = 21 goes through lgamma; compare against exact integer arithmetic
    for s in (0, 5, 10, 20):
        exact = math.factorial(s) * math.factorial(20 - s) / math.factorial(21)
        assert coalition_weight(s, 21) == pytest.approx(exact, rel=1e-12)


def test_weight_symmetric_in_size():
    for p in range(1, 12):
        for s in range(p):
            assert coalition_weight(s, p) == coalition_weight(p - 1 - s, p)


def _pair(rng, n=4, p=3):
    names = tuple(f"c{j}" for j in range(p))
    return FeatureMatrix(rng.normal(size=(n, p)), names), FeatureMatrix(rng.normal(size=(n, p)), names)


def test_hybrid_compose_example():
    X = FeatureMatrix(np.array([[1.0, 2.0, 3.0]]), ("a", "b", "c"))
    Z = FeatureMatrix(np.array([[10.0, 20.0, 30.0]]), ("a", "b", "c"))
    H = hybrid_compose(X, Z, Coalition(frozenset({0, 2}), 3))
    assert H.values.tolist() == [[1.0, 20.0, 3.0]]


def test_hybrid_full_and_empty(rng):
    X, Z = _pair(rng)
    assert hybrid_compose(X, Z, Coalition.full(3)) == X
    assert hybrid_compose(X, Z, Coalition.empty(3)) == Z


@given(st.integers(0, 7))
def test_hybrid_idempotent_and_complementary(mask):
    rng = np.random.default_rng(mask)
    X, Z = _pair(rng)
    S = Coalition.from_mask(mask, 3)
    H = hybrid_compose(X, Z, S)
    assert hybrid_compose(H, Z, S) == H
    # S and its complement partition the columns
    back = hybrid_compose(Z, X, S.complement())
    assert back == H


def test_hybrid_shape_mismatch(rng):
    X, _ = _pair(rng, n=4)
    _, Z = _pair(rng, n=5)
    with pytest.raises(CompositionError):
        hybrid_compose(X, Z, Coalition.full(3))


def test_hybrid_name_mismatch(rng):
    X, Z = _pair(rng)
    Z2 = FeatureMatrix(Z.values, ("x", "y", "z"))
    with pytest.raises(CompositionError):
        hybrid_compose(X, Z2, Coalition.full(3))


def test_feature_matrix_rejects_bad_input():
    with pytest.raises(DataError):
        FeatureMatrix(np.array([[1.0, np.nan]]), ("a", "b"))
    with pytest.raises(DataError):
        FeatureMatrix(np.ones((2, 2)), ("a",))
    with pytest.raises(DataError):
        FeatureMatrix(np.ones((2, 2)), ("a", "a"))
    with pytest.raises(DataError):
        FeatureMatrix(np.ones((0, 2)), ("a", "b"))


def test_feature_matrix_is_readonly_copy():
    src = np.ones((2, 2))
    fm = FeatureMatrix.from_array(src)
    src[0, 0] = 5.0
    assert fm.values[0, 0] == 1.0
    with pytest.raises(ValueError):
        fm.values[0, 0] = 2.0
    assert fm.feature_names == ("x0", "x1")


def test_coalition_basics():
    S = Coalition.from_mask(0b101, 3)
    assert S.members == frozenset({0, 2})
    assert S.mask == 5
    assert len(S) == 2 and 0 in S and 1 not in S
    assert str(S) == "{0,2}"
    assert S.complement().members == frozenset({1})
    with pytest.raises(DomainError):
        Coalition(frozenset({3}), 3)


def test_explanation_efficiency_gap_and_dict():
    e = Explanation(np.array([3.0, 5.0]), 10.0, 2.0, "exact", ("a", "b"))
    assert e.difference == 8.0
    assert e.efficiency_gap() == 0.0
    d = e.to_dict()
    assert d["phi"] == [3.0, 5.0] and d["stderr"] is None
    with pytest.raises(DomainError):
        Explanation(np.zeros(3), 0.0, 0.0, "exact", ("a", "b"))


def test_check_probability_rows():
    check_probability_rows(np.array([[0.2, 0.8], [1.0, 0.0]]))
    with pytest.raises(DomainError):
        check_probability_rows(np.array([[0.2, 0.7]]))
    with pytest.raises(DomainError):
        check_probability_rows(np.array([[-0.1, 1.1]]))


def test_label_str():
    assert label_str(1.0) == "1"
    assert label_str(np.float64(0.0)) == "0"
    assert label_str(1.5) == "1.5"
    assert label_str("setosa") == "setosa"
