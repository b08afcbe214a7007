import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gshap.core import ConfigurationError, DegenerateError, FeatureMatrix
from gshap.genfns import (
    ClassificationG,
    ClassPartition,
    GroupAssignment,
    IntergroupG,
    LabelSet,
    LossG,
    OutputG,
    classification_g,
    intergroup_g,
    loss_g,
    output_g,
)
from gshap.models import FunctionModel


def prob_model(probs, labels=("a", "b")):
    """Model that ignores its input and returns fixed per-row probabilities."""
    probs = np.asarray(probs, dtype=float)
    return FunctionModel(lambda v: probs[: len(v)], class_labels=labels)


def X_rows(n, p=1):
    return FeatureMatrix.from_array(np.zeros((n, p)))


def test_classification_two_rows():
    # P(b) = 0.40 and 0.65; all-b vs all-a
    model = prob_model([[0.60, 0.40], [0.35, 0.65]])
    g = classification_g(model, X_rows(2), ClassPartition(["b"], ["a"]))
    expected = 0.40 * 0.65 / (0.40 * 0.65 + 0.60 * 0.35)
    assert g == pytest.approx(expected, abs=1e-12)


def test_classification_single_row_equals_probability():
    for p in (0.81, 0.82):
        model = prob_model([[1 - p, p]])
        assert classification_g(model, X_rows(1), ClassPartition(["b"], ["a"])) == pytest.approx(p, abs=1e-12)


def test_classification_equal_probabilities_give_half():
    model = prob_model([[0.5, 0.5]] * 7)
    assert classification_g(model, X_rows(7), ClassPartition(["b"], ["a"])) == pytest.approx(0.5, abs=1e-15)


def test_classification_ignores_unlisted_classes():
    model = prob_model([[0.2, 0.3, 0.5]], labels=("a", "b", "c"))
    g = classification_g(model, X_rows(1), ClassPartition(["b"], ["a"]))
    assert g == pytest.approx(0.3 / 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=12))
def test_classification_swap_and_naive(ps):
    probs = np.column_stack([1 - np.array(ps), ps])
    model = prob_model(probs)
    part = ClassPartition(["b"], ["a"])
    g = classification_g(model, X_rows(len(ps)), part)
    gs = classification_g(model, X_rows(len(ps)), part.swapped())
    assert g + gs == pytest.approx(1.0, abs=1e-12)
    pos, neg = np.prod(probs[:, 1]), np.prod(probs[:, 0])
    assert abs(g - pos / (pos + neg)) <= 1e-9


def test_classification_degenerate_row():
    model = prob_model([[0.0, 0.0, 1.0]], labels=("a", "b", "c"))
    with pytest.raises(DegenerateError):
        classification_g(model, X_rows(1), ClassPartition(["b"], ["a"]))


def test_classification_unknown_class():
    model = prob_model([[0.5, 0.5]])
    with pytest.raises(ConfigurationError):
        classification_g(model, X_rows(1), ClassPartition(["z"], ["a"]))


def test_partition_validation():
    with pytest.raises(ConfigurationError):
        ClassPartition(["a"], [])
    with pytest.raises(ConfigurationError):
        ClassPartition(["a"], ["a", "b"])


def test_intergroup_relative_mean_example():
    # group 1 positive rate 0.75, group 0 rate 0.5
    decisions = np.array([1, 0, 1, 1, 1, 0], dtype=float)
    groups = GroupAssignment(np.array([0, 0, 1, 1, 1, 1]), "relative_mean")
    model = FunctionModel(lambda v: decisions[: len(v)])
    assert intergroup_g(model, X_rows(6), groups) == pytest.approx(0.5)
    abs_groups = GroupAssignment(groups.group_of, "absolute_mean")
    assert intergroup_g(model, X_rows(6), abs_groups) == pytest.approx(0.25)


def test_intergroup_hard_vs_probability():
    probs = np.array([[0.4, 0.6], [0.8, 0.2], [0.3, 0.7], [0.45, 0.55]])
    model = prob_model(probs)
    groups = GroupAssignment(np.array([0, 0, 1, 1]), "absolute_mean")
    hard = intergroup_g(model, X_rows(4), groups, positive_class="b")
    soft = intergroup_g(model, X_rows(4), groups, positive_class="b", decision="probability")
    assert hard == pytest.approx(1.0 - 0.5)
    assert soft == pytest.approx((0.7 + 0.55) / 2 - (0.6 + 0.2) / 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=10))
def test_intergroup_swap_identity(vals):
    vals = np.array(vals)
    groups = np.arange(len(vals)) % 2
    model = FunctionModel(lambda v: vals[: len(v)])
    g = intergroup_g(model, X_rows(len(vals)), GroupAssignment(groups))
    gs = intergroup_g(model, X_rows(len(vals)), GroupAssignment(groups).swapped())
    assert gs == pytest.approx(1.0 / (1.0 + g) - 1.0, rel=1e-12, abs=1e-12)


def test_intergroup_zero_group0_mean():
    model = FunctionModel(lambda v: np.array([0.0, 0.0, 1.0, 1.0])[: len(v)])
    with pytest.raises(DegenerateError):
        intergroup_g(model, X_rows(4), GroupAssignment(np.array([0, 0, 1, 1])))


def test_intergroup_custom_measure():
    model = FunctionModel(lambda v: np.array([1.0, 2.0, 4.0, 6.0])[: len(v)])
    ratio = GroupAssignment(np.array([0, 0, 1, 1]), lambda m0, m1: m1 / m0)
    assert intergroup_g(model, X_rows(4), ratio) == pytest.approx(5.0 / 1.5)


def test_group_assignment_validation():
    with pytest.raises(ConfigurationError):
        GroupAssignment(np.array([0, 0, 0]))
    with pytest.raises(ConfigurationError):
        GroupAssignment(np.array([0, 2, 1]))
    with pytest.raises(ConfigurationError):
        GroupAssignment(np.array([0, 1]), "median")


def test_intergroup_row_count_checked():
    model = FunctionModel(lambda v: np.ones(len(v)))
    g = IntergroupG(GroupAssignment(np.array([0, 1, 1])))
    with pytest.raises(ConfigurationError):
        g.check(model, 4)


def test_loss_r_squared_and_mse():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    pred = np.array([1.5, 2.0, 2.5, 4.0])
    model = FunctionModel(lambda v: pred[: len(v)])
    rss, tss = 0.5, 5.0
    assert loss_g(model, X_rows(4), LabelSet(y)) == pytest.approx(1 - rss / tss)
    assert loss_g(model, X_rows(4), LabelSet(y, "mean_squared_error")) == pytest.approx(-rss / 4)
    perfect = FunctionModel(lambda v: y[: len(v)])
    assert loss_g(perfect, X_rows(4), LabelSet(y)) == 1.0


def test_loss_mean_predictor_scores_zero_and_worse_is_negative():
    y = np.array([1.0, 2.0, 3.0])
    mean_model = FunctionModel(lambda v: np.full(len(v), 2.0))
    assert loss_g(mean_model, X_rows(3), LabelSet(y)) == pytest.approx(0.0)
    bad = FunctionModel(lambda v: np.array([3.0, 2.0, 1.0]))
    assert loss_g(bad, X_rows(3), LabelSet(y)) < 0


def test_r_squared_invariant_to_row_order(rng):
    y = rng.normal(size=10)
    pred = y + rng.normal(size=10)
    perm = rng.permutation(10)
    a = loss_g(FunctionModel(lambda v: pred), X_rows(10), LabelSet(y))
    b = loss_g(FunctionModel(lambda v: pred[perm]), X_rows(10), LabelSet(y[perm]))
    assert a == pytest.approx(b, abs=1e-12)


def test_labelset_degenerate():
    with pytest.raises(DegenerateError):
        LabelSet(np.array([1.0]))
    with pytest.raises(DegenerateError):
        LabelSet(np.array([2.0, 2.0, 2.0]))
    LabelSet(np.array([2.0, 2.0]), "mean_squared_error")


def test_output_g():
    model = FunctionModel(lambda v: v[:, 0] * 2)
    X = FeatureMatrix.from_array(np.array([[1.0], [2.0], [6.0]]))
    assert output_g(model, X) == pytest.approx(6.0)
    clf = prob_model([[0.25, 0.75], [0.5, 0.5]])
    assert output_g(clf, X_rows(2), "b") == pytest.approx(0.625)
    with pytest.raises(ConfigurationError):
        OutputG().check(clf, 2)


def test_reduce_is_batched_consistently():
    # reducing a stack of outputs equals reducing each slice alone
    rng = np.random.default_rng(3)
    raw = rng.random((5, 6, 2)) + 0.01
    outputs = raw / raw.sum(axis=2, keepdims=True)
    gs = [
        ClassificationG(ClassPartition(["b"], ["a"])),
        IntergroupG(GroupAssignment(np.array([0, 1, 0, 1, 0, 1]), "absolute_mean"), "b", "probability"),
        LossG(LabelSet(rng.normal(size=6)), class_label="b"),
        OutputG("a"),
    ]
    for g in gs:
        batch = g.reduce(outputs, ("a", "b"))
        single = [g.reduce(outputs[b : b + 1], ("a", "b"))[0] for b in range(5)]
        np.testing.assert_allclose(batch, single, rtol=0, atol=1e-15)
