import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedperl.errors import ConfigError
from fedperl.metrics import (
    accuracy,
    confusion_matrix,
    evaluate,
    macro_scores,
    relative_improvement,
    summarize,
)
from fedperl.nn import ModelParams


def identity_model(C):
    return ModelParams.from_layers([(np.eye(C), np.zeros(C))])


def inputs_for(pred, C):
    """Rows that the identity model classifies as ``pred``."""
    return 5.0 * np.eye(C)[pred]


Y_TRUE = [0, 0, 1, 1, 2, 2]
Y_PRED = [0, 1, 1, 1, 0, 2]


def test_evaluate_perfect_and_constant():
    m = identity_model(3)
    y = np.array([0, 1, 2, 2])
    cm = evaluate(m, inputs_for(y, 3), y)
    assert np.array_equal(cm, np.diag([1, 1, 2]))
    m2 = identity_model(2)
    cm2 = evaluate(m2, inputs_for([0, 0, 0, 0], 2), [0, 1, 0, 1])
    assert cm2[:, 1].sum() == 0 and cm2[:, 0].tolist() == [2, 2]


def test_evaluate_crafted_hand_tally():
    cm = evaluate(identity_model(3), inputs_for(Y_PRED, 3), Y_TRUE)
    assert cm.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 1]]


def test_evaluate_tie_goes_to_lowest_class():
    cm = evaluate(identity_model(3), np.zeros((1, 3)), [2])
    assert cm[2, 0] == 1


def test_evaluate_errors():
    with pytest.raises(ConfigError):
        evaluate(identity_model(2), np.zeros((0, 2)), [])
    with pytest.raises(ConfigError):
        evaluate(identity_model(2), np.zeros((1, 2)), [-1])


def test_macro_crafted():
    s = macro_scores(confusion_matrix(Y_TRUE, Y_PRED, 3))
    np.testing.assert_allclose(s.per_class_precision, [0.5, 2 / 3, 1.0])
    np.testing.assert_allclose(s.per_class_recall, [0.5, 1.0, 0.5])
    np.testing.assert_allclose(s.per_class_f1, [0.5, 0.8, 2 / 3])
    assert s.f1 == pytest.approx(0.6555555555555556)
    assert s.precision == pytest.approx(0.7222222222222222)
    assert s.recall == pytest.approx(2 / 3)


def test_macro_two_thirds():
    # class 0: TP=2, FP=1, FN=1
    cm = np.array([[2, 1], [1, 0]])
    s = macro_scores(cm)
    assert s.per_class_precision[0] == pytest.approx(2 / 3)
    assert s.per_class_recall[0] == pytest.approx(2 / 3)
    assert s.per_class_f1[0] == pytest.approx(2 / 3)


def test_macro_perfect_and_zero_support():
    s = macro_scores(np.diag([3, 4, 5]))
    assert (s.f1, s.precision, s.recall) == (1.0, 1.0, 1.0)
    # class 2 never occurs; excluded from the mean
    s2 = macro_scores(np.array([[2, 0, 0], [0, 2, 0], [0, 0, 0]]))
    assert s2.f1 == 1.0
    assert accuracy(np.diag([1, 1])) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_metric_invariants(C, seed):
    rng = np.random.default_rng(seed)
    yt = rng.integers(0, C, 40)
    yp = rng.integers(0, C, 40)
    s = macro_scores(confusion_matrix(yt, yp, C))
    for v in (s.f1, s.precision, s.recall):
        assert 0.0 <= v <= 1.0
    assert np.all(s.per_class_f1 <= np.maximum(s.per_class_precision, s.per_class_recall) + 1e-12)
    present = s.support > 0
    assert s.per_class_f1[present].min() - 1e-12 <= s.f1 <= s.per_class_f1[present].max() + 1e-12
    perm = rng.permutation(C)
    cm = confusion_matrix(yt, yp, C)
    cmp = confusion_matrix(perm[yt], perm[yp], C)
    inv = np.argsort(perm)
    assert np.array_equal(cmp[np.ix_(perm, perm)], cm) or np.array_equal(cmp, cm[np.ix_(inv, inv)])


@pytest.mark.parametrize(
    "cand, base, ri",
    [(0.698, 0.647, 7.88), (0.734, 0.647, 13.44), (0.749, 0.647, 15.77), (0.746, 0.647, 15.30)],
)
def test_relative_improvement_reference_values(cand, base, ri):
    assert abs(relative_improvement(cand, base) - ri) < 0.05


def test_relative_improvement_edge():
    assert relative_improvement(0.5, 0.5) == 0.0
    with pytest.raises(ConfigError):
        relative_improvement(0.5, 0.0)


def test_summarize_population_std():
    s = summarize([1.0, 2.0, 3.0, 10.0])
    assert s == {"mean": 4.0, "median": 2.5, "std": pytest.approx(np.sqrt(12.5))}
