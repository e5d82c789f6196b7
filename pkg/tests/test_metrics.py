import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ectc import metrics
from ectc.errors import InvalidInputError


def test_frame_accuracy_examples():
    assert metrics.frame_accuracy([0, 1, 2, 2], [0, 1, 2, 2]) == 1.0
    assert metrics.frame_accuracy([1, 1, 1], [0, 0, 0]) == 0.0
    assert metrics.frame_accuracy([0, 1, 1, 2], [0, 1, 2, 2]) == 0.75


def test_frame_accuracy_length_mismatch():
    with pytest.raises(InvalidInputError):
        metrics.frame_accuracy([0, 1], [0])


def test_unit_accuracy_examples():
    assert metrics.unit_accuracy(["a", "b", "c"], ["a", "b", "c"]) == 1.0
    assert metrics.unit_accuracy(["a", "b", "c"], ["a", "c"]) == 0.5
    assert metrics.unit_accuracy([], ["a"]) == 0.0


def test_unit_accuracy_is_floored():
    assert metrics.unit_accuracy(["b", "c", "d", "e"], ["a"]) == 0.0


def test_edit_distance_small_cases():
    assert metrics.edit_distance("kitten", "sitting") == 3
    assert metrics.edit_distance([], [1, 2]) == 2
    assert metrics.edit_distance([1, 2], [2, 1]) == 2


@given(st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8))
def test_edit_distance_is_symmetric_and_bounded(a, b):
    d = metrics.edit_distance(a, b)
    assert d == metrics.edit_distance(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


def test_unit_accuracy_from_frames():
    assert metrics.unit_accuracy_frames([0, 0, 1, 1, 2], [0, 2, 2, 2, 2]) == 0.5


def test_jaccard_examples():
    gt = [0] * 10 + [1] * 10
    assert metrics.jaccard(gt, metrics.to_segments(gt)) == 1.0
    # segment a on frames 0-9, a predicted on frames 5-14 only
    gt = [0] * 10 + [1] * 5
    pred = [1] * 5 + [0] * 10
    scores = metrics.jaccard_per_segment(pred, metrics.to_segments(gt))
    assert scores[0] == pytest.approx(1 / 3)
    assert scores[1] == 0.0
    assert metrics.jaccard(pred, metrics.to_segments(gt)) == pytest.approx(1 / 6)


def test_jaccard_unpredicted_action_scores_zero():
    gt = [0, 0, 1, 1]
    assert metrics.jaccard([0, 0, 0, 0], metrics.to_segments(gt)) == pytest.approx((2 / 4 + 0) / 2)


def test_jaccard_repeated_action_perfect_prediction():
    gt = [0, 0, 1, 1, 0, 0, 0]
    assert metrics.jaccard(gt, metrics.to_segments(gt)) == 1.0


def test_jaccard_rejects_bad_cover():
    with pytest.raises(InvalidInputError):
        metrics.jaccard([0, 0, 0], [(0, 0, 1)])


def test_to_segments():
    assert metrics.to_segments([2, 2, 0, 1, 1]) == [(2, 0, 1), (0, 2, 2), (1, 3, 4)]


def test_segment_scores_perfect():
    gt = np.array([3, 3, 1, 1, 1, 0])
    assert metrics.segment_scores(gt, gt) == {"frame_acc": 1.0, "unit_acc": 1.0, "jaccard": 1.0}
