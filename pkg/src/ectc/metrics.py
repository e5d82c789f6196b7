"""Segmentation metrics: frame accuracy, unit accuracy and Jaccard."""
import numpy as np

from .errors import InvalidInputError
from .lattice import collapse


def to_segments(path):
    """Run-length form: list of ``(action, start, end)`` with ``end`` inclusive."""
    path = list(path)
    segments = []
    start = 0
    for t in range(1, len(path) + 1):
        if t == len(path) or path[t] != path[start]:
            segments.append((path[start], start, t - 1))
            start = t
    return segments


def frame_accuracy(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction has {pred.shape[0]} frames, ground truth {gt.shape[0]}")
    if gt.size == 0:
        raise InvalidInputError("empty sequences")
    return float(np.mean(pred == gt))


def edit_distance(pred, gt):
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    pred, gt = list(pred), list(gt)
    prev = list(range(len(gt) + 1))
    for i, p in enumerate(pred, 1):
        cur = [i] + [0] * len(gt)
        for j, g in enumerate(gt, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (p != g))
        prev = cur
    return prev[-1]


def unit_accuracy(pred_units, gt_units):
    """1 - (S + I + D) / len(gt) after optimal alignment, floored at 0."""
    gt_units = list(gt_units)
    if not gt_units:
        raise InvalidInputError("ground-truth unit sequence is empty")
    return max(0.0, 1.0 - edit_distance(pred_units, gt_units) / len(gt_units))


def unit_accuracy_frames(pred, gt):
    return unit_accuracy(collapse(pred), collapse(gt))


def jaccard_per_segment(pred, gt_segments):
    """|I & P| / |I | P| for each ground-truth segment ``(a, start, end)``.

    ``P`` is the union of predicted runs of action ``a`` that overlap the
    interval ``I``, so a second occurrence of ``a`` elsewhere in the
    sequence does not count against this segment.
    """
    pred = np.asarray(pred)
    if not gt_segments:
        raise InvalidInputError("no ground-truth segments")
    cover = sum(end - start + 1 for _, start, end in gt_segments)
    if cover != pred.shape[0]:
        raise InvalidInputError(f"segments cover {cover} frames, prediction has {pred.shape[0]}")
    runs = to_segments(pred.tolist())
    scores = []
    for action, start, end in gt_segments:
        inside = np.zeros(pred.shape[0], dtype=bool)
        inside[start:end + 1] = True
        predicted = np.zeros_like(inside)
        for a, s, e in runs:
            if a == action and s <= end and e >= start:
                predicted[s:e + 1] = True
        scores.append(np.count_nonzero(inside & predicted) / np.count_nonzero(inside | predicted))
    return scores


def jaccard(pred, gt_segments):
    """Mean of :func:`jaccard_per_segment`."""
    return float(np.mean(jaccard_per_segment(pred, gt_segments)))


def segment_scores(pred, gt):
    """All three metrics for one sequence, as a dict."""
    return {
        "frame_acc": frame_accuracy(pred, gt),
        "unit_acc": unit_accuracy_frames(pred, gt),
        "jaccard": jaccard(pred, to_segments(gt)),
    }
