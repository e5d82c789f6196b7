"""Frame-similarity tracks: temporal k-means over-segmentation and cosine."""
import math

import numpy as np

from .errors import InvalidInputError
from .lattice import DEFAULT_THETA, INFINITE, SimilarityTrack

DEFAULT_M = 20
SIMILARITY_MODES = ("none", "kmeans", "cosine", "both")


def temporal_cluster(features, M=DEFAULT_M, iters=10):
    """Over-segment a sequence into temporally contiguous clusters.

    Centers start at ``ceil(T / M)`` evenly spaced frames.  Each iteration
    assigns every frame to the closest center in feature space among the
    centers whose temporal position lies within ``M`` frames (ties go to the
    temporally nearer center), then moves each center to the mean feature and
    mean position of its frames.  Maximal runs of one assignment become
    segments; single-frame runs are merged into the closer neighbouring run.

    Returns a length-T array of segment ids ``0, 0, ..., 1, 1, ...``.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"features must be a non-empty T x d matrix, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain non-finite values")
    if M < 2:
        raise InvalidInputError("mean cluster length M must be at least 2")
    T = X.shape[0]
    n_centers = math.ceil(T / M)
    if n_centers <= 1:
        return np.zeros(T, dtype=np.int64)

    step = T / n_centers
    # block midpoints, so equal-distance frames split evenly between blocks
    pos = (np.arange(n_centers) + 0.5) * step - 0.5
    centers = X[np.clip(np.rint(pos).astype(np.int64), 0, T - 1)].copy()
    frames = np.arange(T, dtype=np.float64)
    assign = np.zeros(T, dtype=np.int64)
    for _ in range(iters):
        dt = np.abs(frames[:, None] - pos[None, :])
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        outside = dt > M
        # frames with no center in the window fall back to the nearest in time
        orphan = outside.all(axis=1)
        outside[orphan] = dt[orphan] > dt[orphan].min(axis=1, keepdims=True)
        dist = np.where(outside, np.inf, dist)
        best = dist.min(axis=1, keepdims=True)
        tied = dist <= best
        assign = np.where(tied, dt, np.inf).argmin(axis=1)
        for c in range(n_centers):
            members = assign == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
                pos[c] = frames[members].mean()
    return _contiguous(X, assign)


def _runs(labels):
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    ends = np.r_[starts[1:], labels.shape[0]]
    return list(zip(starts.tolist(), ends.tolist()))


def _contiguous(X, assign):
    runs = _runs(assign)
    merged = True
    while merged and len(runs) > 1:
        merged = False
        for i, (a, b) in enumerate(runs):
            if b - a >= 2:
                continue
            neighbours = [j for j in (i - 1, i + 1) if 0 <= j < len(runs)]
            x = X[a:b].mean(axis=0)
            j = min(neighbours, key=lambda j: np.sum((X[runs[j][0]:runs[j][1]].mean(axis=0) - x) ** 2))
            lo, hi = min(runs[i][0], runs[j][0]), max(runs[i][1], runs[j][1])
            runs[min(i, j)] = (lo, hi)
            del runs[max(i, j)]
            merged = True
            break
    seg = np.empty(X.shape[0], dtype=np.int64)
    for k, (a, b) in enumerate(runs):
        seg[a:b] = k
    return seg


def cosine_track(features):
    """(1 + cos(x_t, x_{t+1})) / 2 for consecutive frames; 0 if a frame is zero."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] < 2:
        return np.zeros(0)
    norms = np.linalg.norm(X, axis=1)
    dots = (X[:-1] * X[1:]).sum(axis=1)
    denom = norms[:-1] * norms[1:]
    out = np.zeros(X.shape[0] - 1)
    ok = denom > 0
    cos = np.clip(dots[ok] / denom[ok], -1.0, 1.0)
    out[ok] = (1.0 + cos) / 2.0
    # rounding can leave identical frames a hair below 1
    out[ok & np.all(X[:-1] == X[1:], axis=1)] = 1.0
    return out


def compose_track(seg, cos=None, theta=DEFAULT_THETA):
    """INFINITE inside a cluster, the cosine value (or 0) across its boundary."""
    seg = np.asarray(seg)
    boundary = seg[1:] != seg[:-1]
    if cos is None:
        values = np.zeros(seg.shape[0] - 1)
    else:
        values = np.asarray(cos, dtype=np.float64)
        if values.shape[0] != seg.shape[0] - 1:
            raise InvalidInputError("cosine track and segmentation lengths disagree")
    return SimilarityTrack(np.where(boundary, values, INFINITE), theta)


def build_track(features, mode="both", theta=DEFAULT_THETA, M=DEFAULT_M, iters=10):
    """Similarity track for one sequence under one of :data:`SIMILARITY_MODES`."""
    X = np.asarray(features, dtype=np.float64)
    T = X.shape[0]
    if mode == "none":
        return SimilarityTrack.constant(T, 0.0, theta)
    if mode == "cosine":
        return SimilarityTrack(cosine_track(X), theta)
    if mode == "kmeans":
        return compose_track(temporal_cluster(X, M, iters), None, theta)
    if mode == "both":
        return compose_track(temporal_cluster(X, M, iters), cosine_track(X), theta)
    raise InvalidInputError(f"unknown similarity mode {mode!r}")
