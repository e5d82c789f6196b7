"""Synthetic "video" corpora with known frame labels.

Each action owns a prototype feature vector; a video is a random ordering of
actions (no immediate repeats), each held for a random number of frames,
with features = prototype + within-segment random-walk drift + noise.
"""
import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .data_io import DatasetRecord
from .errors import InvalidInputError
from .lattice import LabelVocab

SPLITS = {"train": 1, "test": 2}


@dataclass(frozen=True)
class SyntheticSpec:
    n_actions: int = 5
    dim: int = 16
    proto_scale: float = 1.0
    sigma: float = 0.05
    segments: Tuple[int, int] = (3, 5)
    seg_len: Tuple[int, int] = (15, 30)
    n_videos: int = 200
    drift: float = 0.1
    seed: int = 0
    # None: no anchors; "segment": one random frame per segment; float: that fraction of frames
    anchors: Optional[Union[str, float]] = None

    def __post_init__(self):
        if self.n_actions < 1 or self.dim < 1 or self.n_videos < 0:
            raise InvalidInputError("need n_actions >= 1, dim >= 1, n_videos >= 0")
        lo, hi = self.segments
        if lo < 1 or hi < lo:
            raise InvalidInputError(f"invalid segments-per-video range {self.segments}")
        if hi > 1 and self.n_actions < 2:
            raise InvalidInputError("multi-segment videos need at least two actions")
        lo, hi = self.seg_len
        if lo < 1 or hi < lo:
            raise InvalidInputError(f"invalid segment-length range {self.seg_len}")
        if self.sigma < 0 or self.drift < 0 or self.proto_scale <= 0:
            raise InvalidInputError("sigma and drift must be >= 0, proto_scale > 0")
        if self.anchors is not None and self.anchors != "segment":
            if not 0.0 < float(self.anchors) <= 1.0:
                raise InvalidInputError(f"anchor fraction must lie in (0, 1], got {self.anchors}")

    def to_dict(self):
        return asdict(self)


def vocab_for(spec):
    width = max(2, len(str(spec.n_actions - 1)))
    return LabelVocab(tuple(f"action_{k:0{width}d}" for k in range(spec.n_actions)))


def prototypes(spec):
    """Gaussian directions rescaled to norm ``proto_scale`` (near-orthogonal for large d)."""
    rng = np.random.default_rng([spec.seed, 0])
    P = rng.standard_normal((spec.n_actions, spec.dim))
    return spec.proto_scale * P / np.linalg.norm(P, axis=1, keepdims=True)


def sample_anchors(frame_labels, level, rng):
    """Anchor list ``[(frame, action), ...]`` drawn from ground-truth labels.

    ``level`` is ``"segment"`` (one uniformly chosen frame per segment) or a
    fraction of frames (at least one per video, chosen without replacement).
    """
    labels = list(frame_labels)
    T = len(labels)
    if level == "segment":
        frames = []
        start = 0
        for t in range(1, T + 1):
            if t == T or labels[t] != labels[start]:
                frames.append(int(rng.integers(start, t)))
                start = t
    else:
        fraction = float(level)
        if not 0.0 < fraction <= 1.0:
            raise InvalidInputError(f"anchor fraction must lie in (0, 1], got {level}")
        n = max(1, int(round(fraction * T)))
        frames = sorted(rng.choice(T, size=n, replace=False).tolist())
    return [(f, labels[f]) for f in frames]


def _ordering(rng, n_actions, n_segments):
    seq = [int(rng.integers(n_actions))]
    for _ in range(n_segments - 1):
        nxt = int(rng.integers(n_actions - 1))
        seq.append(nxt + (nxt >= seq[-1]))
    return seq


def generate_corpus(spec, split="train"):
    """Records for one split; same ``spec`` and split give identical output.

    Prototypes depend only on ``spec.seed``, so train and test splits share
    the action appearance model.  Anchors use their own random stream, so
    changing ``spec.anchors`` leaves the features and labels untouched.
    """
    stream = SPLITS[split] if isinstance(split, str) else int(split)
    vocab = vocab_for(spec)
    protos = prototypes(spec)
    rng = np.random.default_rng([spec.seed, stream, 0])
    anchor_rng = np.random.default_rng([spec.seed, stream, 1])
    corpus = []
    for v in range(spec.n_videos):
        n_seg = int(rng.integers(spec.segments[0], spec.segments[1] + 1))
        order = _ordering(rng, spec.n_actions, n_seg)
        lengths = rng.integers(spec.seg_len[0], spec.seg_len[1] + 1, size=n_seg)
        labels = np.repeat(order, lengths)
        T = labels.shape[0]
        drift = np.zeros((T, spec.dim))
        start = 0
        for n in lengths:
            steps = rng.standard_normal((n, spec.dim)) * spec.drift
            steps[0] = 0.0
            drift[start:start + n] = np.cumsum(steps, axis=0)
            start += n
        noise = rng.standard_normal((T, spec.dim)) * spec.sigma
        features = protos[labels] + drift + noise
        names = vocab.decode(labels)
        anchors = None
        if spec.anchors is not None:
            anchors = sample_anchors(names, spec.anchors, anchor_rng)
        corpus.append(
            DatasetRecord(
                id=f"{split}-{v:05d}",
                features=features,
                frame_labels=names,
                ordering=vocab.decode(order),
                annotations=anchors,
            )
        )
    return corpus


def corpus_stats(corpus):
    """Summary numbers for a corpus (used by the CLI and the notebooks)."""
    from .similarity import cosine_track

    lengths = [rec.T for rec in corpus]
    within, between = [], []
    for rec in corpus:
        cos = 2.0 * cosine_track(rec.features) - 1.0
        same = np.array(rec.frame_labels[1:]) == np.array(rec.frame_labels[:-1])
        within.extend(cos[same].tolist())
        between.extend(cos[~same].tolist())
    n_anch = sum(len(rec.annotations or []) for rec in corpus)
    return {
        "videos": len(corpus),
        "frames": int(sum(lengths)),
        "mean_length": float(np.mean(lengths)) if lengths else math.nan,
        "mean_units": float(np.mean([len(rec.ordering) for rec in corpus])) if corpus else math.nan,
        "within_cosine": float(np.mean(within)) if within else math.nan,
        "between_cosine": float(np.mean(between)) if between else math.nan,
        "anchor_fraction": n_anch / max(1, sum(lengths)),
    }
