"""Similarity-reweighted CTC lattice (no blank symbol).

All lattice grids are stored in the log domain with shape ``(S, T)``;
``-inf`` marks cells that no consistent path can reach.  Frame similarities
live in a :class:`SimilarityTrack`: entry ``t`` couples frames ``t`` and
``t + 1`` and may be ``INFINITE`` (``np.inf``), which forces the two frames
to share a label.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    InfeasibleError,
    InfeasibleSupervisionError,
    InvalidInputError,
    NoConsistentPathError,
    NumericError,
)

INFINITE = np.inf
DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class LabelVocab:
    actions: tuple

    def __post_init__(self):
        actions = tuple(self.actions)
        if not actions:
            raise InvalidInputError("vocabulary must hold at least one action")
        if len(set(actions)) != len(actions):
            raise InvalidInputError("action names must be unique")
        object.__setattr__(self, "actions", actions)

    @property
    def A(self):
        return len(self.actions)

    def index(self, name):
        try:
            return self.actions.index(name)
        except ValueError:
            raise InvalidInputError(f"unknown action name {name!r}") from None

    def encode(self, names):
        return np.array([self.index(n) for n in names], dtype=np.int64)

    def decode(self, indices):
        return [self.actions[int(i)] for i in indices]


@dataclass(frozen=True)
class SimilarityTrack:
    """Consecutive-frame similarities plus the floor ``theta``."""

    sims: np.ndarray
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        sims = np.asarray(self.sims, dtype=np.float64).reshape(-1)
        if not 0.0 < self.theta <= 1.0:
            raise InvalidInputError(f"theta must lie in (0, 1], got {self.theta}")
        finite = sims[np.isfinite(sims)]
        if np.isnan(sims).any() or np.isneginf(sims).any():
            raise InvalidInputError("similarities must be in [0, 1] or INFINITE")
        if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
            raise InvalidInputError("finite similarities must lie in [0, 1]")
        object.__setattr__(self, "sims", sims)

    @classmethod
    def constant(cls, T, value=0.0, theta=DEFAULT_THETA):
        return cls(np.full(max(T - 1, 0), value), theta)


@dataclass
class Lattice:
    alpha: np.ndarray
    beta: Optional[np.ndarray]
    log_likelihood: float


def softmax(y):
    y = np.asarray(y, dtype=np.float64)
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def collapse(path):
    """Merge adjacent repeated labels: ``[b, b, c, c, c] -> [b, c]``."""
    path = list(path)
    if not path:
        raise InvalidInputError("cannot collapse an empty path")
    out = [path[0]]
    for label in path[1:]:
        if label != out[-1]:
            out.append(label)
    return out


def step_weights(z_row, prev, sim, theta=DEFAULT_THETA):
    """Renormalize one frame's posteriors given the previous frame's label.

    The previous label is boosted by ``max(theta, sim)`` and every other label
    by ``theta``; an INFINITE similarity returns the one-hot row of ``prev``.
    """
    z_row = np.asarray(z_row, dtype=np.float64)
    if not 0 <= prev < z_row.shape[0]:
        raise InvalidInputError(f"previous label {prev} outside vocabulary of {z_row.shape[0]}")
    if theta <= 0:
        raise InvalidInputError("theta must be positive")
    if np.isposinf(sim):
        q = np.zeros_like(z_row)
        q[prev] = 1.0
        return q
    psi = np.full_like(z_row, theta)
    psi[prev] = max(theta, sim)
    q = psi * z_row
    return q / q.sum()


def _check_inputs(z, ell, sim, ann):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise InvalidInputError(f"posteriors must be a non-empty T x A matrix, got shape {z.shape}")
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise InvalidInputError("posteriors must be finite and strictly positive")
    T, A = z.shape
    ell = np.asarray(ell, dtype=np.int64).reshape(-1)
    if ell.size == 0:
        raise InvalidInputError("ordering must be non-empty")
    if ell.min() < 0 or ell.max() >= A:
        raise InvalidInputError("ordering refers to actions outside the vocabulary")
    if np.any(ell[1:] == ell[:-1]):
        raise InvalidInputError("ordering has adjacent repeats")
    if sim is None:
        sim = SimilarityTrack.constant(T)
    elif not isinstance(sim, SimilarityTrack):
        sim = SimilarityTrack(sim)
    if sim.sims.shape[0] != T - 1:
        raise InvalidInputError(f"similarity track has length {sim.sims.shape[0]}, expected {T - 1}")
    if ell.size > T:
        raise InfeasibleError(f"ordering of length {ell.size} cannot fit in {T} frames")
    mask = _anchor_mask(ann, ell, T)
    return z, ell, sim, mask


def _anchor_mask(ann, ell, T):
    """Boolean (S, T) grid, True where an anchor forbids the cell."""
    S = ell.size
    mask = np.zeros((S, T), dtype=bool)
    if not ann:
        return mask
    last = -1
    for frame, action in ann:
        if not 0 <= frame < T:
            raise InvalidInputError(f"anchor frame {frame} outside [0, {T})")
        if frame <= last:
            raise InvalidInputError("anchor frames must be strictly increasing")
        last = frame
        if action not in ell:
            raise InfeasibleSupervisionError(f"anchor action {action} at frame {frame} does not occur in the ordering")
        mask[:, frame] = ell != action
    return mask


def _structural_mask(S, T):
    s = np.arange(S)[:, None]
    t = np.arange(T)[None, :]
    return (s > t) | (s < S - T + t)


def _kernel(rows, ell, emit, cond, m, theta):
    """log( Psi z[emit] / sum_k Psi_k z[k] ), Psi boosted on label ``cond``.

    ``rows`` is (N, A); ``emit``/``cond`` are label-index arrays of length K;
    ``m`` holds max(theta, sim) per row (may be inf).
    """
    finite = np.isfinite(m)
    mf = np.where(finite, m, 1.0)[:, None]
    ze = rows[:, emit]
    zc = rows[:, cond]
    total = rows.sum(axis=1, keepdims=True)
    same = emit == cond
    weight = np.where(same[None, :], mf, theta)
    out = np.log(weight * ze) - np.log(theta * total + (mf - theta) * zc)
    hard = np.where(same, 0.0, -np.inf)
    return np.where(finite[:, None], out, hard[None, :])


def _forward_steps(z, ell, sim):
    """Per-step log transitions into frame t (rows are t = 1..T-1)."""
    m = np.maximum(sim.theta, sim.sims)
    rows = z[1:]
    stay = _kernel(rows, ell, ell, ell, m, sim.theta)
    move = np.full_like(stay, -np.inf)
    if ell.size > 1:
        move[:, 1:] = _kernel(rows, ell, ell[1:], ell[:-1], m, sim.theta)
    return stay, move


def _reverse_steps(z, ell, sim):
    """Per-step log weights of frame t given its successor (rows t = 0..T-2)."""
    m = np.maximum(sim.theta, sim.sims)
    rows = z[:-1]
    stay = _kernel(rows, ell, ell, ell, m, sim.theta)
    move = np.full_like(stay, -np.inf)
    if ell.size > 1:
        move[:, :-1] = _kernel(rows, ell, ell[:-1], ell[1:], m, sim.theta)
    return stay, move


def _raise_if_empty(log_likelihood, mask, what="forward"):
    if np.isneginf(log_likelihood):
        if mask.any():
            raise InfeasibleSupervisionError(f"no path is consistent with the anchors ({what} pass)")
        raise InfeasibleSupervisionError(f"similarity constraints rule out every path ({what} pass)")
    if not np.isfinite(log_likelihood):
        raise NumericError(f"{what} pass produced a non-finite likelihood")


def forward(z, ell, sim=None, ann=None):
    """Forward pass; returns a :class:`Lattice` with ``alpha`` filled.

    ``ann`` is a sequence of ``(frame, action)`` anchors; cells at an anchored
    frame whose label differs from the anchor are pruned.
    """
    z, ell, sim, mask = _check_inputs(z, ell, sim, ann)
    T = z.shape[0]
    S = ell.size
    blocked = mask | _structural_mask(S, T)
    stay, move = _forward_steps(z, ell, sim)

    alpha = np.full((S, T), -np.inf)
    alpha[0, 0] = np.log(z[0, ell[0]])
    alpha[blocked[:, 0], 0] = -np.inf
    shifted = np.full(S, -np.inf)
    for t in range(1, T):
        prev = alpha[:, t - 1]
        shifted[1:] = prev[:-1]
        col = np.logaddexp(prev + stay[t - 1], shifted + move[t - 1])
        col[blocked[:, t]] = -np.inf
        alpha[:, t] = col
    log_likelihood = float(alpha[S - 1, T - 1])
    _raise_if_empty(log_likelihood, mask)
    return Lattice(alpha=alpha, beta=None, log_likelihood=log_likelihood)


def backward(z, ell, sim=None, ann=None, *, decomposition="reverse"):
    """Backward pass returning the ``(S, T)`` log grid ``beta``.

    ``decomposition="reverse"`` factorizes the path weight from the end of the
    sequence, renormalizing each frame against its successor's label.
    ``decomposition="chain"`` instead uses the backward messages of the
    forward-normalized chain, scaled by ``z_t`` so that
    ``sum_s alpha * beta / z`` reproduces the forward likelihood at every
    frame.  The two coincide when no similarity exceeds ``theta``.
    """
    z, ell, sim, mask = _check_inputs(z, ell, sim, ann)
    T = z.shape[0]
    S = ell.size
    blocked = mask | _structural_mask(S, T)
    logz = np.log(z[:, ell]).T  # (S, T)

    beta = np.full((S, T), -np.inf)
    shifted = np.full(S, -np.inf)
    if decomposition == "reverse":
        stay, move = _reverse_steps(z, ell, sim)
        beta[S - 1, T - 1] = logz[S - 1, T - 1]
        beta[blocked[:, T - 1], T - 1] = -np.inf
        for t in range(T - 2, -1, -1):
            nxt = beta[:, t + 1]
            shifted[:-1] = nxt[1:]
            col = np.logaddexp(nxt + stay[t], shifted + move[t])
            col[blocked[:, t]] = -np.inf
            beta[:, t] = col
    elif decomposition == "chain":
        stay, move = _forward_steps(z, ell, sim)
        msg = np.full((S, T), -np.inf)
        msg[S - 1, T - 1] = 0.0
        msg[blocked[:, T - 1], T - 1] = -np.inf
        for t in range(T - 2, -1, -1):
            nxt = msg[:, t + 1]
            shifted[:-1] = nxt[1:] + move[t, 1:]
            col = np.logaddexp(nxt + stay[t], shifted)
            col[blocked[:, t]] = -np.inf
            msg[:, t] = col
        beta = msg + logz
    else:
        raise InvalidInputError(f"unknown decomposition {decomposition!r}")
    return beta


def lattice(z, ell, sim=None, ann=None, *, decomposition="reverse"):
    """Run both passes and return a filled :class:`Lattice`."""
    lat = forward(z, ell, sim, ann)
    lat.beta = backward(z, ell, sim, ann, decomposition=decomposition)
    return lat


def frame_log_likelihoods(lat, z, ell):
    """log sum_s alpha(s,t) beta(s,t) / z_t[ell_s] for every frame t."""
    ell = np.asarray(ell, dtype=np.int64)
    logz = np.log(np.asarray(z, dtype=np.float64)[:, ell]).T
    terms = lat.alpha + lat.beta - logz
    top = terms.max(axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(terms - safe).sum(axis=0))


def posterior_target(lat, z, ell):
    """Soft target ``gamma`` (T x A): alpha * beta / (z * P) summed per action."""
    if lat.beta is None:
        raise InvalidInputError("lattice has no backward grid")
    if not np.isfinite(lat.log_likelihood):
        raise NoConsistentPathError("likelihood is zero; no consistent path")
    z = np.asarray(z, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.int64)
    logz = np.log(z[:, ell]).T
    occupancy = np.exp(lat.alpha + lat.beta - logz - lat.log_likelihood)
    gamma = np.zeros_like(z)
    for s, k in enumerate(ell):
        gamma[:, k] += occupancy[s]
    return gamma


def expected_transition_rows(gamma, z, sim):
    """E[q_t(. | pi_{t-1})] under the label posterior ``gamma`` (row 0 is ``z_0``)."""
    z = np.asarray(z, dtype=np.float64)
    T, A = z.shape
    out = np.empty_like(z)
    out[0] = z[0]
    if T == 1:
        return out
    m = np.maximum(sim.theta, sim.sims)
    prev = gamma[:-1]  # (T-1, A) posterior of the predecessor label
    rows = z[1:]
    finite = np.isfinite(m)
    mf = np.where(finite, m, 1.0)[:, None]
    # q(k | j) = (theta z_k + [k == j] (m - theta) z_k) / (theta + (m - theta) z_j)
    denom = sim.theta * rows.sum(axis=1, keepdims=True) + (mf - sim.theta) * rows
    mix = (prev / denom).sum(axis=1, keepdims=True)
    soft = sim.theta * rows * mix + (mf - sim.theta) * rows * prev / denom
    out[1:] = np.where(finite[:, None], soft, prev)
    return out


def ectc_loss_grad(z, ell, sim=None, ann=None, *, decomposition="reverse", gradient="target"):
    """Negative log-likelihood and its gradient w.r.t. the pre-softmax scores.

    ``gradient="target"`` returns ``z - gamma`` with ``gamma`` from
    :func:`posterior_target`.  ``gradient="exact"`` returns the true
    derivative of the renormalized loss, ``E[q_t] - gamma`` with
    ``E[q_t] = sum_j P(pi_{t-1} = j | ell) q_t(. | j)``; it needs the chain
    decomposition so that ``gamma`` is the exact label posterior.  Both agree
    when no similarity exceeds ``theta``.
    """
    z = np.asarray(z, dtype=np.float64)
    if gradient == "exact":
        decomposition = "chain"
    elif gradient != "target":
        raise InvalidInputError(f"unknown gradient {gradient!r}")
    lat = lattice(z, ell, sim, ann, decomposition=decomposition)
    gamma = posterior_target(lat, z, ell)
    if gradient == "exact":
        sim = _check_inputs(z, ell, sim, None)[2]
        grad = expected_transition_rows(gamma, z, sim) - gamma
    else:
        grad = z - gamma
    if not np.all(np.isfinite(grad)):
        bad = int(np.argwhere(~np.isfinite(grad))[0, 0])
        raise NumericError(f"non-finite gradient at frame {bad}")
    return -lat.log_likelihood, grad


def ectc_loss(z, ell, sim=None, ann=None):
    return -forward(z, ell, sim, ann).log_likelihood


def validate_annotations(ann: Sequence, ell, T):
    """Eager structural checks on anchors; returns them as a sorted tuple."""
    ann = tuple((int(f), int(a)) for f, a in ann)
    _anchor_mask(ann, np.asarray(ell, dtype=np.int64), T)
    return ann
