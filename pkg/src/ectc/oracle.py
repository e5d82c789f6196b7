"""Brute-force reference computations, exponential in T; desk-scale only.

Nothing here calls into :mod:`ectc.lattice` beyond its input types, so the
lattice can be checked against these functions.
"""
import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, NumericError, SizeLimitError

DEFAULT_CAP = 10**7
FULL_SCAN_CAP = 3**8


@dataclass
class PathSet:
    paths: np.ndarray  # (n_paths, T) int
    total_log_prob: Optional[float] = None

    def __len__(self):
        return self.paths.shape[0]


def _sims_theta(sim, T):
    if sim is None:
        return np.zeros(max(T - 1, 0)), 0.5
    if hasattr(sim, "sims"):
        return np.asarray(sim.sims, dtype=np.float64), float(sim.theta)
    return np.asarray(sim, dtype=np.float64), 0.5


def enumerate_paths(ell, T, ann=None, cap=DEFAULT_CAP):
    """All length-T paths collapsing to ``ell`` and honouring the anchors.

    Paths are built by choosing the S-1 frames where the label changes.
    """
    ell = [int(k) for k in ell]
    S = len(ell)
    if S == 0 or S > T:
        raise InvalidInputError(f"ordering of length {S} cannot fill {T} frames")
    anchors = list(ann or [])
    out = []
    for cuts in itertools.combinations(range(1, T), S - 1):
        bounds = (0,) + cuts + (T,)
        path = np.empty(T, dtype=np.int64)
        for s in range(S):
            path[bounds[s]:bounds[s + 1]] = ell[s]
        if all(path[f] == a for f, a in anchors):
            out.append(path)
            if len(out) > cap:
                raise SizeLimitError(f"more than {cap} consistent paths")
    paths = np.array(out, dtype=np.int64).reshape(len(out), T)
    return PathSet(paths=paths)


def all_paths(A, T, cap=FULL_SCAN_CAP):
    """Every one of the A**T label sequences (for normalization checks)."""
    if A**T > cap:
        raise SizeLimitError(f"{A}**{T} paths exceed the full-scan cap {cap}")
    return np.array(list(itertools.product(range(A), repeat=T)), dtype=np.int64).reshape(-1, T)


def transition_row(z_row, prev, sim, theta):
    """Distribution over the next label, written directly from the path weight."""
    A = z_row.shape[0]
    if np.isposinf(sim):
        return np.eye(A)[prev]
    weights = np.array([(max(theta, sim) if k == prev else theta) * z_row[k] for k in range(A)])
    return weights / weights.sum()


def path_log_prob(path, z, sim=None):
    """log z_1[pi_1] + sum_t log q_t(pi_t | pi_{t-1})."""
    z = np.asarray(z, dtype=np.float64)
    path = np.asarray(path, dtype=np.int64)
    T = z.shape[0]
    if path.shape[0] != T:
        raise InvalidInputError(f"path has length {path.shape[0]}, posteriors have {T} frames")
    sims, theta = _sims_theta(sim, T)
    total = math.log(z[0, path[0]])
    for t in range(1, T):
        p = transition_row(z[t], path[t - 1], sims[t - 1], theta)[path[t]]
        if p == 0.0:
            return -math.inf
        total += math.log(p)
    return total


def score_paths(pathset, z, sim=None):
    logs = np.array([path_log_prob(p, z, sim) for p in pathset.paths])
    total = float(logsumexp(logs)) if logs.size else -math.inf
    return PathSet(paths=pathset.paths, total_log_prob=total), logs


def brute_likelihood(z, ell, sim=None, ann=None, cap=DEFAULT_CAP):
    """log P(ell | X) by summing normalized path probabilities."""
    z = np.asarray(z, dtype=np.float64)
    scored, _ = score_paths(enumerate_paths(ell, z.shape[0], ann, cap), z, sim)
    return scored.total_log_prob


def brute_posterior(z, ell, sim=None, ann=None, cap=DEFAULT_CAP):
    """Exact P(pi_t = k | ell, X) as a T x A matrix."""
    z = np.asarray(z, dtype=np.float64)
    T, A = z.shape
    pathset = enumerate_paths(ell, T, ann, cap)
    scored, logs = score_paths(pathset, z, sim)
    weights = np.exp(logs - scored.total_log_prob)
    post = np.zeros((T, A))
    for w, p in zip(weights, pathset.paths):
        post[np.arange(T), p] += w
    return post


def ctc_brute_likelihood(z, ell, ann=None, cap=DEFAULT_CAP):
    """Plain blank-free CTC: sum over consistent paths of prod_t z_t[pi_t]."""
    z = np.asarray(z, dtype=np.float64)
    T = z.shape[0]
    pathset = enumerate_paths(ell, T, ann, cap)
    logs = np.log(z[np.arange(T)[None, :], pathset.paths]).sum(axis=1)
    return float(logsumexp(logs)) if logs.size else -math.inf


def fd_gradient(loss_fn, y, h=1e-5):
    """Central finite differences of a scalar ``loss_fn`` at ``y``."""
    if h <= 0:
        raise InvalidInputError("finite-difference step must be positive")
    y = np.array(y, dtype=np.float64)
    grad = np.zeros_like(y)
    flat = y.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = loss_fn(y)
        flat[i] = keep - h
        down = loss_fn(y)
        flat[i] = keep
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite loss probing coordinate {np.unravel_index(i, y.shape)}")
        g[i] = (up - down) / (2 * h)
    return grad
