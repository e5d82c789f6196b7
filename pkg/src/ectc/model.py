"""One-layer bidirectional LSTM with a softmax head, trained with ECTC.

Parameters are a flat ``dict`` of named float64 arrays:

``fw_Wx`` (d, 4H), ``fw_Wh`` (H, 4H), ``fw_b`` (4H,) and the same for the
``bw_`` direction, then ``out_W`` (2H, A) and ``out_b`` (A,).  Gate blocks
are ordered input, forget, output, candidate.
"""
import logging
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from numba import njit

from . import lattice
from .errors import InfeasibleError, InfeasibleSupervisionError, InvalidInputError, NumericError
from .similarity import DEFAULT_M, SIMILARITY_MODES, build_track

log = logging.getLogger(__name__)

MODES = ("weak", "semi", "uniform", "full")
PARAM_NAMES = ("fw_Wx", "fw_Wh", "fw_b", "bw_Wx", "bw_Wh", "bw_b", "out_W", "out_b")


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    lr: float = 1e-2
    weight_decay: float = 1e-5
    clip: float = 5.0
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    epochs: int = 30
    seed: int = 0
    mode: str = "weak"
    similarity: str = "both"
    theta: float = lattice.DEFAULT_THETA
    cluster_size: int = DEFAULT_M
    decomposition: str = "chain"
    gradient: str = "exact"

    def __post_init__(self):
        if self.clip <= 0 or self.lr <= 0 or self.hidden < 1 or self.epochs < 0:
            raise InvalidInputError("clip, lr and hidden must be positive; epochs non-negative")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.similarity not in SIMILARITY_MODES:
            raise InvalidInputError(f"similarity must be one of {SIMILARITY_MODES}, got {self.similarity!r}")
        if not 0.0 < self.theta <= 1.0:
            raise InvalidInputError("theta must lie in (0, 1]")
        if self.decomposition not in ("chain", "reverse"):
            raise InvalidInputError(f"unknown decomposition {self.decomposition!r}")
        if self.gradient not in ("target", "exact"):
            raise InvalidInputError(f"unknown gradient {self.gradient!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_params(d, H, A, seed=0):
    rng = np.random.default_rng(seed)
    params = {}
    for side in ("fw", "bw"):
        params[f"{side}_Wx"] = rng.uniform(-0.08, 0.08, size=(d, 4 * H))
        params[f"{side}_Wh"] = rng.uniform(-0.08, 0.08, size=(H, 4 * H))
        b = rng.uniform(-0.08, 0.08, size=4 * H)
        b[H:2 * H] = 1.0
        params[f"{side}_b"] = b
    params["out_W"] = rng.uniform(-0.08, 0.08, size=(2 * H, A))
    params["out_b"] = np.zeros(A)
    return params


def zero_params(d, H, A):
    return {name: np.zeros_like(arr) for name, arr in init_params(d, H, A).items()}


def param_dims(params):
    d = params["fw_Wx"].shape[0]
    H = params["fw_Wh"].shape[0]
    A = params["out_b"].shape[0]
    return d, H, A


def check_param_shapes(params):
    d, H, A = param_dims(params)
    want = {
        "fw_Wx": (d, 4 * H), "fw_Wh": (H, 4 * H), "fw_b": (4 * H,),
        "bw_Wx": (d, 4 * H), "bw_Wh": (H, 4 * H), "bw_b": (4 * H,),
        "out_W": (2 * H, A), "out_b": (A,),
    }
    for name, shape in want.items():
        if params[name].shape != shape:
            raise InvalidInputError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


@njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True)
def _scan(P, Wh):
    """LSTM recurrence over precomputed input projections ``P`` (T, 4H)."""
    T = P.shape[0]
    H = Wh.shape[0]
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    acts = np.empty((T, 4 * H))
    for t in range(T):
        g = P[t] + np.dot(hs[t], Wh)
        i = _sigmoid(g[:H])
        f = _sigmoid(g[H:2 * H])
        o = _sigmoid(g[2 * H:3 * H])
        c = np.tanh(g[3 * H:])
        cs[t + 1] = f * cs[t] + i * c
        hs[t + 1] = o * np.tanh(cs[t + 1])
        acts[t, :H] = i
        acts[t, H:2 * H] = f
        acts[t, 2 * H:3 * H] = o
        acts[t, 3 * H:] = c
    return hs, cs, acts


@njit(cache=True)
def _scan_grad(dh_out, hs, cs, acts, Wh):
    """Backpropagate through :func:`_scan`; returns dP (T, 4H)."""
    T = dh_out.shape[0]
    H = Wh.shape[0]
    dP = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = acts[t, :H]
        f = acts[t, H:2 * H]
        o = acts[t, 2 * H:3 * H]
        c = acts[t, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dP[t, :H] = dc * c * i * (1.0 - i)
        dP[t, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dP[t, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dP[t, 3 * H:] = dc * i * (1.0 - c * c)
        dc_next = dc * f
        dh_next = np.dot(Wh, dP[t])
    return dP


def net_forward(params, features):
    """Return ``(y, z, cache)``: logits, softmax posteriors, backprop cache."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    d, H, A = param_dims(params)
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidInputError(f"features have shape {X.shape}, model expects (T, {d})")
    Xr = np.ascontiguousarray(X[::-1])
    hs_f, cs_f, acts_f = _scan(X @ params["fw_Wx"] + params["fw_b"], params["fw_Wh"])
    hs_b, cs_b, acts_b = _scan(Xr @ params["bw_Wx"] + params["bw_b"], params["bw_Wh"])
    Hcat = np.concatenate([hs_f[1:], hs_b[1:][::-1]], axis=1)
    y = Hcat @ params["out_W"] + params["out_b"]
    if not np.all(np.isfinite(y)):
        bad = int(np.argwhere(~np.isfinite(y))[0, 0])
        raise NumericError(f"non-finite activation at frame {bad}")
    z = lattice.softmax(y)
    cache = (X, Xr, Hcat, (hs_f, cs_f, acts_f), (hs_b, cs_b, acts_b))
    return y, z, cache


def net_backward(params, cache, dy):
    """Gradients of all parameters given dLoss/dy (T, A)."""
    X, Xr, Hcat, fw, bw = cache
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != (X.shape[0], params["out_b"].shape[0]):
        raise InvalidInputError(f"upstream gradient has shape {dy.shape}")
    H = params["fw_Wh"].shape[0]
    grads = {"out_W": Hcat.T @ dy, "out_b": dy.sum(axis=0)}
    dH = dy @ params["out_W"].T
    dh_f = np.ascontiguousarray(dH[:, :H])
    dh_b = np.ascontiguousarray(dH[::-1, H:])
    for side, inputs, dh, (hs, cs, acts) in (("fw", X, dh_f, fw), ("bw", Xr, dh_b, bw)):
        dP = _scan_grad(dh, hs, cs, acts, params[f"{side}_Wh"])
        grads[f"{side}_Wx"] = inputs.T @ dP
        grads[f"{side}_Wh"] = hs[:-1].T @ dP
        grads[f"{side}_b"] = dP.sum(axis=0)
    return grads


def predict_frames(params, features):
    """Per-frame argmax labels (ties resolve to the lowest action index)."""
    _, z, _ = net_forward(params, features)
    return np.argmax(z, axis=1)


def _match_anchors(ell, T, anchors):
    """Position in ``ell`` of every anchor, the earliest feasible assignment."""
    S = len(ell)
    M = len(anchors)

    @lru_cache(maxsize=None)
    def place(m, s_prev, t_prev):
        if m == M:
            return () if (S - 1 - s_prev) <= (T - 1 - t_prev) else None
        t, a = anchors[m]
        for s in range(max(s_prev, 0), S):
            if s - max(s_prev, 0) > t - max(t_prev, 0):
                break
            if ell[s] != a:
                continue
            rest = place(m + 1, s, t)
            if rest is not None:
                return (s,) + rest
        return None

    out = place(0, -1, -1)
    if out is None:
        raise InfeasibleSupervisionError("anchors are inconsistent with the ordering")
    return out


def _spread(ell, first, last, n):
    k = last - first + 1
    return [ell[first + ((i + 1) * k + n - 1) // n - 1] for i in range(n)]


def uniform_target(ell, T, ann=None):
    """Evenly distribute the ordered actions over the frames.

    Segment ``s`` (1-based) covers frames ``floor((s-1)T/S)+1 .. floor(sT/S)``.
    With anchors, the actions between two consecutive anchored frames are
    spread evenly over the frames between them.
    """
    ell = [int(k) for k in ell]
    S = len(ell)
    if S == 0:
        raise InvalidInputError("empty ordering")
    if S > T:
        raise InfeasibleError(f"ordering of length {S} cannot fit in {T} frames")
    anchors = [(int(f), int(a)) for f, a in (ann or [])]
    if not anchors:
        return np.array(_spread(ell, 0, S - 1, T), dtype=np.int64)
    slots = _match_anchors(ell, T, tuple(anchors))
    path = np.empty(T, dtype=np.int64)
    frames = [t for t, _ in anchors]
    knots = [(0, 0)] + list(zip(frames, slots)) + [(T - 1, S - 1)]
    for (t0, s0), (t1, s1) in zip(knots[:-1], knots[1:]):
        path[t0:t1 + 1] = _spread(ell, s0, s1, t1 - t0 + 1)
    for t, s in zip(frames, slots):
        path[t] = ell[s]
    return path


def cross_entropy_loss_grad(z, target):
    """Summed per-frame cross-entropy of a target path and its logit gradient."""
    T = z.shape[0]
    idx = np.arange(T)
    loss = -float(np.log(z[idx, target]).sum())
    grad = z.copy()
    grad[idx, target] -= 1.0
    return loss, grad


class RMSProp:
    """RMSProp with elementwise clipping and L2 weight decay folded into the gradient."""

    def __init__(self, params, lr=1e-2, decay=0.9, eps=1e-8, clip=5.0, weight_decay=0.0):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.clip = clip
        self.weight_decay = weight_decay
        self.ms = {name: np.zeros_like(p) for name, p in params.items()}

    def clipped(self, params, grads):
        return {
            name: np.clip(g + self.weight_decay * params[name], -self.clip, self.clip)
            for name, g in grads.items()
        }

    def step(self, params, grads):
        for name, g in self.clipped(params, grads).items():
            ms = self.ms[name]
            ms *= self.decay
            ms += (1.0 - self.decay) * g * g
            params[name] -= self.lr * g / (np.sqrt(ms) + self.eps)
        return params


def make_optimizer(params, config):
    return RMSProp(params, config.lr, config.rms_decay, config.rms_eps, config.clip, config.weight_decay)


@dataclass
class Supervision:
    """What a record contributes to the loss under one training mode."""

    kind: str  # "ectc" or "ce"
    ell: np.ndarray = None
    sim: lattice.SimilarityTrack = None
    ann: tuple = None
    target: np.ndarray = None


def prepare_supervision(record, vocab, config):
    """Encode one record's labels for ``config.mode``; raises with the record id."""
    T = record.T
    try:
        if config.mode == "full":
            if record.frame_labels is None:
                raise InfeasibleSupervisionError("full supervision needs frame labels")
            return Supervision("ce", target=vocab.encode(record.frame_labels))
        if record.ordering is None:
            raise InfeasibleSupervisionError(f"mode {config.mode} needs an ordering")
        ell = vocab.encode(record.ordering)
        ann = None
        if record.annotations:
            ann = tuple((f, vocab.index(a)) for f, a in record.annotations)
        if config.mode == "uniform":
            return Supervision("ce", target=uniform_target(ell, T, ann))
        if config.mode == "semi" and not ann:
            raise InfeasibleSupervisionError("semi supervision needs frame annotations")
        if config.mode == "weak":
            ann = None
        if ann is not None:
            ann = lattice.validate_annotations(ann, ell, T)
        if len(ell) > T:
            raise InfeasibleError(f"ordering of length {len(ell)} exceeds {T} frames")
        sim = build_track(record.features, config.similarity, config.theta, config.cluster_size)
        return Supervision("ectc", ell=ell, sim=sim, ann=ann)
    except InfeasibleSupervisionError as exc:
        raise InfeasibleSupervisionError(str(exc), record_id=record.id) from None
    except InfeasibleError as exc:
        raise InfeasibleSupervisionError(str(exc), record_id=record.id) from None


def supervised_loss_grad(z, sup, config):
    if sup.kind == "ce":
        return cross_entropy_loss_grad(z, sup.target)
    return lattice.ectc_loss_grad(
        z, sup.ell, sup.sim, sup.ann, decomposition=config.decomposition, gradient=config.gradient
    )


def train_step(params, optimizer, record, config, vocab=None, sup=None):
    """One SGD step on one record; returns ``(loss, z)`` and updates ``params`` in place."""
    if sup is None:
        sup = prepare_supervision(record, vocab, config)
    _, z, cache = net_forward(params, record.features)
    try:
        loss, dy = supervised_loss_grad(z, sup, config)
    except InfeasibleSupervisionError as exc:
        msg = str(exc)
        if config.similarity in ("kmeans", "both") and "similarity" in msg:
            msg += f"; clusters of mean length {config.cluster_size} may be too coarse for this record"
        raise InfeasibleSupervisionError(msg, record_id=record.id) from None
    except NumericError as exc:
        raise NumericError(f"record {record.id!r}: {exc}") from None
    grads = net_backward(params, cache, dy)
    optimizer.step(params, grads)
    return loss, z


def train(corpus, config, vocab, params=None, on_epoch=None):
    """SGD with batch size 1 over shuffled records.

    Returns ``(params, history)`` where ``history`` holds one dict per epoch
    with the mean loss and (when labels exist) the training frame accuracy
    measured on the forward pass of each step.
    """
    if not corpus:
        raise InvalidInputError("empty training corpus")
    d = corpus[0].features.shape[1]
    if params is None:
        params = init_params(d, config.hidden, vocab.A, config.seed)
    sups = [prepare_supervision(rec, vocab, config) for rec in corpus]
    optimizer = make_optimizer(params, config)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(corpus))
        losses = []
        hits = frames = 0
        for i in order:
            rec = corpus[i]
            loss, z = train_step(params, optimizer, rec, config, sup=sups[i])
            losses.append(loss)
            if rec.frame_labels is not None:
                hits += int(np.sum(np.argmax(z, axis=1) == vocab.encode(rec.frame_labels)))
                frames += rec.T
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if frames:
            entry["frame_acc"] = hits / frames
        history.append(entry)
        log.info(" ".join(f"{k}={v}" for k, v in entry.items()))
        if on_epoch is not None:
            on_epoch(entry)
    return params, history


def with_overrides(config, **kw):
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
