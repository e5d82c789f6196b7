"""Randomized self-checks of the lattice against the brute-force oracle.

Hard checks gate the result; deviation probes only measure how far the
reverse backward decomposition and the ``z - gamma`` gradient drift from the
exact quantities once similarities exceed ``theta``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice, oracle
from .errors import InfeasibleSupervisionError

DEFAULT_SIZES = ((2, 5), (3, 6), (4, 6))
FD_MAX_T = 8


@dataclass
class CheckResult:
    name: str
    tol: float
    worst: float = 0.0
    runs: int = 0
    hard: bool = True

    @property
    def passed(self):
        return (not self.hard) or self.worst <= self.tol

    def update(self, err):
        self.runs += 1
        if not err <= self.worst:  # also catches nan
            self.worst = err


@dataclass
class CheckReport:
    results: dict = field(default_factory=dict)

    def get(self, name, tol, hard=True):
        if name not in self.results:
            self.results[name] = CheckResult(name, tol, hard=hard)
        return self.results[name]

    @property
    def passed(self):
        return all(r.passed for r in self.results.values())

    def table(self):
        rows = [f"{'check':<24} {'runs':>5} {'worst':>10} {'tol':>8}  status"]
        for r in self.results.values():
            status = ("PASS" if r.passed else "FAIL") if r.hard else "report"
            rows.append(f"{r.name:<24} {r.runs:>5} {r.worst:>10.3e} {r.tol:>8.0e}  {status}")
        return "\n".join(rows)


def parse_sizes(text):
    """``"3x6,4x8"`` -> ``((3, 6), (4, 8))``."""
    sizes = []
    for chunk in text.split(","):
        a, _, t = chunk.strip().lower().partition("x")
        A, T = int(a), int(t)
        if A < 1 or T < 1:
            raise ValueError(f"bad size {chunk!r}")
        sizes.append((A, T))
    return tuple(sizes)


def random_instance(rng, A, T, infinite_rate=0.2, anchor_rate=0.5):
    """Random ``(y, ell, sim, ann)`` with a feasible ordering."""
    y = rng.normal(scale=1.5, size=(T, A))
    S = int(rng.integers(1, min(4, T) + 1)) if A > 1 else 1
    ell = [int(rng.integers(A))]
    for _ in range(S - 1):
        k = int(rng.integers(A - 1))
        ell.append(k + (k >= ell[-1]))
    theta = float(rng.uniform(0.2, 0.8))
    sims = rng.uniform(0.0, 1.0, size=T - 1)
    sims[rng.random(T - 1) < infinite_rate] = lattice.INFINITE
    sim = lattice.SimilarityTrack(sims, theta)
    ann = None
    if rng.random() < anchor_rate:
        paths = oracle.enumerate_paths(ell, T).paths
        path = paths[rng.integers(len(paths))]
        frames = sorted(rng.choice(T, size=min(T, int(rng.integers(1, 3))), replace=False).tolist())
        ann = [(f, int(path[f])) for f in frames]
    return y, np.array(ell), sim, ann


def _rel(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(b), 1e-300)


def _probe(report, rng, A, T, inject=None):
    y, ell, sim, ann = random_instance(rng, A, T)
    z = lattice.softmax(y)

    if A**T <= oracle.FULL_SCAN_CAP:
        paths = oracle.all_paths(A, T)
        total = sum(math.exp(oracle.path_log_prob(p, z, sim)) for p in paths)
        report.get("normalization", 1e-9).update(abs(total - 1.0))

    brute = oracle.brute_likelihood(z, ell, sim, ann)
    if not np.isfinite(brute):
        try:
            lattice.forward(z, ell, sim, ann)
            report.get("infeasible-detected", 0.0).update(1.0)
        except InfeasibleSupervisionError:
            report.get("infeasible-detected", 0.0).update(0.0)
        return
    fwd = lattice.forward(z, ell, sim, ann).log_likelihood
    report.get("oracle-likelihood", 1e-8).update(_rel(math.exp(fwd), math.exp(brute)))

    lat = lattice.lattice(z, ell, sim, ann, decomposition="chain")
    gamma = lattice.posterior_target(lat, z, ell)
    report.get("oracle-posterior", 1e-8).update(np.abs(gamma - oracle.brute_posterior(z, ell, sim, ann)).max())
    ident = lattice.frame_log_likelihoods(lat, z, ell)
    report.get("identity-chain", 1e-8).update(np.abs(np.expm1(ident - lat.log_likelihood)).max())

    flat = lattice.SimilarityTrack.constant(T, sim.theta * rng.random(), sim.theta)
    ctc = lattice.forward(z, ell, flat, ann).log_likelihood
    report.get("ctc-reduction", 1e-10).update(_rel(math.exp(ctc), math.exp(oracle.ctc_brute_likelihood(z, ell, ann))))
    rev = lattice.lattice(z, ell, flat, ann, decomposition="reverse")
    ident = lattice.frame_log_likelihoods(rev, z, ell)
    report.get("identity-ctc-limit", 1e-8).update(np.abs(np.expm1(ident - rev.log_likelihood)).max())

    rev = lattice.lattice(z, ell, sim, ann, decomposition="reverse")
    ident = lattice.frame_log_likelihoods(rev, z, ell)
    report.get("identity-reverse-dev", math.inf, hard=False).update(np.abs(np.expm1(ident - rev.log_likelihood)).max())

    if T <= FD_MAX_T:
        sign = -1.0 if inject == "wrong-sign" else 1.0
        for name, track, grad_kind in (("fd-exact", sim, "exact"), ("fd-ctc-limit", flat, "target")):
            _, g = lattice.ectc_loss_grad(z, ell, track, ann, gradient=grad_kind)
            fd = oracle.fd_gradient(lambda v: lattice.ectc_loss(lattice.softmax(v), ell, track, ann), y)
            report.get(name, 1e-5).update(np.abs(sign * g - fd).max())
        _, target = lattice.ectc_loss_grad(z, ell, sim, ann, gradient="target")
        _, exact = lattice.ectc_loss_grad(z, ell, sim, ann, gradient="exact")
        report.get("target-grad-dev", math.inf, hard=False).update(np.abs(target - exact).max())


def run_checks(sizes=DEFAULT_SIZES, trials=20, seed=0, inject=None):
    """Run ``trials`` random probes per ``(A, T)`` size; returns a :class:`CheckReport`."""
    report = CheckReport()
    for A, T in sizes:
        for trial in range(trials):
            rng = np.random.default_rng([seed, A, T, trial])
            _probe(report, rng, A, T, inject)
    return report
