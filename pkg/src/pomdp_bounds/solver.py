"""Point-based epsilon-optimal solver with matched lower and upper bounds.

Lower bound: a set of alpha vectors, started from blind (fixed-action)
policies. Upper bound: corner values at unit beliefs plus sawtooth points,
started from any informed bound. Trials descend from ``b0`` along the
upper-bound greedy action and the observation with the largest weighted
excess gap, then back both bounds up on the way out.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bounds import BOUND_KINDS, BoundChain, BoundConfig
from .core import PomdpModel, check_belief
from .pointset import UpperBoundSet

logger = logging.getLogger(__name__)

GAP_FLOOR = 1e-9
PRUNE_EVERY = 10
CHECKPOINT_BASE = 0.1


@dataclass
class AlphaVector:
    values: np.ndarray
    action: int

    def __call__(self, b) -> float:
        return float(np.asarray(b) @ self.values)


@dataclass
class SolverConfig:
    epsilon: float = 1e-3
    timeout: float = 60.0
    N: int = 1000
    init_bound: str = "fib"
    bound_config: BoundConfig = field(default_factory=BoundConfig)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        self.init_bound = self.init_bound.lower()
        if self.init_bound not in BOUND_KINDS:
            raise ValueError(f"unknown init bound {self.init_bound!r}; choose from {BOUND_KINDS}")


def relative_gap(lower: float, upper: float) -> float:
    return (upper - lower) / max(abs(lower), GAP_FLOOR)


@dataclass
class SolveReport:
    lower_value: float
    upper_value: float
    relative_gap: float
    iterations: int
    seconds: float
    converged: bool
    init_seconds: float = 0.0
    init_bound: str = "fib"
    trace: list = field(default_factory=list)  # (seconds, lower, upper)

    def gap_at(self, t: float) -> float:
        """Relative gap of the last checkpoint taken no later than ``t``."""
        best = None
        for when, lo, up in self.trace:
            if when <= t + 1e-12:
                best = relative_gap(lo, up)
        return float("inf") if best is None else best


def blind_policy_alphas(model: PomdpModel) -> list[AlphaVector]:
    """``alpha_a = (I - gamma T_a)^{-1} R(., a)`` for every action."""
    n = model.num_states
    eye = sp.identity(n, format="csc")
    out = []
    for a in range(model.num_actions):
        lhs = (eye - model.discount * model.transition[a]).tocsc()
        out.append(AlphaVector(np.asarray(spla.spsolve(lhs, model.reward[:, a])).ravel(), a))
    return out


class _Kernels:
    """Dense per-action observation matrices and the joint successor masses."""

    def __init__(self, model: PomdpModel):
        self.model = model
        self.T = model.transition
        self.TT = [t.T.tocsr() for t in model.transition]
        self.Z = [z.toarray() for z in model.observation]

    def successors(self, b: np.ndarray, a: int):
        """``P[s', o] = Pr(s', o | b, a)`` and the reachable observations."""
        P = (self.TT[a] @ b)[:, None] * self.Z[a]
        prob = P.sum(axis=0)
        return P, prob, np.flatnonzero(prob > 0)


def backup_alpha(model: PomdpModel, alphas, b, kernels: Optional[_Kernels] = None) -> AlphaVector:
    """Point-based Bellman backup of an alpha-vector set at ``b``."""
    kernels = kernels or _Kernels(model)
    vec = check_belief(b, model.num_states)
    A = np.array([al.values for al in alphas]) if not isinstance(alphas, np.ndarray) else alphas
    best, best_val = None, -np.inf
    for a in range(model.num_actions):
        P, _, _ = kernels.successors(vec, a)
        # any alpha is valid for an unreachable observation; argmax picks the first
        choice = np.argmax(A @ P, axis=0)
        acc = (kernels.Z[a] * A[choice].T).sum(axis=1)
        values = model.reward[:, a] + model.discount * (kernels.T[a] @ acc)
        val = float(vec @ values)
        if val > best_val:
            best, best_val = AlphaVector(values, a), val
    return best


def upper_q(model: PomdpModel, ub: UpperBoundSet, b: np.ndarray, kernels: _Kernels) -> np.ndarray:
    """``R(b,a) + gamma sum_o Pr(o|b,a) U(b_{a,o})`` with sawtooth successors."""
    q = b @ model.reward
    for a in range(model.num_actions):
        P, prob, reach = kernels.successors(b, a)
        if len(reach):
            posts = (P[:, reach] / prob[reach]).T
            q[a] += model.discount * float(prob[reach] @ ub.values(posts))
    return q


def update_upper(ub: UpperBoundSet, model: PomdpModel, b, kernels: Optional[_Kernels] = None) -> float:
    """Back up the upper bound at ``b``, store it and return the stored value."""
    kernels = kernels or _Kernels(model)
    vec = check_belief(b, model.num_states)
    value = float(upper_q(model, ub, vec, kernels).max())
    # never raise the stored bound at b
    return ub.add(vec, min(value, ub.value(vec)))


class _Search:
    def __init__(self, model: PomdpModel, config: SolverConfig, corners: np.ndarray):
        self.model = model
        self.config = config
        self.k = _Kernels(model)
        self.ub = UpperBoundSet(corners)
        blind = blind_policy_alphas(model)
        self.alphas = np.array([al.values for al in blind])
        self.alpha_actions = [al.action for al in blind]
        self.b0 = model.initial_belief.to_dense(model.num_states)
        self.witnesses = [self.b0]
        gamma = model.discount
        r_range = float(model.reward.max() - model.reward.min())
        scale = max(1.0, abs(self.upper(self.b0)))
        if r_range <= 0:
            self.max_depth = 1
        else:
            ratio = config.epsilon * (1 - gamma) * scale / r_range
            self.max_depth = max(1, math.ceil(math.log(ratio) / math.log(gamma))) if ratio < 1 else 1

    def lower(self, b) -> float:
        return float((self.alphas @ b).max())

    def upper(self, b) -> float:
        return self.ub.value(b)

    def backup(self, b: np.ndarray):
        al = backup_alpha(self.model, self.alphas, b, self.k)
        if al.values @ b > self.lower(b) + 1e-12:
            self.alphas = np.vstack([self.alphas, al.values])
            self.alpha_actions.append(al.action)
            self.witnesses.append(b)
        update_upper(self.ub, self.model, b, self.k)

    def prune(self):
        W = np.array(self.witnesses)
        # keep only vectors that are best at some witness belief (b0 always is one)
        keep = np.unique(np.argmax(W @ self.alphas.T, axis=1))
        if len(keep) < len(self.alphas):
            self.alphas = self.alphas[keep]
            self.alpha_actions = [self.alpha_actions[i] for i in keep]
        self.ub.prune()

    def trial(self, target: float):
        """One depth-first descent; ``target`` is the absolute gap allowed at the root."""
        gamma = self.model.discount
        path = []
        b = self.b0
        for depth in range(self.max_depth):
            allowed = target * gamma ** (-depth)
            if self.upper(b) - self.lower(b) <= allowed:
                break
            path.append(b)
            q = upper_q(self.model, self.ub, b, self.k)
            a = int(np.argmax(q))
            P, prob, reach = self.k.successors(b, a)
            if not len(reach):
                break
            posts = (P[:, reach] / prob[reach]).T
            excess = self.ub.values(posts) - (posts @ self.alphas.T).max(axis=1) - allowed / gamma
            score = prob[reach] * excess
            j = int(np.argmax(score))
            if score[j] <= 0:
                break
            b = posts[j]
        for node in reversed(path):
            self.backup(node)
        if not path:
            self.backup(self.b0)


def corner_values(model: PomdpModel, init_bound: str, bound_config: Optional[BoundConfig] = None,
                  chain: Optional[BoundChain] = None):
    """``max_a Q(b_s, a)`` from the chosen informed bound and its total precompute time."""
    chain = chain or BoundChain(model, bound_config)
    table = chain.get(init_bound)
    units = table.point_set.unit_indices()
    return table.values[units].max(axis=1), table.seconds


def solve(model: PomdpModel, config: Optional[SolverConfig] = None, chain: Optional[BoundChain] = None) -> SolveReport:
    """Run the solver until the relative gap at ``b0`` is at most epsilon or the timeout hits.

    Reported times include the precomputation of the initial upper bound.
    """
    return _run(model, config, chain)[0]


def _run(model, config, chain):
    config = config or SolverConfig()
    t0 = time.perf_counter()
    corners, _ = corner_values(model, config.init_bound, config.bound_config, chain)
    init_seconds = time.perf_counter() - t0
    search = _Search(model, config, corners)
    b0 = search.b0
    trace = []
    next_mark = CHECKPOINT_BASE

    def elapsed():
        return time.perf_counter() - t0

    def record(now):
        nonlocal next_mark
        lo, up = search.lower(b0), search.upper(b0)
        while next_mark <= now:
            trace.append((next_mark, lo, up))
            next_mark *= 2

    trace.append((init_seconds, search.lower(b0), search.upper(b0)))
    # no checkpoint exists before the initial bounds do
    while next_mark <= init_seconds:
        next_mark *= 2
    it = 0
    converged = False
    while True:
        lo, up = search.lower(b0), search.upper(b0)
        gap = relative_gap(lo, up)
        if gap <= config.epsilon:
            converged = True
            break
        now = elapsed()
        if now >= config.timeout:
            break
        # planning precision decreases linearly; rounds whose precision the
        # root already meets would only back up b0, so jump past them
        eps_p = max(config.epsilon, 1.0 - it / config.N)
        if eps_p > gap and eps_p > config.epsilon:
            it = max(it, math.ceil((1.0 - gap) * config.N))
            eps_p = max(config.epsilon, 1.0 - it / config.N)
        search.trial(eps_p * max(abs(lo), GAP_FLOOR))
        it += 1
        if it % PRUNE_EVERY == 0:
            search.prune()
        record(elapsed())
    now = elapsed()
    lo, up = search.lower(b0), search.upper(b0)
    record(now)
    trace.append((now, lo, up))
    report = SolveReport(
        lower_value=lo, upper_value=up, relative_gap=relative_gap(lo, up), iterations=it,
        seconds=now, converged=converged, init_seconds=init_seconds, init_bound=config.init_bound,
        trace=trace,
    )
    return report, search
