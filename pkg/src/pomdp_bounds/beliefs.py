"""Deduplicated belief collections: unit beliefs, one-step beliefs and counts of two-step beliefs."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .core import Belief, PomdpModel

DEDUP_TOL = 1e-9


class BeliefSet:
    """Indexed list of unique beliefs.

    Two beliefs are merged when they share a support and their probabilities
    differ by less than ``tol`` in sup-norm. Every insertion is recorded as an
    origin tag, e.g. ``("unit", s)`` or ``("one_step", s, a, o)``, and many tags
    may resolve to one index.
    """

    def __init__(self, num_states: int, tol: float = DEDUP_TOL):
        self.num_states = num_states
        self.tol = tol
        self.beliefs: list[Belief] = []
        self.origins: dict[tuple, int] = {}
        self._by_support: dict[tuple, list[int]] = defaultdict(list)
        self._matrix: Optional[sp.csr_matrix] = None
        # one-step successor table, filled by enumerate_one_step_beliefs
        self.successor_index: Optional[np.ndarray] = None
        self.successor_prob: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.beliefs)

    def __getitem__(self, i: int) -> Belief:
        return self.beliefs[i]

    def __iter__(self):
        return iter(self.beliefs)

    def find(self, b: Belief) -> Optional[int]:
        for i in self._by_support.get(tuple(b.states.tolist()), ()):
            if np.max(np.abs(self.beliefs[i].probs - b.probs)) < self.tol:
                return i
        return None

    def add(self, b: Belief, origin: Optional[tuple] = None) -> int:
        idx = self.find(b)
        if idx is None:
            idx = len(self.beliefs)
            self.beliefs.append(b)
            self._by_support[tuple(b.states.tolist())].append(idx)
            self._matrix = None
        if origin is not None:
            self.origins.setdefault(origin, idx)
        return idx

    def index_of(self, origin: tuple) -> int:
        return self.origins[origin]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Sparse (n, S) matrix whose rows are the stored beliefs."""
        if self._matrix is None:
            rows = np.concatenate([np.full(len(b), i) for i, b in enumerate(self.beliefs)])
            cols = np.concatenate([b.states for b in self.beliefs])
            vals = np.concatenate([b.probs for b in self.beliefs])
            self._matrix = sp.csr_matrix((vals, (rows, cols)), shape=(len(self), self.num_states))
        return self._matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def unit_indices(self) -> np.ndarray:
        """Index of the unit belief for every state (``-1`` when absent)."""
        out = np.full(self.num_states, -1, dtype=np.int64)
        for s in range(self.num_states):
            idx = self.origins.get(("unit", s))
            if idx is None:
                idx = self.find(Belief.unit(s))
            if idx is not None:
                out[s] = idx
        return out

    def keys(self) -> list:
        return [(tuple(b.states.tolist()), tuple(np.round(b.probs, 12).tolist())) for b in self.beliefs]

    def canonical_weights(self, b_dense: np.ndarray, a: int, o: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Canonical decomposition of the posterior of ``b`` over stored one-step beliefs.

        Returns ``(indices, weights, Pr(o | b, a))``; the weights of merged
        duplicates are accumulated on their shared index. Weights are empty when
        the observation is unreachable.
        """
        if self.successor_index is None:
            raise RuntimeError("belief set has no successor table")
        mass = b_dense * self.successor_prob[:, a, o]
        states = np.flatnonzero(mass > 0)
        total = float(mass[states].sum())
        if total <= 0:
            return np.empty(0, dtype=np.int64), np.empty(0), 0.0
        idx = self.successor_index[states, a, o]
        uniq, inv = np.unique(idx, return_inverse=True)
        weights = np.bincount(inv, weights=mass[states]) / total
        return uniq, weights, total


def one_step_belief(model: PomdpModel, s: int, a: int, o: int) -> Optional[Belief]:
    row = model.transition[a].getrow(s)
    z = model.observation[a][:, o].toarray().ravel()
    post = row.toarray().ravel() * z
    total = post.sum()
    if total <= 0:
        return None
    return Belief.from_dense(post / total, renormalize=True)


def enumerate_one_step_beliefs(model: PomdpModel, include_units: bool = True) -> BeliefSet:
    """Build the point set of ``b0``, the unit beliefs and every reachable ``b_{s,a,o}``.

    The resulting set carries the successor table ``successor_index[s, a, o]``
    (``-1`` when ``Pr(o | s, a) = 0``) and ``successor_prob[s, a, o]``.
    """
    n_s, n_a, n_o = model.num_states, model.num_actions, model.num_observations
    bs = BeliefSet(n_s)
    bs.add(model.initial_belief, ("initial",))
    if include_units:
        for s in range(n_s):
            bs.add(Belief.unit(s), ("unit", s))
    succ_index = np.full((n_s, n_a, n_o), -1, dtype=np.int64)
    succ_prob = np.zeros((n_s, n_a, n_o))
    for a in range(n_a):
        T = model.transition[a]
        Z = model.observation[a].tocsc()
        for s in range(n_s):
            lo, hi = T.indptr[s], T.indptr[s + 1]
            nxt, tp = T.indices[lo:hi], T.data[lo:hi]
            zsub = Z[nxt].toarray()  # (len(nxt), O)
            joint = tp[:, None] * zsub
            totals = joint.sum(axis=0)
            for o in np.flatnonzero(totals > 0):
                col = joint[:, o]
                keep = col > 0
                probs = col[keep] / totals[o]
                probs = probs / probs.sum()
                b = Belief(nxt[keep], probs)
                succ_index[s, a, o] = bs.add(b, ("one_step", s, a, int(o)))
                succ_prob[s, a, o] = totals[o]
    bs.successor_index = succ_index
    bs.successor_prob = succ_prob
    return bs


def reachable_posteriors(model: PomdpModel, beliefs: Iterable[Belief]) -> list[Belief]:
    """All posteriors ``b_{b,a,o}`` with nonzero probability from the given beliefs."""
    out = []
    n_s = model.num_states
    for b in beliefs:
        vec = b.to_dense(n_s)
        for a in range(model.num_actions):
            tb = model.transition[a].T @ vec
            zz = model.observation[a].multiply(tb[:, None]).tocsc()
            totals = np.asarray(zz.sum(axis=0)).ravel()
            for o in np.flatnonzero(totals > 0):
                col = zz[:, o].toarray().ravel()
                out.append(Belief.from_dense(col / totals[o], renormalize=True))
    return out


def count_two_step_beliefs(model: PomdpModel, point_set: Optional[BeliefSet] = None) -> int:
    """Size of the one-step point set extended with every posterior of its members.

    Counting only; no bound uses these beliefs.
    """
    if point_set is None:
        point_set = enumerate_one_step_beliefs(model)
    ext = BeliefSet(model.num_states)
    for b in point_set:
        ext.add(b)
    for b in reachable_posteriors(model, list(point_set)):
        ext.add(b)
    return len(ext)
