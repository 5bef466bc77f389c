"""POMDP model, beliefs and the probability shorthands used by every bound."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

SUM_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


class UnreachableObservation(ValueError):
    """Raised when a belief update is requested for a zero-probability observation."""


@dataclass(frozen=True, eq=False)
class Belief:
    """Sparse distribution over states. Only strictly positive entries are kept.

    ``states`` is sorted ascending, which makes the representation canonical.
    """

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if states.shape != probs.shape or states.ndim != 1:
            raise ValueError("states and probs must be 1-d arrays of equal length")
        if np.any(probs <= 0):
            raise ValueError("belief entries must be strictly positive")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"belief sums to {probs.sum()!r}, expected 1")
        order = np.argsort(states, kind="stable")
        object.__setattr__(self, "states", states[order])
        object.__setattr__(self, "probs", probs[order])

    @classmethod
    def from_dense(cls, vector, renormalize: bool = False) -> "Belief":
        vector = np.asarray(vector, dtype=float)
        states = np.flatnonzero(vector > 0)
        probs = vector[states]
        if renormalize:
            probs = probs / probs.sum()
        return cls(states, probs)

    @classmethod
    def unit(cls, state: int) -> "Belief":
        return cls(np.array([state]), np.array([1.0]))

    @classmethod
    def uniform(cls, states: Sequence[int]) -> "Belief":
        states = np.asarray(states, dtype=np.int64)
        return cls(states, np.full(len(states), 1.0 / len(states)))

    def to_dense(self, num_states: int) -> np.ndarray:
        out = np.zeros(num_states)
        out[self.states] = self.probs
        return out

    def __getitem__(self, state: int) -> float:
        pos = np.searchsorted(self.states, state)
        if pos < len(self.states) and self.states[pos] == state:
            return float(self.probs[pos])
        return 0.0

    def __len__(self) -> int:
        return len(self.states)

    def is_close(self, other: "Belief", tol: float = SUM_TOL) -> bool:
        if len(self) != len(other) or not np.array_equal(self.states, other.states):
            return False
        return float(np.max(np.abs(self.probs - other.probs))) < tol

    def __repr__(self) -> str:
        body = ", ".join(f"{s}: {p:.6g}" for s, p in zip(self.states, self.probs))
        return f"Belief({{{body}}})"


def _as_csr_list(mats, shape) -> list:
    out = []
    for m in mats:
        m = sp.csr_matrix(m, dtype=float)
        if m.shape != shape:
            raise ModelError(f"kernel block has shape {m.shape}, expected {shape}")
        m.eliminate_zeros()
        m.sort_indices()
        out.append(m)
    return out


@dataclass(eq=False)
class PomdpModel:
    """Finite discounted POMDP.

    Parameters
    ----------
    transition : sequence of (S, S) matrices, one per action; ``transition[a][s, s']``.
    observation : sequence of (S, O) matrices, one per action; ``observation[a][s', o]``.
    reward : (S, A) array of expected immediate rewards ``R(s, a)``.
    discount : float in (0, 1).
    initial_belief : Belief or dense vector.
    """

    transition: list
    observation: list
    reward: np.ndarray
    discount: float
    initial_belief: Belief
    state_names: Optional[list] = None
    action_names: Optional[list] = None
    observation_names: Optional[list] = None
    name: str = "pomdp"
    _joint_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.reward = np.array(self.reward, dtype=float)
        if self.reward.ndim != 2:
            raise ModelError("reward must be an (S, A) array")
        n_s, n_a = self.reward.shape
        if len(self.transition) != n_a or len(self.observation) != n_a:
            raise ModelError("need one transition and one observation block per action")
        n_o = sp.csr_matrix(self.observation[0]).shape[1]
        self.transition = _as_csr_list(self.transition, (n_s, n_s))
        self.observation = _as_csr_list(self.observation, (n_s, n_o))
        if not 0.0 < self.discount < 1.0:
            raise ModelError(f"discount must lie in (0, 1), got {self.discount}")
        if not np.all(np.isfinite(self.reward)):
            raise ModelError("rewards must be finite")
        for a in range(n_a):
            for kind, block in (("transition", self.transition[a]), ("observation", self.observation[a])):
                if block.nnz and block.data.min() < 0:
                    raise ModelError(f"negative {kind} probability for action {a}")
                rows = np.asarray(block.sum(axis=1)).ravel()
                bad = np.flatnonzero(np.abs(rows - 1.0) > SUM_TOL)
                if len(bad):
                    raise ModelError(
                        f"{kind} row {bad[0]} for action {a} sums to {rows[bad[0]]:.12g}"
                    )
        if not isinstance(self.initial_belief, Belief):
            self.initial_belief = Belief.from_dense(self.initial_belief)
        if len(self.initial_belief) and self.initial_belief.states[-1] >= n_s:
            raise ModelError("initial belief refers to an unknown state")

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def num_observations(self) -> int:
        return self.observation[0].shape[1]

    def joint(self, a: int, o: int) -> sp.csr_matrix:
        """Sparse (S, S') matrix of ``Pr(s', o | s, a)``."""
        key = (a, o)
        mat = self._joint_cache.get(key)
        if mat is None:
            z = self.observation[a][:, o].toarray().ravel()
            mat = sp.csr_matrix(self.transition[a] @ sp.diags(z))
            mat.eliminate_zeros()
            self._joint_cache[key] = mat
        return mat

    def successor_masses(self, b: np.ndarray, a: int) -> np.ndarray:
        """Dense (S', O) array of ``Pr(s', o | b, a)`` for a dense belief ``b``."""
        cache = self._joint_cache.get("dense")
        if cache is None:
            cache = ([t.T.tocsr() for t in self.transition], [z.toarray() for z in self.observation])
            self._joint_cache["dense"] = cache
        TT, Z = cache
        return (TT[a] @ b)[:, None] * Z[a]

    def obs_given_state(self) -> np.ndarray:
        """Dense (S, A, O) array of ``Pr(o | s, a)``."""
        key = "pos"
        arr = self._joint_cache.get(key)
        if arr is None:
            arr = np.stack(
                [np.asarray((self.transition[a] @ self.observation[a]).todense())
                 for a in range(self.num_actions)],
                axis=1,
            )
            self._joint_cache[key] = arr
        return arr

    def _check_indices(self, **kwargs):
        limits = {"s": self.num_states, "s2": self.num_states,
                  "a": self.num_actions, "o": self.num_observations}
        for name, value in kwargs.items():
            if not 0 <= value < limits[name]:
                raise IndexError(f"{name}={value} out of range [0, {limits[name]})")


def check_belief(b, num_states: int) -> np.ndarray:
    """Return ``b`` as a dense, validated probability vector."""
    if isinstance(b, Belief):
        if len(b) and b.states[-1] >= num_states:
            raise ValueError("belief refers to an unknown state")
        return b.to_dense(num_states)
    vec = np.asarray(b, dtype=float)
    if vec.shape != (num_states,):
        raise ValueError(f"belief has shape {vec.shape}, expected ({num_states},)")
    if np.any(vec < 0) or abs(vec.sum() - 1.0) > SUM_TOL:
        raise ValueError("belief must be a nonnegative vector summing to 1")
    return vec


def joint_probability(model: PomdpModel, s: int, a: int, s2: int, o: int) -> float:
    """``Pr(s', o | s, a) = O(o | a, s') T(s' | s, a)``."""
    model._check_indices(s=s, a=a, s2=s2, o=o)
    return float(model.observation[a][s2, o] * model.transition[a][s, s2])


def joint_posterior(model: PomdpModel, b, a: int, o: int) -> np.ndarray:
    """Unnormalized posterior ``Pr(s', o | b, a)`` as a dense vector."""
    vec = check_belief(b, model.num_states)
    return model.joint(a, o).T @ vec


def observation_probability(model: PomdpModel, b, a: int, o: int) -> float:
    model._check_indices(a=a, o=o)
    return float(joint_posterior(model, b, a, o).sum())


def belief_update(model: PomdpModel, b, a: int, o: int) -> Belief:
    """Bayes posterior after taking ``a`` in ``b`` and observing ``o``."""
    model._check_indices(a=a, o=o)
    post = joint_posterior(model, b, a, o)
    total = post.sum()
    if total <= 0:
        raise UnreachableObservation(f"observation {o} has zero probability after action {a}")
    return Belief.from_dense(post / total, renormalize=True)


def expected_reward(model: PomdpModel, b, a: int) -> float:
    model._check_indices(a=a)
    return float(check_belief(b, model.num_states) @ model.reward[:, a])


def belief_entropy(b) -> float:
    """Shannon entropy in nats; zero exactly for unit beliefs."""
    p = b.probs if isinstance(b, Belief) else np.asarray(b, dtype=float)
    p = p[p > 0]
    if len(p) <= 1:
        return 0.0
    return float(-np.sum(p * np.log(p)))
