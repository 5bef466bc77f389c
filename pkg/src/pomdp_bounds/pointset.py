"""Point-set upper bounds: weight functions, canonical and closeness-based weights, sawtooth interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Belief, PomdpModel, UnreachableObservation, check_belief

RECON_TOL = 1e-7


@dataclass
class WeightFunction:
    """Nonnegative weights over point-set indices (sparse)."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.indices.shape != self.weights.shape:
            raise ValueError("indices and weights must align")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def reconstruct(self, point_matrix) -> np.ndarray:
        """``sum_b' w(b') b'`` as a dense vector."""
        rows = point_matrix[self.indices]
        if hasattr(rows, "toarray"):
            rows = rows.toarray()
        return self.weights @ rows

    def is_valid_for(self, point_matrix, target, tol: float = RECON_TOL) -> bool:
        target = target.to_dense(point_matrix.shape[1]) if isinstance(target, Belief) else np.asarray(target)
        recon = self.reconstruct(point_matrix)
        return bool(np.max(np.abs(recon - target)) <= tol and abs(self.total - 1.0) <= tol)

    def as_dict(self) -> dict:
        return {int(i): float(w) for i, w in zip(self.indices, self.weights)}


def pointset_upper(values: np.ndarray, w: WeightFunction, a: int) -> float:
    """Weighted point-set bound ``sum_b' w(b') Q(b', a)``."""
    return float(w.weights @ np.asarray(values)[w.indices, a])


def canonical_tib_weights(model: PomdpModel, point_set, b, a: int, o: int) -> WeightFunction:
    """Weights ``b(s) Pr(o|s,a) / Pr(o|b,a)`` on the one-step beliefs ``b_{s,a,o}``."""
    vec = check_belief(b, model.num_states)
    idx, weights, total = point_set.canonical_weights(vec, a, o)
    if total <= 0:
        raise UnreachableObservation(f"observation {o} has zero probability after action {a}")
    return WeightFunction(idx, weights)


def min_ratios(points: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``min_s b(s) / p(s)`` over each point's support; 0 when ``b`` misses part of it."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(points > 0, b[None, :] / np.where(points > 0, points, 1.0), np.inf)
    out = r.min(axis=1)
    out[~np.isfinite(out)] = 0.0
    return out


def ctib_weights(point_set, b, unit_index=None) -> WeightFunction:
    """Closeness-based weights: the point with the highest minimum ratio plus a unit-belief residual."""
    points = point_set.dense() if hasattr(point_set, "dense") else np.asarray(point_set)
    n_s = points.shape[1]
    vec = check_belief(b, n_s)
    if unit_index is None:
        unit_index = point_set.unit_indices()
    if np.any(unit_index < 0):
        raise ValueError("point set must contain every unit belief")
    ratios = min_ratios(points, vec)
    closest = int(np.argmax(ratios))
    lam = float(min(ratios[closest], 1.0))
    residual = vec - lam * points[closest]
    if np.any(residual < 0):
        residual = np.maximum(residual, 0.0)
        if residual.sum() > 0:
            residual *= (1.0 - lam) / residual.sum()
    weights = {closest: lam} if lam > 0 else {}
    for s in np.flatnonzero(residual > 0):
        j = int(unit_index[s])
        weights[j] = weights.get(j, 0.0) + float(residual[s])
    keys = sorted(weights)
    return WeightFunction(np.array(keys, dtype=np.int64), np.array([weights[k] for k in keys]))


@dataclass
class UpperBoundSet:
    """Corner values at unit beliefs plus interior (belief, value) points for sawtooth interpolation."""

    corner_values: np.ndarray
    point_beliefs: list = field(default_factory=list)
    point_values: list = field(default_factory=list)

    def __post_init__(self):
        self.corner_values = np.array(self.corner_values, dtype=float)
        self._cache = None

    @property
    def num_states(self) -> int:
        return len(self.corner_values)

    def _arrays(self):
        if self._cache is None:
            if self.point_beliefs:
                P = np.array(self.point_beliefs)
                v = np.array(self.point_values)
            else:
                P = np.zeros((0, self.num_states))
                v = np.zeros(0)
            self._cache = (P, v, P @ self.corner_values - v)
        return self._cache

    def find(self, b: np.ndarray, tol: float = 1e-9):
        P, _, _ = self._arrays()
        if len(P) == 0:
            return None
        hit = np.flatnonzero(np.max(np.abs(P - b), axis=1) < tol)
        return int(hit[0]) if len(hit) else None

    def add(self, b, value: float) -> float:
        """Insert ``(b, value)``; keeps the smaller value for a repeated belief and returns the stored one."""
        b = check_belief(b, self.num_states)
        support = np.flatnonzero(b > 0)
        if len(support) == 1:
            s = int(support[0])
            self.corner_values[s] = min(self.corner_values[s], value)
            self._cache = None
            return float(self.corner_values[s])
        i = self.find(b)
        if i is not None:
            self.point_values[i] = min(self.point_values[i], value)
            self._cache = None
            return self.point_values[i]
        self.point_beliefs.append(b.copy())
        self.point_values.append(float(value))
        self._cache = None
        return float(value)

    def prune(self) -> int:
        """Drop points no better than corner interpolation; returns how many were removed."""
        P, v, gain = self._arrays()
        keep = gain > 1e-12
        removed = int((~keep).sum())
        if removed:
            self.point_beliefs = [p for p, k in zip(self.point_beliefs, keep) if k]
            self.point_values = [x for x, k in zip(self.point_values, keep) if k]
            self._cache = None
        return removed

    def value(self, b) -> float:
        return sawtooth_upper(self, b)

    def values(self, B: np.ndarray) -> np.ndarray:
        """Sawtooth values for each row of ``B``."""
        B = np.atleast_2d(B)
        corner = B @ self.corner_values
        P, _, gain = self._arrays()
        if len(P) == 0:
            return corner
        with np.errstate(divide="ignore", invalid="ignore"):
            mask = P > 0
            safe = np.where(mask, P, 1.0)
            r = np.where(mask[None], B[:, None, :] / safe[None], np.inf).min(axis=2)
        r[~np.isfinite(r)] = 0.0
        return np.minimum(corner, corner - (r * gain[None, :]).max(axis=1))


def sawtooth_upper(ub: UpperBoundSet, b) -> float:
    """Sawtooth interpolation between corner values and stored interior points."""
    vec = check_belief(b, ub.num_states)
    corner = float(vec @ ub.corner_values)
    P, _, gain = ub._arrays()
    if len(P) == 0:
        return corner
    r = min_ratios(P, vec)
    return float(min(corner, corner - np.max(r * gain)))
