"""Small dense linear programs: two-phase simplex with Bland's rule, and weight LPs over point sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Belief
from .pointset import WeightFunction

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-10
CLAMP_TOL = 1e-10
REFACTOR_EVERY = 50

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LinearProgram:
    """``min`` (or ``max``) ``c @ x`` subject to ``A @ x = b`` and ``x >= 0``."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.constraint_matrix = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float)
        m, n = self.constraint_matrix.shape
        if self.objective.shape != (n,) or self.rhs.shape != (m,):
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("rhs must be finite")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")

    @property
    def num_variables(self) -> int:
        return self.constraint_matrix.shape[1]


@dataclass
class LpSolution:
    status: str
    values: Optional[np.ndarray] = None
    objective_value: Optional[float] = None


def _pivot(tab: np.ndarray, row: int, col: int):
    pivot_row = tab[row] / tab[row, col]
    tab -= tab[:, col, None] * pivot_row
    tab[row] = pivot_row


def _simplex(tab: np.ndarray, basis: list, allowed: int) -> str:
    """Run Bland-rule pivots on ``tab`` whose last row holds reduced costs.

    Only the first ``allowed`` columns may enter the basis.
    """
    m = len(basis)
    cost = tab[-1, :allowed]
    while True:
        improving = cost < -PIVOT_TOL
        col = int(improving.argmax())
        if not improving[col]:
            return OPTIMAL
        column = tab[:m, col]
        rows = (column > PIVOT_TOL).nonzero()[0]
        if len(rows) == 0:
            return UNBOUNDED
        if len(rows) == 1:
            row = int(rows[0])
        else:
            ratios = tab[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            row = int(ties[0]) if len(ties) == 1 else min(ties.tolist(), key=basis.__getitem__)
        _pivot(tab, row, col)
        basis[row] = col


def _phase_one(A: np.ndarray, b: np.ndarray):
    """Feasible basis for ``A x = b, x >= 0``, or None when infeasible.

    Returns the phase-2-ready tableau (original columns plus rhs and an empty
    cost row), the basis and the indices of the non-redundant rows.
    """
    A = A.copy()
    b = b.copy()
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # artificials occupy columns n..n+m-1
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[np.arange(m), n + np.arange(m)] = 1.0
    tab[:m, -1] = b
    tab[-1, :n] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _simplex(tab, basis, n)
    if -tab[-1, -1] > FEAS_TOL * max(1.0, float(b.sum())):
        return None
    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(tab[r, :n]) > PIVOT_TOL)
            if len(cand):
                _pivot(tab, r, int(cand[0]))
                basis[r] = int(cand[0])
                keep.append(r)
        else:
            keep.append(r)
    out = np.zeros((len(keep) + 1, n + 1))
    out[:-1, :n] = tab[keep, :n]
    out[:-1, n] = tab[keep, -1]
    return out, [basis[r] for r in keep], keep


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` exactly (up to floating point) with the two-phase simplex method.

    Deterministic for a given input ordering; infeasible and unbounded problems
    are reported through ``status``.
    """
    A = lp.constraint_matrix.copy()
    b = lp.rhs.copy()
    c = lp.objective if lp.sense == "min" else -lp.objective
    m, n = A.shape
    if m == 0:
        if np.any(c < -PIVOT_TOL):
            return LpSolution(UNBOUNDED)
        return LpSolution(OPTIMAL, np.zeros(n), 0.0)
    phase1 = _phase_one(A, b)
    if phase1 is None:
        return LpSolution(INFEASIBLE)
    tab, basis, _ = phase1

    # phase 2
    tab[-1, :n] = c
    tab[-1, -1] = 0.0
    for r, j in enumerate(basis):
        if tab[-1, j] != 0.0:
            tab[-1] -= tab[-1, j] * tab[r]
    status = _simplex(tab, basis, n)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED)
    x = np.zeros(n)
    x[basis] = tab[:-1, -1]
    x[(x < 0) & (x >= -CLAMP_TOL)] = 0.0
    x = np.maximum(x, 0.0)
    return LpSolution(OPTIMAL, x, float(lp.objective @ x))


def candidate_points(point_matrix: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Indices of points whose support lies inside the target's support.

    Any point with mass outside the support must receive zero weight, so
    restricting to these candidates leaves the feasible set unchanged.
    """
    outside = target <= 0
    return np.flatnonzero(~np.any(point_matrix[:, outside] > 0, axis=1))


def weight_lp(point_matrix, target, objective, sense: str = "min",
              candidates: Optional[np.ndarray] = None) -> Optional[WeightFunction]:
    """Optimal weight function expressing ``target`` as a convex combination of points.

    Parameters
    ----------
    point_matrix : (n, S) array or BeliefSet-like with a ``dense()`` method.
    target : Belief or dense vector.
    objective : (n,) per-point objective coefficients.
    sense : ``"min"`` or ``"max"``.

    Returns ``None`` when the target lies outside the convex hull.
    """
    if hasattr(point_matrix, "dense"):
        point_matrix = point_matrix.dense()
    point_matrix = np.asarray(point_matrix, dtype=float)
    if isinstance(target, Belief):
        target = target.to_dense(point_matrix.shape[1])
    objective = np.asarray(objective, dtype=float)
    if objective.shape != (point_matrix.shape[0],):
        raise ValueError("objective must have one entry per point")
    if candidates is None:
        candidates = candidate_points(point_matrix, target)
    if len(candidates) == 0:
        return None
    rows = np.flatnonzero(target > 0)
    sub = point_matrix[np.ix_(candidates, rows)]
    if len(candidates) == 1:
        # single candidate: feasible only when it equals the target
        if np.max(np.abs(sub[0] - target[rows])) > FEAS_TOL:
            return None
        return WeightFunction(candidates.copy(), np.ones(1))
    sol = solve(LinearProgram(objective[candidates], sub.T, target[rows], sense))
    if sol.status != OPTIMAL:
        return None
    nz = sol.values > 0
    return WeightFunction(candidates[nz], sol.values[nz])


class WarmStartLP:
    """Repeated minimizations over one fixed feasible region ``A x = b, x >= 0``.

    Phase 1 runs once; every later call rebuilds the tableau from the previous
    optimal basis and runs phase 2 from there, which usually takes zero or a
    few pivots when consecutive objectives are close.
    """

    def __init__(self, constraint_matrix, rhs):
        A = np.atleast_2d(np.asarray(constraint_matrix, dtype=float))
        b = np.asarray(rhs, dtype=float)
        self.A, self.b = A, b
        self._factor = None
        self._uses = 0
        phase1 = _phase_one(A, b)
        self.feasible = phase1 is not None
        self.basis: list = phase1[1] if self.feasible else []
        self.rows: list = phase1[2] if self.feasible else []

    def minimize(self, c) -> Optional[np.ndarray]:
        if not self.feasible:
            return None
        c = np.asarray(c, dtype=float)
        A, b, basis, rows = self.A, self.b, list(self.basis), self.rows
        key = tuple(basis)
        self._uses += 1
        # refactor now and then so reused tableaus do not accumulate rounding
        if self._factor is None or self._factor[0] != key or self._uses % REFACTOR_EVERY == 0:
            # the constraint rows of the tableau depend only on the basis
            Binv = np.linalg.inv(A[np.ix_(rows, basis)])
            body = np.empty((len(rows), A.shape[1] + 1))
            body[:, :-1] = Binv @ A[rows]
            body[:, -1] = Binv @ b[rows]
            self._factor = (key, body)
        body = self._factor[1]
        m = len(rows)
        tab = np.empty((m + 1, A.shape[1] + 1))
        tab[:m] = body
        cb = c[basis]
        tab[-1, :-1] = c - cb @ body[:, :-1]
        tab[-1, -1] = -cb @ body[:, -1]
        if np.any(tab[:m, -1] < -FEAS_TOL):
            # basis lost feasibility numerically; start over
            self.__init__(A, b)
            return self.minimize(c) if self.feasible else None
        status = _simplex(tab, basis, A.shape[1])
        if status != OPTIMAL:
            return None
        self.basis = basis
        # the final tableau is already factored for the new basis
        self._factor = (tuple(basis), tab[:m].copy())
        x = np.zeros(A.shape[1])
        x[basis] = tab[:m, -1]
        return np.maximum(x, 0.0)
