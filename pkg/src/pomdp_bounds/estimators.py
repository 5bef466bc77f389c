"""Estimator-style wrappers: ``fit`` on a model, ``predict`` on batches of beliefs."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import solver as _solver
from .bounds import BOUND_KINDS, BoundChain, BoundConfig, query_q, table_value
from .validation import check_beliefs, check_model


class InformedBound(BaseEstimator):
    """Upper bound on the optimal value function of a POMDP.

    Parameters
    ----------
    kind : {"qmdp", "fib", "tib", "otib", "etib", "ctib"}
    epsilon : relative stopping precision of value iteration.
    max_iter : iteration cap.
    reuse_weights : cache fixed weight functions across iterations.

    Attributes set by ``fit``: ``table_``, ``chain_``, ``n_iter_``,
    ``converged_``, ``seconds_`` and ``initial_value_``.
    """

    def __init__(self, kind: str = "tib", epsilon: float = 1e-3, max_iter: int = 250,
                 reuse_weights: bool = True):
        self.kind = kind
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.reuse_weights = reuse_weights

    def fit(self, model, y=None):
        model = check_model(model)
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"kind must be one of {BOUND_KINDS}, got {self.kind!r}")
        config = BoundConfig(self.epsilon, self.max_iter, self.reuse_weights)
        self.model_ = model
        self.chain_ = BoundChain(model, config)
        self.table_ = self.chain_.get(self.kind)
        self.n_iter_ = self.table_.iterations
        self.converged_ = self.table_.converged
        self.seconds_ = self.table_.seconds
        self.initial_value_ = table_value(self.table_, model.initial_belief)
        return self

    def predict_q(self, B) -> np.ndarray:
        """``(n, |A|)`` upper bounds on Q for each belief row."""
        check_is_fitted(self, "table_")
        B = check_beliefs(B, self.model_.num_states)
        return np.array([query_q(self.table_, b) for b in B])

    def predict(self, B) -> np.ndarray:
        """Upper bound on the value of each belief row."""
        return self.predict_q(B).max(axis=1)


class PointBasedSolver(BaseEstimator):
    """Anytime solver with matched lower and upper bounds.

    ``fit`` runs the search and stores ``report_``; ``predict`` returns the
    action of the best lower-bound alpha vector at each belief.
    """

    def __init__(self, init_bound: str = "fib", epsilon: float = 1e-3, timeout: float = 60.0,
                 N: int = 1000, bound_epsilon: float = 1e-3, bound_max_iter: int = 250):
        self.init_bound = init_bound
        self.epsilon = epsilon
        self.timeout = timeout
        self.N = N
        self.bound_epsilon = bound_epsilon
        self.bound_max_iter = bound_max_iter

    def fit(self, model, y=None):
        model = check_model(model)
        config = _solver.SolverConfig(
            epsilon=self.epsilon, timeout=self.timeout, N=self.N, init_bound=self.init_bound,
            bound_config=BoundConfig(self.bound_epsilon, self.bound_max_iter),
        )
        self.model_ = model
        self.report_, self._search = _solver._run(model, config, None)
        self.alphas_ = self._search.alphas.copy()
        self.alpha_actions_ = np.array(self._search.alpha_actions)
        return self

    def lower_bound(self, B) -> np.ndarray:
        check_is_fitted(self, "report_")
        B = check_beliefs(B, self.model_.num_states)
        return (B @ self.alphas_.T).max(axis=1)

    def upper_bound(self, B) -> np.ndarray:
        check_is_fitted(self, "report_")
        B = check_beliefs(B, self.model_.num_states)
        return self._search.ub.values(B)

    def predict(self, B) -> np.ndarray:
        check_is_fitted(self, "report_")
        B = check_beliefs(B, self.model_.num_states)
        return self.alpha_actions_[np.argmax(B @ self.alphas_.T, axis=1)]
