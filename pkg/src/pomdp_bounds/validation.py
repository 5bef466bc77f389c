"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .core import Belief, PomdpModel

BELIEF_TOL = 1e-9


def check_model(model) -> PomdpModel:
    if not isinstance(model, PomdpModel):
        raise TypeError(f"expected a PomdpModel, got {type(model).__name__}")
    return model


def check_beliefs(B, num_states: int) -> np.ndarray:
    """Validate a batch of beliefs as an ``(n, num_states)`` float array.

    Accepts a single belief (1-d array or :class:`Belief`) or a sequence of them.
    """
    if isinstance(B, Belief):
        B = B.to_dense(num_states)[None, :]
    elif isinstance(B, (list, tuple)) and B and isinstance(B[0], Belief):
        B = np.array([b.to_dense(num_states) for b in B])
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[None, :]
    B = check_array(B, dtype=float, ensure_all_finite=True)
    if B.shape[1] != num_states:
        raise ValueError(f"beliefs have {B.shape[1]} entries, the model has {num_states} states")
    if np.any(B < 0):
        raise ValueError("beliefs must be nonnegative")
    sums = B.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > BELIEF_TOL):
        raise ValueError("every belief must sum to 1")
    return B
