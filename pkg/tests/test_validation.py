import numpy as np
import pytest

from pomdp_bounds import Belief
from pomdp_bounds.validation import check_beliefs, check_model


def test_single_and_batched_beliefs():
    assert check_beliefs([0.2, 0.8], 2).shape == (1, 2)
    assert check_beliefs(Belief([1], [1.0]), 3).tolist() == [[0.0, 1.0, 0.0]]
    assert check_beliefs([Belief([0], [1.0]), Belief([1], [1.0])], 2).shape == (2, 2)


@pytest.mark.parametrize("bad", [
    [[0.5, 0.6]],
    [[1.5, -0.5]],
    [[np.nan, 1.0]],
    [[0.2, 0.3, 0.5]],
])
def test_rejects_bad_beliefs(bad):
    with pytest.raises(ValueError):
        check_beliefs(bad, 2)


def test_rejects_non_models():
    with pytest.raises(TypeError):
        check_model("tiger")
