import numpy as np
import pytest

from pomdp_bounds.core import ModelError
from pomdp_bounds.envs import build_grid, build_k_out_of_n, make_env


@pytest.mark.parametrize("name,sizes", [
    ("guessing_game", (3, 3, 1)),
    ("tiger", (2, 3, 2)),
    ("grid", (36, 5, 6)),
    ("k_out_of_n(2)", (16, 9, 16)),
    ("k_out_of_n(3)", (64, 27, 64)),
])
def test_sizes(name, sizes):
    m = make_env(name)
    assert (m.num_states, m.num_actions, m.num_observations) == sizes


def test_guessing_game_swap_probability(guessing_game):
    assert guessing_game.transition[2][0, 1] == pytest.approx(0.2)
    assert guessing_game.reward[0, 0] == 1.0 and guessing_game.reward[0, 1] == 0.0


def test_grid_stay_and_corner_folding():
    g = build_grid()
    stay = g.action_names.index("stay")
    assert np.allclose(g.transition[stay].toarray(), np.eye(36))
    # bottom-left corner moving down: down, left and stay all fold into staying
    down = g.action_names.index("down")
    row = g.transition[down].toarray()[0]
    assert row[0] == pytest.approx(0.6 + 0.1 + 0.1)
    assert row[6] == pytest.approx(0.1) and row[1] == pytest.approx(0.1)
    assert g.initial_belief.states.tolist() == [0]
    # reward equals the probability of landing in the top-right cell
    right = g.action_names.index("right")
    assert g.reward[34, right] == pytest.approx(0.6)


def test_koon_repair_all_resets():
    m = build_k_out_of_n(2)
    repair = m.action_names.index("rr")
    T = m.transition[repair].toarray()
    assert np.allclose(T[:, 0], 1.0)


def test_koon_broken_components_stay_broken():
    m = build_k_out_of_n(1)
    nothing = m.action_names.index("n")
    assert m.transition[nothing][3, 3] == pytest.approx(1.0)
    assert m.reward[3, nothing] == pytest.approx(-0.5)


def test_koon_inspection_reveals_level():
    m = build_k_out_of_n(1)
    inspect = m.action_names.index("i")
    assert np.allclose(m.observation[inspect].toarray(), np.eye(4))
    nothing = m.action_names.index("n")
    assert np.allclose(m.observation[nothing].toarray()[:, 0], 1.0)


@pytest.mark.parametrize("bad", [lambda: build_k_out_of_n(4), lambda: make_env("tiger", 1.0),
                                 lambda: build_grid(0.0)])
def test_parameter_errors(bad):
    with pytest.raises(ModelError):
        bad()


def test_unknown_env():
    with pytest.raises(KeyError):
        make_env("hallway")
