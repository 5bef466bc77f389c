import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bayes_update, random_model
from pomdp_bounds.beliefs import BeliefSet, count_two_step_beliefs, enumerate_one_step_beliefs
from pomdp_bounds.core import Belief
from pomdp_bounds.envs import make_env


@pytest.mark.parametrize("name,n_sao", [("guessing_game", 6), ("tiger", 3), ("grid", 152), ("koon2", 61)])
def test_one_step_counts(name, n_sao):
    assert len(enumerate_one_step_beliefs(make_env(name))) == n_sao


@pytest.mark.parametrize("name,n_bao", [("guessing_game", 8), ("tiger", 5)])
def test_two_step_counts_small(name, n_bao):
    assert count_two_step_beliefs(make_env(name)) == n_bao


def test_dedup_merges_float_noise():
    bs = BeliefSet(2)
    i = bs.add(Belief([0, 1], [0.3, 0.7]))
    j = bs.add(Belief([0, 1], [0.3 + 1e-12, 0.7 - 1e-12]))
    k = bs.add(Belief([0, 1], [0.31, 0.69]))
    assert i == j != k


def test_origins_and_units(tiger):
    ps = enumerate_one_step_beliefs(tiger)
    assert ps.index_of(("initial",)) == ps.index_of(("one_step", 0, 1, 0))
    assert ps.index_of(("one_step", 0, 0, 1)) == ps.unit_indices()[0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_canonical_weights_reconstruct_posterior(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    ps = enumerate_one_step_beliefs(m)
    P = ps.dense()
    b = rng.dirichlet(np.ones(4))
    for a in range(m.num_actions):
        for o in range(m.num_observations):
            idx, w, total = ps.canonical_weights(b, a, o)
            want, prob = bayes_update(m, b, a, o)
            if want is None:
                assert total == 0.0
                continue
            assert total == pytest.approx(prob)
            assert w.sum() == pytest.approx(1.0)
            assert np.allclose(w @ P[idx], want, atol=1e-10)


def test_successor_table_points_at_posteriors(rng):
    m = random_model(rng)
    ps = enumerate_one_step_beliefs(m)
    for s in range(4):
        for a in range(3):
            for o in range(3):
                unit = np.eye(4)[s]
                want, _ = bayes_update(m, unit, a, o)
                i = ps.successor_index[s, a, o]
                if want is None:
                    assert i == -1
                else:
                    assert np.allclose(ps[i].to_dense(4), want, atol=1e-9)
