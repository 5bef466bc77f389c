import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from oracles import fib_fixed_point, mdp_q, random_beliefs, random_model
from pomdp_bounds.beliefs import enumerate_one_step_beliefs
from pomdp_bounds.bounds import (
    BOUND_KINDS, BoundChain, BoundConfig, etib_precompute_weights, make_operator, query_bound, query_q,
    stop_residual, table_value, tib_backup,
)
from pomdp_bounds.core import Belief
from pomdp_bounds.envs import make_env
from pomdp_bounds.estimators import InformedBound

TIGHT = BoundConfig(epsilon=1e-9, max_iterations=5000)


@pytest.fixture(scope="module")
def gg_chain():
    chain = BoundChain(make_env("guessing_game"))
    for k in BOUND_KINDS:
        chain.get(k)
    return chain


@pytest.mark.parametrize("kind,want", [
    ("qmdp", 0.95), ("fib", 0.8 * 0.95), ("tib", 0.68 * 0.95**2), ("etib", 0.5), ("otib", 0.5), ("ctib", 0.5),
])
def test_guessing_game_closed_forms(kind, want):
    chain = BoundChain(make_env("guessing_game"), TIGHT)
    m = chain.model
    assert table_value(chain.get(kind), m.initial_belief) == pytest.approx(want, abs=1e-6)


def test_qmdp_matches_mdp_oracle(rng):
    m = random_model(rng)
    table = BoundChain(m, TIGHT).get("qmdp")
    assert np.allclose(table.values, mdp_q(m), atol=1e-6)


def test_fib_matches_dense_oracle(rng):
    m = random_model(rng)
    table = BoundChain(m, TIGHT).get("fib")
    assert np.allclose(table.values, fib_fixed_point(m), atol=1e-6)


def test_etib_uses_b0_for_guessing_game_wait():
    m = make_env("guessing_game")
    ps = enumerate_one_step_beliefs(m)
    weights = etib_precompute_weights(m, ps)
    b0 = ps.index_of(("initial",))
    assert weights[(b0, 2, 0)].as_dict() == {b0: pytest.approx(1.0)}


def test_tib_canonical_example():
    m = make_env("guessing_game")
    ps = enumerate_one_step_beliefs(m)
    idx, w, _ = ps.canonical_weights(m.initial_belief.to_dense(3), 2, 0)
    got = dict(zip(idx.tolist(), w.tolist()))
    assert got == {ps.index_of(("one_step", 0, 2, 0)): pytest.approx(0.5),
                   ps.index_of(("one_step", 1, 2, 0)): pytest.approx(0.5)}


def test_point_set_query_only_tightens(gg_chain):
    for kind in BOUND_KINDS:
        table = gg_chain.get(kind)
        for i, b in enumerate(table.point_set):
            assert query_bound(table, b) <= table.value_at(i) + 1e-9


def test_tib_backup_helper_matches_operator(gg_chain):
    table = gg_chain.get("tib")
    b = np.array([0.3, 0.6, 0.1])
    assert tib_backup(gg_chain.model, table.values, b, 1, table.point_set) == pytest.approx(query_q(table, b)[1])


def test_stop_residual_scaling():
    a = np.array([[10.0, 0.1]])
    b = np.array([[10.5, 0.2]])
    assert stop_residual(b, a, 0.5) == pytest.approx(0.1)


def test_cumulative_seconds_and_cache(gg_chain):
    assert gg_chain.get("otib").seconds >= gg_chain.get("tib").seconds
    assert gg_chain.get("tib") is gg_chain.get("tib")


def test_unknown_kind():
    with pytest.raises(ValueError):
        BoundChain(make_env("tiger")).get("hsvi")
    with pytest.raises(ValueError):
        BoundConfig(epsilon=0)


def test_max_iterations_reported_not_raised():
    table = BoundChain(make_env("tiger"), BoundConfig(max_iterations=2)).get("fib")
    assert table.iterations == 2 and not table.converged


def chain_ok(model, beliefs, tol=1e-6):
    chain = BoundChain(model)
    q = {k: np.array([query_q(chain.get(k), b) for b in beliefs]) for k in ("qmdp", "fib", "tib", "etib", "otib")}
    assert np.all(q["otib"] <= q["etib"] + tol)
    assert np.all(q["otib"] <= q["tib"] + tol)
    assert np.all(q["tib"] <= q["fib"] + tol)
    assert np.all(q["etib"] <= q["fib"] + tol)
    assert np.all(q["fib"] <= q["qmdp"] + tol)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tightness_chain_on_random_models(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    chain_ok(m, random_beliefs(rng, 4, 20))


def random_tables(rng, n, n_a, scale=5.0):
    Q1 = rng.uniform(-scale, scale, (n, n_a))
    return Q1, Q1 + rng.uniform(-1, 1, (n, n_a))


@pytest.mark.parametrize("kind", BOUND_KINDS)
def test_contraction_and_monotonicity(kind, rng):
    for _ in range(3):
        m = random_model(rng)
        op = make_operator(kind, m)
        n = len(op.points)
        Q1, Q2 = random_tables(rng, n, m.num_actions)
        H1, H2 = op.sweep(Q1), op.sweep(Q2)
        assert np.abs(H1 - H2).max() <= m.discount * np.abs(Q1 - Q2).max() + 1e-9
        lo = np.minimum(Q1, Q2)
        assert np.all(op.sweep(lo) <= np.maximum(H1, H2) + 1e-9)
        assert np.all(op.sweep(lo) <= H1 + 1e-9) and np.all(op.sweep(lo) <= H2 + 1e-9)


# fixed-weight queries (tib, etib, ctib) are not convex in general
@pytest.mark.parametrize("kind", ["qmdp", "fib", "otib"])
def test_query_is_convex(kind, rng):
    m = random_model(rng)
    table = BoundChain(m).get(kind)
    for _ in range(10):
        b1, b2 = rng.dirichlet(np.ones(4), size=2)
        lam = rng.random()
        mid = query_q(table, lam * b1 + (1 - lam) * b2)
        assert np.all(mid <= lam * query_q(table, b1) + (1 - lam) * query_q(table, b2) + 1e-6)


def test_estimator_api(tiger):
    est = InformedBound(kind="etib")
    assert est.get_params()["kind"] == "etib"
    twin = clone(est).set_params(kind="tib")
    assert twin.kind == "tib" and est.kind == "etib"
    est.fit(tiger)
    assert est.initial_value_ == pytest.approx(40.5, abs=0.3)
    B = np.array([[0.5, 0.5], [1.0, 0.0]])
    assert est.predict(B).shape == (2,) and est.predict_q(B).shape == (2, 3)
    assert est.predict(Belief.uniform([0, 1]))[0] == pytest.approx(est.predict(B)[0])
    with pytest.raises(ValueError):
        est.predict(np.array([[0.7, 0.7]]))


def test_estimator_requires_fit():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        InformedBound().predict(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        InformedBound(kind="nope").fit(make_env("tiger"))
