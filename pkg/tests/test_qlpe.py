import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import cosine_pairwise, ot2x2_bisect, ot2x2_golden
from protoseg.mpg import PrototypeSet
from protoseg.qlpe import OtConfig, _sinkhorn_log, extract_weights, fuse, similarity_matrix, sinkhorn, sinkhorn_cost

sims = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-1, 1)))


def test_config_validation():
    with pytest.raises(ValueError):
        OtConfig(epsilon=0)
    with pytest.raises(ValueError):
        OtConfig(mu=(0.5, 0.4))
    with pytest.raises(ValueError):
        OtConfig(nu=(1.5, -0.5))
    with pytest.raises(ValueError):
        sinkhorn(np.ones((3, 2)), OtConfig(mu=(0.5, 0.5)))


def test_similarity_examples():
    p = PrototypeSet(np.array([[1.0, 2.0]]))
    assert similarity_matrix(p, p)[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert np.all(similarity_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 3.0], [0.0, -1.0]])) == 0)
    with pytest.raises(ValueError):
        similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_similarity_matches_loop():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(7, 5)), rng.normal(size=(4, 5))
    A[2] = 0
    np.testing.assert_allclose(similarity_matrix(A, B), cosine_pairwise(A, B), atol=1e-12)


def test_single_row_plan():
    T = sinkhorn(np.array([[0.3, -0.9]]), OtConfig(nu=(0.3, 0.7))).plan
    np.testing.assert_allclose(T, [[0.3, 0.7]], atol=1e-12)


def test_constant_cost_is_uniform():
    T = sinkhorn(np.full((2, 2), 0.4)).plan
    np.testing.assert_allclose(T, np.full((2, 2), 0.25), atol=1e-12)


def test_antidiagonal_closed_form():
    sigma = 1 / (1 + math.exp(-10))
    plan = sinkhorn_cost(np.array([[0.0, 1.0], [1.0, 0.0]]), OtConfig(epsilon=0.1))
    expected = 0.5 * np.array([[sigma, 1 - sigma], [1 - sigma, sigma]])
    np.testing.assert_allclose(plan.plan, expected, atol=1e-12)
    bis = ot2x2_bisect(np.array([[0.0, 1.0], [1.0, 0.0]]), (0.5, 0.5), (0.5, 0.5), 0.1)
    np.testing.assert_allclose(bis, expected, atol=1e-12)


def test_oracles_agree_on_random_problems():
    rng = np.random.default_rng(1)
    for _ in range(20):
        C = rng.uniform(0, 2, (2, 2))
        a, b = rng.uniform(0.1, 0.9, 2)
        mu, nu = (a, 1 - a), (b, 1 - b)
        T = sinkhorn_cost(C, OtConfig(mu=mu, nu=nu, marginal_tol=1e-14, max_iters=50_000)).plan
        np.testing.assert_allclose(T, ot2x2_bisect(C, mu, nu, 0.1), atol=1e-10)
        np.testing.assert_allclose(T, ot2x2_golden(C, mu, nu, 0.1), atol=1e-7)


def test_rejects_nonfinite():
    with pytest.raises(ValueError):
        sinkhorn(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        sinkhorn(np.zeros((0, 3)))


@settings(max_examples=60)
@given(sims)
def test_plan_invariants(S):
    plan = sinkhorn(S)
    m, n = S.shape
    T = plan.plan
    assert np.all(T >= 0)
    assert plan.iterations <= 500
    assert abs(T.sum() - 1) <= 1e-6 + plan.marginal_error * max(m, n)
    assert np.abs(T.sum(1) - 1 / m).max() <= plan.marginal_error + 1e-15
    assert np.abs(T.sum(0) - 1 / n).max() <= plan.marginal_error + 1e-15
    w = extract_weights(plan, S)
    assert np.all(np.abs(w) <= 1 / m + plan.marginal_error + 1e-15)


@settings(max_examples=40)
@given(sims)
def test_violation_nonincreasing(S):
    hist = np.array(sinkhorn(S, OtConfig(marginal_tol=1e-12)).error_history)
    assert np.all(np.diff(hist) <= 1e-15)


@settings(max_examples=40)
@given(sims, st.data())
def test_row_offset_invariance(S, data):
    off = data.draw(arrays(np.float64, (S.shape[0], 1), elements=st.floats(-0.5, 0.5)))
    C = 1.0 - S
    a = sinkhorn_cost(C).plan
    b = sinkhorn_cost(C + off).plan
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_epsilon_limit_is_monotone():
    rng = np.random.default_rng(2)
    S = rng.uniform(-1, 1, (5, 6))
    outer = np.full((5, 6), 1 / 30)
    gaps = [np.abs(sinkhorn(S, OtConfig(epsilon=e)).plan - outer).max() for e in (0.1, 1, 10, 100)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1e-3


def test_log_domain_matches_scaling():
    rng = np.random.default_rng(3)
    C = 1 - rng.uniform(-1, 1, (4, 5))
    cfg = OtConfig(epsilon=0.1, marginal_tol=1e-13, max_iters=5000)
    plain = sinkhorn_cost(C, cfg)
    logd = _sinkhorn_log(C, np.full(4, 0.25), np.full(5, 0.2), cfg)
    assert not plain.log_domain and logd.log_domain
    np.testing.assert_allclose(logd.plan, plain.plan, atol=1e-12)


def test_log_domain_trigger():
    S = np.random.default_rng(3).uniform(-1, 1, (4, 5))
    assert sinkhorn(S, OtConfig(epsilon=0.04)).log_domain
    assert sinkhorn(np.full((2, 2), 0.5), OtConfig(epsilon=0.06)).log_domain is False


def test_tiny_epsilon_stays_finite():
    S = np.random.default_rng(4).uniform(-1, 1, (6, 6))
    plan = sinkhorn(S, OtConfig(epsilon=1e-3, max_iters=2000))
    assert np.all(np.isfinite(plan.plan)) and plan.log_domain


def test_weight_examples():
    T = np.array([[0.5, 0.0], [0.0, 0.5]])
    np.testing.assert_array_equal(extract_weights(T, np.eye(2)), [0.5, 0.5])
    plan = sinkhorn(np.ones((3, 4)))
    np.testing.assert_allclose(extract_weights(plan, np.ones((3, 4))), plan.plan.sum(1))
    with pytest.raises(ValueError):
        extract_weights(T, np.ones((2, 3)))


def test_weights_at_large_epsilon():
    rng = np.random.default_rng(5)
    S = rng.uniform(-1, 1, (4, 3))
    w = extract_weights(sinkhorn(S, OtConfig(epsilon=100)), S)
    np.testing.assert_allclose(w, 0.25 * S.mean(axis=1), atol=1e-3)


def test_fuse_examples():
    pg = np.array([1.0, -1.0])
    locs = np.array([[2.0, 0.0], [0.0, 4.0]])
    assert np.array_equal(fuse(pg, locs, np.zeros(2)), pg)
    np.testing.assert_allclose(fuse(pg, locs[:1], np.array([0.3])), pg + 0.3 * locs[0])
    same = np.tile([3.0, 1.0], (4, 1))
    np.testing.assert_allclose(fuse(pg, same, np.full(4, 0.2)), pg + 0.2 * same[0])
    np.testing.assert_allclose(fuse(pg, locs, np.array([1.0, 3.0]), "normalized"), pg + [0.5, 3.0])
    # normalized falls back to the literal form when weights vanish
    np.testing.assert_allclose(fuse(pg, locs, np.array([1.0, -1.0]), "normalized"), pg + [1.0, -2.0])
    with pytest.raises(ValueError):
        fuse(pg, locs, np.ones(3))
    with pytest.raises(ValueError):
        fuse(pg, locs, np.ones(2), "other")


@given(arrays(np.float64, (3,), elements=st.floats(-5, 5)), arrays(np.float64, (3,), elements=st.floats(-5, 5)),
       st.floats(-3, 3))
def test_fuse_paper_is_linear(w1, w2, a):
    pg = np.array([0.5, 0.0, -1.0, 2.0])
    locs = np.arange(12, dtype=float).reshape(3, 4)
    lhs = fuse(pg, locs, a * w1 + w2) - pg
    rhs = a * (fuse(pg, locs, w1) - pg) + (fuse(pg, locs, w2) - pg)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
