import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epinet.glasso import glasso_fit, kkt_check, objective

from oracles import glasso_projected_gradient


def random_cov(rng, p, n=None):
    n = n or 2 * p
    x = rng.standard_normal((n, p)) @ rng.standard_normal((p, p)) * 0.5
    s = np.cov(x, rowvar=False)
    d = np.sqrt(np.diag(s))
    return s / np.outer(d, d)


S3 = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.0], [0.2, 0.0, 1.0]])


def test_three_by_three_matches_projected_gradient():
    sol = glasso_fit(S3, 0.1, tol=1e-10)
    ref, _ = glasso_projected_gradient(S3, 0.1)
    assert np.abs(sol.theta - ref).max() < 1e-7
    assert sol.theta == pytest.approx(np.array(
        [[1.055195, -0.380952, -0.083333], [-0.380952, 1.047619, 0.0], [-0.083333, 0.0, 0.916667]]),
        abs=1e-6)
    assert sol.theta[1, 2] == 0.0
    assert kkt_check(sol, S3) <= 1e-8


def test_oracle_solution_passes_kkt():
    ref, _ = glasso_projected_gradient(S3, 0.1)
    sol = glasso_fit(S3, 0.1)
    sol.theta = ref
    assert kkt_check(sol, S3) <= 1e-6


def test_full_shrinkage_is_diagonal():
    rng = np.random.default_rng(1)
    s = random_cov(rng, 6)
    lam = np.abs(s - np.diag(np.diag(s))).max() + 1e-9
    sol = glasso_fit(s, lam)
    assert sol.df == 0
    assert np.diag(sol.theta) == pytest.approx(1.0 / (np.diag(s) + lam), rel=1e-14)
    assert kkt_check(sol, s) <= 1e-12


def test_zero_penalty_inverts():
    rng = np.random.default_rng(2)
    for p in (2, 5, 12):
        s = random_cov(rng, p, n=5 * p)
        inv = np.linalg.inv(s)
        sol = glasso_fit(s, 0.0)
        assert np.abs(sol.theta - inv).max() <= 1e-6 * max(1.0, np.abs(inv).max())
        assert kkt_check(sol, s) <= 1e-6


def test_zero_penalty_needs_positive_definite_input():
    with pytest.raises(ValueError):
        glasso_fit(np.ones((3, 3)), 0.0)


def test_kkt_on_random_instances():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(2, 21))
        s = random_cov(rng, p, n=int(rng.integers(p + 2, 5 * p + 3)))
        lam = rng.uniform(0.01, 0.5)
        sol = glasso_fit(s, lam)
        worst = max(worst, kkt_check(sol, s))
    assert worst <= 1e-5


def test_perturbation_increases_residual():
    sol = glasso_fit(S3, 0.1, tol=1e-10)
    base = kkt_check(sol, S3)
    sol.theta = sol.theta.copy()
    sol.theta[0, 1] += 0.1
    sol.theta[1, 0] += 0.1
    assert kkt_check(sol, S3) > base


def test_unpenalized_diagonal_option():
    rng = np.random.default_rng(4)
    s = random_cov(rng, 8, n=40)
    sol = glasso_fit(s, 0.2, tol=1e-9, penalize_diagonal=False)
    w = np.linalg.inv(sol.theta)
    assert np.diag(w) == pytest.approx(np.diag(s), abs=1e-6)
    assert kkt_check(sol, s) <= 1e-6


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(5)
    s = random_cov(rng, 10, n=30)
    cold = glasso_fit(s, 0.15, tol=1e-10)
    warm = glasso_fit(s, 0.15, tol=1e-10, warm=glasso_fit(s, 0.3))
    assert np.abs(cold.theta - warm.theta).max() < 1e-6


def test_df_non_increasing_along_grid():
    rng = np.random.default_rng(6)
    s = random_cov(rng, 15, n=40)
    lams = np.geomspace(0.6, 0.03, 15)
    dfs = []
    warm = None
    for lam in lams:
        warm = glasso_fit(s, lam, tol=1e-9, warm=warm)
        dfs.append(warm.df)
    assert all(a <= b for a, b in zip(dfs, dfs[1:]))


def test_solution_beats_perturbations():
    rng = np.random.default_rng(7)
    s = random_cov(rng, 6, n=20)
    sol = glasso_fit(s, 0.1, tol=1e-12)
    best = objective(sol.theta, s, 0.1)
    for _ in range(50):
        e = rng.standard_normal((6, 6)) * 1e-3
        assert objective(sol.theta + e + e.T, s, 0.1) <= best + 1e-12


@pytest.mark.parametrize("bad", [np.array([[1.0, 0.2], [0.3, 1.0]]), np.ones((2, 3))])
def test_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        glasso_fit(bad, 0.1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 10), lam=st.floats(0.02, 0.6))
def test_solution_is_symmetric_and_pd(seed, p, lam):
    s = random_cov(np.random.default_rng(seed), p, n=3 * p)
    sol = glasso_fit(s, lam)
    assert np.array_equal(sol.theta, sol.theta.T)
    assert np.linalg.eigvalsh(sol.theta).min() > 0
