import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from epinet.data import CutPointTable, GenotypeMatrix, estimate_cutpoints, prepare
from epinet.em import (
    EMConfig,
    EMFailure,
    PathEntry,
    PrecisionPath,
    copula_scale,
    deviance_test,
    ebic_select,
    fit_em,
    fit_path,
    partial_correlations,
    saturated_loglik,
    stars_select,
    to_correlation,
)
from epinet.glasso import glasso_fit, objective
from epinet.latent import GibbsConfig, approx_expected_covariance
from epinet.simulate import SimulationSpec, TrueNetwork, simulate, simulate_genotypes

APPROX = EMConfig(e_step="approx")
FAST_GIBBS = EMConfig(e_step="gibbs", gibbs=GibbsConfig(sweeps=60, burn_in=20, seed=3))


def small_instance(seed=0, p=12, n=200):
    net, g, _ = simulate(SimulationSpec(p=p, n=n, k=3, groups=2, seed=seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g, keep = prepare(g)
    return net, g, estimate_cutpoints(g)


def null_instance(seed, p=10, n=200):
    spec = SimulationSpec(p=p, n=n, k=3, groups=1, seed=seed)
    net = TrueNetwork(np.zeros((p, p), dtype=bool), np.zeros(p, dtype=int), np.eye(p))
    g, _, _ = simulate_genotypes(net, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g, _ = prepare(g)
    return g, estimate_cutpoints(g)


def test_partial_correlation_examples():
    assert np.array_equal(partial_correlations(np.diag([2.0, 3.0])), np.eye(2))
    rho = partial_correlations(np.array([[1.0, -0.5], [-0.5, 1.0]]))
    assert rho[0, 1] == pytest.approx(0.5)


def test_partial_correlation_matches_conditional_covariance():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    theta = a @ a.T + 6 * np.eye(6)
    rho = partial_correlations(theta)
    sigma = np.linalg.inv(theta)
    # partial correlation of (0, 1) given the rest, from the conditional covariance
    rest = list(range(2, 6))
    c = sigma[:2, :2] - sigma[:2, rest] @ np.linalg.solve(sigma[np.ix_(rest, rest)], sigma[rest, :2])
    assert rho[0, 1] == pytest.approx(c[0, 1] / np.sqrt(c[0, 0] * c[1, 1]), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 8))
def test_partial_correlation_range(seed, p):
    a = np.random.default_rng(seed).standard_normal((p, p))
    rho = partial_correlations(a @ a.T + 0.1 * np.eye(p))
    assert np.all(np.diag(rho) == 1.0)
    assert np.all(np.abs(rho) <= 1.0)


def test_copula_scale_keeps_zeros_and_unit_variance():
    theta = np.array([[2.0, -0.5, 0.0], [-0.5, 1.5, 0.3], [0.0, 0.3, 1.0]])
    scaled = copula_scale(theta)
    assert np.diag(np.linalg.inv(scaled)) == pytest.approx(np.ones(3), abs=1e-12)
    assert scaled[0, 2] == 0.0
    assert np.diag(to_correlation(np.linalg.inv(theta))) == pytest.approx(np.ones(3))


def test_saturated_loglik_formula():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 4))
    rbar = x.T @ x / 50
    want = -(50 / 2) * np.log(np.linalg.det(rbar)) - 50 * 4 / 2
    assert saturated_loglik(rbar, 50) == pytest.approx(want, rel=1e-13)


def test_independent_binary_markers_large_penalty():
    rng = np.random.default_rng(2)
    g = GenotypeMatrix(rng.integers(0, 2, size=(150, 6)), None, [f"m{j}" for j in range(6)])
    cuts = estimate_cutpoints(g)
    sol, moments, diag = fit_em(g, cuts, 0.5, APPROX)
    assert sol.df == 0
    assert np.count_nonzero(sol.theta - np.diag(np.diag(sol.theta))) == 0


@pytest.mark.parametrize("cfg", [APPROX, FAST_GIBBS], ids=["approx", "gibbs"])
def test_strong_pair_gives_negative_theta(cfg):
    rng = np.random.default_rng(3)
    z = rng.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]], size=500)
    vals = np.column_stack([np.digitize(z[:, j], [-0.5, 0.6]) for j in range(2)])
    g = GenotypeMatrix(vals, [3, 3], ["a", "b"])
    sol, _, diag = fit_em(g, estimate_cutpoints(g), 0.02, cfg)
    assert sol.df == 1 and sol.theta[0, 1] < 0
    assert diag.converged


def test_single_point_grid_equals_fit_em():
    _, g, cuts = small_instance()
    path = fit_path(g, cuts, [0.2], APPROX)
    fit = fit_em(g, cuts, 0.2, APPROX, key=1)
    assert len(path) == 1
    assert np.array_equal(path[0].theta, fit.theta)


def test_df_non_increasing_in_penalty():
    _, g, cuts = small_instance(seed=4)
    path = fit_path(g, cuts, cfg=APPROX, n_lambda=12)
    assert np.all(np.diff(path.df) >= 0)
    assert path.df[0] == 0


def test_gibbs_path_is_deterministic():
    _, g, cuts = small_instance(seed=5, p=8, n=100)
    a = fit_path(g, cuts, cfg=FAST_GIBBS, n_lambda=5)
    b = fit_path(g, cuts, cfg=FAST_GIBBS, n_lambda=5)
    for ea, eb in zip(a.entries, b.entries):
        assert np.array_equal(ea.theta, eb.theta)
        assert ea.diagnostics.loglik == eb.diagnostics.loglik


def test_warm_and_cold_starts_agree():
    _, g, cuts = small_instance(seed=6)
    cold = fit_em(g, cuts, 0.08, EMConfig(e_step="approx", em_max_iter=50, em_tol=1e-6))
    warm = fit_em(g, cuts, 0.08, EMConfig(e_step="approx", em_max_iter=50, em_tol=1e-6),
                  warm=fit_em(g, cuts, 0.15, APPROX).solution)
    assert np.abs(cold.theta - warm.theta).max() < 1e-3
    assert np.array_equal(cold.solution.adjacency, warm.solution.adjacency)


def test_mstep_never_decreases_penalized_objective():
    _, g, cuts = small_instance(seed=7)
    theta = np.eye(g.p)
    for _ in range(4):
        rbar = to_correlation(approx_expected_covariance(g, cuts, copula_scale(theta)).rbar)
        new = glasso_fit(rbar, 0.1).theta
        assert objective(new, rbar, 0.1) >= objective(theta, rbar, 0.1) - 1e-10
        theta = new


def test_loglik_of_unpenalized_refit_dominates():
    _, g, cuts = small_instance(seed=8)
    heavy = fit_em(g, cuts, 0.5, APPROX)
    light = fit_em(g, cuts, 0.01, APPROX)
    assert light.diagnostics.loglik > heavy.diagnostics.loglik


def test_zero_penalty_deviance_vanishes():
    _, g, cuts = small_instance(seed=9, p=8)
    fit = fit_em(g, cuts, 0.0, EMConfig(e_step="approx", em_max_iter=100, em_tol=1e-8,
                                        penalize_diagonal=False))
    diag = deviance_test(fit)
    assert diag.deviance_df == 8 * 7 // 2 - fit.solution.df
    assert abs(diag.deviance) < 1e-3


def test_deviance_closed_form():
    _, g, cuts = small_instance(seed=10)
    fit = fit_em(g, cuts, 0.15, APPROX)
    diag = deviance_test(fit)
    rbar, theta = fit.moments.rbar, fit.theta
    m = rbar @ theta
    want = g.n * (np.trace(m) - np.log(np.linalg.det(m)) - g.p)
    assert diag.deviance == pytest.approx(want, rel=1e-10)
    assert diag.p_value == pytest.approx(stats.chi2.sf(want, diag.deviance_df), rel=1e-10)


def _toy_path(lls, dfs, n=100, p=10):
    entries = []
    for k, (ll, df) in enumerate(zip(lls, dfs)):
        diag = type("D", (), {"loglik": ll})()
        sol = type("S", (), {"df": df, "theta": None})()
        entries.append(PathEntry(1.0 / (k + 1), sol, None, diag))
    return PrecisionPath(np.array([e.lam for e in entries]), entries, n, p, "approx")


def test_ebic_gamma_zero_is_bic():
    path = _toy_path([-500.0, -480.0, -470.0], [0, 3, 8])
    bic = [-2 * ll + np.log(100) * df for ll, df in zip([-500.0, -480.0, -470.0], [0, 3, 8])]
    assert ebic_select(path, 0.0) == int(np.argmin(bic))
    assert ebic_select(path, 1.0) == 0


def test_ebic_ties_prefer_larger_penalty():
    path = _toy_path([-500.0, -500.0], [0, 0])
    assert ebic_select(path, 0.5) == 0


def test_ebic_single_model_and_all_failed():
    assert ebic_select(_toy_path([-1.0], [0])) == 0
    failed = PrecisionPath(np.array([1.0]), [PathEntry(1.0, error="boom")], 10, 3, "approx")
    with pytest.raises(EMFailure):
        ebic_select(failed)


@pytest.mark.xfail(strict=True, reason="eBIC on the glasso estimate favours small penalties on null data; see decisions ledger")
def test_null_data_selects_empty_graph():
    empty = 0
    for seed in range(20):
        g, cuts = null_instance(seed)
        path = fit_path(g, cuts, cfg=APPROX)
        empty += path[ebic_select(path, 0.5)].df == 0
    assert empty >= 19


def test_stars_identical_subsamples():
    _, g, cuts = small_instance(seed=11, p=8, n=120)
    lambdas = np.geomspace(0.4, 0.05, 6)
    rows = np.arange(60)
    res = stars_select(g, cuts, lambdas, APPROX, indices=[rows, rows, rows])
    assert np.all(res.instability == 0)
    assert res.index == len(lambdas) - 1


def test_stars_on_noise_is_sparse():
    g, cuts = null_instance(12, p=8, n=150)
    lambdas = np.geomspace(0.3, 0.015, 10)
    res = stars_select(g, cuts, lambdas, APPROX, subsamples=10, seed=1)
    assert np.all(np.diff(res.monotone) >= 0)
    assert np.mean(res.frequencies[res.index][np.triu_indices(8, 1)]) < 0.2


def test_selection_is_permutation_equivariant():
    _, g, cuts = small_instance(seed=13)
    perm = np.random.default_rng(0).permutation(g.p)
    gp = g.take_columns(perm)
    lambdas = np.geomspace(0.5, 0.03, 10)
    a = fit_path(g, cuts, lambdas, APPROX)
    b = fit_path(gp, CutPointTable([cuts.cuts[j] for j in perm]), lambdas, APPROX)
    ka, kb = ebic_select(a), ebic_select(b)
    assert ka == kb
    assert np.array_equal(a[ka].adjacency[np.ix_(perm, perm)], b[kb].adjacency)
