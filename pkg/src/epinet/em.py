"""Penalized EM for the Gaussian copula graphical model.

Each iteration computes the expected latent second moments ``rbar`` under the
current precision (E-step) and re-solves the graphical lasso on ``rbar``
(M-step). ``fit_path`` runs the loop over a descending penalty grid with warm
starts; ``ebic_select`` and ``stars_select`` pick one penalty.

Monte Carlo E-steps use common random numbers: every E-step at one grid
point restarts the same random stream from the same chain state, so the EM
map is deterministic and its fixed point well defined.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import normal_scores
from .glasso import glasso_fit
from .latent import GibbsConfig, NotPositiveDefinite, expected_covariance

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


class EMFailure(RuntimeError):
    pass


@dataclass
class EMConfig:
    """Settings of the EM loop.

    Parameters
    ----------
    e_step : {"gibbs", "approx"}
    em_max_iter : int
        Maximum number of M-steps per penalty.
    em_tol : float
        Stop when ``||theta_new - theta||_F / ||theta||_F`` drops below this.
    gibbs : GibbsConfig
    init : {"normal_scores", "identity"}
    penalize_diagonal : bool
    glasso_tol : float, optional
        Passed to ``glasso_fit``.
    """

    e_step: str = "gibbs"
    em_max_iter: int = 10
    em_tol: float = 1e-3
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    init: str = "normal_scores"
    penalize_diagonal: bool = True
    glasso_tol: float = None

    def __post_init__(self):
        if self.e_step not in ("gibbs", "approx"):
            raise ValueError(f"unknown E-step {self.e_step!r}")
        if self.init not in ("normal_scores", "identity"):
            raise ValueError(f"unknown initializer {self.init!r}")
        if self.em_max_iter < 1:
            raise ValueError("em_max_iter must be >= 1")
        if not self.em_tol > 0:
            raise ValueError("em_tol must be positive")
        if isinstance(self.gibbs, dict):
            self.gibbs = GibbsConfig(**self.gibbs)


@dataclass
class FitDiagnostics:
    """Likelihood summaries of one converged fit.

    ``q`` is the expected complete-data log-likelihood at the fixed point,
    ``h`` the estimate of ``sum_i E[log p(z_i | y_i)]`` and ``loglik = q - h``
    the observed-data log-likelihood. The deviance fields are filled by
    ``deviance_test``.
    """

    lam: float
    n: int
    q: float
    h: float
    loglik: float
    df: int
    em_iterations: int
    converged: bool
    deviance: float = float("nan")
    deviance_df: int = 0
    p_value: float = float("nan")


@dataclass
class EMFit:
    solution: object
    moments: object
    diagnostics: FitDiagnostics

    def __iter__(self):
        return iter((self.solution, self.moments, self.diagnostics))

    @property
    def theta(self):
        return self.solution.theta


def initial_precision(g, how="normal_scores", ridge=0.01):
    """Starting precision: inverse of a ridged normal-scores correlation, or identity."""
    if how == "identity":
        return np.eye(g.p)
    scores = np.nan_to_num(normal_scores(g))
    c = np.corrcoef(scores, rowvar=False) if g.n > 1 else np.eye(g.p)
    c = np.atleast_2d(np.nan_to_num(c))
    np.fill_diagonal(c, 1.0)
    theta = np.linalg.inv(c + ridge * np.eye(g.p))
    return 0.5 * (theta + theta.T)


def to_correlation(m):
    """Rescale a symmetric positive matrix to unit diagonal."""
    d = 1.0 / np.sqrt(np.diag(m))
    out = m * d[:, None] * d[None, :]
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def copula_scale(theta):
    """Rescale a precision matrix so that its inverse has unit diagonal (same zeros)."""
    d = np.sqrt(np.diag(np.linalg.inv(theta)))
    out = theta * d[:, None] * d[None, :]
    return 0.5 * (out + out.T)


def _estep(g, cuts, theta, cfg, state, key, entropy=True):
    # the copula fixes the latent scale: E-step at unit marginal variances, rbar as a correlation
    rng = np.random.default_rng([cfg.gibbs.seed, key]) if cfg.e_step == "gibbs" else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = expected_covariance(g, cuts, copula_scale(theta), cfg.e_step, cfg.gibbs,
                                state=state, rng=rng, entropy=entropy)
    m.rbar = to_correlation(m.rbar)
    return m


def q_value(theta, rbar, n):
    """Expected complete-data log-likelihood ``n/2 [log|theta| - tr(rbar theta) - p log 2pi]``."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    p = theta.shape[0]
    return 0.5 * n * (logdet - np.sum(rbar * theta) - p * _LOG_2PI)


def _diagnostics(sol, moments, n, iterations, converged):
    q = q_value(sol.theta, moments.rbar, n)
    h = moments.h_term
    return FitDiagnostics(lam=sol.lam, n=n, q=q, h=h, loglik=q - h, df=sol.df,
                          em_iterations=iterations, converged=converged)


def _em_loop(g, cuts, lam, cfg, theta, state, key, warm_sol):
    moments = _estep(g, cuts, theta, cfg, state, key, entropy=False)
    start = state if state is not None else moments.state
    sol = warm_sol
    converged = False
    it = 0
    for it in range(1, cfg.em_max_iter + 1):
        sol = glasso_fit(moments.rbar, lam, tol=cfg.glasso_tol, warm=sol,
                         penalize_diagonal=cfg.penalize_diagonal)
        change = np.linalg.norm(sol.theta - theta) / max(np.linalg.norm(theta), 1e-300)
        theta = sol.theta
        converged = change < cfg.em_tol
        # entropies only matter at the returned precision
        moments = _estep(g, cuts, theta, cfg, start, key, entropy=converged or it == cfg.em_max_iter)
        if converged:
            break
    return sol, moments, it, converged


def fit_em(g, cuts, lam, cfg=None, warm=None, state=None, key=0):
    """Penalized EM at one penalty.

    Parameters
    ----------
    g : GenotypeMatrix
    cuts : CutPointTable
    lam : float
        Graphical lasso penalty.
    cfg : EMConfig, optional
    warm : ndarray or GlassoSolution, optional
        Starting precision; defaults to ``initial_precision(g, cfg.init)``.
    state : ndarray, optional
        Gibbs chain starting points shared by every E-step of this fit.
    key : int
        Stream index combined with ``cfg.gibbs.seed`` for the E-step draws.

    Returns
    -------
    EMFit
        Unpacks as ``(solution, moments, diagnostics)``. ``moments`` is the
        E-step at the returned precision.
    """
    cfg = cfg or EMConfig()
    warm_sol = None
    if warm is None:
        theta = initial_precision(g, cfg.init)
    elif hasattr(warm, "theta"):
        theta, warm_sol = warm.theta, warm
    else:
        theta = np.asarray(warm, dtype=float)
    try:
        sol, moments, it, converged = _em_loop(g, cuts, lam, cfg, theta, state, key, warm_sol)
    except (NotPositiveDefinite, np.linalg.LinAlgError, FloatingPointError) as exc:
        warnings.warn(f"EM at lambda={lam:.4g} hit a non-PD iterate ({exc}); restarting from identity")
        try:
            sol, moments, it, converged = _em_loop(g, cuts, lam, cfg, np.eye(g.p), None, key, None)
        except (NotPositiveDefinite, np.linalg.LinAlgError) as exc2:
            raise EMFailure(f"EM failed at lambda={lam:.4g}: {exc2}") from exc2
    return EMFit(sol, moments, _diagnostics(sol, moments, g.n, it, converged))


@dataclass
class PathEntry:
    lam: float
    solution: object = None
    rbar: np.ndarray = None
    diagnostics: FitDiagnostics = None
    error: str = None

    @property
    def failed(self):
        return self.solution is None

    @property
    def theta(self):
        return None if self.failed else self.solution.theta

    @property
    def adjacency(self):
        return None if self.failed else self.solution.adjacency

    @property
    def df(self):
        return -1 if self.failed else self.solution.df


@dataclass
class PrecisionPath:
    """Fits along a descending penalty grid."""

    lambdas: np.ndarray
    entries: list
    n: int
    p: int
    method: str

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    @property
    def df(self):
        return np.array([e.df for e in self.entries])

    @property
    def loglik(self):
        return np.array([np.nan if e.failed else e.diagnostics.loglik for e in self.entries])

    def ebic(self, gamma=0.5):
        """``-2 loglik + (log n + 4 gamma log p) df`` per grid point (``inf`` if failed)."""
        pen = np.log(self.n) + 4.0 * gamma * np.log(self.p)
        score = -2.0 * self.loglik + pen * self.df
        return np.where(np.isfinite(score), score, np.inf)


def default_lambdas(rbar0, n_lambda=30, min_ratio=0.05):
    """Log-spaced grid from ``max |offdiag(rbar0)|`` down to ``min_ratio`` times that."""
    p = rbar0.shape[0]
    off = np.abs(rbar0[~np.eye(p, dtype=bool)])
    lam_max = float(off.max()) if off.size else 1.0
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, min_ratio * lam_max, n_lambda)


def fit_path(g, cuts, lambdas=None, cfg=None, n_lambda=30, min_ratio=0.05):
    """Fit every penalty of a descending grid, warm-starting from the previous one.

    Parameters
    ----------
    lambdas : array-like, optional
        Strictly descending grid. Defaults to ``default_lambdas`` of the E-step
        at the initial precision.

    Returns
    -------
    PrecisionPath
        Failed grid points are kept with ``error`` set.
    """
    cfg = cfg or EMConfig()
    theta0 = initial_precision(g, cfg.init)
    state = None
    if lambdas is None:
        m0 = _estep(g, cuts, theta0, cfg, None, 0, entropy=False)
        lambdas = default_lambdas(m0.rbar, n_lambda, min_ratio)
        state = m0.state
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or len(lambdas) == 0:
        raise ValueError("lambdas must be a non-empty 1-d grid")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly descending")
    entries = []
    warm = theta0
    for k, lam in enumerate(lambdas):
        try:
            fit = fit_em(g, cuts, lam, cfg, warm=warm, state=state, key=k + 1)
        except (EMFailure, NotPositiveDefinite, np.linalg.LinAlgError) as exc:
            log.warning("lambda=%.4g failed: %s", lam, exc)
            entries.append(PathEntry(float(lam), error=str(exc)))
            continue
        entries.append(PathEntry(float(lam), fit.solution, fit.moments.rbar, fit.diagnostics))
        warm = fit.solution
        if fit.moments.state is not None:
            state = fit.moments.state
    return PrecisionPath(lambdas, entries, g.n, g.p, cfg.e_step)


def observed_loglik(fit):
    """Observed-data log-likelihood ``Q - H`` of an ``EMFit`` or ``PathEntry``."""
    return fit.diagnostics.loglik


def saturated_loglik(rbar, n):
    """``-(n/2) log|rbar| - n p / 2``, the unpenalized maximum on ``rbar``."""
    sign, logdet = np.linalg.slogdet(rbar)
    if sign <= 0:
        raise NotPositiveDefinite("rbar is not positive definite")
    return -0.5 * n * logdet - 0.5 * n * rbar.shape[0]


def model_loglik(theta, rbar, n):
    """``(n/2)(log|theta| - tr(rbar theta))``, on the same scale as ``saturated_loglik``."""
    return q_value(theta, rbar, n) + 0.5 * n * theta.shape[0] * _LOG_2PI


def ebic_select(path, gamma=0.5):
    """Index of the grid point minimizing eBIC; ties go to the larger penalty."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    score = path.ebic(gamma)
    if not np.isfinite(score).any():
        raise EMFailure("every grid point failed")
    best = np.min(score)
    return int(np.flatnonzero(score <= best)[0])


def deviance_test(fit, n=None):
    """Deviance of a fit against the saturated model on the same ``rbar``.

    ``D = -2 (l_m - l_s) = n [tr(rbar theta) - log|rbar theta| - p]`` with
    ``p(p-1)/2 - df`` degrees of freedom and a chi-square upper-tail p-value.
    Fills and returns the fit's ``FitDiagnostics``.
    """
    rbar = fit.rbar if hasattr(fit, "rbar") else fit.moments.rbar
    theta = fit.solution.theta
    diag = fit.diagnostics
    n = n or diag.n
    p = theta.shape[0]
    dev = -2.0 * (model_loglik(theta, rbar, n) - saturated_loglik(rbar, n))
    dof = p * (p - 1) // 2 - fit.solution.df
    diag.deviance = float(dev)
    diag.deviance_df = int(dof)
    diag.p_value = float(stats.chi2.sf(max(dev, 0.0), dof)) if dof > 0 else float("nan")
    return diag


def partial_correlations(theta):
    """``-theta_ij / sqrt(theta_ii theta_jj)`` with a unit diagonal."""
    theta = np.asarray(theta, dtype=float)
    d = np.sqrt(np.diag(theta))
    if np.any(~(d > 0)):
        raise NotPositiveDefinite("theta needs a positive diagonal")
    rho = -theta / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    return np.clip(rho, -1.0, 1.0)


@dataclass
class StarsResult:
    index: int
    lam: float
    instability: np.ndarray
    monotone: np.ndarray
    frequencies: np.ndarray


def stars_subsample_size(n):
    return max(2, min(int(10 * np.sqrt(n)), int(0.8 * n)))


def _subsample_adjacency(g, cuts, lambdas, cfg, rows):
    from threadpoolctl import threadpool_limits

    # one BLAS thread in every worker keeps results independent of n_jobs
    with threadpool_limits(limits=1):
        path = fit_path(g.take_rows(rows), cuts, lambdas, cfg)
    p = g.p
    out = np.zeros((len(lambdas), p, p), dtype=bool)
    for k, e in enumerate(path.entries):
        if not e.failed:
            out[k] = e.adjacency
    return out


def stars_select(g, cuts, lambdas, cfg=None, subsamples=20, instability_cut=0.05,
                 seed=0, n_jobs=1, indices=None):
    """Stability selection of the penalty (StARS).

    Each subsample (rows drawn without replacement) is fitted on the common
    grid. The instability of a penalty is the mean over pairs of
    ``2 f (1 - f)`` with ``f`` the edge selection frequency; it is made
    monotone by a running maximum from the largest penalty downwards, and
    the smallest penalty whose monotone instability stays below
    ``instability_cut`` is returned.

    Parameters
    ----------
    indices : list of index arrays, optional
        Explicit subsamples, overriding the random draw.
    """
    from joblib import Parallel, delayed

    cfg = cfg or EMConfig()
    lambdas = np.asarray(lambdas, dtype=float)
    if indices is None:
        if subsamples < 2:
            raise ValueError("subsamples must be >= 2")
        rng = np.random.default_rng(seed)
        size = stars_subsample_size(g.n)
        indices = [np.sort(rng.choice(g.n, size=size, replace=False)) for _ in range(subsamples)]
    adj = Parallel(n_jobs=n_jobs)(
        delayed(_subsample_adjacency)(g, cuts, lambdas, cfg, rows) for rows in indices
    )
    freq = np.mean(np.stack(adj), axis=0)
    iu = np.triu_indices(g.p, 1)
    instab = np.array([np.mean(2.0 * f[iu] * (1.0 - f[iu])) for f in freq]) if g.p > 1 \
        else np.zeros(len(lambdas))
    mono = np.maximum.accumulate(instab)
    ok = np.flatnonzero(mono <= instability_cut)
    idx = int(ok[-1]) if len(ok) else 0
    return StarsResult(idx, float(lambdas[idx]), instab, mono, freq)
