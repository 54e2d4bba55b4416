"""Graph recovery metrics, ROC curves, rank-based baselines and the bootstrap."""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .data import estimate_cutpoints, prepare
from .em import EMConfig, PrecisionPath, PathEntry, FitDiagnostics, ebic_select, fit_path, stars_select
from .glasso import glasso_fit


@dataclass
class RecoveryMetrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def f1(self):
        den = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / den if den else 0.0

    @property
    def sen(self):
        den = self.tp + self.fn
        return self.tp / den if den else 0.0

    @property
    def spe(self):
        den = self.tn + self.fp
        return self.tn / den if den else 1.0

    @property
    def fpr(self):
        return 1.0 - self.spe


def _upper(a):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    return a[np.triu_indices(a.shape[0], 1)].astype(bool)


def confusion_metrics(est_adjacency, true_adjacency):
    """Counts over the strict upper triangle of two adjacency matrices."""
    est_adjacency = np.asarray(est_adjacency)
    true_adjacency = np.asarray(true_adjacency)
    if est_adjacency.shape != true_adjacency.shape:
        raise ValueError(f"shape mismatch: {est_adjacency.shape} vs {true_adjacency.shape}")
    e = _upper(est_adjacency)
    t = _upper(true_adjacency)
    return RecoveryMetrics(tp=int(np.sum(e & t)), tn=int(np.sum(~e & ~t)),
                           fp=int(np.sum(e & ~t)), fn=int(np.sum(~e & t)))


def _adjacencies(path):
    return [e.adjacency for e in path.entries if not e.failed]


def roc_curve(path, true_adjacency):
    """ROC points of a penalty path and the trapezoid AUC.

    One point per fitted penalty, ordered by decreasing penalty, padded with
    (0, 0) and (1, 1). A running maximum makes both coordinates
    non-decreasing, so the curve is the monotone envelope of the path.

    Returns
    -------
    fpr, tpr : ndarray
    auc : float
    """
    pts = [(m.fpr, m.sen) for m in (confusion_metrics(a, true_adjacency) for a in _adjacencies(path))]
    pts = np.array([(0.0, 0.0)] + pts + [(1.0, 1.0)])
    fpr = np.maximum.accumulate(pts[:, 0])
    tpr = np.maximum.accumulate(pts[:, 1])
    return fpr, tpr, float(np.trapezoid(tpr, fpr))


def oracle_f1(path, true_adjacency):
    """Best F1 over the path."""
    return max((confusion_metrics(a, true_adjacency).f1 for a in _adjacencies(path)), default=0.0)


def _check_columns(g):
    for j in range(g.p):
        if np.count_nonzero(g.category_counts(j)) < 2:
            raise ValueError(f"marker {g.names[j]} has fewer than two distinct values")


def repair_correlation(c, floor=1e-4, clip=0.999):
    """Clip eigenvalues at ``floor``, rescale to unit diagonal and clip entries to ``+-clip``."""
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    if w.min() < floor:
        c = (v * np.maximum(w, floor)) @ v.T
        d = 1.0 / np.sqrt(np.diag(c))
        c = c * d[:, None] * d[None, :]
    c = np.clip(c, -clip, clip)
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)


def npn_tau(g):
    """Nonparanormal skeptic: ``sin(pi/2 * tau_b)`` over pairwise-complete rows."""
    _check_columns(g)
    p = g.p
    vals = g.values
    obs = ~g.missing
    c = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            both = obs[:, i] & obs[:, j]
            tau = stats.kendalltau(vals[both, i], vals[both, j], variant="b").statistic
            c[i, j] = c[j, i] = np.sin(0.5 * np.pi * (0.0 if np.isnan(tau) else tau))
    return repair_correlation(c)


def winsorized_scores(g):
    """Normal scores with ranks truncated at ``1/(4 n^(1/4) sqrt(pi log n))`` (NaN for missing)."""
    out = np.full(g.values.shape, np.nan)
    for j in range(g.p):
        obs = ~g.missing[:, j]
        m = int(obs.sum())
        delta = 1.0 / (4.0 * m ** 0.25 * np.sqrt(np.pi * np.log(m))) if m > 1 else 0.5
        u = stats.rankdata(g.values[obs, j]) / m
        out[obs, j] = ndtri(np.clip(u, delta, 1.0 - delta))
    return out


def npn_ns(g):
    """Nonparanormal normal-score correlation (pairwise-complete Pearson on winsorized scores)."""
    _check_columns(g)
    s = winsorized_scores(g)
    p = g.p
    if not np.isnan(s).any():
        c = np.corrcoef(s, rowvar=False)
    else:
        c = np.eye(p)
        for i in range(p):
            for j in range(i + 1, p):
                both = ~np.isnan(s[:, i]) & ~np.isnan(s[:, j])
                c[i, j] = c[j, i] = np.corrcoef(s[both, i], s[both, j])[0, 1]
    return repair_correlation(np.nan_to_num(c))


def gaussian_path(corr, n, lambdas=None, n_lambda=30, min_ratio=0.05, method="npn"):
    """Graphical lasso path on a fixed correlation matrix with Gaussian log-likelihoods.

    The log-likelihood at each penalty is ``n/2 [log|theta| - tr(corr theta) - p log 2pi]``,
    so ``PrecisionPath.ebic`` works unchanged.
    """
    from .em import default_lambdas, q_value

    p = corr.shape[0]
    if lambdas is None:
        lambdas = default_lambdas(corr, n_lambda, min_ratio)
    entries = []
    warm = None
    for lam in lambdas:
        sol = glasso_fit(corr, lam, warm=warm)
        warm = sol
        q = q_value(sol.theta, corr, n)
        diag = FitDiagnostics(lam=float(lam), n=n, q=q, h=0.0, loglik=q, df=sol.df,
                              em_iterations=0, converged=sol.converged)
        entries.append(PathEntry(float(lam), sol, corr, diag))
    return PrecisionPath(np.asarray(lambdas, dtype=float), entries, n, p, method)


@dataclass
class BootstrapSummary:
    """Edge uncertainty from ``B`` bootstrap replicates.

    Attributes
    ----------
    frequency : ndarray, shape (p, p)
        Edges of the original fit: share of replicates whose estimate has the
        same nonzero sign. Other edges seen in a replicate: share of
        replicates selecting them. NaN elsewhere.
    positive, negative : ndarray, shape (p, p)
        Share of replicates with a positive or negative partial correlation.
    """

    replicates: int
    failed: int
    theta: np.ndarray
    frequency: np.ndarray
    positive: np.ndarray
    negative: np.ndarray


def _select(path, selection, g, cuts, cfg, gamma, seed):
    if selection == "ebic":
        return path[ebic_select(path, gamma)]
    if selection == "stars":
        return path[stars_select(g, cuts, path.lambdas, cfg, seed=seed).index]
    raise ValueError(f"unknown selection {selection!r}")


def fit_selected(g, cfg=None, selection="ebic", gamma=0.5, seed=0, lambdas=None):
    """Cut-points, penalty path and selected fit for one data set."""
    cfg = cfg or EMConfig()
    cuts = estimate_cutpoints(g)
    path = fit_path(g, cuts, lambdas, cfg)
    return _select(path, selection, g, cuts, cfg, gamma, seed)


def _replicate(g, rows, cfg, selection, gamma, seed):
    from threadpoolctl import threadpool_limits

    with warnings.catch_warnings(), threadpool_limits(limits=1):
        warnings.simplefilter("ignore")
        gb, keep = prepare(g.take_rows(rows))
        entry = fit_selected(gb, cfg, selection, gamma, seed)
    theta = np.zeros((g.p, g.p))
    theta[np.ix_(keep, keep)] = entry.theta
    return theta


def bootstrap_network(g, B=50, cfg=None, selection="ebic", gamma=0.5, seed=0, n_jobs=1,
                      resample=None):
    """Non-parametric bootstrap of the whole pipeline.

    Every replicate resamples ``n`` rows with replacement, re-estimates the
    cut-points and reruns the path and the penalty selection.

    Parameters
    ----------
    resample : callable, optional
        ``resample(rng, n) -> row indices``; defaults to sampling with
        replacement. Replicate ``b`` uses ``default_rng([seed, b])``.
    """
    from joblib import Parallel, delayed

    if B < 1:
        raise ValueError("B must be >= 1")
    cfg = cfg or EMConfig()
    resample = resample or (lambda rng, n: rng.integers(0, n, size=n))
    original = fit_selected(g, cfg, selection, gamma, seed).theta
    rows = [resample(np.random.default_rng([seed, b]), g.n) for b in range(B)]

    def run(b):
        try:
            return _replicate(g, rows[b], cfg, selection, gamma, seed + b + 1)
        except Exception as exc:  # a failed replicate only shrinks the denominator
            warnings.warn(f"bootstrap replicate {b} failed: {exc}")
            return None

    thetas = Parallel(n_jobs=n_jobs)(delayed(run)(b) for b in range(B))
    ok = [t for t in thetas if t is not None]
    if not ok:
        raise RuntimeError("every bootstrap replicate failed")
    signs = np.sign(np.stack(ok))
    off = ~np.eye(g.p, dtype=bool)
    positive = np.mean(signs < 0, axis=0)  # negative precision entry = positive partial correlation
    negative = np.mean(signs > 0, axis=0)
    selected = np.mean(signs != 0, axis=0)
    orig_sign = np.sign(original)
    freq = np.full((g.p, g.p), np.nan)
    union = off & ((orig_sign != 0) | (selected > 0))
    match = np.mean(signs == orig_sign[None], axis=0)
    freq[union] = np.where(orig_sign[union] != 0, match[union], selected[union])
    positive[~off] = np.nan
    negative[~off] = np.nan
    return BootstrapSummary(len(ok), B - len(ok), original, freq, positive, negative)
