"""Conditional second moments of the latent Gaussian given observed genotypes.

Two estimators of ``rbar = mean_i E[z_i z_i' | y_i, theta]`` are provided:

* ``gibbs_expected_covariance`` runs a component-wise Gibbs sampler on the
  truncated multivariate normal of every individual;
* ``approx_expected_covariance`` uses a mean-field fixed point on the first
  moments with a variance recursion for the diagonal.

Missing genotypes have latent interval ``(-inf, inf)``. In the mean-field
estimator those coordinates are integrated out exactly as a Gaussian
conditional on the observed block.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import CutPointTable, GenotypeMatrix
from .truncnorm import std_trunc_draw, std_trunc_stats, tn_entropy, tn_moments

_LOG_2PIE = math.log(2.0 * math.pi * math.e)


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass
class GibbsConfig:
    """Sweeps kept per individual, burn-in sweeps discarded, master seed."""

    sweeps: int = 1000
    burn_in: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")


@dataclass
class ExpectedMoments:
    """Output of one E-step.

    Attributes
    ----------
    rbar : ndarray, shape (p, p)
        Average conditional second-moment matrix.
    method : {"gibbs", "approx"}
    means : ndarray, shape (n, p) or None
        Conditional first moments (mean-field estimator only).
    entropy : ndarray, shape (n,)
        Estimated differential entropy of ``z_i | y_i`` per individual.
    state : ndarray, shape (n, p) or None
        Final Gibbs state, reusable as the starting point of the next E-step.
    """

    rbar: np.ndarray
    method: str
    means: np.ndarray = None
    entropy: np.ndarray = None
    state: np.ndarray = None
    unconverged: int = 0

    @property
    def h_term(self):
        """Sum over individuals of ``E[log p(z | y)]``, i.e. minus the entropy."""
        return -float(np.sum(self.entropy))


def _check_precision(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError("precision matrix must be square")
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("precision matrix is not positive definite") from None
    return theta, chol


def _conditional_csr(theta):
    # coefficients of z_j | z_-j: mean = sum_k coef_jk z_k, sd = 1/sqrt(theta_jj)
    p = theta.shape[0]
    d = np.diag(theta).copy()
    off = theta / d[:, None]
    np.fill_diagonal(off, 0.0)
    mask = off != 0.0
    ptr = np.zeros(p + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(mask.sum(axis=1))
    idx = np.nonzero(mask)[1].astype(np.int64)
    coef = -off[mask]
    return ptr, idx, coef, 1.0 / np.sqrt(d)


@njit(cache=True)
def _sweep(z, mean, ptr, idx, coef, sd, lo, hi, rng):
    p = z.shape[0]
    for j in range(p):
        mu = mean[j]
        for t in range(ptr[j], ptr[j + 1]):
            k = idx[t]
            mu += coef[t] * (z[k] - mean[k])
        a = (lo[j] - mu) / sd[j]
        b = (hi[j] - mu) / sd[j]
        z[j] = mu + sd[j] * std_trunc_draw(a, b, rng)


@njit(cache=True)
def _sweep_entropy(z, ptr, idx, coef, sd, lo, hi):
    h = 0.0
    for j in range(z.shape[0]):
        mu = 0.0
        for t in range(ptr[j], ptr[j + 1]):
            mu += coef[t] * z[idx[t]]
        h += tn_entropy(sd[j], (lo[j] - mu) / sd[j], (hi[j] - mu) / sd[j])
    return h


@njit(cache=True)
def _chain(mean, ptr, idx, coef, sd, lo, hi, z, trace, rng):
    for s in range(trace.shape[0]):
        _sweep(z, mean, ptr, idx, coef, sd, lo, hi, rng)
        trace[s] = z


@njit(cache=True)
def _gibbs_estep(lower, upper, ptr, idx, coef, sd, state, n_keep, burn_in, thin_h, rng, rsum, entropy):
    n, p = lower.shape
    zero = np.zeros(p)
    buf = np.empty((n_keep, p))
    for i in range(n):
        z = state[i]
        lo = lower[i]
        hi = upper[i]
        for s in range(burn_in):
            _sweep(z, zero, ptr, idx, coef, sd, lo, hi, rng)
        h = 0.0
        nh = 0
        for s in range(n_keep):
            _sweep(z, zero, ptr, idx, coef, sd, lo, hi, rng)
            buf[s] = z
            if thin_h > 0 and s % thin_h == 0:
                h += _sweep_entropy(z, ptr, idx, coef, sd, lo, hi)
                nh += 1
        rsum += np.dot(buf.T, buf)
        entropy[i] = h / nh if nh > 0 else np.nan


def _initial_state(lower, upper, marginal_var):
    n, p = lower.shape
    state = np.zeros((n, p))
    sd = np.sqrt(marginal_var)
    for j in range(p):
        for i in range(n):
            state[i, j] = tn_moments(0.0, sd[j], lower[i, j], upper[i, j])[0]
    return state


def sample_truncated_mvn(mean, cov, lower, upper, cfg=None, init=None):
    """Component-wise Gibbs sampler for N(mean, cov) restricted to a box.

    Parameters
    ----------
    mean : array-like, shape (p,)
    cov : array-like, shape (p, p)
        Positive definite covariance.
    lower, upper : array-like, shape (p,)
        Box bounds, ``lower < upper`` elementwise; infinite values allowed.
    cfg : GibbsConfig, optional
    init : array-like, shape (p,), optional
        Starting point inside the box; defaults to the univariate truncated means.

    Returns
    -------
    samples : ndarray, shape (cfg.sweeps, p)
        Draws after burn-in.
    trace : ndarray, shape (cfg.burn_in + cfg.sweeps, p)
        Every sweep, burn-in included, for convergence diagnostics.
    """
    cfg = cfg or GibbsConfig()
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(~(lower < upper)):
        raise ValueError("lower must be strictly below upper")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("covariance is not positive definite") from None
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + prec.T)
    ptr, idx, coef, sd = _conditional_csr(prec)
    if init is None:
        z = np.array([tn_moments(m, math.sqrt(v), l, u)[0]
                      for m, v, l, u in zip(mean, np.diag(cov), lower, upper)])
    else:
        z = np.array(init, dtype=float)
    trace = np.empty((cfg.burn_in + cfg.sweeps, len(mean)))
    rng = np.random.default_rng(cfg.seed)
    _chain(mean, ptr, idx, coef, sd, lower, upper, z, trace, rng)
    return trace[cfg.burn_in:].copy(), trace


def gibbs_expected_covariance(g, cuts, theta, cfg=None, state=None, rng=None, entropy=True):
    """Monte Carlo E-step: Gibbs draws from every individual's truncated normal.

    Parameters
    ----------
    g : GenotypeMatrix
    cuts : CutPointTable
    theta : ndarray, shape (p, p)
        Current precision matrix.
    cfg : GibbsConfig, optional
    state : ndarray, shape (n, p), optional
        Chain starting points, e.g. ``ExpectedMoments.state`` of an earlier call.
    rng : numpy.random.Generator, optional
        Overrides ``cfg.seed``.
    entropy : bool
        Also estimate the per-individual entropies (NaN when skipped).

    Returns
    -------
    ExpectedMoments
        ``rbar`` is the average over individuals of ``Z_i' Z_i / N``; it is
        positive definite with probability one when ``N * n >= p``.
    """
    cfg = cfg or GibbsConfig()
    theta, _ = _check_precision(theta)
    lower, upper = cuts.bounds(g)
    n, p = lower.shape
    if state is None:
        sigma = np.linalg.inv(theta)
        state = _initial_state(lower, upper, np.diag(sigma))
    else:
        state = np.array(state, dtype=float, copy=True)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    ptr, idx, coef, sd = _conditional_csr(theta)
    rsum = np.zeros((p, p))
    ent = np.zeros(n)
    thin_h = max(1, cfg.sweeps // 50) if entropy else 0
    _gibbs_estep(lower, upper, ptr, idx, coef, sd, state, cfg.sweeps, cfg.burn_in, thin_h, rng, rsum, ent)
    rbar = rsum / (n * cfg.sweeps)
    rbar = 0.5 * (rbar + rbar.T)
    return ExpectedMoments(rbar=rbar, method="gibbs", entropy=ent, state=state)


@njit(cache=True)
def _mean_field(lower, upper, beta, sd, marg_var, tol, max_iter, means, variances, entropy):
    m_rows, q = lower.shape
    beta2 = beta * beta
    unconverged = 0
    for i in range(m_rows):
        m = means[i]
        v = variances[i]
        lo = lower[i]
        hi = upper[i]
        for j in range(q):
            m[j], v[j] = tn_moments(0.0, math.sqrt(marg_var[j]), lo[j], hi[j])
        converged = False
        for _ in range(max_iter):
            delta = 0.0
            for j in range(q):
                mu = 0.0
                vin = 0.0
                for k in range(q):
                    mu += beta[j, k] * m[k]
                    vin += beta2[j, k] * v[k]
                _, r1, r2 = std_trunc_stats((lo[j] - mu) / sd[j], (hi[j] - mu) / sd[j])
                new = mu + sd[j] * r1
                var = vin + sd[j] * sd[j] * max(0.0, 1.0 + r2 - r1 * r1)
                v[j] = min(var, marg_var[j])
                delta = max(delta, abs(new - m[j]))
                m[j] = new
            if delta < tol:
                converged = True
                break
        if not converged:
            unconverged += 1
        h = 0.0
        for j in range(q):
            mu = 0.0
            for k in range(q):
                mu += beta[j, k] * m[k]
            h += tn_entropy(sd[j], (lo[j] - mu) / sd[j], (hi[j] - mu) / sd[j])
        entropy[i] = h
    return unconverged


def approx_expected_covariance(g, cuts, theta, tol=1e-4, max_iter=50):
    """Mean-field E-step.

    Off-diagonal second moments are products of conditional means, the
    diagonal carries the conditional variance from the second-moment
    recursion. Coordinates are updated in place until the largest change of
    a conditional mean drops below ``tol`` or ``max_iter`` passes were made;
    individuals that did not settle are counted in ``unconverged`` and a
    warning is emitted.

    Individuals with missing genotypes are handled per missingness pattern:
    the observed block is solved under its marginal precision and the missing
    block follows from the Gaussian conditional, so a fully missing row
    contributes exactly ``inv(theta)``.
    """
    theta, _ = _check_precision(theta)
    lower, upper = cuts.bounds(g)
    n, p = lower.shape
    sigma = np.linalg.inv(theta)
    sigma = 0.5 * (sigma + sigma.T)
    missing = g.missing
    patterns, inverse = np.unique(missing, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    rsum = np.zeros((p, p))
    means = np.zeros((n, p))
    entropy = np.zeros(n)
    unconverged = 0
    for k, pattern in enumerate(patterns):
        rows = np.flatnonzero(inverse == k)
        obs = np.flatnonzero(~pattern)
        mis = np.flatnonzero(pattern)
        if len(mis):
            t_mm = theta[np.ix_(mis, mis)]
            c_mm = np.linalg.inv(t_mm)
            c_mm = 0.5 * (c_mm + c_mm.T)
            b_mo = -c_mm @ theta[np.ix_(mis, obs)]
            _, logdet_c = np.linalg.slogdet(c_mm)
            h_mis = 0.5 * (len(mis) * _LOG_2PIE + logdet_c)
            prec_o = theta[np.ix_(obs, obs)] + theta[np.ix_(obs, mis)] @ b_mo
        else:
            prec_o = theta
        s2 = np.zeros((len(obs), len(obs)))
        if len(obs):
            d = np.diag(prec_o).copy()
            beta = -prec_o / d[:, None]
            np.fill_diagonal(beta, 0.0)
            m_blk = np.zeros((len(rows), len(obs)))
            v_blk = np.zeros((len(rows), len(obs)))
            h_blk = np.zeros(len(rows))
            lo = np.ascontiguousarray(lower[np.ix_(rows, obs)])
            hi = np.ascontiguousarray(upper[np.ix_(rows, obs)])
            unconverged += _mean_field(lo, hi, np.ascontiguousarray(beta), 1.0 / np.sqrt(d),
                                       np.diag(sigma)[obs].copy(), tol, max_iter, m_blk, v_blk, h_blk)
            s2 = m_blk.T @ m_blk + np.diag(v_blk.sum(axis=0))
            means[np.ix_(rows, obs)] = m_blk
            entropy[rows] = h_blk
        full = np.zeros((p, p))
        full[np.ix_(obs, obs)] = s2
        if len(mis):
            cross = b_mo @ s2
            full[np.ix_(mis, obs)] = cross
            full[np.ix_(obs, mis)] = cross.T
            full[np.ix_(mis, mis)] = len(rows) * c_mm + cross @ b_mo.T
            if len(obs):
                means[np.ix_(rows, mis)] = means[np.ix_(rows, obs)] @ b_mo.T
            entropy[rows] += h_mis
        rsum += full
    if unconverged:
        warnings.warn(f"mean-field E-step did not converge for {unconverged} individual(s)")
    rbar = rsum / n
    rbar = 0.5 * (rbar + rbar.T)
    return ExpectedMoments(rbar=rbar, method="approx", means=means, entropy=entropy,
                           unconverged=unconverged)


def expected_covariance(g, cuts, theta, method="gibbs", gibbs=None, state=None, rng=None, entropy=True):
    """Dispatch to the Gibbs or mean-field E-step."""
    if method == "gibbs":
        return gibbs_expected_covariance(g, cuts, theta, gibbs, state=state, rng=rng, entropy=entropy)
    if method == "approx":
        return approx_expected_covariance(g, cuts, theta)
    raise ValueError(f"unknown E-step method {method!r}")
