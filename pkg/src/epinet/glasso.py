"""l1-penalized Gaussian precision estimation by block coordinate descent.

Maximizes ``log det(theta) - tr(S theta) - lam * ||theta||_1`` over positive
definite ``theta``. The covariance estimate ``W`` is updated one column at a
time by solving a lasso problem for that column (Friedman, Hastie and
Tibshirani, 2008). With ``penalize_diagonal`` the diagonal of ``W`` is
``diag(S) + lam``; otherwise it equals ``diag(S)``.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class GlassoSolution:
    theta: np.ndarray
    sigma: np.ndarray
    lam: float
    iterations: int
    converged: bool
    residual: float
    penalize_diagonal: bool = True

    @property
    def df(self):
        """Number of nonzero upper-triangular off-diagonal entries of ``theta``."""
        return int(np.count_nonzero(np.triu(self.theta, 1)))

    @property
    def adjacency(self):
        adj = self.theta != 0
        np.fill_diagonal(adj, False)
        return adj


@njit(cache=True)
def _lasso_column(W, s, j, beta, lam, inner_tol, max_inner):
    # minimize 0.5 b'W11 b - b's12 + lam |b|_1 over b (b[j] fixed at 0)
    p = W.shape[0]
    wb = np.zeros(p)
    for k in range(p):
        if k == j or beta[k] == 0.0:
            continue
        for l in range(p):
            wb[l] += W[k, l] * beta[k]
    for _ in range(max_inner):
        dmax = 0.0
        for k in range(p):
            if k == j:
                continue
            r = s[k] - wb[k] + W[k, k] * beta[k]
            if r > lam:
                new = (r - lam) / W[k, k]
            elif r < -lam:
                new = (r + lam) / W[k, k]
            else:
                new = 0.0
            delta = new - beta[k]
            if delta != 0.0:
                for l in range(p):
                    wb[l] += W[k, l] * delta
                beta[k] = new
                if abs(delta) > dmax:
                    dmax = abs(delta)
        if dmax < inner_tol:
            break
    return wb


@njit(cache=True)
def _bcd(S, lam, W, B, thresh, max_iter, inner_tol, max_inner):
    p = S.shape[0]
    it = 0
    change = np.inf
    npairs = max(1, p * (p - 1))
    while it < max_iter:
        it += 1
        change = 0.0
        for j in range(p):
            wb = _lasso_column(W, S[:, j], j, B[:, j], lam, inner_tol, max_inner)
            for k in range(p):
                if k == j:
                    continue
                change += 2.0 * abs(wb[k] - W[k, j])
                W[k, j] = wb[k]
                W[j, k] = wb[k]
        change /= npairs
        if change < thresh:
            break
    return it, change


@njit(cache=True)
def _theta_from_beta(W, B):
    p = W.shape[0]
    theta = np.zeros((p, p))
    for j in range(p):
        acc = W[j, j]
        for k in range(p):
            if k != j:
                acc -= W[k, j] * B[k, j]
        tjj = 1.0 / acc
        theta[j, j] = tjj
        for k in range(p):
            if k != j:
                theta[k, j] = -B[k, j] * tjj
    return theta


def glasso_fit(s, lam, tol=None, max_iter=500, warm=None, penalize_diagonal=True, inner_tol=None):
    """Solve the graphical lasso for one penalty.

    Parameters
    ----------
    s : ndarray, shape (p, p)
        Symmetric input (sample or expected second-moment) matrix.
    lam : float
        Penalty, >= 0.
    tol : float, optional
        Stop when the mean absolute change of the off-diagonal of ``W`` over a
        full sweep falls below ``tol``. Defaults to ``1e-6 * mean|offdiag(s)|``.
    warm : GlassoSolution, optional
        Starting point (e.g. the solution at a neighbouring penalty).

    Returns
    -------
    GlassoSolution
    """
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    if s.ndim != 2 or s.shape[1] != p:
        raise ValueError("s must be square")
    if not np.allclose(s, s.T, rtol=0, atol=1e-10 * max(1.0, np.abs(s).max())):
        raise ValueError("s must be symmetric")
    if np.any(np.diag(s) <= 0):
        raise ValueError("s must have a positive diagonal")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    s = 0.5 * (s + s.T)
    off = np.abs(s[~np.eye(p, dtype=bool)])
    if tol is None:
        tol = 1e-6 * (off.mean() if off.size and off.mean() > 0 else 1.0)
    if inner_tol is None:
        inner_tol = tol * 1e-2
    diag = np.diag(s) + (lam if penalize_diagonal else 0.0)

    if p == 1 or (off.size and off.max() <= lam and lam > 0):
        # every column's lasso has the zero solution
        theta = np.diag(1.0 / diag)
        sol = GlassoSolution(theta, np.diag(diag), float(lam), 0, True, 0.0, penalize_diagonal)
        sol.residual = kkt_check(sol, s)
        return sol

    if lam == 0:
        # unpenalized MLE; coordinate descent converges slowly when s is ill-conditioned
        try:
            c = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise ValueError("lam = 0 requires a positive definite s") from None
        ci = np.linalg.solve(c, np.eye(p))
        theta = ci.T @ ci
        theta = 0.5 * (theta + theta.T)
        sol = GlassoSolution(theta, s.copy(), 0.0, 0, True, float("nan"), penalize_diagonal)
        sol.residual = kkt_check(sol, s)
        return sol

    if warm is not None and warm.theta.shape == (p, p):
        W = warm.sigma.copy()
        B = -warm.theta / np.diag(warm.theta)[None, :]
        np.fill_diagonal(B, 0.0)
    else:
        W = np.diag(diag)
        B = np.zeros((p, p))
    np.fill_diagonal(W, diag)
    W = np.ascontiguousarray(W)
    B = np.asfortranarray(B)
    it, change = _bcd(s, float(lam), W, B, float(tol), int(max_iter), float(inner_tol), 10000)
    theta = _theta_from_beta(W, np.ascontiguousarray(B))
    zero = (theta == 0) | (theta.T == 0)
    theta = 0.5 * (theta + theta.T)
    theta[zero] = 0.0
    sol = GlassoSolution(theta, 0.5 * (W + W.T), float(lam), int(it), bool(change < tol),
                         float("nan"), penalize_diagonal)
    sol.residual = kkt_check(sol, s)
    return sol


def kkt_check(sol, s):
    """Largest violation of the stationarity conditions at ``sol.theta``.

    Uses ``W = inv(theta)``: off-diagonal ``|s_ij - w_ij| <= lam`` where
    ``theta_ij == 0`` and ``w_ij = s_ij + lam * sign(theta_ij)`` elsewhere;
    the diagonal must satisfy ``w_ii = s_ii + lam`` (or ``s_ii``).
    """
    s = np.asarray(s, dtype=float)
    theta = sol.theta
    if theta.shape != s.shape:
        raise ValueError("shape mismatch")
    try:
        w = np.linalg.inv(theta)
    except np.linalg.LinAlgError:
        return float("inf")
    lam = sol.lam
    p = s.shape[0]
    off = ~np.eye(p, dtype=bool)
    gap = w - s
    zero = (theta == 0) & off
    nz = (theta != 0) & off
    res = 0.0
    if zero.any():
        res = max(res, float(np.max(np.abs(gap[zero]) - lam)))
    if nz.any():
        res = max(res, float(np.max(np.abs(gap[nz] - lam * np.sign(theta[nz])))))
    dlam = lam if sol.penalize_diagonal else 0.0
    res = max(res, float(np.max(np.abs(np.diag(gap) - dlam))))
    return max(res, 0.0)


def objective(theta, s, lam, penalize_diagonal=True):
    """Penalized log-likelihood ``log det(theta) - tr(s theta) - lam ||theta||_1``."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    pen = np.abs(theta).sum()
    if not penalize_diagonal:
        pen -= np.abs(np.diag(theta)).sum()
    return logdet - np.sum(s * theta) - lam * pen
