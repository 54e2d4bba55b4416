"""Independent reference computations used by the tests.

None of these share code with the package: they use plain quadrature,
rejection sampling or first-order optimization.
"""
import warnings

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal


def truncnorm_moments_quad(mu, sigma, t1, t2):
    """E[X] and E[X^2] of N(mu, sigma^2) on [t1, t2] by adaptive quadrature.

    The standard-normal density is shifted by the endpoint nearest zero so the
    integrand is O(1) at its peak even in the far tails.
    """
    a = (t1 - mu) / sigma
    b = (t2 - mu) / sigma
    c = min(max(0.0, a), b)
    if np.isinf(c):
        raise ValueError("empty interval")

    def dens(u):
        return np.exp(-0.5 * (u - c) * (u + c))

    # integrand decays like exp(-|c| t - t^2/2) away from c
    reach = min(12.0, 60.0 / max(abs(c), 1e-9))
    lo = max(a, c - reach)
    hi = min(b, c + reach)
    edges = np.linspace(lo, hi, 9)
    moments = []
    for power in range(3):
        total = 0.0
        for x0, x1 in zip(edges[:-1], edges[1:]):
            with warnings.catch_warnings():
                # roundoff notices at epsrel=1e-13 are expected; the result is still ~1e-15
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, _ = integrate.quad(lambda u: u ** power * dens(u), x0, x1,
                                        epsabs=0.0, epsrel=1e-13, limit=200)
            total += val
        moments.append(total)
    i0, i1, i2 = moments
    e1 = i1 / i0
    e2 = i2 / i0
    return mu + sigma * e1, mu * mu + 2 * mu * sigma * e1 + sigma * sigma * e2


def glasso_projected_gradient(s, lam, iters=200000, tol=1e-8):
    """Dual graphical lasso by projected gradient ascent.

    Maximizes ``log det W`` over ``|W_ij - s_ij| <= lam`` (off-diagonal) with
    ``W_ii = s_ii + lam``. The gradient of the objective is ``inv(W)``.
    Returns ``theta = inv(W)`` with sub-threshold entries set to zero.
    """
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    off = ~np.eye(p, dtype=bool)

    def project(w):
        w = 0.5 * (w + w.T)
        w = np.where(off, np.clip(w, s - lam, s + lam), s + lam * np.eye(p))
        return w

    w = project(s + lam * np.eye(p))
    step = 0.1
    obj = np.linalg.slogdet(w)[1]
    for _ in range(iters):
        grad = np.linalg.inv(w)
        while True:
            cand = project(w + step * grad)
            sign, val = np.linalg.slogdet(cand)
            if sign > 0 and val >= obj - 1e-15:
                break
            step *= 0.5
            if step < 1e-16:
                break
        w, obj = cand, val
        step *= 1.5
        # duality gap of the primal at theta = inv(W)
        theta = np.linalg.inv(w)
        if np.sum(s * theta) + lam * np.abs(theta).sum() - p < tol:
            break
    theta = np.linalg.inv(w)
    theta = 0.5 * (theta + theta.T)
    # complementary slackness: interior W entries correspond to zero theta
    interior = off & (np.abs(w - s) < lam - 1e-7)
    theta[interior] = 0.0
    return theta, w


def bivariate_box_moments(rho, lo, hi, clip=9.0):
    """E[z1^2], E[z1 z2], E[z2^2] of a unit-variance bivariate normal restricted to a box, by 2-D quadrature."""
    lo = np.maximum(lo, -clip)
    hi = np.minimum(hi, clip)
    det = 1.0 - rho * rho
    norm = 1.0 / (2 * np.pi * np.sqrt(det))

    def pdf(y, x):
        return norm * np.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * det))

    def integral(f):
        val, _ = integrate.dblquad(lambda y, x: f(x, y) * pdf(y, x), lo[0], hi[0], lo[1], hi[1],
                                   epsabs=1e-13, epsrel=1e-11)
        return val

    mass = integral(lambda x, y: 1.0)
    return (integral(lambda x, y: x * x) / mass,
            integral(lambda x, y: x * y) / mass,
            integral(lambda x, y: y * y) / mass)


def rejection_box_sample(mean, cov, lower, upper, size, rng):
    """Exact draws from N(mean, cov) restricted to a box, by rejection."""
    out = []
    have = 0
    dist = multivariate_normal(mean, cov)
    while have < size:
        x = np.atleast_2d(dist.rvs(size=20000, random_state=rng))
        keep = np.all((x >= lower) & (x <= upper), axis=1)
        out.append(x[keep])
        have += keep.sum()
    return np.concatenate(out)[:size]
