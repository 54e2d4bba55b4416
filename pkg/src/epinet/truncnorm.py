"""Univariate truncated normal moments, entropy and sampling.

All kernels work on the standardized interval ``[a, b]`` of a N(0, 1)
variable and are compiled with numba so that the Gibbs sampler and the
mean-field E-step can call them per coordinate. Far-tail intervals are
handled through the scaled complementary error function so that neither
the mass nor the Mills ratios underflow.
"""
import math

import numpy as np
import llvmlite.binding as llvm
from numba import njit, types
from numba.extending import get_cython_function_address


def _bind(cname, symbol):
    # registered by name so that cached kernels relink in a fresh process
    addr = get_cython_function_address("scipy.special.cython_special", cname)
    llvm.add_symbol(symbol, addr)
    return types.ExternalFunction(symbol, types.float64(types.float64))


ndtr = _bind("__pyx_fuse_1ndtr", "epinet_ndtr")
ndtri = _bind("ndtri", "epinet_ndtri")
erfcx = _bind("__pyx_fuse_1erfcx", "epinet_erfcx")

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)
# below this standardized upper bound, draws switch to exponential rejection
_TAIL_SWITCH = -8.0
_NARROW = 1e-7


@njit(cache=True)
def _pdf(x):
    if math.isinf(x):
        return 0.0
    return _INV_SQRT2PI * math.exp(-0.5 * x * x)


@njit(cache=True)
def _xpdf(x):
    if math.isinf(x):
        return 0.0
    return x * _INV_SQRT2PI * math.exp(-0.5 * x * x)


@njit(cache=True)
def _stats_lower(a, b):
    # a < b <= 0; factor exp(-b^2/2) out of every term
    d = 0.5 * (a - b) * (a + b)
    q = math.exp(-d)
    qm1 = math.expm1(-d)
    eb = erfcx(-b * _INV_SQRT2)
    ea = 0.0 if math.isinf(a) else erfcx(-a * _INV_SQRT2) * q
    den = eb - ea
    aq = 0.0 if math.isinf(a) else a * q
    r1 = _SQRT_2_OVER_PI * qm1 / den
    r2 = _SQRT_2_OVER_PI * (aq - b) / den
    log_mass = -0.5 * b * b + math.log(0.5 * den)
    return log_mass, r1, r2


@njit(cache=True)
def std_trunc_stats(a, b):
    """Return ``(log_mass, r1, r2)`` for N(0, 1) restricted to ``[a, b]``.

    ``r1 = (pdf(a) - pdf(b)) / mass`` and ``r2 = (a pdf(a) - b pdf(b)) / mass``,
    so the truncated mean is ``r1`` and the variance ``1 + r2 - r1**2``.
    """
    w = b - a
    if not math.isinf(w):
        m = 0.5 * (a + b)
        if w * (1.0 + abs(m)) < _NARROW:
            return math.log(w) + math.log(_pdf(m)), m, m * m - 1.0
    if a >= 0.0:
        log_mass, r1, r2 = _stats_lower(-b, -a)
        return log_mass, -r1, r2
    if b <= 0.0:
        return _stats_lower(a, b)
    mass = ndtr(b) - ndtr(a)
    r1 = (_pdf(a) - _pdf(b)) / mass
    r2 = (_xpdf(a) - _xpdf(b)) / mass
    return math.log(mass), r1, r2


@njit(cache=True)
def tn_moments(mu, sigma, lo, hi):
    """First moment and variance of N(mu, sigma^2) truncated to [lo, hi]."""
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    _, r1, r2 = std_trunc_stats(a, b)
    var = 1.0 + r2 - r1 * r1
    if var < 0.0:
        var = 0.0
    return mu + sigma * r1, sigma * sigma * var


@njit(cache=True)
def tn_entropy(sigma, a, b):
    """Differential entropy of N(., sigma^2) truncated to standardized [a, b]."""
    log_mass, _, r2 = std_trunc_stats(a, b)
    return _HALF_LOG_2PIE + math.log(sigma) + log_mass + 0.5 * r2


@njit(cache=True)
def _draw_lower(a, b, rng):
    # a < b <= 0
    if b < _TAIL_SWITCH:
        # exponential proposal on [alpha, beta] = [-b, -a], exact by rejection
        alpha = -b
        beta = -a
        if math.isinf(beta):
            span = 1.0
        else:
            span = -math.expm1(-alpha * (beta - alpha))
        while True:
            u = 1.0 - rng.random()
            x = alpha - math.log1p(-(1.0 - u) * span) / alpha
            if rng.random() <= math.exp(-0.5 * (x - alpha) * (x - alpha)):
                return -x
    pa = ndtr(a)
    pb = ndtr(b)
    if pb - pa <= 0.0:
        return a + rng.random() * (b - a)
    x = ndtri(pa + rng.random() * (pb - pa))
    return min(max(x, a), b)


@njit(cache=True)
def std_trunc_draw(a, b, rng):
    """One draw from N(0, 1) restricted to ``[a, b]`` (inverse-CDF based)."""
    if a >= 0.0:
        return -_draw_lower(-b, -a, rng)
    if b <= 0.0:
        return _draw_lower(a, b, rng)
    pa = ndtr(a)
    pb = ndtr(b)
    x = ndtri(pa + rng.random() * (pb - pa))
    return min(max(x, a), b)


def truncated_normal_moments(mu0, sigma0, t1, t2):
    """Mean and second moment of X ~ N(mu0, sigma0^2) conditioned on t1 <= X <= t2.

    Parameters
    ----------
    mu0 : float
        Mean of the untruncated normal.
    sigma0 : float
        Standard deviation, must be positive.
    t1, t2 : float
        Interval endpoints, either may be infinite.

    Returns
    -------
    m1, m2 : float
        ``E[X | t1 <= X <= t2]`` and ``E[X^2 | t1 <= X <= t2]``. The second
        moment is assembled as ``m1**2 + var`` so ``m2 >= m1**2`` always holds.
    """
    mu0 = float(mu0)
    sigma0 = float(sigma0)
    t1 = float(t1)
    t2 = float(t2)
    if not sigma0 > 0.0:
        raise ValueError("sigma0 must be positive")
    if not t1 < t2:
        raise ValueError(f"invalid truncation interval [{t1}, {t2}]")
    m1, var = tn_moments(mu0, sigma0, t1, t2)
    return m1, m1 * m1 + var


def sample_truncated_normal(a, b, size, rng):
    """Vector of standard-normal draws restricted to ``[a, b]`` (testing helper)."""
    out = np.empty(size)
    _fill_draws(float(a), float(b), out, rng)
    return out


@njit(cache=True)
def _fill_draws(a, b, out, rng):
    for i in range(out.shape[0]):
        out[i] = std_trunc_draw(a, b, rng)
