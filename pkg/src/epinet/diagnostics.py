"""Heidelberger-Welch stationarity test for Gibbs chains.

The test discards 0%, 10%, ..., 50% of the chain in turn and applies a
Cramer-von Mises test to the standardized partial-sum (Brownian bridge)
process of the retained samples. The spectral density at frequency zero is
estimated from an autoregressive fit to the second half of the chain, as in
the ``coda`` R package.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, kv

MIN_LENGTH = 100
_STARTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass
class StationarityReport:
    passed: bool
    start: int
    start_fraction: float
    p_value: float
    statistic: float
    length: int
    initial_p_value: float = float("nan")


def _levinson(acov, order):
    # Yule-Walker recursion: innovation variances for orders 0..order
    var = np.empty(order + 1)
    var[0] = acov[0]
    phi = np.zeros(0)
    coefs = [phi]
    for m in range(1, order + 1):
        k = (acov[m] - np.dot(phi, acov[m - 1:0:-1])) / var[m - 1]
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        var[m] = var[m - 1] * (1.0 - k * k)
        coefs.append(phi)
    return var, coefs


def spectrum0_ar(x):
    """Spectral density at zero of ``x`` from a Yule-Walker AR fit with order chosen by AIC."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    order_max = int(min(n - 1, np.floor(10.0 * np.log10(n))))
    acov = np.array([np.dot(xc[: n - h], xc[h:]) / n for h in range(order_max + 1)])
    if acov[0] <= 0:
        return 0.0
    var, coefs = _levinson(acov, order_max)
    aic = n * np.log(np.maximum(var, 1e-300)) + 2.0 * np.arange(order_max + 1)
    m = int(np.argmin(aic))
    # innovation variance with the n/(n - (m + 1)) correction of stats::ar
    v = var[m] * n / (n - (m + 1))
    return float(v / (1.0 - np.sum(coefs[m])) ** 2)


def pcramer(q, eps=1e-5):
    """Limiting CDF of the Cramer-von Mises statistic.

    Anderson-Darling series with Bessel-K terms, summed until the exponential
    factor drops below ``eps``. For ``q < 0.46`` this is the four-term sum of
    ``coda::pcramer``; larger ``q`` need more terms to approach 1.
    """
    if q <= 0:
        return 0.0
    cutoff = -np.log(eps)
    total = 0.0
    k = 0
    while True:
        u = (4 * k + 1) ** 2 / (16 * q)
        if u > cutoff:
            break
        log_z = (gammaln(k + 0.5) - gammaln(k + 1) + 0.5 * np.log(4 * k + 1)
                 - 1.5 * np.log(np.pi) - 0.5 * np.log(q))
        total += np.exp(log_z - u) * kv(0.25, u)
        k += 1
    return float(min(max(total, 0.0), 1.0))


def _cvm_statistic(y, s0):
    n = len(y)
    b = np.cumsum(y) - y.mean() * np.arange(1, n + 1)
    bridge = b / np.sqrt(n * s0)
    return float(np.sum(bridge ** 2) / n)


def heidelberger_welch(chain, alpha=0.05):
    """Stationarity test of one chain.

    Parameters
    ----------
    chain : array-like, shape (m,)
        At least 100 samples.
    alpha : float
        Significance level.

    Returns
    -------
    StationarityReport
        ``start`` is the first retained iteration of the first passing
        truncation; on failure it refers to the last attempt (50%).
        ``initial_p_value`` is always the p-value of the untruncated chain.
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = len(x)
    if n < MIN_LENGTH:
        raise ValueError(f"chain has {n} samples, at least {MIN_LENGTH} are needed")
    s0 = spectrum0_ar(x[n // 2:])
    report = None
    first = None
    for frac in _STARTS:
        start = int(round(frac * n))
        y = x[start:]
        stat = _cvm_statistic(y, s0) if s0 > 0 else 0.0
        pval = 1.0 - pcramer(stat)
        first = pval if first is None else first
        report = StationarityReport(pval > alpha, start, frac, pval, stat, n, first)
        if report.passed:
            return report
    return report


def write_reports(reports, path):
    """TSV with columns chain, pass, start, p_value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["chain", "pass", "start", "p_value"])
        for i, r in enumerate(reports):
            w.writerow([i, int(r.passed), r.start, f"{r.p_value:.6g}"])
