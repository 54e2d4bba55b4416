"""Checking Gibbs chains for stationarity with the Heidelberger-Welch test."""
import numpy as np

from epinet import GibbsConfig, heidelberger_welch, sample_truncated_mvn

# One individual's latent vector: three correlated markers, each confined to
# the interval of its observed genotype.
cov = np.array([[1.0, 0.7, 0.3], [0.7, 1.0, 0.5], [0.3, 0.5, 1.0]])
lower = np.array([0.0, -0.5, -np.inf])
upper = np.array([np.inf, 0.8, 0.2])

# Start far from the bulk and keep every sweep. The test reports how much of
# the start to discard before the rest looks stationary.
samples, trace = sample_truncated_mvn(np.zeros(3), cov, lower, upper, GibbsConfig(sweeps=1000, burn_in=0, seed=1),
                                      init=np.array([8.0, 0.79, -6.0]))
for j in range(3):
    r = heidelberger_welch(trace[:, j])
    print(f"marker {j}: passed={r.passed} discard first {r.start} sweeps, p={r.p_value:.3f}")

# On independent draws the untruncated chain passes about 95% of the time at
# level 0.05, and its p-values are close to uniform.
rng = np.random.default_rng(0)
reports = [heidelberger_welch(rng.standard_normal(1000)) for _ in range(200)]
rate = np.mean([r.passed and r.start == 0 for r in reports])
print(f"pass rate at start 0 on i.i.d. chains: {rate:.0%}")
