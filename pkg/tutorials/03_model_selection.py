"""Choosing the penalty: extended BIC, StARS, and the deviance goodness-of-fit test."""
import warnings

import numpy as np

from epinet import (
    EMConfig,
    SimulationSpec,
    deviance_test,
    ebic_select,
    estimate_cutpoints,
    fit_path,
    prepare,
    simulate,
    stars_select,
)
from epinet.evaluation import confusion_metrics

net, g, _ = simulate(SimulationSpec(p=30, n=250, groups=3, seed=4))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    g, keep = prepare(g)
true = net.adjacency[np.ix_(keep, keep)]
cuts = estimate_cutpoints(g)
cfg = EMConfig(e_step="approx")
path = fit_path(g, cuts, cfg=cfg, n_lambda=15)

# eBIC trades the likelihood against the number of edges. gamma=0 is plain
# BIC; larger gamma gives sparser graphs when there are many markers.
for gamma in (0.0, 0.5, 1.0):
    k = ebic_select(path, gamma)
    print(f"eBIC gamma={gamma}: lambda={path[k].lam:.4f}, {path[k].df} edges, "
          f"F1={confusion_metrics(path[k].adjacency, true).f1:.3f}")

# StARS refits the path on random half-samples and keeps the smallest
# penalty whose edge selection is still stable.
stars = stars_select(g, cuts, path.lambdas, cfg, subsamples=10, instability_cut=0.05, seed=1)
print(f"StARS: lambda={stars.lam:.4f}, instability={stars.instability[stars.index]:.3f}, "
      f"F1={confusion_metrics(path[stars.index].adjacency, true).f1:.3f}")

# The deviance compares the selected graph with the saturated model (all
# edges). A large p-value means the missing edges are not needed to explain
# the latent second moments.
k = ebic_select(path, 0.5)
d = deviance_test(path[k], g.n)
print(f"deviance={d.deviance:.1f} on {d.deviance_df} df, p={d.p_value:.3f}")
