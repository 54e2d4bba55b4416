"""Simulate a planted marker network, fit the copula graphical model, score the recovery.

Run with ``python tutorials/01_simulate_and_fit.py``. Takes under a minute.
"""
import warnings

import numpy as np

from epinet import EMConfig, SimulationSpec, ebic_select, estimate_cutpoints, fit_path, prepare, simulate
from epinet.evaluation import confusion_metrics, oracle_f1, roc_curve

# A small version of the benchmark scenario: 40 markers on 4 linkage groups,
# 3 genotype states per marker. Neighbouring markers on a group are always
# linked; a few extra edges appear within and across groups.
spec = SimulationSpec(p=40, n=300, k=3, groups=4, seed=1)
net, g, cuts_true = simulate(spec)
print(f"{g.n} individuals x {g.p} markers, {net.adjacency.sum() // 2} true edges")

# prepare() drops markers that are constant or mostly missing. Nothing is
# dropped here but real data often needs it.
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    g, keep = prepare(g)
true = net.adjacency[np.ix_(keep, keep)]

# Cut-points map each observed category to an interval of the latent normal
# scale. They come from the empirical category frequencies.
cuts = estimate_cutpoints(g)
print("cut-points of marker 0:", np.round(cuts.cuts[0], 3))

# Fit a whole penalty path. The mean-field ("approx") E-step is fast; switch
# to e_step="gibbs" for the sampling E-step, which is more accurate when
# markers are strongly dependent.
path = fit_path(g, cuts, cfg=EMConfig(e_step="approx"), n_lambda=20)
for entry in path.entries[::4]:
    print(f"lambda={entry.lam:.4f}  edges={entry.df}")

# Pick one penalty with the extended BIC and compare against the truth.
k = ebic_select(path, gamma=0.5)
m = confusion_metrics(path[k].adjacency, true)
fpr, tpr, auc = roc_curve(path, true)
print(f"eBIC picks lambda={path[k].lam:.4f} with {path[k].df} edges")
print(f"F1={m.f1:.3f}  SEN={m.sen:.3f}  SPE={m.spe:.3f}  oracle F1={oracle_f1(path, true):.3f}  AUC={auc:.3f}")
