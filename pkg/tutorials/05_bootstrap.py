"""Edge stability by bootstrap: how often each edge, and each sign, is selected."""
import warnings

import numpy as np

from epinet import EMConfig, SimulationSpec, bootstrap_network, prepare, simulate

net, g, _ = simulate(SimulationSpec(p=15, n=200, groups=3, seed=5))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    g, keep = prepare(g)

res = bootstrap_network(g, B=20, cfg=EMConfig(e_step="approx"), seed=0)
# frequency is only defined for edges of the full-data fit (NaN elsewhere)
iu = np.triu_indices(g.p, 1)
edges = [(i, j) for i, j in zip(*iu) if res.theta[i, j] != 0]
print(f"{len(edges)} edges in the full-data fit, {res.failed} failed replicates")
for i, j in sorted(edges, key=lambda e: -res.frequency[e])[:10]:
    truth = "true" if net.adjacency[keep[i], keep[j]] else "false"
    print(f"{g.names[i]}-{g.names[j]}: kept in {res.frequency[i, j]:.0%} of resamples, "
          f"positive {res.positive[i, j]:.0%}, negative {res.negative[i, j]:.0%} ({truth} edge)")
