"""Planted epistatic networks and discretized genotype data.

Markers are split into linkage groups (chromosomes). Inside a group every
marker is linked to its neighbour, any other same-group pair gets an edge
with probability ``alpha`` and any cross-group pair with probability
``beta``. Latent rows are drawn from N(0, inv(theta)) or from a t(3)
distribution with the same covariance and cut into ``k`` ordinal states.
"""
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .data import CutPointTable, GenotypeMatrix, MarkerMap


@dataclass
class SimulationSpec:
    p: int = 90
    n: int = 360
    k: int = 3
    groups: int = 5
    alpha: float = 0.01
    beta: float = 0.02
    latent: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValueError("p and n must be positive")
        if not 1 <= self.groups <= self.p:
            raise ValueError("groups must lie in 1..p")
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha and beta are probabilities")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.latent not in ("normal", "t3"):
            raise ValueError("latent must be 'normal' or 't3'")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrueNetwork:
    adjacency: np.ndarray
    chromosome: np.ndarray
    theta: np.ndarray

    @property
    def p(self):
        return self.adjacency.shape[0]

    @property
    def sigma(self):
        s = np.linalg.inv(self.theta)
        return 0.5 * (s + s.T)

    def marker_map(self, names=None):
        names = names or [f"m{j + 1}" for j in range(self.p)]
        chrom = [f"chr{c + 1}" for c in self.chromosome]
        pos = np.zeros(self.p)
        for c in np.unique(self.chromosome):
            idx = np.flatnonzero(self.chromosome == c)
            pos[idx] = np.arange(1, len(idx) + 1)
        return MarkerMap(names, chrom, pos)


def _streams(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def group_sizes(p, groups):
    """Split ``p`` markers into ``groups`` blocks, remainder on the first blocks."""
    base, extra = divmod(p, groups)
    return np.array([base + (1 if i < extra else 0) for i in range(groups)])


def simulate_network(spec, rng=None):
    """Backbone chains per chromosome plus random intra/inter-chromosomal edges."""
    net_rng, prec_rng, _ = _streams(spec.seed)
    rng = rng or net_rng
    p = spec.p
    chrom = np.repeat(np.arange(spec.groups), group_sizes(p, spec.groups))
    adj = np.zeros((p, p), dtype=bool)
    iu, ju = np.triu_indices(p, 1)
    same = chrom[iu] == chrom[ju]
    backbone = same & (ju == iu + 1)
    draws = rng.random(len(iu))
    prob = np.where(same, spec.alpha, spec.beta)
    edge = backbone | (~backbone & (draws < prob))
    adj[iu[edge], ju[edge]] = True
    adj |= adj.T
    theta = make_precision(adj, rng=prec_rng)
    return TrueNetwork(adj, chrom, theta)


def make_precision(adjacency, seed=None, rng=None, low=0.3, high=0.6, ridge=0.1):
    """Positive definite precision with support equal to ``adjacency``.

    Off-diagonal magnitudes are uniform on ``[low, high]`` with random sign,
    the diagonal is the absolute row sum plus ``ridge`` (strict diagonal
    dominance), and the matrix is rescaled so that its inverse has a unit
    diagonal.
    """
    rng = rng or np.random.default_rng(seed)
    adj = np.asarray(adjacency, dtype=bool)
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    p = adj.shape[0]
    iu, ju = np.triu_indices(p, 1)
    on = adj[iu, ju]
    vals = rng.uniform(low, high, size=on.sum()) * rng.choice([-1.0, 1.0], size=on.sum())
    theta = np.zeros((p, p))
    theta[iu[on], ju[on]] = vals
    theta += theta.T
    np.fill_diagonal(theta, np.abs(theta).sum(axis=1) + ridge)
    d = np.sqrt(np.diag(np.linalg.inv(theta)))
    theta = theta * d[:, None] * d[None, :]
    return 0.5 * (theta + theta.T)


def latent_quantile(u, latent):
    """Quantile function of a unit-variance latent marginal."""
    if latent == "normal":
        return ndtri(u)
    return stats.t.ppf(u, 3) * np.sqrt(1.0 / 3.0)


def simulate_latent(net, n, latent="normal", rng=None):
    rng = rng or np.random.default_rng()
    chol = np.linalg.cholesky(net.sigma)
    z = rng.standard_normal((n, net.p)) @ chol.T
    if latent == "t3":
        w = rng.chisquare(3, size=n)
        z = z / np.sqrt(w / 3.0)[:, None] * np.sqrt(1.0 / 3.0)
    return z


def simulate_genotypes(net, spec):
    """Latent draws cut at random quantiles into ``spec.k`` ordinal states.

    Returns
    -------
    GenotypeMatrix
    CutPointTable
        True cut-points on the standard-normal (copula) scale.
    ndarray, shape (n, p)
        The latent matrix, for diagnostics.
    """
    _, _, rng = _streams(spec.seed)
    z = simulate_latent(net, spec.n, spec.latent, rng)
    u = np.sort(rng.random((net.p, spec.k - 1)), axis=1)
    values = np.empty(z.shape, dtype=np.int64)
    cuts = []
    for j in range(net.p):
        interior = latent_quantile(u[j], spec.latent)
        values[:, j] = np.searchsorted(interior, z[:, j], side="left")
        cuts.append(np.concatenate([[-np.inf], ndtri(u[j]), [np.inf]]))
    g = GenotypeMatrix(values, np.full(net.p, spec.k), [f"m{j + 1}" for j in range(net.p)])
    return g, CutPointTable(cuts), z


def simulate(spec):
    """Network plus genotypes for one spec: ``(TrueNetwork, GenotypeMatrix, CutPointTable)``."""
    net = simulate_network(spec)
    g, cuts, _ = simulate_genotypes(net, spec)
    return net, g, cuts
