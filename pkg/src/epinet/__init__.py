"""Sparse Gaussian copula graphical models for ordinal genotype data.

The latent-variable model treats every marker as a discretized standard
normal coordinate. Its precision matrix is estimated by penalized EM with a
Gibbs or mean-field E-step and a graphical lasso M-step.
"""
__version__ = "0.1.0"

from .data import (  # noqa: E402
    MISSING,
    CutPointTable,
    DegenerateMarker,
    GenotypeError,
    GenotypeMatrix,
    MarkerMap,
    estimate_cutpoints,
    load_genotypes,
    prepare,
)
from .diagnostics import StationarityReport, heidelberger_welch  # noqa: E402
from .em import (  # noqa: E402
    EMConfig,
    PrecisionPath,
    deviance_test,
    ebic_select,
    fit_em,
    fit_path,
    observed_loglik,
    partial_correlations,
    stars_select,
)
from .evaluation import (  # noqa: E402
    bootstrap_network,
    confusion_metrics,
    npn_ns,
    npn_tau,
    roc_curve,
)
from .glasso import GlassoSolution, glasso_fit, kkt_check  # noqa: E402
from .latent import (  # noqa: E402
    ExpectedMoments,
    GibbsConfig,
    approx_expected_covariance,
    gibbs_expected_covariance,
    sample_truncated_mvn,
)
from .simulate import SimulationSpec, TrueNetwork, simulate, simulate_genotypes, simulate_network  # noqa: E402
from .truncnorm import truncated_normal_moments  # noqa: E402
