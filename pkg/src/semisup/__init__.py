"""Semi-supervised inference built on semiparametric efficiency theory.

A supervised estimator with a known influence function is improved with
unlabeled covariates by regressing its influence values on functions of the
covariates and subtracting the fitted mean difference.
"""

from .basis import BasisSpec
from .core import (EstimateReport, InferenceProblem, InputError, LabeledData, NumericError,
                   PredictionUnsupported, SemisupError, UnlabeledData, UnsupportedProblem)
from .estimators import (BasisTooLarge, PredictionModelSet, Regime, efficient_estimate,
                         ppi_estimate, ppi_plus_plus_baseline, safe_estimate,
                         supervised_estimate)
from .numerics import MarginalMoments
from .problems import (AteProblem, KendallTauProblem, MeanProblem, PoissonGlmProblem,
                       VarianceUstatProblem, make_problem)
from .simulate import (DgpSpec, McConfig, NoisyOracle, PureNoise, estimate_bounds, generate,
                       get_dgp, run_monte_carlo, true_theta)

__version__ = "0.1.0"

__all__ = [
    "AteProblem", "BasisSpec", "BasisTooLarge", "DgpSpec", "EstimateReport", "InferenceProblem",
    "InputError", "KendallTauProblem", "LabeledData", "MarginalMoments", "McConfig",
    "MeanProblem", "NoisyOracle", "NumericError", "PoissonGlmProblem", "PredictionModelSet",
    "PredictionUnsupported", "PureNoise", "Regime", "SemisupError", "UnlabeledData",
    "UnsupportedProblem", "VarianceUstatProblem", "efficient_estimate", "estimate_bounds",
    "generate", "get_dgp", "make_problem", "ppi_estimate", "ppi_plus_plus_baseline",
    "run_monte_carlo", "safe_estimate", "supervised_estimate", "true_theta",
]
