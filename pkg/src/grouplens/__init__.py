"""Chi-squared group inference with a de-biased scaled group Lasso."""

__version__ = "0.1.0"

from .core import (GroupPartition, RegressionProblem, SparsityPattern, default_weights,
                   validate)
from .diagnostics import (ConstantEstimate, check_ordering, constant_value,
                          estimate_constant, estimate_path, evaluate_functionals, sample_cone)
from .errors import (DegenerateScaleError, InfeasibleProjectionError, InvalidArgumentError,
                     RankDeficiencyError)
from .group_lasso import GroupLassoFit, fit_group_lasso, group_soft_threshold, kkt_certificate
from .inference import (GroupInferenceResult, confidence_region_contains, debias_beta,
                        debias_mu, group_test, ols_sigma)
from .projection import ProjectionBundle, feasibility_report, relaxed_projection
from .scaled import ScaledFit, fit_scaled
from .simulation import SimDesign, generate, run_replications

__all__ = [
    "GroupPartition", "RegressionProblem", "SparsityPattern", "default_weights", "validate",
    "ConstantEstimate", "check_ordering", "constant_value", "estimate_constant",
    "estimate_path", "evaluate_functionals", "sample_cone",
    "DegenerateScaleError", "InfeasibleProjectionError", "InvalidArgumentError",
    "RankDeficiencyError",
    "GroupLassoFit", "fit_group_lasso", "group_soft_threshold", "kkt_certificate",
    "GroupInferenceResult", "confidence_region_contains", "debias_beta", "debias_mu",
    "group_test", "ols_sigma",
    "ProjectionBundle", "feasibility_report", "relaxed_projection",
    "ScaledFit", "fit_scaled",
    "SimDesign", "generate", "run_replications",
]
