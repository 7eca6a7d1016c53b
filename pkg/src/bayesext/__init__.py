"""Bayes extended estimators for curved exponential families.

Posterior means of expectation parameters, their geometry and asymptotic
expansions, and KL-risk experiments on the Fisher circle model and the
spiked covariance model.
"""

__version__ = "0.1.0"

from .errors import ConvergenceError, DegeneracyError, GeometryError, ParameterDomainError  # noqa: E402,F401
from .expfam import (CurvedModel, DataSummary, GaussianCovarianceFamily, GaussianMeanFamily,  # noqa: E402,F401
                     eta_to_theta, kl_divergence, mle, theta_to_eta)
from .geometry import (ancillary_frame, embedding_curvature, expansion_estimator, geometry_at,  # noqa: E402,F401
                       optimal_beta, risk_improvement)
from .sampling import RngStream  # noqa: E402,F401
