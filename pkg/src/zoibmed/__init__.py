"""Causal mediation analysis for outcomes and mediators on [0, 1] with boundary mass.

Mediator and outcome follow zero-one inflated beta (ZOIB) regressions;
natural direct and indirect effects (average and quantile) are computed by a
Monte Carlo g-formula, with bootstrap inference and sensitivity analyses for
unmeasured mediator-outcome confounding.
"""
from ._backend import NAME as BACKEND
from .errors import DataError, DomainError, FitError, QuantileConvergenceError, SeparationError, ZoibError
from .fit import BootstrapEnsemble, FittedModels, bootstrap_fit, fit_all, pilot_lambda_range
from .gformula import (
    EFFECTS,
    EffectEstimates,
    MonteCarloConfig,
    estimate_average_effects,
    estimate_quantile_effects,
    mc_error_estimate,
    sample_dirichlet_weights,
)
from .model import CoefficientSet, Dataset, ModelSpec
from .sensitivity import (
    SensitivityParams,
    estimate_effects_linear,
    estimate_effects_logit,
    sample_copula_mediators,
    sensitivity_grid,
)
from .zoib import ZoibParams, zoib_cdf, zoib_density, zoib_loglik, zoib_mean, zoib_quantile, zoib_sample

__version__ = "0.1.0"
