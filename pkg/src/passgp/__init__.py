"""Sparse Gaussian process classification by predictive active set selection.

EP inference for probit GP classifiers plus active-set training loops
that keep only the informative subset of the data, marginal-likelihood
approximations for the discarded remainder, and a CLI covering training,
prediction, evaluation and diagnostics.
"""

from .active_set import ActiveSetModel, Mode, PassConfig, fit
from .ep import (
    EPConfig,
    EPState,
    cavity_parameters,
    cavity_predictive,
    ep_fit,
    predict,
)
from .hyperopt import OptimizerConfig, optimize
from .kernels import KernelFamily, KernelSpec, kernel_eval, kernel_matrix
from .ml_approx import conditional_prior, ep_fit_nonzero_mean, log_z_acc, log_z_app
from .representer import asymptotic_weight, predicted_weight, weights

__version__ = "0.1.0"

__all__ = [
    "ActiveSetModel",
    "EPConfig",
    "EPState",
    "KernelFamily",
    "KernelSpec",
    "Mode",
    "OptimizerConfig",
    "PassConfig",
    "asymptotic_weight",
    "cavity_parameters",
    "cavity_predictive",
    "conditional_prior",
    "ep_fit",
    "ep_fit_nonzero_mean",
    "fit",
    "kernel_eval",
    "kernel_matrix",
    "log_z_acc",
    "log_z_app",
    "optimize",
    "predict",
    "predicted_weight",
    "weights",
    "__version__",
]
