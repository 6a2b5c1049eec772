"""Marginal-likelihood decomposition over active and inactive sets.

The full-data marginal likelihood factors into the active-set term and a
conditional term for the inactive points. Two approximations of the
conditional term are provided: an accurate one that runs EP on the
inactive block under the conditional Gaussian prior (cubic in the
inactive size), and a cheap one that replaces the joint conditional by
the product of per-point predictive probabilities. The cheap variant
tends to sit below the accurate one because the joint distribution
reinforces compatible labels.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .ep import ep_fit, log_predictive_prob, prediction_weights
from .kernels import kernel_diag, kernel_matrix

logger = logging.getLogger(__name__)

# above this inactive-set size the cubic EP block gets costly
ACC_SIZE_WARNING = 2000
_SINGULAR_BOOST = 1e-8


@dataclass
class ConditionalPrior:
    """Gaussian prior over inactive function values given the active fit."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass
class MLDecomposition:
    log_z_ep_a: float
    log_z_app: float
    log_z_acc: float | None
    active_size: int
    timings: dict = field(default_factory=dict)


def conditional_prior(model, X_I):
    """Conditional moments of the inactive function values.

    The inactive self-covariance block keeps the kernel's training-diagonal
    jitter. With an empty active set this degenerates to the plain prior.
    """
    X_I = np.asarray(X_I, dtype=float)
    spec = model.kernel
    K_II = kernel_matrix(spec, X_I, symmetric=True)
    if model.active_size == 0:
        return ConditionalPrior(mean=np.zeros(len(X_I)), cov=K_II)
    state = model.ep_state
    K_IA = kernel_matrix(spec, X_I, model.X_active)
    mean = K_IA @ prediction_weights(state)
    V = solve_triangular(state.chol_b, state.sqrt_tau[:, None] * K_IA.T, lower=True)
    cov = K_II - V.T @ V
    cov = (cov + cov.T) / 2.0
    return ConditionalPrior(mean=mean, cov=cov)


def ep_fit_nonzero_mean(K, y, prior_mean, config=None):
    """EP marginal likelihood under a shifted Gaussian prior.

    Identical to ``ep_fit`` when the mean is zero; see that function for
    the contract.
    """
    return ep_fit(K, y, config, prior_mean=prior_mean)


def log_z_acc(model, X_I, y_I, config=None):
    """Accurate decomposition: active-set term plus an EP run on the
    inactive block under its conditional prior."""
    X_I = np.asarray(X_I, dtype=float)
    if len(X_I) == 0:
        return model.ep_state.log_z_ep
    if len(X_I) > ACC_SIZE_WARNING:
        logger.warning(
            "inactive set of %d points: the accurate term costs O(|I|^3)", len(X_I)
        )
    cp = conditional_prior(model, X_I)
    cov = cp.cov
    try:
        cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        # inactive points nearly interpolated by the active set
        logger.info("conditional covariance near-singular; boosting diagonal by %g",
                    _SINGULAR_BOOST)
        cov = cov + _SINGULAR_BOOST * np.eye(len(cov))
    inactive = ep_fit_nonzero_mean(cov, y_I, cp.mean, config)
    return model.ep_state.log_z_ep + inactive.log_z_ep


def log_z_app(model, X_I, y_I):
    """Cheap decomposition: active-set term plus per-point predictive
    log-probabilities of the inactive labels."""
    X_I = np.asarray(X_I, dtype=float)
    base = model.ep_state.log_z_ep
    if len(X_I) == 0:
        return base
    K_star = kernel_matrix(model.kernel, X_I, model.X_active)
    k_ss = kernel_diag(model.kernel, X_I, training=True)
    return base + float(log_predictive_prob(model.ep_state, K_star, k_ss, y_I).sum())


def decompose(model, X_I, y_I, with_acc=True, config=None):
    """Compute the full decomposition with per-term wall-clock timings."""
    t0 = time.perf_counter()
    app = log_z_app(model, X_I, y_I)
    t_app = time.perf_counter() - t0
    acc = None
    t_acc = None
    if with_acc:
        t0 = time.perf_counter()
        acc = log_z_acc(model, X_I, y_I, config)
        t_acc = time.perf_counter() - t0
    return MLDecomposition(
        log_z_ep_a=model.ep_state.log_z_ep,
        log_z_app=app,
        log_z_acc=acc,
        active_size=model.active_size,
        timings={"seconds_app": t_app, "seconds_acc": t_acc},
    )
