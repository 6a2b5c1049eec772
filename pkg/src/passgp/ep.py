"""Expectation propagation for probit Gaussian-process classification.

Each binary label contributes a probit factor that EP replaces by an
unnormalized Gaussian site, parameterized internally in natural form
(precision tau, precision-adjusted mean nu). Sites are updated
sequentially in a seeded random order per sweep; the posterior is
maintained by rank-one updates inside a sweep and recomputed from a
Cholesky factorization at the end of each sweep for stability.

Supports an optional nonzero prior mean, in which case the marginal
likelihood generalizes to the shifted-prior integral; with a zero mean
everything reduces to the standard equations.

A fitted ``EPState`` is read-only and safe to share across threads;
fitting itself mutates state owned by a single caller.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from . import backend
from .errors import FactorizationError, NumericalError
from .stats import log_norm_cdf_vec, norm_cdf_vec

logger = logging.getLogger(__name__)

_MIN_CAVITY_PREC = 1e-12


@dataclass
class EPConfig:
    """Fitting controls.

    tol is the max-abs change of the natural site parameters over one
    sweep below which the run counts as converged. damping blends each
    proposed site update with the previous value (1.0 = undamped); the
    default helps on near-duplicate inputs. seed drives the per-sweep
    site visiting order.
    """

    tol: float = 1e-6
    max_sweeps: int = 50
    damping: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass
class CavityParams:
    cavity_mean: float
    cavity_var: float


@dataclass
class PredictiveResult:
    mean: float
    var: float
    prob: float


@dataclass
class EPState:
    """Converged (or stopped) site approximations plus posterior moments.

    site_mean/site_var are the serialized representation; nu/tau are the
    natural parameters actually used downstream and are derived from the
    serialized pair so that a save/load round trip is bit-exact. A site
    that was never informative has tau == 0 (site_var inf).
    """

    site_mean: np.ndarray
    site_var: np.ndarray
    nu: np.ndarray
    tau: np.ndarray
    post_mean: np.ndarray
    post_cov: np.ndarray
    log_z_ep: float
    n_sweeps: int
    converged: bool
    n_skipped: int
    prior_mean: np.ndarray | None
    chol_b: np.ndarray = field(repr=False)
    sqrt_tau: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.nu.shape[0]


def jittered_cholesky(A, max_tries=6):
    """Lower Cholesky factor with escalating diagonal jitter on failure."""
    try:
        return cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        scale = 1.0
    eps = 1e-12
    for _ in range(max_tries):
        try:
            L = cholesky(A + (eps * scale) * np.eye(A.shape[0]), lower=True)
            logger.warning("cholesky needed diagonal boost %.1e", eps * scale)
            return L
        except np.linalg.LinAlgError:
            eps *= 100.0
    raise FactorizationError("matrix not positive definite after jitter escalation")


def _validate_inputs(K, y):
    K = np.ascontiguousarray(K, dtype=float)
    y = np.asarray(y)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got {K.shape}")
    if y.shape != (K.shape[0],):
        raise ValueError("y length must match K")
    if not np.all(np.isfinite(K)):
        raise ValueError("K contains non-finite values")
    if not np.allclose(K, K.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(K).max())):
        raise ValueError("K must be symmetric")
    yi = y.astype(float)
    if not np.all(np.isin(yi, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    return K, yi


def _posterior(K, nu, tau, r0):
    """Stable posterior recomputation from site natural parameters.

    Works entirely in sqrt(tau) scalings so empty sites (tau == 0) cost
    nothing and nothing divides by tau.
    """
    n = nu.shape[0]
    s = np.sqrt(tau)
    B = np.eye(n) + (s[:, None] * K) * s[None, :]
    L = jittered_cholesky(B)
    V = solve_triangular(L, s[:, None] * K, lower=True)
    C = K - V.T @ V
    C = (C + C.T) / 2.0
    m = C @ (nu + r0)
    return C, m, L, s


def _cavity_arrays(state_or_parts):
    """Cavity means/variances for every site of a fitted state."""
    if isinstance(state_or_parts, EPState):
        c_nn = np.diag(state_or_parts.post_cov)
        m = state_or_parts.post_mean
        nu, tau = state_or_parts.nu, state_or_parts.tau
    else:
        c_nn, m, nu, tau = state_or_parts
    tau_cav = 1.0 / c_nn - tau
    bad = np.nonzero(tau_cav <= _MIN_CAVITY_PREC)[0]
    if bad.size:
        raise NumericalError("non-positive cavity variance", site=int(bad[0]))
    v_cav = 1.0 / tau_cav
    m_cav = (m / c_nn - nu) * v_cav
    return m_cav, v_cav


def _log_z(y, nu, tau, post_cov, post_mean, chol_b, prior_mean):
    """Marginal-likelihood approximation from a converged state.

    Grouped so that the per-site terms stay finite as tau -> 0, which
    happens for sites whose likelihood factor is locally flat.
    """
    m_cav, v_cav = _cavity_arrays(
        (np.diag(post_cov), post_mean, nu, tau)
    )
    z = y * m_cav / np.sqrt(1.0 + v_cav)
    m0 = prior_mean if prior_mean is not None else 0.0
    u = nu - tau * m0
    g = tau * (m_cav**2 - np.square(m0)) - 2.0 * nu * (m_cav - m0)
    denom = 1.0 + tau * v_cav
    return float(
        log_norm_cdf_vec(z).sum()
        + 0.5 * np.log1p(tau * v_cav).sum()
        - np.log(np.diag(chol_b)).sum()
        + 0.5 * ((g - v_cav * u**2) / denom).sum()
        + 0.5 * (u @ post_cov @ u)
    )


def ep_fit(K, y, config=None, prior_mean=None):
    """Run EP to convergence on a Gram matrix and labels.

    K must be symmetric positive definite (jitter included); y entries
    are -1/+1. Returns an ``EPState`` with converged=False if the sweep
    budget ran out first. Raises ``NumericalError`` with the offending
    site index if moments go non-finite.
    """
    cfg = config if config is not None else EPConfig()
    K, yf = _validate_inputs(K, y)
    n = K.shape[0]

    if prior_mean is not None:
        m0 = np.asarray(prior_mean, dtype=float)
        if m0.shape != (n,):
            raise ValueError("prior_mean length must match K")
    else:
        m0 = None
    if m0 is not None and np.any(m0 != 0.0):
        Lk = jittered_cholesky(K)
        r0 = solve_triangular(
            Lk.T, solve_triangular(Lk, m0, lower=True), lower=False
        )
    else:
        r0 = np.zeros(n)

    nu = np.zeros(n)
    tau = np.zeros(n)
    C = K.copy()
    m = m0.copy() if m0 is not None else np.zeros(n)
    w = nu + r0

    sweep = backend.get_module().ep_sweep
    rng = np.random.default_rng(cfg.seed)
    converged = False
    n_sweeps = 0
    n_skipped = 0
    for n_sweeps in range(1, cfg.max_sweeps + 1):
        order = rng.permutation(n).astype(np.int64)
        max_delta, skipped, bad = sweep(yf, nu, tau, m, C, w, order, cfg.damping)
        if bad >= 0:
            raise NumericalError("EP produced non-finite moments", site=int(bad))
        n_skipped += int(skipped)
        C, m, L, _ = _posterior(K, nu, tau, r0)
        if not np.all(np.isfinite(m)):
            raise NumericalError(
                "EP posterior mean went non-finite",
                site=int(np.nonzero(~np.isfinite(m))[0][0]),
            )
        if max_delta < cfg.tol:
            converged = True
            break
    if n_skipped:
        logger.debug("ep_fit skipped %d site updates", n_skipped)

    return _finalize(K, yf, nu, tau, r0, m0, n_sweeps, converged, n_skipped)


def _finalize(K, yf, nu, tau, r0, m0, n_sweeps, converged, n_skipped):
    # round-trip the natural parameters through the serialized (mean, var)
    # representation so a saved-and-reloaded model is bit-identical
    informative = tau > 0.0
    site_var = np.where(informative, np.divide(1.0, tau, where=informative), np.inf)
    site_mean = np.where(informative, np.divide(nu, tau, where=informative), 0.0)
    nu_c, tau_c = site_params_to_natural(site_mean, site_var)
    C, m, L, s = _posterior(K, nu_c, tau_c, r0)
    log_z = _log_z(yf, nu_c, tau_c, C, m, L, m0)
    if not math.isfinite(log_z):
        raise NumericalError("log marginal likelihood is non-finite")
    return EPState(
        site_mean=site_mean,
        site_var=site_var,
        nu=nu_c,
        tau=tau_c,
        post_mean=m,
        post_cov=C,
        log_z_ep=log_z,
        n_sweeps=n_sweeps,
        converged=converged,
        n_skipped=n_skipped,
        prior_mean=m0,
        chol_b=L,
        sqrt_tau=s,
    )


def site_params_to_natural(site_mean, site_var):
    """(site mean, site variance) -> (nu, tau); inf variance means empty."""
    site_var = np.asarray(site_var, dtype=float)
    site_mean = np.asarray(site_mean, dtype=float)
    with np.errstate(divide="ignore"):
        tau = np.where(np.isinf(site_var), 0.0, 1.0 / site_var)
    nu = np.where(np.isinf(site_var), 0.0, site_mean / site_var)
    return nu, tau


def rebuild_state(K, y, site_mean, site_var, prior_mean=None):
    """Reconstruct a full EPState from serialized site parameters."""
    K, yf = _validate_inputs(K, y)
    nu, tau = site_params_to_natural(site_mean, site_var)
    if prior_mean is not None and np.any(prior_mean != 0.0):
        Lk = jittered_cholesky(K)
        r0 = solve_triangular(
            Lk.T, solve_triangular(Lk, prior_mean, lower=True), lower=False
        )
        m0 = np.asarray(prior_mean, dtype=float)
    else:
        r0 = np.zeros(K.shape[0])
        m0 = None
    C, m, L, s = _posterior(K, nu, tau, r0)
    log_z = _log_z(yf, nu, tau, C, m, L, m0)
    return EPState(
        site_mean=np.asarray(site_mean, dtype=float),
        site_var=np.asarray(site_var, dtype=float),
        nu=nu,
        tau=tau,
        post_mean=m,
        post_cov=C,
        log_z_ep=log_z,
        n_sweeps=0,
        converged=True,
        n_skipped=0,
        prior_mean=m0,
        chol_b=L,
        sqrt_tau=s,
    )


def cavity_parameters(state, n):
    """Leave-one-site-out mean and variance for training index n."""
    if not 0 <= n < state.n:
        raise IndexError(f"site index {n} out of range")
    c_nn = state.post_cov[n, n]
    tau_cav = 1.0 / c_nn - state.tau[n]
    if tau_cav <= _MIN_CAVITY_PREC:
        raise NumericalError("non-positive cavity variance", site=int(n))
    v = 1.0 / tau_cav
    m = (state.post_mean[n] / c_nn - state.nu[n]) * v
    return CavityParams(cavity_mean=float(m), cavity_var=float(v))


def cavity_predictive(state, n, y_n):
    """Probability the cavity model assigns to label y_n at site n."""
    if y_n not in (-1, 1):
        raise ValueError("y_n must be -1 or +1")
    cav = cavity_parameters(state, n)
    z = y_n * cav.cavity_mean / math.sqrt(1.0 + cav.cavity_var)
    return float(norm_cdf_vec(z))


def cavity_predictive_all(state, y):
    """Vectorized cavity predictive probabilities for all sites."""
    m_cav, v_cav = _cavity_arrays(state)
    yf = np.asarray(y, dtype=float)
    return norm_cdf_vec(yf * m_cav / np.sqrt(1.0 + v_cav))


def prediction_weights(state):
    """alpha with posterior mean = K alpha; equals (K + site cov)^-1 site mean."""
    return state.nu - state.tau * state.post_mean


def predict_batch(state, K_star, k_ss):
    """Predictive means and variances for query cross-covariances.

    K_star has one row per query; k_ss is the per-query self-covariance
    (no jitter). Only valid for zero-prior-mean states.
    """
    if state.prior_mean is not None and np.any(state.prior_mean != 0.0):
        raise ValueError("prediction requires a zero-mean prior state")
    K_star = np.atleast_2d(np.asarray(K_star, dtype=float))
    if K_star.shape[1] != state.n:
        raise ValueError(
            f"cross-covariance width {K_star.shape[1]} != training size {state.n}"
        )
    k_ss = np.atleast_1d(np.asarray(k_ss, dtype=float))
    alpha = prediction_weights(state)
    m_star = K_star @ alpha
    V = solve_triangular(state.chol_b, state.sqrt_tau[:, None] * K_star.T, lower=True)
    v_star = k_ss - np.einsum("ij,ij->j", V, V)
    bad = np.nonzero(v_star <= 0.0)[0]
    if bad.size:
        raise NumericalError(
            "non-positive predictive variance; query self-covariance "
            "inconsistent with the training kernel",
            site=int(bad[0]),
        )
    return m_star, v_star


def predict(state, K, k_star, k_ss, y_star):
    """Predictive distribution of label y_star at one query point.

    K is the training Gram the state was fitted on (shape checked); the
    heavy factorizations are cached on the state.
    """
    if y_star not in (-1, 1):
        raise ValueError("y_star must be -1 or +1")
    K = np.asarray(K)
    if K.shape != (state.n, state.n):
        raise ValueError("K shape does not match the fitted state")
    k_star = np.asarray(k_star, dtype=float).ravel()
    m_star, v_star = predict_batch(state, k_star[None, :], [float(k_ss)])
    prob = float(norm_cdf_vec(y_star * m_star[0] / math.sqrt(1.0 + v_star[0])))
    return PredictiveResult(mean=float(m_star[0]), var=float(v_star[0]), prob=prob)


def predictive_prob(state, K_star, k_ss, y):
    """Probability assigned to labels y for a batch of queries."""
    m_star, v_star = predict_batch(state, K_star, k_ss)
    yf = np.asarray(y, dtype=float)
    return norm_cdf_vec(yf * m_star / np.sqrt(1.0 + v_star))


def log_predictive_prob(state, K_star, k_ss, y):
    """log of ``predictive_prob``, stable for extreme confidence."""
    m_star, v_star = predict_batch(state, K_star, k_ss)
    yf = np.asarray(y, dtype=float)
    return log_norm_cdf_vec(yf * m_star / np.sqrt(1.0 + v_star))


def log_ml_gradient(state, K_grads):
    """Gradient of log Z w.r.t. log-hyperparameters at fixed sites.

    Valid only at an EP fixed point, where the implicit dependence of the
    site parameters on the kernel drops out; hence the converged check.
    """
    if not state.converged:
        raise NumericalError("gradient requires a converged EP state")
    b = prediction_weights(state)
    tau = state.tau
    # (K + site cov)^-1 expressed without dividing by tau
    M = np.diag(tau) - (tau[:, None] * state.post_cov) * tau[None, :]
    out = np.empty(len(K_grads))
    for k, G in enumerate(K_grads):
        out[k] = 0.5 * (b @ G @ b) - 0.5 * float(np.sum(M * G))
    return out
