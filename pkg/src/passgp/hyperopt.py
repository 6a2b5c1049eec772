"""Marginal-likelihood ascent over log-hyperparameters.

Conjugate-gradient directions with a backtracking line search enforcing
sufficient increase. Every objective evaluation is a fresh EP fit, so the
budget is counted in evaluations, not iterations. The returned
hyperparameters never score worse than the initial ones: the best
evaluated point wins. Disabled jitter (-inf) components are frozen.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .ep import EPConfig, ep_fit, log_ml_gradient
from .errors import FactorizationError, NumericalError
from .kernels import kernel_matrix, kernel_matrix_grads

logger = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    max_evals: int = 20
    grad_tol: float = 1e-4
    armijo_c1: float = 1e-4
    log_theta_bound: float = 10.0
    warm_start: bool = True
    debug_fd_check: bool = False

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")


def _clamp(lt, bound, frozen):
    out = np.clip(lt, -bound, bound)
    out[frozen] = -np.inf
    return out


def optimize(X_A, y_A, kernel, opt=None, ep_config=None, trace=None):
    """Return a KernelSpec maximizing log Z over the active set.

    ``trace``, when a list, receives one (eval_index, log_theta, objective,
    grad_inf_norm) tuple per accepted iterate. Monotone over the trace.
    """
    opt = opt if opt is not None else OptimizerConfig()
    ep_config = ep_config if ep_config is not None else EPConfig()
    X_A = np.asarray(X_A, dtype=float)
    y_A = np.asarray(y_A)
    if len(np.unique(y_A)) < 2:
        raise ValueError("hyperparameter optimization needs both classes present")

    lt_init = np.asarray(kernel.log_theta, dtype=float)
    frozen = ~np.isfinite(lt_init)
    lt = _clamp(lt_init.copy(), opt.log_theta_bound, frozen)
    n_evals = 0

    def evaluate(lt_try, count=True):
        nonlocal n_evals
        if count:
            n_evals += 1
        spec = kernel.with_log_theta(lt_try)
        try:
            K = kernel_matrix(spec, X_A, symmetric=True)
            state = ep_fit(K, y_A, ep_config)
        except (FactorizationError, NumericalError) as exc:
            logger.debug("objective evaluation failed at %s: %s", lt_try, exc)
            return None, None
        if not state.converged:
            logger.debug("EP did not converge at %s; rejecting", lt_try)
            return None, None
        return state.log_z_ep, state

    def gradient(lt_at, state):
        spec = kernel.with_log_theta(lt_at)
        g = log_ml_gradient(state, kernel_matrix_grads(spec, X_A))
        g[frozen] = 0.0
        return g

    f, state = evaluate(lt)
    if f is None:
        logger.warning("EP failed at the initial hyperparameters; returning them")
        return kernel.with_log_theta(lt)
    best_f, best_lt = f, lt.copy()
    g = gradient(lt, state)
    if trace is not None:
        trace.append((n_evals, tuple(lt), f, float(np.abs(g).max())))
    if opt.debug_fd_check:
        _fd_spot_check(
            evaluate_fn=lambda v: evaluate(v, count=False)[0], lt=lt, g=g, frozen=frozen
        )
    if np.abs(g).max() < opt.grad_tol:
        return kernel.with_log_theta(lt)

    d = g.copy()
    step = 1.0
    while n_evals < opt.max_evals:
        gd = float(g @ d)
        if gd <= 0.0:
            d = g.copy()
            gd = float(g @ g)
            if gd <= 0.0:
                break
        # backtracking line search with sufficient increase
        t = step
        accepted = False
        while n_evals < opt.max_evals:
            lt_try = _clamp(lt + t * d, opt.log_theta_bound, frozen)
            delta = np.zeros_like(lt)
            delta[~frozen] = lt_try[~frozen] - lt[~frozen]
            if not np.any(delta):
                break
            f_try, state_try = evaluate(lt_try)
            if f_try is not None and f_try >= f + opt.armijo_c1 * max(float(g @ delta), 0.0):
                accepted = True
                break
            t *= 0.5
            if t < 1e-10:
                break
        if not accepted:
            break
        g_new = gradient(lt_try, state_try)
        beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
        d = g_new + beta * d
        lt, f, g = lt_try, f_try, g_new
        if f > best_f:
            best_f, best_lt = f, lt.copy()
        if trace is not None:
            trace.append((n_evals, tuple(lt), f, float(np.abs(g).max())))
        logger.debug(
            "hyperopt eval %d: logZ=%.6f |grad|=%.2e theta=%s",
            n_evals, f, np.abs(g).max(), np.exp(lt),
        )
        if np.abs(g).max() < opt.grad_tol:
            break
        step = min(1.0, 2.0 * t)

    return kernel.with_log_theta(best_lt)


def _fd_spot_check(evaluate_fn, lt, g, frozen, h=1e-4):
    """Debug-mode sanity check of the analytic gradient at the start point."""
    for i in range(len(lt)):
        if frozen[i]:
            continue
        up, dn = lt.copy(), lt.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = evaluate_fn(up), evaluate_fn(dn)
        if fu is None or fd is None:
            continue
        fd_grad = (fu - fd) / (2.0 * h)
        if abs(fd_grad - g[i]) > 1e-3 * max(1.0, abs(fd_grad)):
            logger.warning(
                "gradient component %d: analytic %.6g vs finite-diff %.6g",
                i, g[i], fd_grad,
            )
