"""Numba-compiled hot kernels: EP site sweep and squared-distance assembly.

Mirrors ``_sweep_numpy`` operation for operation. fastmath stays off so
both backends agree to rounding and runs are reproducible.
"""

import numpy as np
from numba import njit, prange

from ._sweep_numpy import MIN_CAVITY_PREC
from .stats import inv_mills, log_norm_cdf, norm_pdf

# compile the scalar probit helpers as-is
_norm_pdf = njit(cache=True)(norm_pdf)
_log_norm_cdf = njit(cache=True)(log_norm_cdf)
_inv_mills = njit(cache=True)(inv_mills)


@njit(cache=True)
def ep_sweep(y, nu, tau, post_mean, post_cov, w, order, damping):
    n_total = nu.shape[0]
    max_delta = 0.0
    skipped = 0
    for oi in range(order.shape[0]):
        n = order[oi]
        c_nn = post_cov[n, n]
        if not c_nn > 0.0:
            return max_delta, skipped, n
        tau_cav = 1.0 / c_nn - tau[n]
        if tau_cav <= MIN_CAVITY_PREC:
            skipped += 1
            continue
        v_cav = 1.0 / tau_cav
        nu_cav = post_mean[n] / c_nn - nu[n]
        m_cav = nu_cav * v_cav

        s = np.sqrt(1.0 + v_cav)
        z = y[n] * m_cav / s
        r = _inv_mills(z)
        mu_hat = m_cav + y[n] * v_cav * r / s
        var_hat = v_cav - v_cav * v_cav * r * (z + r) / (1.0 + v_cav)
        if var_hat <= 0.0:
            skipped += 1
            continue

        tau_prop = 1.0 / var_hat - tau_cav
        nu_prop = mu_hat / var_hat - nu_cav
        if tau_prop <= 0.0:
            skipped += 1
            continue

        tau_new = tau[n] + damping * (tau_prop - tau[n])
        nu_new = nu[n] + damping * (nu_prop - nu[n])
        if not (np.isfinite(tau_new) and np.isfinite(nu_new)):
            return max_delta, skipped, n
        dtau = tau_new - tau[n]
        dnu = nu_new - nu[n]
        denom = 1.0 + dtau * c_nn
        if denom <= MIN_CAVITY_PREC:
            skipped += 1
            continue

        col = post_cov[:, n].copy()
        coef = dtau / denom
        for i in range(n_total):
            ci = coef * col[i]
            for j in range(n_total):
                post_cov[i, j] -= ci * col[j]
        tau[n] = tau_new
        nu[n] = nu_new
        w[n] += dnu
        for i in range(n_total):
            acc = 0.0
            for j in range(n_total):
                acc += post_cov[i, j] * w[j]
            post_mean[i] = acc

        if abs(dtau) > max_delta:
            max_delta = abs(dtau)
        if abs(dnu) > max_delta:
            max_delta = abs(dnu)
    return max_delta, skipped, -1


@njit(cache=True, parallel=True)
def sq_dists(X1, X2):
    n1, d = X1.shape
    n2 = X2.shape[0]
    out = np.empty((n1, n2))
    for i in prange(n1):
        for j in range(n2):
            acc = 0.0
            for k in range(d):
                diff = X1[i, k] - X2[j, k]
                acc += diff * diff
            out[i, j] = acc
    return out


@njit(cache=True, parallel=True)
def sq_dists_sym(X):
    n, d = X.shape
    out = np.zeros((n, n))
    for i in prange(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out
