"""Pure-numpy implementations of the hot kernels.

Reference semantics for the JIT backend: the numba path must produce the
same results up to BLAS-vs-loop rounding. The EP sweep is sequential by
construction (each site update feeds the next through the posterior), so
this path pays one Python-level iteration per site.
"""

import math

import numpy as np

from .stats import inv_mills

# cavity precisions below this are treated as numerically singular
MIN_CAVITY_PREC = 1e-12


def ep_sweep(y, nu, tau, post_mean, post_cov, w, order, damping):
    """One sequential pass of EP site updates over ``order``.

    Mutates nu, tau, post_mean, post_cov and w (= nu + K^-1 m0) in place.
    Returns (max_delta, n_skipped, bad_site); bad_site is -1 unless a
    non-finite moment appeared, in which case it is the offending index.
    """
    max_delta = 0.0
    skipped = 0
    for n in order:
        c_nn = post_cov[n, n]
        if not c_nn > 0.0:
            return max_delta, skipped, int(n)
        tau_cav = 1.0 / c_nn - tau[n]
        if tau_cav <= MIN_CAVITY_PREC:
            skipped += 1
            continue
        v_cav = 1.0 / tau_cav
        nu_cav = post_mean[n] / c_nn - nu[n]
        m_cav = nu_cav * v_cav

        s = math.sqrt(1.0 + v_cav)
        z = y[n] * m_cav / s
        r = inv_mills(z)
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
        if not (math.isfinite(tau_new) and math.isfinite(nu_new)):
            return max_delta, skipped, int(n)
        dtau = tau_new - tau[n]
        dnu = nu_new - nu[n]
        denom = 1.0 + dtau * c_nn
        if denom <= MIN_CAVITY_PREC:
            skipped += 1
            continue

        col = post_cov[:, n].copy()
        post_cov -= np.outer((dtau / denom) * col, col)
        tau[n] = tau_new
        nu[n] = nu_new
        w[n] += dnu
        post_mean[:] = post_cov @ w

        max_delta = max(max_delta, abs(dtau), abs(dnu))
    return max_delta, skipped, -1


def sq_dists(X1, X2):
    """Pairwise squared Euclidean distances, (n1, n2).

    Uses the norm expansion; round-off can push tiny values negative, so
    the result is clamped at zero.
    """
    n1 = np.einsum("ij,ij->i", X1, X1)
    n2 = np.einsum("ij,ij->i", X2, X2)
    d2 = n1[:, None] + n2[None, :] - 2.0 * (X1 @ X2.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def sq_dists_sym(X):
    """Squared distances of X against itself with an exactly zero diagonal."""
    d2 = sq_dists(X, X)
    d2 = np.triu(d2, 1)
    d2 = d2 + d2.T
    return d2
