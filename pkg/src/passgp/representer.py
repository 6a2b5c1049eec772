"""Kernel-expansion weights of the posterior mean.

The posterior mean of a fitted classifier is K alpha; the weight of a
training point is the log-derivative of its cavity predictive
probability, which for the probit likelihood gives

    alpha_n = y_n phi(z_n) / (Phi(z_n) sqrt(1 + v_n)),
    z_n = y_n m_n / sqrt(1 + v_n),

with (m_n, v_n) the cavity moments. The same quantity for a candidate
point, with the full predictive moments in place of the cavity ones,
predicts the weight the point would get if it were added, without
refitting. Weights decay like exp(-z^2/2), which is why thresholding
predictive probabilities yields effectively sparse models.

All functions here are read-only over a fitted state.
"""

import math
from dataclasses import dataclass

import numpy as np

from .ep import _cavity_arrays, predict_batch, prediction_weights
from .errors import NumericalError
from .stats import inv_mills_vec

ASYMPTOTIC_Z_MIN = 4.0

_PATH_AGREEMENT_TOL = 1e-6


@dataclass
class WeightVector:
    alpha: np.ndarray


def weights(state, y_A):
    """Exact expansion weights of a fitted state.

    Computes alpha both from the site parameters (the value returned,
    which satisfies K alpha = posterior mean to solver precision) and
    from the cavity formula, and insists the two agree; a mismatch means
    the state is not at an EP fixed point.
    """
    if not state.converged:
        raise NumericalError("weights require a converged EP state")
    yf = np.asarray(y_A, dtype=float)
    alpha = prediction_weights(state)

    m_cav, v_cav = _cavity_arrays(state)
    root = np.sqrt(1.0 + v_cav)
    z = yf * m_cav / root
    alpha_cavity = yf * inv_mills_vec(z) / root

    if not np.allclose(alpha, alpha_cavity, rtol=_PATH_AGREEMENT_TOL,
                       atol=_PATH_AGREEMENT_TOL):
        worst = int(np.argmax(np.abs(alpha - alpha_cavity)))
        raise NumericalError(
            "site-based and cavity-based weights disagree; state is not "
            "at a fixed point",
            site=worst,
        )
    return WeightVector(alpha=alpha)


def weight_diagnostics(state, y_A):
    """(z, alpha) per active point, as dumped by the CLI weights command."""
    yf = np.asarray(y_A, dtype=float)
    m_cav, v_cav = _cavity_arrays(state)
    z = yf * m_cav / np.sqrt(1.0 + v_cav)
    return z, prediction_weights(state)


def predicted_weight(model, k_star, k_ss, y_star):
    """Weight a new point would take if added to the active set.

    Uses the full predictive moments; adding several points at once
    invalidates the individual predictions (the mandatory EP refit after
    a batch update is what corrects this).
    """
    if y_star not in (-1, 1):
        raise ValueError("y_star must be -1 or +1")
    m_star, v_star = predict_batch(
        model.ep_state, np.asarray(k_star, dtype=float)[None, :], [float(k_ss)]
    )
    root = math.sqrt(1.0 + float(v_star[0]))
    z = y_star * float(m_star[0]) / root
    return y_star * float(inv_mills_vec(z)) / root


def asymptotic_weight(z, v):
    """Large-z closed form exp(-z^2/2)/sqrt(2 pi (1+v)), unsigned.

    Supported regime is z >= 4 where Phi(z) is within 4e-5 of one; below
    that the caller should use the exact formula.
    """
    if v < 0.0:
        raise ValueError("v must be non-negative")
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi * (1.0 + v))
