"""Covariance functions, Gram matrices and log-hyperparameter gradients.

Hyperparameters live in the log domain so positivity is structural. A
disabled jitter is the sentinel ``log_theta[2] = -inf`` (theta3 exactly
zero); optimizers must treat -inf components as frozen.

All functions are pure and a ``KernelSpec`` is immutable, so concurrent
use needs no locking.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import backend

POLY_DEGREE = 9


class KernelFamily(enum.Enum):
    SE_JITTER = "se"
    SE_JITTER_LINEAR = "se-linear"
    POLY9 = "poly9"


_ARITY = {
    KernelFamily.SE_JITTER: 3,
    KernelFamily.SE_JITTER_LINEAR: 4,
    KernelFamily.POLY9: 1,
}


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family plus log-domain hyperparameters.

    SE families: log_theta = (log signal variance, log squared length
    scale, log jitter[, log linear coefficient]). POLY9: (log scale,)
    with the exponent fixed at ``degree``.
    """

    family: KernelFamily
    log_theta: tuple
    degree: int = POLY_DEGREE

    def __post_init__(self):
        lt = tuple(float(v) for v in self.log_theta)
        object.__setattr__(self, "log_theta", lt)
        arity = _ARITY[self.family]
        if len(lt) != arity:
            raise ValueError(
                f"{self.family.value} takes {arity} log-hyperparameters, got {len(lt)}"
            )
        for i, v in enumerate(lt):
            if math.isnan(v) or v == math.inf:
                raise ValueError(f"log_theta[{i}] must be finite or -inf")
            if v == -math.inf and not (self.family is not KernelFamily.POLY9 and i == 2):
                raise ValueError("only the jitter component may be disabled (-inf)")

    @property
    def theta(self):
        return np.exp(np.asarray(self.log_theta))

    @property
    def n_params(self):
        return len(self.log_theta)

    def with_log_theta(self, log_theta):
        return KernelSpec(self.family, tuple(log_theta), self.degree)


def _check_features(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def kernel_eval(spec, x_i, x_j, same_index=False):
    """Covariance between two feature vectors.

    ``same_index`` must be True exactly when both arguments are the same
    row of one training set; only then does the jitter term apply.
    """
    x_i = np.asarray(x_i, dtype=float).ravel()
    x_j = np.asarray(x_j, dtype=float).ravel()
    if x_i.shape != x_j.shape:
        raise ValueError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(x_j))):
        raise ValueError("non-finite feature values")
    th = np.exp(np.asarray(spec.log_theta))
    if spec.family is KernelFamily.POLY9:
        return th[0] * (x_i @ x_j + 1.0) ** spec.degree
    d2 = float(np.sum((x_i - x_j) ** 2))
    val = th[0] * math.exp(-d2 / (2.0 * th[1]))
    if same_index:
        val += th[2]
    if spec.family is KernelFamily.SE_JITTER_LINEAR:
        val += th[3] * (x_i @ x_j)
    return val


def kernel_matrix(spec, X1, X2=None, symmetric=False):
    """Gram matrix between row sets.

    With ``symmetric=True`` (X2 omitted or identical to X1) the result is
    exactly symmetric and jitter is added on the diagonal; cross matrices
    never receive jitter.
    """
    X1 = _check_features(X1, "X1")
    if symmetric:
        if X2 is not None and X2 is not X1:
            X2c = _check_features(X2, "X2")
            if X2c.shape != X1.shape or not np.array_equal(X2c, X1):
                raise ValueError("symmetric=True requires X2 to equal X1")
        X2 = X1
    else:
        if X2 is None:
            raise ValueError("cross matrix needs X2")
        X2 = _check_features(X2, "X2")
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(
            f"feature dimension mismatch: {X1.shape[1]} vs {X2.shape[1]}"
        )

    th = np.exp(np.asarray(spec.log_theta))
    if spec.family is KernelFamily.POLY9:
        return th[0] * (X1 @ X2.T + 1.0) ** spec.degree

    hot = backend.get_module()
    if symmetric:
        d2 = hot.sq_dists_sym(X1)
    else:
        d2 = hot.sq_dists(X1, X2)
    K = th[0] * np.exp(-d2 / (2.0 * th[1]))
    if symmetric:
        K = np.triu(K) + np.triu(K, 1).T
    if spec.family is KernelFamily.SE_JITTER_LINEAR:
        lin = th[3] * (X1 @ X2.T)
        if symmetric:
            lin = np.triu(lin) + np.triu(lin, 1).T
        K = K + lin
    if symmetric and th[2] > 0.0:
        K[np.diag_indices_from(K)] += th[2]
    return K


def kernel_diag(spec, X, training=False):
    """Per-row self-covariances k(x, x).

    ``training=True`` marks rows of the training dataset itself, where the
    same-index jitter applies; leave False for external query points.
    """
    X = _check_features(X)
    th = np.exp(np.asarray(spec.log_theta))
    if spec.family is KernelFamily.POLY9:
        return th[0] * (np.einsum("ij,ij->i", X, X) + 1.0) ** spec.degree
    out = np.full(X.shape[0], th[0])
    if spec.family is KernelFamily.SE_JITTER_LINEAR:
        out = out + th[3] * np.einsum("ij,ij->i", X, X)
    if training and th[2] > 0.0:
        out = out + th[2]
    return out


def kernel_matrix_grads(spec, X):
    """d K / d log_theta_k for a symmetric training matrix, one entry per
    log-hyperparameter, in log_theta order."""
    X = _check_features(X)
    n = X.shape[0]
    th = np.exp(np.asarray(spec.log_theta))
    if spec.family is KernelFamily.POLY9:
        return [kernel_matrix(spec, X, symmetric=True)]

    hot = backend.get_module()
    d2 = hot.sq_dists_sym(X)
    K_se = th[0] * np.exp(-d2 / (2.0 * th[1]))
    K_se = np.triu(K_se) + np.triu(K_se, 1).T
    grads = [K_se, K_se * (d2 / (2.0 * th[1])), th[2] * np.eye(n)]
    if spec.family is KernelFamily.SE_JITTER_LINEAR:
        lin = X @ X.T
        grads.append(th[3] * (np.triu(lin) + np.triu(lin, 1).T))
    return grads
