"""Numerically stable probit primitives.

The scalar variants use only the ``math`` module so the JIT backend can
compile the very same function objects; the array variants go through
scipy's erfcx/log_ndtr. Direct evaluation of phi(z)/Phi(z) underflows
below z of about -8, so the deep negative tail uses the Mills-ratio
continued fraction instead.
"""

import math

import numpy as np
from scipy import special

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# switch points validated against erfcx/log_ndtr to ~1e-14 relative
_TAIL_Z = -6.0
_LOG_PHI_TAIL_Z = -33.0
_MILLS_CF_DEPTH = 24


def norm_pdf(z):
    """Standard normal density, scalar."""
    return math.exp(-0.5 * z * z - _LOG_SQRT_2PI)


def log_norm_cdf(z):
    """log Phi(z), scalar, stable over the whole real line."""
    if z > 0.0:
        # keep relative precision where Phi(z) is close to one
        return math.log1p(-0.5 * math.erfc(z / _SQRT2))
    if z > _LOG_PHI_TAIL_Z:
        return math.log(0.5 * math.erfc(-z / _SQRT2))
    # asymptotic expansion of the lower tail
    zi2 = 1.0 / (z * z)
    series = -zi2 * (1.0 - 3.0 * zi2 * (1.0 - 5.0 * zi2 * (1.0 - 7.0 * zi2)))
    return -0.5 * z * z - _LOG_SQRT_2PI - math.log(-z) + math.log1p(series)


def inv_mills(z):
    """phi(z)/Phi(z), scalar, stable for large negative z."""
    if z > _TAIL_Z:
        # self-contained so the JIT backend can compile this body directly
        return math.exp(-0.5 * z * z - _LOG_SQRT_2PI) / (0.5 * math.erfc(-z / _SQRT2))
    # continued fraction for the reciprocal Mills ratio at x = -z
    x = -z
    t = x
    for k in range(_MILLS_CF_DEPTH, 0, -1):
        t = x + k / t
    return t


def log_norm_cdf_vec(z):
    """log Phi(z) elementwise."""
    return special.log_ndtr(np.asarray(z, dtype=float))


def inv_mills_vec(z):
    """phi(z)/Phi(z) elementwise via the scaled complementary error function."""
    z = np.asarray(z, dtype=float)
    return math.sqrt(2.0 / math.pi) / special.erfcx(-z / _SQRT2)


def norm_cdf_vec(z):
    return special.ndtr(np.asarray(z, dtype=float))
