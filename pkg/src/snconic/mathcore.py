"""Scalar and vector numeric primitives: normal cdf/quantile, norms, tail gap."""
import math

import numpy as np

__all__ = [
    "DomainError",
    "as_real_vector",
    "as_real_matrix",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "lq_norm",
    "gaussian_tail_bound_gap",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the domain of a numeric primitive."""


def as_real_vector(values, name="vector"):
    """Return ``values`` as a 1-d float64 array, rejecting NaN/Inf."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_real_matrix(values, name="matrix"):
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def std_normal_cdf(x):
    """Phi(x), accurate in relative terms in both tails."""
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_sf(x):
    """1 - Phi(x) without cancellation."""
    return 0.5 * math.erfc(x / _SQRT2)


# Acklam's rational approximation (rel. error ~1e-9 before refinement).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _initial_quantile(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def _lower_quantile(p):
    # p <= 0.5: refine against the lower tail, where Phi has full relative accuracy
    x = _initial_quantile(p)
    for _ in range(2):
        e = std_normal_cdf(x) - p
        u = e * _SQRT2PI * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def std_normal_quantile(prob):
    """Inverse of the standard normal cdf.

    Rational initial guess followed by two Halley steps. Values above 1/2 are
    computed as ``-quantile(1 - prob)`` so the function is antisymmetric.
    """
    prob = float(prob)
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob!r}")
    if prob == 0.5:
        return 0.0
    if prob < 0.5:
        return _lower_quantile(prob)
    return -_lower_quantile(1.0 - prob)


def lq_norm(v, q):
    """l_q norm for q in {0, 1, 2, inf}; q=0 counts exact nonzeros."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("lq_norm of an empty vector")
    if q == 0:
        return float(np.count_nonzero(v))
    if q == 1:
        return float(np.abs(v).sum())
    if q == 2:
        return float(np.linalg.norm(v))
    if q == math.inf or q == "inf":
        return float(np.abs(v).max())
    raise ValueError(f"unsupported norm selector {q!r}")


def gaussian_tail_bound_gap(a, gamma):
    """{1 - Phi(a)} exp(2 a^2 gamma) - {1 - Phi(a / (1 + gamma))}.

    Nonnegative for every a >= 1 and gamma > 0.
    """
    if a < 1.0:
        raise DomainError(f"a must be >= 1, got {a!r}")
    if gamma <= 0.0:
        raise DomainError(f"gamma must be > 0, got {gamma!r}")
    return std_normal_sf(a) * math.exp(2.0 * a * a * gamma) - std_normal_sf(a / (1.0 + gamma))
