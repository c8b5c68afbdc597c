"""Diagonal bias-correction estimates for the measurement-error regimes."""
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Provenance
from .mathcore import as_real_vector

__all__ = ["GammaEstimate", "known_additive", "mar_estimate", "load_external",
           "mar_b_eps", "read_gamma_json", "write_gamma_json"]


@dataclass(frozen=True, eq=False)
class GammaEstimate:
    """Diagonal of the bias-correction matrix, with precision bound ``b_eps``
    holding with probability at least ``1 - eps``."""

    diag: np.ndarray
    b_eps: float = 0.0
    eps: float = 0.05

    def __post_init__(self):
        diag = as_real_vector(self.diag, "gamma diagonal").copy()
        if np.any(diag < 0):
            raise ValueError("gamma diagonal entries must be >= 0")
        if not (math.isfinite(self.b_eps) and self.b_eps >= 0):
            raise ValueError("b_eps must be finite and >= 0")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        diag.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "b_eps", float(self.b_eps))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def p(self):
        return self.diag.size

    def restrict(self, columns):
        return GammaEstimate(self.diag[np.asarray(columns, dtype=np.int64)], self.b_eps, self.eps)

    def to_dict(self):
        return {"diag": self.diag.tolist(), "b_eps": self.b_eps, "eps": self.eps}


def known_additive(sigma_w, p, eps=0.05):
    """sigma_w^2 I with b_eps = 0 (known additive noise level)."""
    if sigma_w < 0:
        raise ValueError("sigma_w must be >= 0")
    return GammaEstimate(np.full(int(p), float(sigma_w) ** 2), 0.0, eps)


def mar_b_eps(n, p, eps=0.05, c=0.25):
    return c * math.sqrt(math.log(2.0 * p / eps) / n)


def mar_estimate(raw, eps=0.05, c_beps=0.25):
    """Rescaled surrogate design and plug-in diagonal for covariates missing at random.

    With pi_j the fraction of missing entries in column j, the surrogate is
    z_ij / (1 - pi_j) and the diagonal is pi_j / (1 - pi_j)^2 * mean_i(z_ij^2).
    """
    if raw.mask is None:
        raise ValueError("missing-at-random estimation needs a mask")
    n, p = raw.n, raw.p
    pi = 1.0 - raw.mask.mean(axis=0)
    if np.any(pi >= 1.0):
        bad = np.flatnonzero(pi >= 1.0).tolist()
        raise ValueError(f"columns {bad} are entirely missing")
    if np.any(pi > 0.95):
        warnings.warn("some columns are more than 95% missing", RuntimeWarning, stacklevel=2)
    keep = 1.0 - pi
    Zs = raw.Z / keep
    diag = pi / keep ** 2 * (raw.Z ** 2).mean(axis=0)
    surrogate = Dataset(raw.y, Zs, raw.mask, Provenance.MISSING_AT_RANDOM)
    return surrogate, GammaEstimate(diag, mar_b_eps(n, p, eps, c_beps), eps)


def load_external(diag, b_eps, eps):
    return GammaEstimate(np.asarray(diag, dtype=np.float64), b_eps, eps)


def write_gamma_json(gamma, path):
    with open(path, "w") as fh:
        json.dump(gamma.to_dict(), fh, indent=2)


def read_gamma_json(path):
    with open(path) as fh:
        obj = json.load(fh)
    try:
        return load_external(obj["diag"], obj["b_eps"], obj["eps"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from exc
