"""Comparison estimators: Lasso, the Dantzig selector and the BRT conic estimator."""
import enum
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .builder import TRUNCATION
from .cones import ConeKind, ConeSpec
from .dataset import Dataset
from .gamma import GammaEstimate
from .mathcore import as_real_matrix, as_real_vector, std_normal_quantile
from .solver import ConicProgram, SolverSettings, SolverStatus, solve

__all__ = [
    "Method",
    "Design",
    "BaselineConfig",
    "BaselineError",
    "lasso",
    "lasso_default_lambda",
    "dantzig",
    "dantzig_default_lambda",
    "brt_conic",
    "brt_default_tau",
    "brt_default_mu",
    "run_baseline",
]


class BaselineError(RuntimeError):
    pass


class Method(enum.Enum):
    LASSO = "lasso"
    DANTZIG = "dantzig"
    BRT_CONIC = "brt-conic"


class Design(enum.Enum):
    OBSERVED = "observed"
    ORACLE = "oracle"


def lasso_default_lambda(n, p, alpha=0.05, c=1.1, sigma=1.0):
    """Penalty for the (1/2n)-scaled loss used by :func:`lasso`.

    The usual pivotal level is 2 c sigma n^{-1/2} Phi^{-1}(1 - alpha / (2p)) for
    the loss (1/n)||y - X b||^2; halving it gives the same estimator here.
    """
    return c * sigma * std_normal_quantile(1.0 - alpha / (2.0 * p)) / math.sqrt(n)


def dantzig_default_lambda(n, p):
    return math.sqrt(2.0 * math.log(p) / n) if p > 1 else math.sqrt(2.0 / n)


def brt_default_tau(n, p, sigma_xi=1.0, epsilon=0.05):
    return sigma_xi * math.sqrt(math.log(p / epsilon) / n)


def brt_default_mu(n, p, epsilon=0.05):
    return math.sqrt(math.log(p / epsilon) / n)


def lasso(design, y, lam, tol=1e-8, max_iter=100000):
    """Minimize (1/2n)||y - X b||^2 + lam ||b||_1 by cyclic coordinate descent."""
    X = as_real_matrix(design, "design")
    y = as_real_vector(y, "y")
    if y.size != X.shape[0]:
        raise ValueError("design and y disagree on n")
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    beta = np.zeros(X.shape[1])
    _kernels.lasso_cd(X, y, lam, beta, tol, max_iter)
    return beta


def _score_box_program(M, g, bound, mu=None, lam=1.0):
    """min ||b||_1 [+ lam r] s.t. |g - M b|_inf <= bound [+ mu r], [||b||_2 <= r].

    Variables (b, v[, r]); M is p x p dense. With ``mu`` None there is no r and
    the program is a pure LP.
    """
    p = M.shape[1]
    with_r = mu is not None
    d = 2 * p + (1 if with_r else 0)
    ir = 2 * p
    rows, cols, vals = [], [], []
    b = []
    ib = np.arange(p)
    # v - b >= 0 and v + b >= 0, rows written as s = b - A theta
    for sign in (1.0, -1.0):
        r0 = len(b)
        rows += [r0 + ib, r0 + ib]
        cols += [ib, ib + p]
        vals += [np.full(p, sign), np.full(p, -1.0)]
        b += [0.0] * p
    # bound (+ mu r) -/+ (g - M b) >= 0
    mr, mc = np.nonzero(M)
    for sign in (1.0, -1.0):
        r0 = len(b)
        rows.append(r0 + mr)
        cols.append(mc)
        vals.append(-sign * M[mr, mc])
        if with_r and mu != 0:
            rows.append(r0 + ib)
            cols.append(np.full(p, ir))
            vals.append(np.full(p, -mu))
        b += list(bound - sign * g)
    cones = [ConeSpec(ConeKind.NONNEG, len(b))]
    if with_r:
        r0 = len(b)
        rows += [np.array([r0]), r0 + 1 + ib]
        cols += [np.array([ir]), ib]
        vals += [np.array([-1.0]), np.full(p, -1.0)]
        b += [0.0] * (p + 1)
        cones.append(ConeSpec(ConeKind.SOC, p + 1))
    c = np.zeros(d)
    c[p:2 * p] = 1.0
    if with_r:
        c[ir] = lam
    return ConicProgram.from_triplets(
        c,
        np.concatenate([np.asarray(r, dtype=np.int64) for r in rows]),
        np.concatenate([np.asarray(x, dtype=np.int64) for x in cols]),
        np.concatenate([np.asarray(v, dtype=np.float64) for v in vals]),
        np.asarray(b, dtype=np.float64),
        cones,
    )


def _solve_box(prog, p, settings):
    res = solve(prog, settings or SolverSettings())
    if res.status in (SolverStatus.INFEASIBLE, SolverStatus.UNBOUNDED):
        raise BaselineError(f"baseline program reported {res.status.value}")
    beta = res.theta[:p].copy()
    beta[np.abs(beta) < TRUNCATION] = 0.0
    return beta, res


# the relative residuals scale with ||b||, so the LP is solved tighter than the default
_DANTZIG_SETTINGS = SolverSettings(eps_primal=1e-9, eps_dual=1e-9, eps_gap=1e-9)


def dantzig(design, y, lam, settings=None, return_result=False):
    """min ||b||_1 s.t. ||X'(y - X b)/n||_inf <= lam, solved as an LP."""
    X = as_real_matrix(design, "design")
    y = as_real_vector(y, "y")
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    n, p = X.shape
    M = X.T @ X / n
    g = X.T @ y / n
    beta, res = _solve_box(_score_box_program(M, g, np.full(p, float(lam))), p,
                           settings or _DANTZIG_SETTINGS)
    return (beta, res) if return_result else beta


def brt_conic(dataset, gamma, sigma_xi=1.0, epsilon=0.05, mu=None, lam=1.0, settings=None,
              return_result=False):
    """min ||b||_1 + lam r s.t. ||Z'(y - Z b)/n + G b||_inf <= mu r + tau, ||b||_2 <= r."""
    if not isinstance(dataset, Dataset) or not isinstance(gamma, GammaEstimate):
        raise TypeError("brt_conic expects a Dataset and a GammaEstimate")
    if not sigma_xi > 0:
        raise ValueError("sigma_xi must be > 0")
    n, p = dataset.n, dataset.p
    tau = brt_default_tau(n, p, sigma_xi, epsilon)
    mu = brt_default_mu(n, p, epsilon) if mu is None else float(mu)
    Z = dataset.Z
    M = Z.T @ Z / n - np.diag(gamma.diag)
    g = Z.T @ dataset.y / n
    prog = _score_box_program(M, g, np.full(p, tau), mu=mu, lam=float(lam))
    beta, res = _solve_box(prog, p, settings)
    return (beta, res) if return_result else beta


@dataclass(frozen=True)
class BaselineConfig:
    which: Method = Method.LASSO
    # None selects the method's default tuning
    lam: float = None
    sigma_xi_assumed: float = 1.0
    design: Design = Design.OBSERVED
    epsilon: float = 0.05
    mu: float = None
    brt_lambda: float = 1.0
    lasso_c: float = 1.1
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "which", Method(self.which))
        object.__setattr__(self, "design", Design(self.design))
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be > 0")
        if not self.sigma_xi_assumed > 0:
            raise ValueError("sigma_xi_assumed must be > 0")

    def to_dict(self):
        return {
            "which": self.which.value, "lam": self.lam, "sigma_xi_assumed": self.sigma_xi_assumed,
            "design": self.design.value, "epsilon": self.epsilon, "mu": self.mu,
            "brt_lambda": self.brt_lambda, "lasso_c": self.lasso_c, "alpha": self.alpha,
        }


def run_baseline(config, dataset, gamma=None, oracle_x=None, settings=None):
    """Run the configured baseline; returns ``(beta, info)``."""
    t0 = time.perf_counter()
    X = dataset.Z
    if config.design is Design.ORACLE:
        if oracle_x is None:
            raise ValueError("oracle design requested but no oracle X supplied")
        X = np.asarray(oracle_x)
    n, p = X.shape
    info = {"method": config.which.value, "design": config.design.value}
    if config.which is Method.LASSO:
        lam = config.lam or lasso_default_lambda(n, p, config.alpha, config.lasso_c,
                                                 config.sigma_xi_assumed)
        beta = lasso(X, dataset.y, lam)
        beta[np.abs(beta) < TRUNCATION] = 0.0
        info["lambda"] = lam
    elif config.which is Method.DANTZIG:
        lam = config.lam or dantzig_default_lambda(n, p)
        beta, res = dantzig(X, dataset.y, lam, settings, return_result=True)
        info.update({"lambda": lam, "status": res.status.value, "iterations": res.iterations})
    else:
        if gamma is None:
            raise ValueError("brt-conic needs a gamma estimate")
        ds = dataset if config.design is Design.OBSERVED else Dataset(dataset.y, X)
        gm = gamma if config.design is Design.OBSERVED else GammaEstimate(np.zeros(p))
        beta, res = brt_conic(ds, gm, config.sigma_xi_assumed, config.epsilon, config.mu,
                              config.brt_lambda, settings, return_result=True)
        info.update(status=res.status.value, iterations=res.iterations)
    info["time_s"] = time.perf_counter() - t0
    return beta, info
