"""Self-normalized conic estimator: tuning, fit, thresholding and refit."""
import enum
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .builder import TRUNCATION, SnTuning, build_sn_program, extract_solution
from .dataset import Dataset
from .gamma import GammaEstimate
from .mathcore import std_normal_quantile
from .solver import SolverSettings, SolverStatus, solve

__all__ = [
    "LambdaMode",
    "HnMode",
    "SnConfig",
    "EstimateReport",
    "Feasibility",
    "EstimationError",
    "compute_tau",
    "score",
    "t_of_beta",
    "compute_hn",
    "resolve_tuning",
    "fit",
    "threshold",
    "threshold_values",
    "refit",
    "feasibility_check",
]

# exact H_n up to this many columns when the mode is left to the default
HN_EXACT_MAX_P = 500


class EstimationError(RuntimeError):
    pass


class LambdaMode(enum.Enum):
    THEORETICAL = "theoretical"
    FIXED = "fixed"


class HnMode(enum.Enum):
    EXACT = "exact"
    UPPER_BOUND = "upper_bound"


@dataclass(frozen=True)
class SnConfig:
    alpha: float = 0.05
    tau_scale: float = 1.0
    lambda_mode: LambdaMode = LambdaMode.FIXED
    lambda_t: float = 1.0
    lambda_u: float = 0.25
    # None picks Exact for p <= 500 and UpperBound beyond
    hn_mode: HnMode = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    refit: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.tau_scale > 0:
            raise ValueError("tau_scale must be > 0")
        if self.lambda_t < 0 or self.lambda_u < 0:
            raise ValueError("lambda_t and lambda_u must be >= 0")
        object.__setattr__(self, "lambda_mode", LambdaMode(self.lambda_mode))
        if self.hn_mode is not None:
            object.__setattr__(self, "hn_mode", HnMode(self.hn_mode))

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "tau_scale": self.tau_scale,
            "lambda_mode": self.lambda_mode.value,
            "lambda_t": self.lambda_t,
            "lambda_u": self.lambda_u,
            "hn_mode": None if self.hn_mode is None else self.hn_mode.value,
            "refit": self.refit,
            "solver": {k: getattr(self.solver, k) for k in self.solver.__dataclass_fields__},
        }


@dataclass(frozen=True, eq=False)
class EstimateReport:
    beta_hat: np.ndarray
    t_hat: np.ndarray
    u_hat: np.ndarray
    threshold_set: tuple
    beta_thresholded: np.ndarray
    tuning: SnTuning
    h_n: float = None
    beta_refit: np.ndarray = None
    solver_diag: dict = field(default_factory=dict)
    timing: float = 0.0

    @property
    def converged(self):
        return self.solver_diag.get("status") == SolverStatus.OPTIMAL.value

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "t_hat": self.t_hat.tolist(),
            "u_hat": self.u_hat.tolist(),
            "threshold_set": [int(j) for j in self.threshold_set],
            "beta_thresholded": self.beta_thresholded.tolist(),
            "beta_refit": None if self.beta_refit is None else self.beta_refit.tolist(),
            "tuning": {
                "tau": self.tuning.tau,
                "lambda_t": self.tuning.lambda_t,
                "lambda_u": self.tuning.lambda_u,
                "b_eps": self.tuning.b_eps,
                "h_n": self.h_n,
            },
            "solver_diag": dict(self.solver_diag),
            "timing": self.timing,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass(frozen=True, eq=False)
class Feasibility:
    """Margins of the score constraints at (beta, t(beta), |beta|).

    The cone and |beta_j| <= u_j rows hold with equality at that point, so the
    score rows carry all the information.
    """

    feasible: bool
    margins: np.ndarray
    worst: float


def _check(dataset, gamma):
    if not isinstance(dataset, Dataset):
        raise TypeError("dataset must be a Dataset")
    if not isinstance(gamma, GammaEstimate):
        raise TypeError("gamma must be a GammaEstimate")
    if gamma.p != dataset.p:
        raise ValueError(f"gamma has {gamma.p} entries, design has {dataset.p} columns")


def compute_tau(n, p, alpha, c=1.0):
    """c n^{-1/2} Phi^{-1}(1 - alpha / (2p))."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return c * std_normal_quantile(1.0 - alpha / (2.0 * p)) / math.sqrt(n)


def _terms(beta, dataset, gamma):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (dataset.p,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({dataset.p},)")
    resid = dataset.y - dataset.Z @ beta
    # per-observation score terms z_ij r_i + gamma_j beta_j
    return dataset.Z * resid[:, None] + (gamma.diag * beta)[None, :]


def score(beta, dataset, gamma):
    """(1/n) sum_i z_ij (y_i - z_i'beta) + gamma_j beta_j for each j."""
    _check(dataset, gamma)
    return _terms(beta, dataset, gamma).mean(axis=0)


def t_of_beta(beta, dataset, gamma):
    """Root mean square of the per-observation score terms, per coordinate."""
    _check(dataset, gamma)
    return np.sqrt((_terms(beta, dataset, gamma) ** 2).mean(axis=0))


def compute_hn(dataset, gamma, mode=None, block=64):
    """Data-driven H_n, exactly or through its cheap upper bound."""
    _check(dataset, gamma)
    Z = dataset.Z
    n, p = Z.shape
    if mode is None:
        mode = HnMode.EXACT if p <= HN_EXACT_MAX_P else HnMode.UPPER_BOUND
    mode = HnMode(mode)
    g = np.asarray(gamma.diag)
    if mode is HnMode.EXACT:
        return math.sqrt(_kernels.hn_squared(Z, g, block))
    g_inf = float(np.max(np.abs(g)))
    fourth = float(np.max((Z ** 4).mean(axis=0)))
    cross = float(np.max(np.abs(Z.T @ Z))) / n
    return math.sqrt(fourth + g_inf ** 2 + 2.0 * g_inf * cross)


def resolve_tuning(dataset, gamma, config):
    """``(SnTuning, h_n)`` for ``config`` on this data (h_n None in Fixed mode)."""
    _check(dataset, gamma)
    tau = compute_tau(dataset.n, dataset.p, config.alpha, config.tau_scale)
    h_n = None
    if config.lambda_mode is LambdaMode.THEORETICAL:
        h_n = compute_hn(dataset, gamma, config.hn_mode)
        if h_n <= 0:
            raise EstimationError("H_n is zero; theoretical lambda_t is undefined")
        lt, lu = 1.0 / (4.0 * h_n), 0.25
    else:
        lt, lu = config.lambda_t, config.lambda_u
    return SnTuning(tau, lt, lu, gamma.b_eps), h_n


def feasibility_check(beta, dataset, gamma, tuning, tol=0.0):
    """Evaluate the estimator's constraints at (beta, t(beta), |beta|)."""
    _check(dataset, gamma)
    beta = np.asarray(beta, dtype=np.float64)
    terms = _terms(beta, dataset, gamma)
    sc = terms.mean(axis=0)
    t = np.sqrt((terms ** 2).mean(axis=0))
    bound = tuning.tau * t + (1.0 + tuning.tau) * tuning.b_eps * np.abs(beta)
    margins = bound - np.abs(sc)
    worst = float(margins.min())
    return Feasibility(worst >= -tol, margins, worst)


def _zero_point_ok(dataset, gamma, tuning):
    # beta = 0, u = 0 with t_j large enough for both the cone and score rows
    sc = np.abs(score(np.zeros(dataset.p), dataset, gamma))
    t = np.maximum(t_of_beta(np.zeros(dataset.p), dataset, gamma), sc / tuning.tau)
    return bool(np.all(tuning.tau * t >= sc * (1.0 - 1e-12)))


def threshold_values(beta_hat, dataset, gamma, tau):
    """Per-coordinate cutoffs tau t_j(beta_hat) / ((1/n) sum_i z_ij^2)."""
    _check(dataset, gamma)
    msq = (dataset.Z ** 2).mean(axis=0)
    if np.any(msq <= 0):
        bad = np.flatnonzero(msq <= 0).tolist()
        raise ValueError(f"columns {bad} of Z are identically zero")
    return tau * t_of_beta(beta_hat, dataset, gamma) / msq


def threshold(beta_hat, dataset, gamma, tau):
    """Indices j with |beta_hat_j| strictly above its cutoff."""
    nu = threshold_values(beta_hat, dataset, gamma, tau)
    return np.flatnonzero(np.abs(np.asarray(beta_hat)) > nu)


def _solve_program(dataset, gamma, tuning, settings):
    prog, lay = build_sn_program(dataset, gamma, tuning)
    res = solve(prog, settings)
    if res.status in (SolverStatus.INFEASIBLE, SolverStatus.UNBOUNDED):
        raise EstimationError(f"estimator program reported {res.status.value}; this is a bug")
    beta, t, u = extract_solution(res, lay, TRUNCATION)
    diag = {
        "status": res.status.value,
        "iterations": int(res.iterations),
        "primal_residual": float(res.primal_residual),
        "dual_residual": float(res.dual_residual),
        "gap": float(res.gap),
        "objective": float(res.objective),
        "solve_time": float(res.solve_time),
    }
    return beta, t, u, diag


def _refit_with(dataset, gamma, tuning, settings, support):
    support = np.asarray(support, dtype=np.int64)
    out = np.zeros(dataset.p)
    if support.size == 0:
        return out, None
    beta, _, _, diag = _solve_program(dataset.restrict(support), gamma.restrict(support),
                                      tuning, settings)
    out[support] = beta
    return out, diag


def fit(dataset, gamma, config=None):
    """Fit the estimator and threshold it; refit on the kept set if requested."""
    config = config or SnConfig()
    t0 = time.perf_counter()
    tuning, h_n = resolve_tuning(dataset, gamma, config)
    if not _zero_point_ok(dataset, gamma, tuning):
        raise EstimationError("the zero vector is not feasible; this is a bug")
    beta, t, u, diag = _solve_program(dataset, gamma, tuning, config.solver)
    keep = threshold(beta, dataset, gamma, tuning.tau)
    beta_thr = np.zeros_like(beta)
    beta_thr[keep] = beta[keep]
    beta_refit = None
    if config.refit:
        beta_refit, rdiag = _refit_with(dataset, gamma, tuning, config.solver, keep)
        diag["refit"] = rdiag
    return EstimateReport(
        beta_hat=beta,
        t_hat=t,
        u_hat=u,
        threshold_set=tuple(int(j) for j in keep),
        beta_thresholded=beta_thr,
        tuning=tuning,
        h_n=h_n,
        beta_refit=beta_refit,
        solver_diag=diag,
        timing=time.perf_counter() - t0,
    )


def refit(dataset, gamma, config, support, tuning=None):
    """Re-solve on the columns in ``support`` and embed back into p dimensions.

    The tuning is resolved on the full data (same tau as the original fit) unless
    given explicitly.
    """
    if tuning is None:
        tuning, _ = resolve_tuning(dataset, gamma, config)
    beta, _ = _refit_with(dataset, gamma, tuning, config.solver, support)
    return beta
