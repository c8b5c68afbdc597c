"""Standard-form encoding of the self-normalized conic estimator.

Variables, in order: beta (p, free), v (p, |beta| epigraph), eps (n, residuals
y - Z beta), t (p), u (p), T (1, max t), U (1, max u). Rows, in order:

* zero cone, n rows: eps + Z beta = y
* one nonnegative cone, 8p rows: v -/+ beta, u -/+ beta, T - t, U - u, and the
  two-sided score bound tau t_j + (1 + tau) b_eps u_j -/+ score_j
* p second-order cones of dim n + 1: head t_j, tail
  (z_ij eps_i + gamma_j beta_j) / sqrt(n)

The residual variables keep every SOC block touching only eps, beta_j and t_j,
so the matrix has O(np) stored entries.
"""
import math
from dataclasses import dataclass

import numpy as np

from .cones import ConeKind, ConeSpec
from .solver import ConicProgram, SolverStatus

__all__ = ["SnTuning", "VariableLayout", "build_sn_program", "extract_solution",
           "map_point", "expected_nnz", "TRUNCATION"]

# estimates below this magnitude are reported as exact zeros
TRUNCATION = 1e-7


@dataclass(frozen=True)
class SnTuning:
    tau: float
    lambda_t: float
    lambda_u: float
    b_eps: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.lambda_t < 0 or self.lambda_u < 0 or self.b_eps < 0:
            raise ValueError("lambda_t, lambda_u and b_eps must be >= 0")


@dataclass(frozen=True)
class VariableLayout:
    n: int
    p: int

    @property
    def beta(self):
        return slice(0, self.p)

    @property
    def v(self):
        return slice(self.p, 2 * self.p)

    @property
    def eps(self):
        return slice(2 * self.p, 2 * self.p + self.n)

    @property
    def t(self):
        a = 2 * self.p + self.n
        return slice(a, a + self.p)

    @property
    def u(self):
        a = 3 * self.p + self.n
        return slice(a, a + self.p)

    @property
    def T(self):
        return 4 * self.p + self.n

    @property
    def U(self):
        return 4 * self.p + self.n + 1

    @property
    def size(self):
        return self.n + 4 * self.p + 2

    @property
    def n_rows(self):
        return self.n + 8 * self.p + self.p * (self.n + 1)


def expected_nnz(Z, gdiag, tuning):
    """Closed-form count of stored matrix entries for ``build_sn_program``."""
    n, p = Z.shape
    nz_col = np.count_nonzero(Z, axis=0)
    g_nz = gdiag != 0.0
    total = n + int(nz_col.sum())              # eps + Z beta = y
    total += 12 * p                            # l1, u and max epigraph rows
    per_j = nz_col + g_nz.astype(int) + 1      # score terms + t_j
    if tuning.b_eps > 0:
        per_j = per_j + 1
    total += 2 * int(per_j.sum())              # two-sided score
    total += p + int(nz_col.sum()) + n * int(g_nz.sum())  # SOC blocks
    return total


def build_sn_program(dataset, gamma, tuning):
    """Return ``(ConicProgram, VariableLayout)`` for the estimator's program."""
    Z = dataset.Z
    y = dataset.y
    n, p = Z.shape
    g = np.asarray(gamma.diag, dtype=np.float64)
    if g.shape != (p,):
        raise ValueError(f"gamma has {g.size} entries, design has {p} columns")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y)) and np.all(np.isfinite(g))):
        raise ValueError("non-finite data")
    if not isinstance(tuning, SnTuning):
        raise TypeError("tuning must be an SnTuning")
    lay = VariableLayout(n, p)
    tau, be = float(tuning.tau), float(tuning.b_eps)
    ib = np.arange(p)
    iv = ib + lay.v.start
    ie = np.arange(n) + lay.eps.start
    it = ib + lay.t.start
    iu = ib + lay.u.start

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64).ravel())
        cols.append(np.asarray(c, dtype=np.int64).ravel())
        vals.append(np.asarray(v, dtype=np.float64).ravel())

    zr, zc = np.nonzero(Z)  # row-major nonzeros of Z
    zv = Z[zr, zc]

    # zero cone: eps_i + z_i' beta = y_i
    add(np.arange(n), ie, np.ones(n))
    add(zr, zc, zv)
    r0 = n

    # nonneg rows are "b - A theta >= 0" with b = 0, so coefficients are negated
    add(r0 + 2 * ib, iv, -np.ones(p))
    add(r0 + 2 * ib, ib, np.ones(p))
    add(r0 + 2 * ib + 1, iv, -np.ones(p))
    add(r0 + 2 * ib + 1, ib, -np.ones(p))
    r0 += 2 * p
    add(r0 + 2 * ib, iu, -np.ones(p))
    add(r0 + 2 * ib, ib, np.ones(p))
    add(r0 + 2 * ib + 1, iu, -np.ones(p))
    add(r0 + 2 * ib + 1, ib, -np.ones(p))
    r0 += 2 * p
    add(r0 + ib, np.full(p, lay.T), -np.ones(p))
    add(r0 + ib, it, np.ones(p))
    r0 += p
    add(r0 + ib, np.full(p, lay.U), -np.ones(p))
    add(r0 + ib, iu, np.ones(p))
    r0 += p
    # score_j = (1/n) sum_i z_ij eps_i + g_j beta_j; rows 2j (minus) and 2j+1 (plus)
    gz = np.flatnonzero(g)
    for sign, off in ((1.0, 0), (-1.0, 1)):
        add(r0 + 2 * ib + off, it, -tau * np.ones(p))
        if be > 0:
            add(r0 + 2 * ib + off, iu, -(1.0 + tau) * be * np.ones(p))
        add(r0 + 2 * zc + off, ie[zr], sign * zv / n)
        add(r0 + 2 * gz + off, gz, sign * g[gz])
    r0 += 2 * p
    n_lin = r0 - n

    # SOC block j occupies rows r0 + j (n + 1) .. r0 + (j + 1)(n + 1) - 1
    blk = r0 + ib * (n + 1)
    add(blk, it, -np.ones(p))
    rs = 1.0 / math.sqrt(n)
    add(blk[zc] + 1 + zr, ie[zr], -zv * rs)
    if gz.size:
        rr = (blk[gz][:, None] + 1 + np.arange(n)[None, :]).ravel()
        cc = np.repeat(gz, n)
        add(rr, cc, -np.repeat(g[gz], n) * rs)
    m = r0 + p * (n + 1)

    c = np.zeros(lay.size)
    c[lay.v] = 1.0
    c[lay.T] = tuning.lambda_t
    c[lay.U] = tuning.lambda_u
    b = np.zeros(m)
    b[:n] = y
    cones = (ConeSpec(ConeKind.ZERO, n), ConeSpec(ConeKind.NONNEG, n_lin)) + tuple(
        ConeSpec(ConeKind.SOC, n + 1) for _ in range(p)
    )
    prog = ConicProgram.from_triplets(
        c, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), b, cones
    )
    assert lay.n_rows == m and prog.n_vars == lay.size
    return prog, lay


def map_point(dataset, beta, t, u, layout):
    """Program variables (theta, slack) for a candidate (beta, t, u)."""
    beta = np.asarray(beta, dtype=np.float64)
    theta = np.zeros(layout.size)
    theta[layout.beta] = beta
    theta[layout.v] = np.abs(beta)
    theta[layout.eps] = dataset.y - dataset.Z @ beta
    theta[layout.t] = t
    theta[layout.u] = u
    theta[layout.T] = np.max(t)
    theta[layout.U] = np.max(u)
    return theta


def extract_solution(result, layout, truncate=TRUNCATION):
    """Slice (beta, t, u) from the primal iterate; tiny |beta_j| become 0."""
    if result.status not in (SolverStatus.OPTIMAL, SolverStatus.MAX_ITERS):
        raise ValueError(f"cannot extract an estimate from status {result.status.value}")
    theta = np.asarray(result.theta)
    if theta.size != layout.size:
        raise ValueError(f"result has {theta.size} variables, layout expects {layout.size}")
    beta = theta[layout.beta].copy()
    beta[np.abs(beta) < truncate] = 0.0
    return beta, theta[layout.t].copy(), theta[layout.u].copy()
