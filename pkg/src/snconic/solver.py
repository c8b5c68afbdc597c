"""Solvers for conic programs in standard form.

    minimize    c' theta
    subject to  A theta + nu = b,   nu in K

with K a product of zero, nonnegative and second-order cones. Two methods work
on the homogeneous self-dual embedding of the primal-dual pair, after Ruiz
equilibration of A:

* ``"ipm"`` (default): primal-dual interior point with Nesterov-Todd scaling,
  a few dozen dense factorizations per solve, high accuracy.
* ``"admm"``: relaxed Douglas-Rachford splitting (over-relaxed ADMM). The affine
  step reuses one factorization for the whole solve and the cone step is a
  blockwise projection; cheap iterations but many of them.

Dual variable convention: ``dual`` is y with A'y + c = 0 and y in K*, so the
duality gap is c'theta + b'y.
"""
import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from . import _ipm
from .cones import ConeKind, ConeLayout, ConeSpec

__all__ = [
    "ConicProgram",
    "SolverSettings",
    "SolverResult",
    "SolverStatus",
    "InvalidProgramError",
    "solve",
    "check_kkt",
    "relative_residuals",
    "dump_program",
    "load_program",
]

log = logging.getLogger(__name__)

# dense normal-equation factor up to this many variables, sparse LU beyond
_DENSE_LIMIT = 3000


class InvalidProgramError(ValueError):
    """The conic program violates a structural invariant."""


class SolverStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """Standard-form conic program. ``constraint_matrix`` is stored as CSC."""

    objective: np.ndarray
    constraint_matrix: sp.csc_matrix
    rhs: np.ndarray
    cones: tuple

    def __post_init__(self):
        c = np.array(self.objective, dtype=np.float64).ravel()
        b = np.array(self.rhs, dtype=np.float64).ravel()
        A = sp.csc_matrix(self.constraint_matrix, dtype=np.float64)
        A.sum_duplicates()
        A.eliminate_zeros()
        cones = tuple(
            cone if isinstance(cone, ConeSpec) else ConeSpec(ConeKind(cone[0]), int(cone[1]))
            for cone in self.cones
        )
        m, d = A.shape
        if c.size != d:
            raise InvalidProgramError(f"objective has length {c.size}, A has {d} columns")
        if b.size != m:
            raise InvalidProgramError(f"rhs has length {b.size}, A has {m} rows")
        if sum(cone.dim for cone in cones) != m:
            raise InvalidProgramError("cone dimensions do not add up to the number of rows")
        for name, arr in (("objective", c), ("rhs", b), ("matrix", A.data)):
            if not np.all(np.isfinite(arr)):
                raise InvalidProgramError(f"{name} has non-finite entries")
        c.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "constraint_matrix", A)
        object.__setattr__(self, "cones", cones)

    @property
    def n_vars(self):
        return self.objective.size

    @property
    def n_rows(self):
        return self.rhs.size

    @classmethod
    def from_triplets(cls, objective, rows, cols, vals, rhs, cones):
        m = len(rhs)
        d = len(objective)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= d):
            raise InvalidProgramError("triplet index out of range")
        A = sp.coo_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(m, d))
        return cls(objective, A.tocsc(), rhs, tuple(cones))


@dataclass(frozen=True)
class SolverSettings:
    method: str = "ipm"
    eps_primal: float = 1e-7
    eps_dual: float = 1e-7
    eps_gap: float = 1e-7
    max_iters: int = 200000
    relaxation: float = 1.8
    scaling: bool = True
    # weight on the primal block of the splitting metric
    rho_x: float = 1e-3
    # scalar applied to the normalized b and c
    scale: float = 1.0
    ruiz_iters: int = 25
    check_every: int = 10
    eps_infeasible: float = 1e-7
    anderson_memory: int = 0
    anderson_safeguard: float = 1.0
    trace_every: int = 0
    ipm_max_iters: int = 100

    def __post_init__(self):
        if self.method not in ("ipm", "admm"):
            raise ValueError("method must be 'ipm' or 'admm'")
        if min(self.eps_primal, self.eps_dual, self.eps_gap) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")


@dataclass(frozen=True, eq=False)
class SolverResult:
    theta: np.ndarray
    slack: np.ndarray
    dual: np.ndarray
    status: SolverStatus
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float = 0.0
    objective: float = field(default=float("nan"))

    @property
    def ok(self):
        return self.status is SolverStatus.OPTIMAL


def relative_residuals(program, theta, slack, dual):
    """(primal, dual, gap) relative residuals of a candidate primal-dual point."""
    A, b, c = program.constraint_matrix, program.rhs, program.objective
    pres = np.linalg.norm(A @ theta + slack - b) / (1.0 + np.linalg.norm(b))
    dres = np.linalg.norm(A.T @ dual + c) / (1.0 + np.linalg.norm(c))
    ctx = float(c @ theta)
    bty = float(b @ dual)
    gap = abs(ctx + bty) / (1.0 + abs(ctx) + abs(bty))
    return float(pres), float(dres), float(gap)


def check_kkt(program, result):
    """Recompute the relative residuals of ``result`` from scratch."""
    d, m = program.n_vars, program.n_rows
    if result.theta.shape != (d,) or result.slack.shape != (m,) or result.dual.shape != (m,):
        raise ValueError("result dimensions do not match the program")
    return relative_residuals(program, result.theta, result.slack, result.dual)


# --------------------------------------------------------------------------
# scaling
# --------------------------------------------------------------------------

def _block_reduce_rows(vals, layout):
    """Replace row scale factors on each SOC block by the block maximum."""
    if layout.soc_starts.size:
        blk = layout.soc_block_of_row
        mask = blk >= 0
        maxes = np.zeros(layout.soc_starts.size)
        np.maximum.at(maxes, blk[mask], vals[mask])
        vals[mask] = maxes[blk[mask]]
    return vals


def _seg_max(vals, indptr, size):
    """Per-segment maximum of ``vals`` split by ``indptr``; 0 for empty segments."""
    out = np.zeros(size)
    nz = np.flatnonzero(np.diff(indptr) > 0)
    if nz.size:
        out[nz] = np.maximum.reduceat(vals, indptr[nz])
    return out


def _ruiz(A, layout, iters):
    m, d = A.shape
    D = np.ones(m)
    E = np.ones(d)
    csr = A.tocsr()
    absv = np.abs(csr.data)
    rows = np.repeat(np.arange(m), np.diff(csr.indptr))
    cols = csr.indices
    # a column-sorted view of the same entries for the column maxima
    order = np.argsort(cols, kind="stable")
    col_ptr = np.concatenate([[0], np.cumsum(np.bincount(cols, minlength=d))])
    for _ in range(iters):
        vals = absv * D[rows] * E[cols]
        rn = _block_reduce_rows(_seg_max(vals, csr.indptr, m), layout)
        cn = _seg_max(vals[order], col_ptr, d)
        rn = np.where(rn < 1e-8, 1.0, rn)
        cn = np.where(cn < 1e-8, 1.0, cn)
        D /= np.sqrt(rn)
        E /= np.sqrt(cn)
        if np.max(np.abs(1.0 - rn)) < 1e-3 and np.max(np.abs(1.0 - cn)) < 1e-3:
            break
    D = np.clip(D, 1e-4, 1e4)
    E = np.clip(E, 1e-4, 1e4)
    return D, E


# --------------------------------------------------------------------------
# affine step
# --------------------------------------------------------------------------

class _AffineSolver:
    """Solves [[rx I, A'], [-A, ry I]] (x, y) = (a, e) with a cached factor."""

    def __init__(self, A, rho_x, rho_y):
        self.A = A
        self.AT = A.T.tocsr()
        self.rx = rho_x
        self.ry = rho_y
        m, d = A.shape
        if d <= _DENSE_LIMIT:
            K = (A.T @ A).toarray()
            K[np.diag_indices(d)] += rho_x * rho_y
            self._chol = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
            self._lu = None
        else:
            # quasi-definite KKT: [[rx I, A'], [A, -ry I]]
            kkt = sp.bmat(
                [[rho_x * sp.identity(d), A.T], [A, -rho_y * sp.identity(m)]], format="csc"
            )
            self._lu = scipy.sparse.linalg.splu(kkt, permc_spec="COLAMD")
            self._chol = None

    def solve(self, a, e):
        if self._chol is not None:
            rhs = self.ry * a - self.AT @ e
            x = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
            y = (e + self.A @ x) / self.ry
            return x, y
        d = a.size
        sol = self._lu.solve(np.concatenate([a, -e]))
        return sol[:d], sol[d:]


class _Anderson:
    """Type-II Anderson extrapolation over the last ``mem`` iterate differences."""

    def __init__(self, size, mem, reg=1e-10):
        self.mem = mem
        self.reg = reg
        self.dW = np.zeros((mem, size))
        self.dF = np.zeros((mem, size))
        self.reset()

    def reset(self):
        self.k = 0
        self.count = 0
        self.prev_w = None
        self.prev_f = None

    def push(self, w, f):
        if self.prev_w is not None:
            slot = self.k % self.mem
            self.dW[slot] = w - self.prev_w
            self.dF[slot] = f - self.prev_f
            self.k += 1
            self.count = min(self.count + 1, self.mem)
        self.prev_w = w
        self.prev_f = f

    def extrapolate(self, g):
        """Accelerated point from the plain step ``g = w + f``, or None."""
        if self.count == 0:
            return None
        dF = self.dF[: self.count]
        dW = self.dW[: self.count]
        gram = dF @ dF.T
        gram[np.diag_indices_from(gram)] += self.reg * max(np.trace(gram), 1e-300)
        try:
            gamma = np.linalg.solve(gram, dF @ self.prev_f)
        except np.linalg.LinAlgError:
            return None
        out = g - gamma @ (dW + dF)
        if not np.all(np.isfinite(out)):
            return None
        return out


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------

def solve(program, settings=None):
    """Solve ``program``; never raises on non-convergence (see ``status``)."""
    if not isinstance(program, ConicProgram):
        raise InvalidProgramError("solve expects a ConicProgram")
    settings = settings or SolverSettings()
    if settings.method == "ipm":
        return _solve_ipm(program, settings)
    return _solve_admm(program, settings)


def _solve_ipm(program, settings):
    t0 = time.perf_counter()
    A = program.constraint_matrix
    b = program.rhs
    c = program.objective
    m, d = A.shape
    layout = ConeLayout(program.cones)
    if settings.scaling:
        D, E = _ruiz(A, layout, settings.ruiz_iters)
    else:
        D, E = np.ones(m), np.ones(d)
    As = (sp.diags(D) @ A @ sp.diags(E)).tocsr()
    bs = D * b
    cs = E * c

    soc_rows = [np.arange(a, a + k) for a, k in zip(layout.soc_starts, layout.soc_dims)]
    cone_rows = np.concatenate([layout.nonneg_idx] + soc_rows).astype(np.int64)
    eq_rows = layout.zero_idx
    cones = _ipm._Cones(layout.nonneg_idx.size, layout.soc_dims)

    def assemble(x, y, z, s):
        theta = E * x
        dual = np.zeros(m)
        dual[eq_rows] = y
        dual[cone_rows] = z
        dual *= D
        slack = np.zeros(m)
        slack[cone_rows] = s
        slack /= D
        return theta, slack, dual

    calls = [0]

    def report(x, y, z, s):
        res = relative_residuals(program, *assemble(x, y, z, s))
        if settings.trace_every and calls[0] % settings.trace_every == 0:
            log.debug("ipm iter %d pres %.3e dres %.3e gap %.3e", calls[0], *res)
        calls[0] += 1
        return res

    out = _ipm.ipm_solve(As[eq_rows], bs[eq_rows], As[cone_rows], bs[cone_rows], cs,
                         cones, settings, report)
    nan_d, nan_m = np.full(d, np.nan), np.full(m, np.nan)
    st = out["status"]
    if st == "infeasible":
        _, _, dual = assemble(np.zeros(d), out["y"], out["z"], np.zeros(cones.m))
        dual /= -(b @ dual)
        theta, slack, pres, dres, gap = nan_d, nan_m, np.nan, np.nan, np.nan
        status = SolverStatus.INFEASIBLE
    elif st == "unbounded":
        theta, slack, _ = assemble(out["x"], np.zeros(eq_rows.size), np.zeros(cones.m), out["s"])
        scale = -(c @ theta)
        theta, slack = theta / scale, slack / scale
        dual, pres, dres, gap = nan_m, np.nan, np.nan, np.nan
        status = SolverStatus.UNBOUNDED
    else:
        theta, slack, dual = assemble(out["x"], out["y"], out["z"], out["s"])
        pres, dres, gap = out["pres"], out["dres"], out["gap"]
        status = SolverStatus.OPTIMAL if st == "optimal" else SolverStatus.MAX_ITERS
    obj = float(c @ theta) if np.all(np.isfinite(theta)) else float("nan")
    return SolverResult(theta=theta, slack=slack, dual=dual, status=status,
                        primal_residual=pres, dual_residual=dres, gap=gap,
                        iterations=out["iters"], solve_time=time.perf_counter() - t0,
                        objective=obj)


def _solve_admm(program, settings):
    t0 = time.perf_counter()

    A = program.constraint_matrix
    b = program.rhs
    c = program.objective
    m, d = A.shape
    layout = ConeLayout(program.cones)

    if settings.scaling:
        D, E = _ruiz(A, layout, settings.ruiz_iters)
    else:
        D, E = np.ones(m), np.ones(d)
    As = (sp.diags(D) @ A @ sp.diags(E)).tocsc()
    bs = D * b
    cs = E * c
    nb = max(np.linalg.norm(bs), 1e-6)
    nc = max(np.linalg.norm(cs), 1e-6)
    sb = settings.scale / nb
    sc = settings.scale / nc
    bs = bs * sb
    cs = cs * sc

    rx, ry = settings.rho_x, 1.0
    aff = _AffineSolver(As, rx, ry)
    gx, gy = aff.solve(cs, bs)
    denom = 1.0 + cs @ gx + bs @ gy

    alpha = settings.relaxation
    nw = d + m + 1
    sx, sy = slice(0, d), slice(d, d + m)
    rw = np.concatenate([np.full(d, rx), np.full(m, ry), [1.0]])

    def dr_step(w):
        """One relaxed Douglas-Rachford step from w = (x, y, tau)."""
        rhs = rw * w
        zx, zy = aff.solve(rhs[sx], rhs[sy])
        tt = (rhs[-1] + cs @ zx + bs @ zy) / denom
        ut_ = np.concatenate([zx - gx * tt, zy - gy * tt, [tt]])
        h = 2.0 * ut_ - w
        u = h.copy()
        layout.project_dual(u[sy])
        u[-1] = max(h[-1], 0.0)
        return w + alpha * (u - ut_), u, h

    def unscale(ux, uy, vy, tau):
        x = E * ux / (tau * sb)
        y = D * uy / (tau * sc)
        s = vy / (D * tau * sb)
        return x, y, s

    mem = settings.anderson_memory
    accel = _Anderson(nw, mem) if mem > 0 else None
    w = np.zeros(nw)
    w[-1] = 1.0
    w_fallback = None
    res_before = np.inf

    best = None
    status = SolverStatus.MAX_ITERS
    it = 0
    n_reject = 0
    for it in range(1, settings.max_iters + 1):
        w_next, u, h = dr_step(w)
        if accel is not None:
            f = w_next - w
            fn = float(np.linalg.norm(f))
            if w_fallback is not None and fn > settings.anderson_safeguard * res_before:
                # extrapolated point made things worse: restart from the plain step
                n_reject += 1
                accel.reset()
                w = w_fallback
                w_fallback = None
                w_next, u, h = dr_step(w)
                f = w_next - w
                fn = float(np.linalg.norm(f))
            accel.push(w, f)
            w_aa = accel.extrapolate(w_next)
            if w_aa is not None:
                w_fallback = w_next
                res_before = fn
                w_next = w_aa
            else:
                w_fallback = None
        w_cur, w = w, w_next

        if it % settings.check_every and it != settings.max_iters:
            continue
        ux, uy, ut = u[sx], u[sy], u[-1]
        vy = ry * (uy - h[sy])
        kappa = ut - h[-1]
        if ut > 1e-12:
            x, y, s = unscale(ux, uy, vy, ut)
            pres, dres, gap = relative_residuals(program, x, s, y)
            if settings.trace_every and it % settings.trace_every == 0:
                log.debug("iter %d pres %.3e dres %.3e gap %.3e", it, pres, dres, gap)
            score = max(pres / settings.eps_primal, dres / settings.eps_dual, gap / settings.eps_gap)
            if best is None or score < best[0]:
                best = (score, x, s, y, pres, dres, gap)
            if pres <= settings.eps_primal and dres <= settings.eps_dual and gap <= settings.eps_gap:
                status = SolverStatus.OPTIMAL
                break
        # certificates from the unnormalized embedding iterate
        if kappa > ut:
            yc = D * uy
            bty = b @ yc
            if bty < 0 and np.linalg.norm(A.T @ yc) <= settings.eps_infeasible * -bty:
                status = SolverStatus.INFEASIBLE
                best = (np.inf, np.full(d, np.nan), np.full(m, np.nan), -yc / bty, np.nan, np.nan, np.nan)
                break
            xc = E * ux
            ctx = c @ xc
            if ctx < 0:
                sc_ = vy / D
                if np.linalg.norm(A @ xc + sc_) <= settings.eps_infeasible * -ctx:
                    status = SolverStatus.UNBOUNDED
                    best = (np.inf, -xc / ctx, -sc_ / ctx, np.full(m, np.nan), np.nan, np.nan, np.nan)
                    break

    if best is None:
        nan_d, nan_m = np.full(d, np.nan), np.full(m, np.nan)
        best = (np.inf, nan_d, nan_m, nan_m, np.inf, np.inf, np.inf)
    _, x, s, y, pres, dres, gap = best
    obj = float(c @ x) if np.all(np.isfinite(x)) else float("nan")
    return SolverResult(
        theta=x,
        slack=s,
        dual=y,
        status=status,
        primal_residual=pres,
        dual_residual=dres,
        gap=gap,
        iterations=it,
        solve_time=time.perf_counter() - t0,
        objective=obj,
    )


# --------------------------------------------------------------------------
# debug dump
# --------------------------------------------------------------------------

def dump_program(program, path):
    """Write ``program`` as a plain-text record file (see ``load_program``)."""
    A = program.constraint_matrix.tocoo()
    lines = [f"d {program.n_vars}", f"m {program.n_rows}"]
    # repr of a Python float round-trips exactly
    lines += [f"c {j} {v!r}" for j, v in enumerate(program.objective.tolist()) if v != 0.0]
    lines += [f"a {i} {j} {v!r}" for i, j, v in zip(A.row.tolist(), A.col.tolist(),
                                                   A.data.tolist())]
    lines += [f"b {i} {v!r}" for i, v in enumerate(program.rhs.tolist()) if v != 0.0]
    lines += [f"cone {cone.kind.value} {cone.dim}" for cone in program.cones]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_program(path):
    """Read a program written by :func:`dump_program`.

    One record per line: ``d N``, ``m M``, ``c j value``, ``a i j value``,
    ``b i value``, ``cone kind dim``. Blank lines and ``#`` comments are skipped.
    """
    d = m = None
    c_entries, a_entries, b_entries, cones = [], [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "d":
                    d = int(tok[1])
                elif tok[0] == "m":
                    m = int(tok[1])
                elif tok[0] == "c":
                    c_entries.append((int(tok[1]), float(tok[2])))
                elif tok[0] == "a":
                    a_entries.append((int(tok[1]), int(tok[2]), float(tok[3])))
                elif tok[0] == "b":
                    b_entries.append((int(tok[1]), float(tok[2])))
                elif tok[0] == "cone":
                    cones.append(ConeSpec(ConeKind(tok[1]), int(tok[2])))
                else:
                    raise ValueError(f"unknown record {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise InvalidProgramError(f"{path}:{lineno}: {exc}") from exc
    if d is None or m is None:
        raise InvalidProgramError(f"{path}: missing 'd' or 'm' record")
    c = np.zeros(d)
    for j, v in c_entries:
        c[j] = v
    b = np.zeros(m)
    for i, v in b_entries:
        b[i] = v
    rows = [e[0] for e in a_entries]
    cols = [e[1] for e in a_entries]
    vals = [e[2] for e in a_entries]
    return ConicProgram.from_triplets(c, rows, cols, vals, b, cones)
