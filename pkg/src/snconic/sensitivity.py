"""Brute-force sensitivity characteristics and restricted cones on tiny designs.

kappa_q(s, u) is the minimum of ||Psi D||_inf over directions D with ||D||_q = 1
lying in some cone C_J(u) = {D : ||D_{J^c}||_1 <= u ||D_J||_1}, |J| <= s.
Exact values come from linear programs, one per sign orthant (where the l1
norms become linear); sampled values give an estimate from above.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .cones import ConeKind, ConeSpec
from .solver import ConicProgram, SolverSettings, SolverStatus, solve

__all__ = [
    "SensitivityQuery",
    "SensitivityError",
    "cone_membership",
    "kappa_exact",
    "kappa_lower_bound",
    "EXACT_MAX_P",
]

EXACT_MAX_P = 12

_LP_SETTINGS = SolverSettings(eps_primal=1e-9, eps_dual=1e-9, eps_gap=1e-9)


class SensitivityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SensitivityQuery:
    psi: np.ndarray
    s: int
    u: float
    q: float = math.inf

    def __post_init__(self):
        psi = np.array(self.psi, dtype=np.float64)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
            raise ValueError("psi must be a square matrix")
        if not np.all(np.isfinite(psi)):
            raise ValueError("psi has non-finite entries")
        if np.max(np.abs(psi - psi.T), initial=0.0) > 1e-10:
            raise ValueError("psi must be symmetric")
        if int(self.s) != self.s or self.s < 1:
            raise ValueError("s must be a positive integer")
        if not self.u > 0:
            raise ValueError("u must be > 0")
        q = float(self.q)
        if q not in (1.0, 2.0, math.inf):
            raise ValueError("q must be 1, 2 or inf")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "q", q)

    @property
    def p(self):
        return self.psi.shape[0]


def cone_membership(delta, J, u, tol=0.0):
    """Whether ||delta_{J^c}||_1 <= u ||delta_J||_1 (+ tol)."""
    delta = np.asarray(delta, dtype=np.float64)
    inside = np.zeros(delta.size, dtype=bool)
    inside[np.asarray(list(J), dtype=np.int64)] = True
    a = np.abs(delta)
    return bool(a[~inside].sum() <= u * a[inside].sum() + tol)


def _program(c, eq, eq_b, ineq, ineq_b):
    A = np.vstack([eq, ineq])
    rr, cc = np.nonzero(A)
    cones = [ConeSpec(ConeKind.ZERO, len(eq_b)), ConeSpec(ConeKind.NONNEG, len(ineq_b))]
    return ConicProgram.from_triplets(c, rr, cc, A[rr, cc], np.concatenate([eq_b, ineq_b]),
                                      cones)


def _l1_orthant_lp(psi, sgn, inside, u):
    """q = 1 on one sign orthant, where both l1 norms are linear; variables (D, m)."""
    p = psi.shape[0]
    col = -np.ones((p, 1))
    eq = np.append(sgn, 0.0)[None, :]
    ineq = np.vstack([
        np.hstack([psi, col]),
        np.hstack([-psi, col]),
        np.hstack([-np.diag(sgn), np.zeros((p, 1))]),
        np.append(np.where(inside, -u, 1.0) * sgn, 0.0)[None, :],
    ])
    c = np.zeros(p + 1)
    c[p] = 1.0
    return _program(c, eq, [1.0], ineq, np.zeros(3 * p + 1))


def _linf_lp(psi, J, sgn_J, k, sign_k, u):
    """q = inf with D_k = sign_k, |D| <= 1 and the J signs fixed.

    Only the J part of the cone constraint is concave, so the off-support l1 norm
    gets epigraph variables e. Variables (D, e, m).
    """
    p = psi.shape[0]
    out = np.setdiff1d(np.arange(p), J)
    r = out.size
    d = p + r + 1
    im = p + r
    rows, rhs = [], []

    def row(entries, b):
        v = np.zeros(d)
        for j, x in entries:
            v[j] += x
        rows.append(v)
        rhs.append(b)

    for i in range(p):
        pr = np.zeros(d)
        pr[:p] = psi[i]
        pr[im] = -1.0
        nr = -pr
        nr[im] = -1.0
        rows += [pr, nr]
        rhs += [0.0, 0.0]
    for j, sj in zip(J, sgn_J):
        row([(j, -sj)], 0.0)
        row([(j, sj)], 1.0)
    for t, j in enumerate(out):
        row([(j, 1.0), (p + t, -1.0)], 0.0)
        row([(j, -1.0), (p + t, -1.0)], 0.0)
        row([(p + t, 1.0)], 1.0)
    cone = np.zeros(d)
    cone[p:p + r] = 1.0
    cone[list(J)] = -u * np.asarray(sgn_J)
    rows.append(cone)
    rhs.append(0.0)
    eq = np.zeros((1, d))
    eq[0, k] = 1.0
    c = np.zeros(d)
    c[im] = 1.0
    return _program(c, eq, [sign_k], np.array(rows), np.array(rhs))


def _lp_value(prog, settings):
    res = solve(prog, settings)
    if res.status is SolverStatus.INFEASIBLE:
        return math.inf
    if res.status is not SolverStatus.OPTIMAL:
        raise SensitivityError(f"orthant LP ended with status {res.status.value}")
    return max(float(res.objective), 0.0)


def kappa_exact(query, settings=None):
    """Exact kappa_q(s, u) for q in {1, inf} by orthant enumeration (p <= 12).

    Cones grow with J, so only supports of size min(s, p) are enumerated. D and
    -D give the same value, which halves the orthants. For q = 1 every sign
    orthant gets its own LP; for q = inf only the signs on J are enumerated,
    together with the coordinate k and sign where |D_k| = 1 is attained.
    """
    if query.q == 2.0:
        raise ValueError("no exact method for q = 2; use kappa_lower_bound")
    p = query.p
    if p > EXACT_MAX_P:
        raise ValueError(f"p = {p} is too large for exact enumeration "
                         f"(limit {EXACT_MAX_P}); use kappa_lower_bound")
    psi = query.psi
    if not np.any(psi):
        return 0.0
    settings = settings or _LP_SETTINGS
    s = min(query.s, p)
    u = query.u
    best = math.inf
    for J in itertools.combinations(range(p), s):
        inside = np.zeros(p, dtype=bool)
        inside[list(J)] = True
        if query.q == 1.0:
            for tail in itertools.product((1.0, -1.0), repeat=p - 1):
                sgn = np.array((1.0,) + tail)
                best = min(best, _lp_value(_l1_orthant_lp(psi, sgn, inside, u), settings))
            continue
        for tail in itertools.product((1.0, -1.0), repeat=s - 1):
            sgn_J = (1.0,) + tail
            for k in range(p):
                signs = (sgn_J[J.index(k)],) if inside[k] else (1.0, -1.0)
                for sk in signs:
                    best = min(best, _lp_value(_linf_lp(psi, J, sgn_J, k, sk, u), settings))
    if not math.isfinite(best):
        raise SensitivityError("every orthant program was infeasible")
    return best


def _sample_cone(rng, p, s, u, size):
    """Random points of C_J(u) for random supports J with |J| = s."""
    if s >= p:
        return rng.standard_normal((size, p))
    # rank of a uniform key picks a random s-subset per row
    inside = np.argsort(np.argsort(rng.random((size, p)), axis=1), axis=1) < s
    g = rng.standard_normal((size, p))
    head = np.where(inside, g, 0.0)
    tail = np.where(inside, 0.0, g)
    # tail l1 mass uniform on [0, u ||D_J||_1]
    budget = u * np.abs(head).sum(axis=1) * rng.random(size)
    tail *= (budget / np.abs(tail).sum(axis=1))[:, None]
    return head + tail


def kappa_lower_bound(query, samples=10000, seed=0, batch=4096):
    """Smallest ||Psi D||_inf over ``samples`` random cone points with ||D||_q = 1.

    kappa is a minimum, so this sampled value can only be at or above the exact
    one; it converges from above as ``samples`` grows and is what is available
    for q = 2 or large p.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    psi = query.psi
    if not np.any(psi):
        return 0.0
    rng = np.random.default_rng(seed)
    p = query.p
    s = min(query.s, p)
    best = math.inf
    left = int(samples)
    while left > 0:
        m = min(batch, left)
        D = _sample_cone(rng, p, s, query.u, m)
        if query.q == math.inf:
            norms = np.abs(D).max(axis=1)
        else:
            norms = np.linalg.norm(D, ord=query.q, axis=1)
        ok = norms > 0
        vals = np.abs(D[ok] @ psi.T).max(axis=1) / norms[ok]
        if vals.size:
            best = min(best, float(vals.min()))
        left -= m
    return best
