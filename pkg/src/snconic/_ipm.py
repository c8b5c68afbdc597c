"""Homogeneous primal-dual interior-point method for the standard-form program.

Rows of ``A theta + nu = b`` in the zero cone become equality constraints; the
remaining rows are ordered nonnegative first, then second-order blocks, and
written ``G x + s = h`` with ``s`` in the cone. Each iteration uses
Nesterov-Todd scaling and a Mehrotra predictor-corrector step on the
homogeneous self-dual embedding, so infeasible and unbounded programs yield
certificates instead of diverging.

The reduced Newton system ``[[G' W^-2 G, A'], [A, 0]]`` is assembled densely
(SOC scalings contribute identity-plus-low-rank terms) and factored once per
iteration.
"""
import numpy as np
import scipy.linalg
import scipy.linalg.lapack as lapack
import scipy.sparse as sp

from . import _kernels as K

_STEP = 0.99
_REG = 1e-10


class _Cones:
    """Nonnegative orthant of size ``m_nn`` followed by SOC blocks."""

    def __init__(self, m_nn, soc_dims):
        self.m_nn = int(m_nn)
        self.dims = np.asarray(soc_dims, dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(np.int64) \
            if self.dims.size else np.zeros(0, dtype=np.int64)
        self.m_soc = int(self.dims.sum())
        self.m = self.m_nn + self.m_soc
        self.degree = self.m_nn + self.dims.size
        e = np.zeros(self.m)
        e[: self.m_nn] = 1.0
        e[self.m_nn + self.starts] = 1.0
        self.e = e

    def split(self, v):
        return v[: self.m_nn], v[self.m_nn:]

    def prod(self, u, v):
        un, us = self.split(u)
        vn, vs = self.split(v)
        return np.concatenate([un * vn, K.soc_jordan_product(us, vs, self.starts, self.dims)])

    def divide(self, lam, v):
        ln, ls = self.split(lam)
        vn, vs = self.split(v)
        return np.concatenate([vn / ln, K.soc_jordan_divide(ls, vs, self.starts, self.dims)])

    def max_step(self, x, dx):
        xn, xs = self.split(x)
        dn, ds = self.split(dx)
        neg = dn < 0
        t = np.min(-xn[neg] / dn[neg]) if np.any(neg) else np.inf
        return min(t, K.soc_max_step(xs, ds, self.starts, self.dims))

    def interior_shift(self, v):
        """Smallest a with v + a e in the cone (negative when v is interior)."""
        vn, vs = self.split(v)
        a = -np.min(vn) if vn.size else -np.inf
        if self.dims.size:
            sq = np.add.reduceat(vs * vs, self.starts) - vs[self.starts] ** 2
            a = max(a, float(np.max(np.sqrt(np.maximum(sq, 0.0)) - vs[self.starts])))
        return a

    def push_interior(self, v):
        a = self.interior_shift(v)
        return v if a < 0 else v + (1.0 + a) * self.e


class _Scaling:
    """NT scaling W at (s, z): lam = W z = W^{-1} s, W symmetric."""

    def __init__(self, cones, s, z):
        self.c = cones
        sn, ss = cones.split(s)
        zn, zs = cones.split(z)
        self.dn = np.sqrt(sn / zn)
        self.w, self.beta, lam_s = K.soc_nt_scaling(ss, zs, cones.starts, cones.dims)
        self.lam = np.concatenate([np.sqrt(sn * zn), lam_s])

    def apply(self, u, inverse=False):
        un, us = self.c.split(u)
        on = un / self.dn if inverse else un * self.dn
        os_ = K.soc_apply_scaling(us, self.w, self.beta, self.c.starts, self.c.dims, inverse)
        return np.concatenate([on, os_])

    def inv_sq(self, u):
        return self.apply(self.apply(u, inverse=True), inverse=True)

    def sq(self, u):
        return self.apply(self.apply(u))


class _Identity:
    def __init__(self, cones):
        self.c = cones

    def inv_sq(self, u):
        return u

    def sq(self, u):
        return u


def _pair_expansion(G, rows, d):
    """Map row weights to entries of sum_r w_r g_r g_r' for the given sparse rows.

    Returns ``(keys, P)`` with flat indices ``keys`` into a d x d matrix and a
    sparse ``P`` such that the entry values are ``P @ w[rows]``.
    """
    sub = G[rows]
    counts = np.diff(sub.indptr)
    keys_all, src_all, val_all = [], [], []
    for cnt in np.unique(counts):
        if cnt == 0:
            continue
        rr = np.flatnonzero(counts == cnt)
        starts = sub.indptr[rr]
        idx = starts[:, None] + np.arange(cnt)[None, :]
        cols = sub.indices[idx]
        vals = sub.data[idx]
        kk = (cols[:, :, None] * d + cols[:, None, :]).reshape(rr.size, -1)
        vv = (vals[:, :, None] * vals[:, None, :]).reshape(rr.size, -1)
        keys_all.append(kk.ravel())
        val_all.append(vv.ravel())
        src_all.append(np.repeat(rr, cnt * cnt))
    if not keys_all:
        return np.zeros(0, dtype=np.int64), sp.csr_matrix((0, len(rows)))
    keys = np.concatenate(keys_all)
    uk, inv = np.unique(keys, return_inverse=True)
    P = sp.csr_matrix((np.concatenate(val_all), (inv, np.concatenate(src_all))),
                      shape=(uk.size, len(rows)))
    return uk, P


class _Kkt:
    """Factorization of [[0, A', G'], [A, 0, 0], [G, 0, -W'W]] via its reduction.

    The reduced matrix H = G' W^-2 G is factored by Cholesky and the equality
    rows through the Schur complement A H^-1 A'; an LU factorization of the
    regularized reduced system is the fallback when H is not numerically
    positive definite.
    """

    # rows with more stored entries than this are handled with dense products
    _SPARSE_ROW = 16

    def __init__(self, Aeq, G, cones):
        self.Aeq = Aeq.tocsr()
        self.AeqT = Aeq.T.tocsr()
        self.Aeq_dense = self.Aeq.toarray()
        self.G = G.tocsr()
        self.GT = G.T.tocsr()
        self.cones = cones
        d = self.d = G.shape[1]
        self.neq = Aeq.shape[0]
        mn = cones.m_nn
        st = cones.starts
        nnz_row = np.diff(self.G.indptr)
        sparse_rows = np.flatnonzero(nnz_row <= self._SPARSE_ROW)
        self.dense_rows = np.flatnonzero(nnz_row > self._SPARSE_ROW)
        self.sparse_rows = sparse_rows
        self.keys, self.P = _pair_expansion(self.G, sparse_rows, d)
        Gd = self.G[self.dense_rows]
        self.dense_cols = np.unique(Gd.indices)
        self.Gd = Gd[:, self.dense_cols].toarray()
        # SOC quantities
        self.Gs = self.G[mn:]
        self.G0 = self.Gs[st] if st.size else sp.csr_matrix((0, d))
        self.G0T = self.G0.T.tocsr()
        self.R = np.unique(self.Gs.indices)
        pos = np.full(d, -1, dtype=np.int64)
        pos[self.R] = np.arange(self.R.size)
        blk = np.repeat(np.arange(st.size), cones.dims)
        self.blk = blk
        is_head = np.zeros(cones.m_soc, dtype=bool)
        is_head[st] = True
        coo = self.Gs.tocoo()
        tail = ~is_head[coo.row]
        kk = pos[coo.col[tail]] * max(st.size, 1) + blk[coo.row[tail]]
        uk, inv = np.unique(kk, return_inverse=True)
        self.t_keys = uk
        self.t_P = sp.csr_matrix((coo.data[tail], (inv, coo.row[tail])),
                                 shape=(uk.size, cones.m_soc))

    def _hessian(self, row_w, W=None):
        """H = sum_r row_w[r] g_r g_r' plus the SOC low-rank terms of W."""
        d = self.d
        c = self.cones
        H = np.zeros((d, d))
        Hf = H.reshape(-1)
        if self.keys.size:
            Hf[self.keys] += self.P @ row_w[self.sparse_rows]
        if self.dense_rows.size:
            Cd = self.dense_cols
            H[np.ix_(Cd, Cd)] += (self.Gd.T * row_w[self.dense_rows]) @ self.Gd
        if W is not None and c.dims.size:
            k = c.starts.size
            w = W.w
            w0 = w[c.starts]
            wt2 = np.add.reduceat(w * w, c.starts) - w0 * w0
            wn2 = w0 * w0 + wt2
            ib2 = 1.0 / W.beta ** 2
            cx = -4.0 * wn2 * w0 * ib2
            ct = 4.0 * (wn2 + 1.0) * ib2
            TR = np.zeros(self.R.size * k)
            TR[self.t_keys] = self.t_P @ w
            TR = TR.reshape(self.R.size, k)
            R = self.R
            H[np.ix_(R, R)] += (TR * ct) @ TR.T
            M = np.asarray(self.G0T @ (TR * cx).T)
            H[:, R] += M
            H[R, :] += M.T
        return H

    def _row_weights(self, W):
        c = self.cones
        if isinstance(W, _Identity):
            return np.ones(c.m)
        rw = np.empty(c.m)
        rw[: c.m_nn] = 1.0 / W.dn ** 2
        if c.dims.size:
            ib2 = 1.0 / W.beta ** 2
            ws = rw[c.m_nn:]
            ws[:] = ib2[self.blk]
            w = W.w
            w0 = w[c.starts]
            wt2 = np.add.reduceat(w * w, c.starts) - w0 * w0
            ws[c.starts] += 8.0 * w0 * w0 * wt2 * ib2
        return rw

    def factor(self, W):
        self.W = W
        H = self._hessian(self._row_weights(W), None if isinstance(W, _Identity) else W)
        self.H = H
        d, q = self.d, self.neq
        Hr = H.copy()
        reg = _REG * max(1.0, float(np.max(np.abs(np.diag(H)))))
        Hr[np.arange(d), np.arange(d)] += reg
        self.mode = "chol"
        L, info = lapack.dpotrf(Hr, lower=1, clean=1)
        if info == 0 and q:
            Y, info2 = lapack.dtrtrs(L, self.Aeq_dense.T, lower=1)
            S = Y.T @ Y
            S[np.arange(q), np.arange(q)] += _REG * max(1.0, float(np.max(np.diag(S))))
            Ls, info = lapack.dpotrf(S, lower=1, clean=1)
            self.Ls = Ls
        if info == 0 and np.all(np.isfinite(L)):
            self.L = L
            return
        self.mode = "lu"
        Kd = np.zeros((d + q, d + q))
        Kd[:d, :d] = Hr
        if q:
            Kd[d:, :d] = self.Aeq_dense
            Kd[:d, d:] = self.Aeq_dense.T
            Kd[np.arange(d, d + q), np.arange(d, d + q)] = -reg
        self.lu = scipy.linalg.lu_factor(Kd, check_finite=False)

    def _apply_inverse(self, rhs):
        d = self.d
        if self.mode == "lu":
            return scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)
        r1, r2 = rhs[:d], rhs[d:]
        L = self.L
        hr1 = lapack.dpotrs(L, r1, lower=1)[0]
        if not self.neq:
            return hr1
        y = lapack.dpotrs(self.Ls, self.Aeq_dense @ hr1 - r2, lower=1)[0]
        x = lapack.dpotrs(L, r1 - self.Aeq_dense.T @ y, lower=1)[0]
        return np.concatenate([x, y])

    def _reduced_apply(self, v):
        d = self.d
        x, y = v[:d], v[d:]
        out = np.empty_like(v)
        out[:d] = self.H @ x + self.AeqT @ y
        out[d:] = self.Aeq @ x
        return out

    def _reduced_solve(self, rhs, refine=3):
        sol = self._apply_inverse(rhs)
        nr = np.linalg.norm(rhs)
        for _ in range(refine):
            r = rhs - self._reduced_apply(sol)
            if np.linalg.norm(r) <= 1e-14 * max(nr, 1.0):
                break
            sol = sol + self._apply_inverse(r)
        return sol

    def _solve_once(self, r1, r2, r3):
        W = self.W
        rhs = np.concatenate([r1 + self.GT @ W.inv_sq(r3), r2])
        sol = self._reduced_solve(rhs)
        x = sol[: self.d]
        y = sol[self.d:]
        z = W.inv_sq(self.G @ x - r3)
        return x, y, z

    def solve(self, r1, r2, r3, refine=3):
        """Solve A'y + G'z = r1, A x = r2, G x - W'W z = r3.

        The reduction loses accuracy once W is badly conditioned near the
        optimum, so the residual of the full system is refined as well.
        """
        x, y, z = self._solve_once(r1, r2, r3)
        scale = max(np.abs(r1).max(initial=0.0), np.abs(r2).max(initial=0.0),
                    np.abs(r3).max(initial=0.0), 1.0)
        err = np.inf
        for _ in range(refine):
            e1 = r1 - self.AeqT @ y - self.GT @ z
            e2 = r2 - self.Aeq @ x
            e3 = r3 - self.G @ x + self.W.sq(z)
            new = max(np.abs(e1).max(initial=0.0), np.abs(e2).max(initial=0.0),
                      np.abs(e3).max(initial=0.0))
            if new <= 1e-14 * scale or not new < err:
                break
            err = new
            cx, cy, cz = self._solve_once(e1, e2, e3)
            x, y, z = x + cx, y + cy, z + cz
        return x, y, z


def ipm_solve(Aeq, beq, G, h, c, cones, settings, report):
    """Run the interior-point iteration on the (already scaled) program.

    ``report(x, y, z, s, tau)`` maps a normalized scaled iterate to
    ``(pres, dres, gap)`` in the caller's unscaled metrics; ``report`` is also
    used to decide termination. Returns a dict describing the final state.
    """
    d = G.shape[1]
    kkt = _Kkt(Aeq, G, cones)

    kkt.factor(_Identity(cones))
    x, y, z = kkt.solve(np.zeros(d), beq, h)
    s = cones.push_interior(-z)
    _, y, z = kkt.solve(-c, np.zeros_like(beq), np.zeros_like(h))
    z = cones.push_interior(z)
    tau = kappa = 1.0
    nu = cones.degree

    best = None
    status = "max_iters"
    it = 0
    eps_inf = settings.eps_infeasible
    for it in range(1, settings.ipm_max_iters + 1):
        rx = kkt.AeqT @ y + kkt.GT @ z + c * tau
        ry = kkt.Aeq @ x - beq * tau
        rz = s + kkt.G @ x - h * tau
        ctx = c @ x
        bty = beq @ y + h @ z
        rt = kappa + ctx + bty
        mu = (s @ z + tau * kappa) / (nu + 1)

        pres, dres, gap = report(x / tau, y / tau, z / tau, s / tau)
        score = max(pres / settings.eps_primal, dres / settings.eps_dual, gap / settings.eps_gap)
        if best is None or score < best[0]:
            best = (score, x / tau, y / tau, z / tau, s / tau, pres, dres, gap)
        if score <= 1.0:
            status = "optimal"
            break
        # certificates
        if bty < 0:
            ry_c = kkt.AeqT @ y + kkt.GT @ z
            if np.linalg.norm(ry_c) <= eps_inf * -bty:
                return dict(status="infeasible", y=y / -bty, z=z / -bty, iters=it)
        if ctx < 0:
            rp = np.concatenate([kkt.Aeq @ x, kkt.G @ x + s])
            if np.linalg.norm(rp) <= eps_inf * -ctx:
                return dict(status="unbounded", x=x / -ctx, s=s / -ctx, iters=it)

        try:
            W = _Scaling(cones, s, z)
            kkt.factor(W)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            break
        lam = W.lam
        x1, y1, z1 = kkt.solve(-c, beq, h)
        den1 = c @ x1 + beq @ y1 + h @ z1

        def direction(sig, ds, dkap):
            eta = 1.0 - sig
            dst = W.apply(cones.divide(lam, ds))  # W'(lam \ ds), W symmetric
            x0, y0, z0 = kkt.solve(-eta * rx, -eta * ry, -eta * rz - dst)
            dt = (-eta * rt - dkap / tau - (c @ x0 + beq @ y0 + h @ z0)) / (-kappa / tau + den1)
            dx = x0 + dt * x1
            dy = y0 + dt * y1
            dz = z0 + dt * z1
            dsv = dst - W.apply(W.apply(dz))
            dk = (dkap - kappa * dt) / tau
            return dx, dy, dz, dsv, dt, dk

        def max_alpha(dz, dsv, dt, dk):
            a = min(cones.max_step(s, dsv), cones.max_step(z, dz))
            if dt < 0:
                a = min(a, -tau / dt)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        with np.errstate(all="ignore"):
            aff = direction(0.0, -cones.prod(lam, lam), -tau * kappa)
            dx, dy, dz, dsv, dt, dk = aff
            a_aff = min(1.0, max_alpha(dz, dsv, dt, dk))
            sig = (1.0 - a_aff) ** 3
            ds_cor = (-cones.prod(lam, lam) + sig * mu * cones.e
                      - cones.prod(W.apply(dsv, inverse=True), W.apply(dz)))
            dk_cor = -tau * kappa + sig * mu - dt * dk
            dx, dy, dz, dsv, dt, dk = direction(sig, ds_cor, dk_cor)
            alpha = min(1.0, _STEP * max_alpha(dz, dsv, dt, dk))
        if not np.isfinite(alpha) or alpha < 1e-12:
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv
        tau = tau + alpha * dt
        kappa = kappa + alpha * dk
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            break

    _, xb, yb, zb, sb, pres, dres, gap = best
    return dict(status=status, x=xb, y=yb, z=zb, s=sb, pres=pres, dres=dres, gap=gap, iters=it)
