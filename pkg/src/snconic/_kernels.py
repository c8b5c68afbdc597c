"""Hot loops, each with a numba kernel and a vectorized numpy twin.

The public wrappers dispatch on :data:`snconic._accel.USE_NUMBA`. Both paths
must agree to rounding; ``benchmarks/bench_kernels.py`` times them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# Second-order cone projection over a sequence of contiguous blocks
# --------------------------------------------------------------------------

@njit
def _soc_project_nb(v, starts, dims):
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        s = v[a]
        nrm2 = 0.0
        for i in range(a + 1, a + d):
            nrm2 += v[i] * v[i]
        nrm = np.sqrt(nrm2)
        if nrm <= s:
            continue
        if nrm <= -s:
            for i in range(a, a + d):
                v[i] = 0.0
            continue
        alpha = 0.5 * (s + nrm)
        v[a] = alpha
        scale = alpha / nrm
        for i in range(a + 1, a + d):
            v[i] *= scale


def _soc_project_np(v, starts, dims):
    if starts.size == 0:
        return
    heads = v[starts]
    sq = v * v
    sq[starts] = 0.0
    # contiguous blocks: reduceat over starts covers each block exactly
    nrm = np.sqrt(np.add.reduceat(sq, starts)[: starts.size])
    alpha = 0.5 * (heads + nrm)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > 0.0, alpha / nrm, 0.0)
    inside = nrm <= heads
    polar = (~inside) & (nrm <= -heads)
    scale = np.where(inside, 1.0, np.where(polar, 0.0, scale))
    new_heads = np.where(inside, heads, np.where(polar, 0.0, alpha))
    v *= np.repeat(scale, dims)
    v[starts] = new_heads


def soc_project_blocks(v, starts, dims):
    """Project ``v`` in place onto the product of SOC blocks ``v[a:a+d]``.

    ``starts`` must be increasing and the blocks disjoint.
    """
    if USE_NUMBA:
        _soc_project_nb(v, starts, dims)
        return
    if starts.size == 0:
        return
    lo = starts[0]
    hi = starts[-1] + dims[-1]
    local = starts - lo
    if hi - lo == dims.sum():
        _soc_project_np(v[lo:hi], local, dims)
    else:
        idx = np.concatenate([np.arange(a, a + d) for a, d in zip(starts, dims)])
        sub = v[idx]
        _soc_project_np(sub, np.concatenate(([0], np.cumsum(dims)[:-1])), dims)
        v[idx] = sub


# --------------------------------------------------------------------------
# Lasso by cyclic coordinate descent
# --------------------------------------------------------------------------

@njit
def _lasso_cd_nb(X, y, lam, beta, tol, max_iter):
    n, p = X.shape
    col_sq = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += X[i, j] * X[i, j]
        col_sq[j] = acc / n
    resid = y.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                resid[i] -= X[i, j] * beta[j]
    it = 0
    while it < max_iter:
        it += 1
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * resid[i]
            rho = rho / n + col_sq[j] * beta[j]
            if rho > lam:
                new = (rho - lam) / col_sq[j]
            elif rho < -lam:
                new = (rho + lam) / col_sq[j]
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                for i in range(n):
                    resid[i] -= X[i, j] * delta
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            break
    return it


def _lasso_cd_np(X, y, lam, beta, tol, max_iter):
    n, p = X.shape
    col_sq = (X * X).sum(axis=0) / n
    resid = y - X @ beta
    Xt = np.ascontiguousarray(X.T)
    it = 0
    while it < max_iter:
        it += 1
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            xj = Xt[j]
            rho = float(xj @ resid) / n + col_sq[j] * beta[j]
            if rho > lam:
                new = (rho - lam) / col_sq[j]
            elif rho < -lam:
                new = (rho + lam) / col_sq[j]
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                resid -= xj * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return it


def lasso_cd(X, y, lam, beta, tol=1e-8, max_iter=100000):
    """Minimize (1/2n)||y - X b||^2 + lam ||b||_1 in place on ``beta``.

    Returns the number of sweeps taken.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if USE_NUMBA:
        return int(_lasso_cd_nb(X, y, float(lam), beta, float(tol), int(max_iter)))
    return _lasso_cd_np(X, y, float(lam), beta, float(tol), int(max_iter))


# --------------------------------------------------------------------------
# Exact H_n: max over j of the max-entry of (1/n) A_j^T A_j,
# A_j = rows z_ij z_i - gamma_j e_j
# --------------------------------------------------------------------------

@njit
def _hn_sq_nb(Z, gdiag, cross):
    n, p = Z.shape
    best = 0.0
    G = np.zeros((p, p))
    for j in range(p):
        for k in range(p):
            for l in range(k, p):
                G[k, l] = 0.0
        for i in range(n):
            w = Z[i, j] * Z[i, j]
            if w == 0.0:
                continue
            for k in range(p):
                a = w * Z[i, k]
                if a == 0.0:
                    continue
                for l in range(k, p):
                    G[k, l] += a * Z[i, l]
        g = gdiag[j]
        for k in range(p):
            for l in range(k, p):
                val = G[k, l] / n
                if k == j:
                    val -= g * cross[j, l]
                if l == j:
                    val -= g * cross[j, k]
                if k == j and l == j:
                    val += g * g
                if abs(val) > best:
                    best = abs(val)
    return best


def _hn_sq_np(Z, gdiag, block=64):
    n, p = Z.shape
    best = 0.0
    cross = Z.T @ Z / n  # (1/n) sum_i z_ij z_ik
    for j0 in range(0, p, block):
        js = np.arange(j0, min(p, j0 + block))
        W = Z[:, js] ** 2  # n x B
        # G[b, k, l] = (1/n) sum_i W[i, b] Z[i, k] Z[i, l]
        G = np.einsum("ib,ik,il->bkl", W, Z, Z, optimize=True) / n
        for b, j in enumerate(js):
            g = gdiag[j]
            if g != 0.0:
                Gj = G[b]
                Gj[j, :] -= g * cross[j, :]
                Gj[:, j] -= g * cross[j, :]
                Gj[j, j] += g * g
        best = max(best, float(np.abs(G).max()))
    return best


def hn_squared(Z, gdiag, block=64):
    """max_j max_{k,l} |(1/n) sum_i a_ik a_il| with a_i = z_ij z_i - gamma_j e_j."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    gdiag = np.ascontiguousarray(gdiag, dtype=np.float64)
    if USE_NUMBA:
        cross = Z.T @ Z / Z.shape[0]
        return float(_hn_sq_nb(Z, gdiag, cross))
    return _hn_sq_np(Z, gdiag, block)


# --------------------------------------------------------------------------
# Second-order cone algebra for the interior-point path.
# Vectors hold only SOC rows, blocks tile them contiguously from offset 0.
# --------------------------------------------------------------------------

@njit
def _soc_nt_nb(s, z, starts, dims, w, beta, lam):
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        sjs = s[a] * s[a]
        zjz = z[a] * z[a]
        for i in range(a + 1, a + d):
            sjs -= s[i] * s[i]
            zjz -= z[i] * z[i]
        rs = np.sqrt(sjs)
        rz = np.sqrt(zjz)
        dot = 0.0
        for i in range(a, a + d):
            dot += s[i] * z[i]
        gam = np.sqrt(0.5 * (1.0 + dot / (rs * rz)))
        # wbar = (s/rs + J z/rz) / (2 gam); store v = (wbar + e) / sqrt(2 (wbar0 + 1))
        wb0 = (s[a] / rs + z[a] / rz) / (2.0 * gam)
        nv = np.sqrt(2.0 * (wb0 + 1.0))
        w[a] = (wb0 + 1.0) / nv
        for i in range(a + 1, a + d):
            w[i] = (s[i] / rs - z[i] / rz) / (2.0 * gam * nv)
        b = np.sqrt(rs / rz)
        beta[k] = b
        # lambda = W z = b (2 w (w'z) - J z)
        wz = 0.0
        for i in range(a, a + d):
            wz += w[i] * z[i]
        lam[a] = b * (2.0 * w[a] * wz - z[a])
        for i in range(a + 1, a + d):
            lam[i] = b * (2.0 * w[i] * wz + z[i])


def _seg_sum(x, starts):
    return np.add.reduceat(x, starts) if x.size else np.zeros(starts.size)


def _soc_nt_np(s, z, starts, dims, w, beta, lam):
    sq_s = s * s
    sq_z = z * z
    sjs = 2.0 * sq_s[starts] - _seg_sum(sq_s, starts)
    zjz = 2.0 * sq_z[starts] - _seg_sum(sq_z, starts)
    rs = np.sqrt(sjs)
    rz = np.sqrt(zjz)
    dot = _seg_sum(s * z, starts)
    gam = np.sqrt(0.5 * (1.0 + dot / (rs * rz)))
    rs_r = np.repeat(rs, dims)
    rz_r = np.repeat(rz, dims)
    g_r = np.repeat(gam, dims)
    wb0 = (s[starts] / rs + z[starts] / rz) / (2.0 * gam)
    nv = np.sqrt(2.0 * (wb0 + 1.0))
    w[:] = (s / rs_r - z / rz_r) / (2.0 * g_r * np.repeat(nv, dims))
    w[starts] = (wb0 + 1.0) / nv
    beta[:] = np.sqrt(rs / rz)
    wz = np.repeat(_seg_sum(w * z, starts), dims)
    b_r = np.repeat(beta, dims)
    lam[:] = b_r * (2.0 * w * wz + z)
    lam[starts] = beta * (2.0 * w[starts] * wz[starts] - z[starts])


def soc_nt_scaling(s, z, starts, dims):
    """Nesterov-Todd scaling per SOC block.

    With W = beta (2 w w' - J) per block, returns ``(w, beta, lam)``: the
    scaling vectors (w'Jw = 1), block factors, and lam = W z = W^{-1} s.
    """
    w = np.empty_like(s)
    lam = np.empty_like(s)
    beta = np.empty(starts.size)
    if USE_NUMBA:
        _soc_nt_nb(s, z, starts, dims, w, beta, lam)
    else:
        _soc_nt_np(s, z, starts, dims, w, beta, lam)
    return w, beta, lam


@njit
def _soc_apply_nb(u, w, beta, starts, dims, inverse, out):
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        if inverse:
            # (1/b) (2 J w (w'J u) - J u)
            wju = w[a] * u[a]
            for i in range(a + 1, a + d):
                wju -= w[i] * u[i]
            sc = 1.0 / beta[k]
            out[a] = sc * (2.0 * w[a] * wju - u[a])
            for i in range(a + 1, a + d):
                out[i] = sc * (-2.0 * w[i] * wju + u[i])
        else:
            # b (2 w (w'u) - J u)
            wu = 0.0
            for i in range(a, a + d):
                wu += w[i] * u[i]
            sc = beta[k]
            out[a] = sc * (2.0 * w[a] * wu - u[a])
            for i in range(a + 1, a + d):
                out[i] = sc * (2.0 * w[i] * wu + u[i])


def _soc_apply_np(u, w, beta, starts, dims, inverse, out):
    if inverse:
        wu = w * u
        wju = 2.0 * wu[starts] - _seg_sum(wu, starts)
        sc = np.repeat(1.0 / beta, dims)
        r = np.repeat(wju, dims)
        out[:] = sc * (-2.0 * w * r + u)
        out[starts] = sc[starts] * (2.0 * w[starts] * wju - u[starts])
    else:
        wu = np.repeat(_seg_sum(w * u, starts), dims)
        sc = np.repeat(beta, dims)
        out[:] = sc * (2.0 * w * wu + u)
        out[starts] = sc[starts] * (2.0 * w[starts] * wu[starts] - u[starts])


def soc_apply_scaling(u, w, beta, starts, dims, inverse=False):
    """W u (or W^{-1} u) blockwise; W is symmetric so W^{-T} = W^{-1}."""
    out = np.empty_like(u)
    if USE_NUMBA:
        _soc_apply_nb(u, w, beta, starts, dims, inverse, out)
    else:
        _soc_apply_np(u, w, beta, starts, dims, inverse, out)
    return out


@njit
def _soc_prod_nb(u, v, starts, dims, out):
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        acc = 0.0
        for i in range(a, a + d):
            acc += u[i] * v[i]
        for i in range(a + 1, a + d):
            out[i] = u[a] * v[i] + v[a] * u[i]
        out[a] = acc


def _soc_prod_np(u, v, starts, dims, out):
    h_u = np.repeat(u[starts], dims)
    h_v = np.repeat(v[starts], dims)
    out[:] = h_u * v + h_v * u
    out[starts] = _seg_sum(u * v, starts)


def soc_jordan_product(u, v, starts, dims):
    """u o v = (u'v, u0 v1 + v0 u1) per block."""
    out = np.empty_like(u)
    if USE_NUMBA:
        _soc_prod_nb(u, v, starts, dims, out)
    else:
        _soc_prod_np(u, v, starts, dims, out)
    return out


@njit
def _soc_div_nb(lam, v, starts, dims, out):
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        l0 = lam[a]
        ltl = 0.0
        ltv = 0.0
        for i in range(a + 1, a + d):
            ltl += lam[i] * lam[i]
            ltv += lam[i] * v[i]
        u0 = (l0 * v[a] - ltv) / (l0 * l0 - ltl)
        out[a] = u0
        for i in range(a + 1, a + d):
            out[i] = (v[i] - lam[i] * u0) / l0


def _soc_div_np(lam, v, starts, dims, out):
    l0 = lam[starts]
    ltl = _seg_sum(lam * lam, starts) - l0 * l0
    ltv = _seg_sum(lam * v, starts) - l0 * v[starts]
    u0 = (l0 * v[starts] - ltv) / (l0 * l0 - ltl)
    out[:] = (v - lam * np.repeat(u0, dims)) / np.repeat(l0, dims)
    out[starts] = u0


def soc_jordan_divide(lam, v, starts, dims):
    """Solve lam o u = v for u per block (lam in the cone interior)."""
    out = np.empty_like(v)
    if USE_NUMBA:
        _soc_div_nb(lam, v, starts, dims, out)
    else:
        _soc_div_np(lam, v, starts, dims, out)
    return out


@njit
def _soc_step_nb(x, dx, starts, dims):
    best = np.inf
    for k in range(starts.shape[0]):
        a = starts[k]
        d = dims[k]
        # (x0 + t dx0)^2 - |x1 + t dx1|^2 >= 0 with x0 + t dx0 >= 0
        qa = dx[a] * dx[a]
        qb = x[a] * dx[a]
        qc = x[a] * x[a]
        for i in range(a + 1, a + d):
            qa -= dx[i] * dx[i]
            qb -= x[i] * dx[i]
            qc -= x[i] * x[i]
        t = _first_root(qa, 2.0 * qb, qc)
        if dx[a] < 0.0:
            t = min(t, -x[a] / dx[a])
        if t < best:
            best = t
    return best


@njit
def _first_root(qa, qb, qc):
    # smallest positive root of qa t^2 + qb t + qc, inf if none (qc > 0 assumed)
    if qc <= 0.0:
        return 0.0
    if qa == 0.0:
        if qb < 0.0:
            return -qc / qb
        return np.inf
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return np.inf
    sq = np.sqrt(disc)
    if qb >= 0.0:
        q = -0.5 * (qb + sq)
    else:
        q = -0.5 * (qb - sq)
    r1 = q / qa
    r2 = qc / q if q != 0.0 else np.inf
    t = np.inf
    if r1 > 0.0:
        t = r1
    if r2 > 0.0 and r2 < t:
        t = r2
    return t


def _soc_step_np(x, dx, starts, dims):
    x0, d0 = x[starts], dx[starts]
    qa = 2.0 * d0 * d0 - _seg_sum(dx * dx, starts)
    qb = 2.0 * (2.0 * x0 * d0 - _seg_sum(x * dx, starts))
    qc = 2.0 * x0 * x0 - _seg_sum(x * x, starts)
    t = np.full(starts.size, np.inf)
    t[qc <= 0.0] = 0.0
    lin = (qa == 0.0) & (qc > 0.0) & (qb < 0.0)
    t[lin] = -qc[lin] / qb[lin]
    quad = (qa != 0.0) & (qc > 0.0)
    disc = qb * qb - 4.0 * qa * qc
    ok = quad & (disc >= 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    q = np.where(qb >= 0.0, -0.5 * (qb + sq), -0.5 * (qb - sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(ok, q / np.where(qa == 0.0, 1.0, qa), np.inf)
        r2 = np.where(ok & (q != 0.0), qc / np.where(q == 0.0, 1.0, q), np.inf)
    r1 = np.where(r1 > 0.0, r1, np.inf)
    r2 = np.where(r2 > 0.0, r2, np.inf)
    t = np.where(ok, np.minimum(r1, r2), t)
    with np.errstate(divide="ignore", invalid="ignore"):
        lim = np.where(d0 < 0.0, -x0 / np.where(d0 < 0.0, d0, -1.0), np.inf)
    t = np.minimum(t, lim)
    return float(t.min()) if t.size else np.inf


def soc_max_step(x, dx, starts, dims):
    """Largest t >= 0 with x + t dx in the SOC product (x interior)."""
    if starts.size == 0:
        return np.inf
    if USE_NUMBA:
        return float(_soc_step_nb(x, dx, starts, dims))
    return _soc_step_np(x, dx, starts, dims)
