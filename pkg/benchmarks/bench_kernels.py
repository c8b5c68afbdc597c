"""Compare the numba kernels with their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--skip-fit]

Kernel timings call both twins in one process (numba compiled and warmed
first). The end-to-end timing runs a full estimator fit in a subprocess once
with and once without SN_CONIC_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from snconic import _kernels as K
from snconic._accel import USE_NUMBA


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def soc_case(rng, blocks=100, dim=301):
    dims = np.full(blocks, dim, dtype=np.int64)
    starts = np.arange(blocks, dtype=np.int64) * dim
    return starts, dims, rng.standard_normal(blocks * dim)


def interior(rng, starts, dims):
    x = rng.standard_normal(int(dims.sum())) * 0.1
    for a, d in zip(starts, dims):
        x[a] = np.linalg.norm(x[a + 1:a + d]) + 1.0
    return x


def cases(rng):
    starts, dims, v = soc_case(rng)
    s, z = interior(rng, starts, dims), interior(rng, starts, dims)
    w = np.zeros_like(s)
    beta = np.zeros(starts.size)
    lam = np.zeros_like(s)
    K._soc_nt_np(s, z, starts, dims, w, beta, lam)
    out = np.zeros_like(s)
    dx = rng.standard_normal(s.size)

    n, p = 300, 100
    X = rng.standard_normal((n, p))
    y = X[:, :5].sum(axis=1) + rng.standard_normal(n)
    gd = np.ones(p)
    cross = X.T @ X / n
    lam_l = 0.1

    yield ("soc_project", lambda: K._soc_project_nb(v.copy(), starts, dims),
           lambda: K._soc_project_np(v.copy(), starts, dims))
    yield ("soc_nt_scaling",
           lambda: K._soc_nt_nb(s, z, starts, dims, np.zeros_like(s), np.zeros(starts.size),
                                np.zeros_like(s)),
           lambda: K._soc_nt_np(s, z, starts, dims, np.zeros_like(s), np.zeros(starts.size),
                                np.zeros_like(s)))
    yield ("soc_apply_scaling", lambda: K._soc_apply_nb(dx, w, beta, starts, dims, False, out),
           lambda: K._soc_apply_np(dx, w, beta, starts, dims, False, out))
    yield ("soc_jordan_divide", lambda: K._soc_div_nb(lam, dx, starts, dims, out),
           lambda: K._soc_div_np(lam, dx, starts, dims, out))
    yield ("soc_max_step", lambda: K._soc_step_nb(s, dx, starts, dims),
           lambda: K._soc_step_np(s, dx, starts, dims))
    yield ("lasso_cd", lambda: K._lasso_cd_nb(X, y, lam_l, np.zeros(p), 1e-8, 100000),
           lambda: K._lasso_cd_np(X, y, lam_l, np.zeros(p), 1e-8, 100000))
    yield ("hn_squared", lambda: K._hn_sq_nb(X, gd, cross), lambda: K._hn_sq_np(X, gd))


FIT_SNIPPET = """
import time
from snconic import SimConfig, generate, fit, SnConfig, known_additive
d = generate(SimConfig(n=300, p=100, seed=1), 0)
g = known_additive(1.0, 100)
fit(d.dataset, g, SnConfig(tau_scale=0.5))
t = time.perf_counter()
fit(d.dataset, g, SnConfig(tau_scale=0.5))
print(time.perf_counter() - t)
"""


def fit_time(disable):
    env = dict(os.environ)
    if disable:
        env["SN_CONIC_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SN_CONIC_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-fit", action="store_true")
    args = ap.parse_args()
    if not USE_NUMBA:
        sys.exit("numba is disabled in this process; unset SN_CONIC_DISABLE_NUMBA")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, nb, npy in cases(rng):
        nb()  # compile
        t_nb = best_of(nb, args.repeat)
        t_np = best_of(npy, args.repeat)
        print(f"{name:<20}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}")
    if not args.skip_fit:
        t_nb, t_np = fit_time(False), fit_time(True)
        print(f"\nfit n=300 p=100     numba {t_nb:.2f}s   numpy {t_np:.2f}s")


if __name__ == "__main__":
    main()
