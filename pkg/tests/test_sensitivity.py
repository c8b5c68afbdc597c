import itertools
import math

import numpy as np
import pytest

from oracles import vertex_lp
from snconic.sensitivity import (
    EXACT_MAX_P,
    SensitivityQuery,
    cone_membership,
    kappa_exact,
    kappa_lower_bound,
)


def _orthant_oracle(psi, s, u, q):
    """Full sign-orthant enumeration with vertex-enumerated LPs in (D, m)."""
    p = psi.shape[0]
    best = math.inf
    col = -np.ones((p, 1))
    for J in itertools.combinations(range(p), s):
        inside = np.isin(np.arange(p), J)
        for sgn in itertools.product((1.0, -1.0), repeat=p):
            sgn = np.array(sgn)
            cone = np.append(np.where(inside, -u, 1.0) * sgn, 0.0)
            G = [np.hstack([psi, col]), np.hstack([-psi, col]),
                 np.hstack([-np.diag(sgn), np.zeros((p, 1))]), cone[None, :]]
            h = [np.zeros(3 * p + 1)]
            if q == 1:
                eqs = [np.append(sgn, 0.0)[None, :]]
            else:
                G.append(np.hstack([np.diag(sgn), np.zeros((p, 1))]))
                h.append(np.ones(p))
                eqs = [np.eye(1, p + 1, k) * sgn[k] for k in range(p)]
            for A in eqs:
                val, _ = vertex_lp(np.eye(1, p + 1, p)[0], np.vstack(G), np.concatenate(h),
                                   A, [1.0])
                best = min(best, val)
    return best


def _sym(rng, p):
    M = rng.standard_normal((p, p))
    return (M + M.T) / 2


def test_cone_membership_examples():
    assert cone_membership([1.0, 0.5, -0.5], [0], 1.0)
    assert not cone_membership([1.0, 0.5, -0.6], [0], 1.0)
    assert cone_membership([1.0, 2.0], [0], 3.0)
    assert cone_membership([0.0, 0.0], [1], 0.1)
    assert cone_membership([1.0, 1.1], [0], 1.0, tol=0.2)


def test_identity_linf():
    assert kappa_exact(SensitivityQuery(np.eye(3), 1, 2.0)) == pytest.approx(1.0, abs=1e-7)


def test_identity_l1_two_dims():
    q = SensitivityQuery(np.eye(2), 1, 3.0, q=1)
    assert kappa_exact(q) == pytest.approx(0.5, abs=1e-7)
    assert kappa_lower_bound(q, samples=200_000, seed=1) == pytest.approx(0.5, abs=1e-3)


def test_zero_psi():
    q = SensitivityQuery(np.zeros((3, 3)), 2, 1.0)
    assert kappa_exact(q) == 0.0 and kappa_lower_bound(q) == 0.0


@pytest.mark.parametrize("q", [1, math.inf])
def test_exact_matches_orthant_oracle(q):
    rng = np.random.default_rng(41)
    for _ in range(4):
        p = 3
        psi = _sym(rng, p)
        s = int(rng.integers(1, 3))
        u = float(rng.uniform(0.5, 3.0))
        val = kappa_exact(SensitivityQuery(psi, s, u, q=q))
        assert val == pytest.approx(_orthant_oracle(psi, s, u, q), abs=1e-6)


def test_exact_errors():
    with pytest.raises(ValueError):
        kappa_exact(SensitivityQuery(np.eye(3), 1, 1.0, q=2))
    with pytest.raises(ValueError):
        kappa_exact(SensitivityQuery(np.eye(EXACT_MAX_P + 1), 1, 1.0))


def test_query_validation():
    with pytest.raises(ValueError):
        SensitivityQuery(np.ones((2, 3)), 1, 1.0)
    with pytest.raises(ValueError):
        SensitivityQuery([[1.0, 2.0], [0.0, 1.0]], 1, 1.0)
    with pytest.raises(ValueError):
        SensitivityQuery(np.eye(2), 0, 1.0)
    with pytest.raises(ValueError):
        SensitivityQuery(np.eye(2), 1, 0.0)
    with pytest.raises(ValueError):
        SensitivityQuery(np.eye(2), 1, 1.0, q=3)
    with pytest.raises(ValueError):
        kappa_lower_bound(SensitivityQuery(np.eye(2), 1, 1.0), samples=0)


def test_monotone_in_s_and_u():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 4))
    psi = X.T @ X / 30
    for q in (1, math.inf):
        by_s = [kappa_exact(SensitivityQuery(psi, s, 1.0, q=q)) for s in (1, 2, 3)]
        by_u = [kappa_exact(SensitivityQuery(psi, 2, u, q=q)) for u in (0.5, 1.0, 2.0)]
        assert all(a >= b - 1e-7 for a, b in zip(by_s, by_s[1:]))
        assert all(a >= b - 1e-7 for a, b in zip(by_u, by_u[1:]))


def test_linf_dominates_scaled_l1():
    # ||D||_1 <= p ||D||_inf, so kappa_inf >= kappa_1 / p
    rng = np.random.default_rng(8)
    for _ in range(3):
        psi = _sym(rng, 4)
        k1 = kappa_exact(SensitivityQuery(psi, 2, 1.5, q=1))
        kinf = kappa_exact(SensitivityQuery(psi, 2, 1.5))
        assert kinf >= k1 / 4 - 1e-7


@pytest.mark.parametrize("q", [1, math.inf])
def test_sampling_bounds_exact_from_above(q):
    rng = np.random.default_rng(9)
    psi = _sym(rng, 4) + 3 * np.eye(4)
    query = SensitivityQuery(psi, 2, 1.0, q=q)
    assert kappa_lower_bound(query, samples=20_000, seed=2) >= kappa_exact(query) - 1e-9


def test_sampling_deterministic():
    query = SensitivityQuery(np.eye(5) + 0.1, 2, 1.0, q=2)
    a = kappa_lower_bound(query, samples=5000, seed=3)
    assert a == kappa_lower_bound(query, samples=5000, seed=3)
    assert a > 0
