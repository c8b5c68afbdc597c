import math

import numpy as np
import pytest

from snconic.simgen import (
    BetaKind,
    Regime,
    SimConfig,
    draw_checksum,
    gen_case1,
    gen_case2,
    generate,
    make_beta,
    std_normals,
    substream,
)

ONE = dict(beta_kind="custom", beta_custom=(1.0,))


def test_make_beta_templates():
    assert make_beta(BetaKind.SEPARATED5, 10).tolist() == [1.0] * 5 + [0.0] * 5
    np.testing.assert_allclose(make_beta(BetaKind.UNSEPARATED, 8),
                               [1, 0.5, 1 / 3, 0.25, 0.2, 0.1, 0, 0])
    assert make_beta(BetaKind.SEPARATED6, 6).tolist() == [1.0] * 6
    assert make_beta(BetaKind.CUSTOM, 3, [2.0]).tolist() == [2.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        make_beta(BetaKind.SEPARATED6, 5)
    with pytest.raises(ValueError):
        make_beta(BetaKind.CUSTOM, 5)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=10, p=5, rho=1.0)
    with pytest.raises(ValueError):
        SimConfig(n=10, p=5, pi_low=0.5, pi_high=0.2)
    with pytest.raises(ValueError):
        SimConfig(n=1, p=5)
    with pytest.raises(ValueError):
        SimConfig(n=10, p=5, beta_kind="custom")
    cfg = SimConfig(n=10, p=5, regime="mar", seed=3)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


def test_independent_columns_when_rho_zero():
    n = 4000
    draw = gen_case1(SimConfig(n=n, p=5, rho=0.0, seed=1, **ONE))
    C = draw.oracle_x.T @ draw.oracle_x / n
    assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 4 / math.sqrt(n)


def test_ar1_correlation_at_lag_two():
    draw = gen_case1(SimConfig(n=100_000, p=3, rho=0.5, seed=2, **ONE))
    r = np.corrcoef(draw.oracle_x[:, 0], draw.oracle_x[:, 2])[0, 1]
    assert r == pytest.approx(0.25, abs=0.01)


def test_ar1_covariance_matrix():
    p, rho = 6, 0.5
    draw = gen_case1(SimConfig(n=100_000, p=p, rho=rho, seed=3, **ONE))
    C = draw.oracle_x.T @ draw.oracle_x / draw.oracle_x.shape[0]
    idx = np.arange(p)
    np.testing.assert_allclose(C, rho ** np.abs(idx[:, None] - idx[None, :]), atol=0.02)


def test_no_measurement_error_means_z_equals_x():
    draw = gen_case1(SimConfig(n=50, p=5, sigma_w=0.0, seed=4, **ONE))
    np.testing.assert_array_equal(draw.dataset.Z, draw.oracle_x)


def test_response_reconstructs_from_stored_noise():
    draw = generate(SimConfig(n=50, p=8, seed=5), 3)
    np.testing.assert_array_equal(draw.dataset.y, draw.oracle_x @ draw.beta0 + draw.xi)


def test_gaussian_moments():
    z = std_normals(substream(7, 99, 0), (100_000,))
    N = z.size
    assert abs(z.mean()) <= 4 / math.sqrt(N)
    assert z.var() == pytest.approx(1.0, abs=0.05)
    odd = std_normals(substream(7, 99, 0), (3, 5))
    assert odd.shape == (3, 5)


def test_mar_without_missingness():
    cfg = SimConfig(n=30, p=4, regime=Regime.MAR, pi_low=0.0, pi_high=0.0, seed=5, **ONE)
    draw = gen_case2(cfg)
    assert np.all(draw.dataset.mask == 1)
    np.testing.assert_array_equal(draw.dataset.Z, draw.oracle_x)
    assert draw.pi_used == 0.0


def test_mar_observed_fraction():
    n, p = 2000, 50
    cfg = SimConfig(n=n, p=p, regime=Regime.MAR, pi_low=0.5, pi_high=0.5, seed=6, **ONE)
    draw = gen_case2(cfg)
    assert draw.dataset.mask.mean() == pytest.approx(0.5, abs=3 / math.sqrt(n * p))
    assert np.all(draw.dataset.Z[draw.dataset.mask == 0] == 0)


def test_mar_pi_within_bounds():
    cfg = SimConfig(n=20, p=6, regime=Regime.MAR, seed=8)
    pis = [gen_case2(cfg, r).pi_used for r in range(30)]
    assert all(0.1 <= v <= 0.75 for v in pis)
    assert len(set(pis)) == 30


@pytest.mark.parametrize("regime", list(Regime))
def test_fixed_seed_is_bitwise_reproducible(regime):
    cfg = SimConfig(n=40, p=7, regime=regime, seed=12)
    a, b = generate(cfg, 2), generate(cfg, 2)
    assert draw_checksum(a) == draw_checksum(b)
    np.testing.assert_array_equal(a.oracle_x, b.oracle_x)
    assert generate(cfg, 3).dataset.y.tobytes() != a.dataset.y.tobytes()


def test_stream_separation():
    # the design does not depend on the regime or the noise levels
    base = SimConfig(n=40, p=7, seed=21)
    x1 = generate(base, 4).oracle_x
    x2 = generate(SimConfig(n=40, p=7, seed=21, regime="mar"), 4).oracle_x
    x3 = generate(SimConfig(n=40, p=7, seed=21, sigma_w=3.0, sigma_xi=0.1), 4).oracle_x
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(x1, x3)


def test_regime_mismatch_errors():
    with pytest.raises(ValueError):
        gen_case1(SimConfig(n=10, p=6, regime="mar"))
    with pytest.raises(ValueError):
        gen_case2(SimConfig(n=10, p=6))


def test_checksum_sensitive_to_mask():
    cfg = SimConfig(n=20, p=6, regime="mar", seed=1)
    d = generate(cfg, 0)
    from snconic.dataset import Dataset
    from snconic.simgen import SimDraw

    flipped = d.dataset.mask.copy()
    j = np.argwhere(flipped == 1)[0]
    flipped[tuple(j)] = 0
    Z = d.dataset.Z.copy()
    Z[tuple(j)] = 0.0
    other = SimDraw(Dataset(d.dataset.y, Z, flipped), d.oracle_x, d.beta0, d.xi, d.pi_used)
    assert draw_checksum(other) != draw_checksum(d)
