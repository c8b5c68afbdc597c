"""Seeded data-generating processes for the simulation designs.

Every random quantity comes from its own Philox substream keyed by
``(master seed, stream tag, replication index)``, so draws do not depend on
worker scheduling and switching regime leaves ``x`` untouched.
"""
import enum
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Provenance

__all__ = ["BetaKind", "Regime", "SimConfig", "SimDraw", "make_beta", "substream",
           "std_normals", "gen_case1", "gen_case2", "generate", "draw_checksum"]

# stream tags; fixed forever, changing one changes every published draw
_TAG_X, _TAG_W, _TAG_XI, _TAG_ETA, _TAG_PI = 1, 2, 3, 4, 5


class BetaKind(enum.Enum):
    SEPARATED5 = "separated5"
    SEPARATED6 = "separated6"
    UNSEPARATED = "unseparated"
    CUSTOM = "custom"


class Regime(enum.Enum):
    ADDITIVE = "additive"
    MAR = "mar"


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    rho: float = 0.5
    sigma_xi: float = 1.0
    sigma_w: float = 1.0
    beta_kind: BetaKind = BetaKind.SEPARATED5
    beta_custom: tuple = None
    regime: Regime = Regime.ADDITIVE
    pi_low: float = 0.1
    pi_high: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.sigma_xi < 0 or self.sigma_w < 0:
            raise ValueError("noise levels must be >= 0")
        if not 0.0 <= self.pi_low <= self.pi_high < 1.0:
            raise ValueError("need 0 <= pi_low <= pi_high < 1")
        object.__setattr__(self, "beta_kind", BetaKind(self.beta_kind))
        object.__setattr__(self, "regime", Regime(self.regime))
        if self.beta_custom is not None:
            object.__setattr__(self, "beta_custom", tuple(float(b) for b in self.beta_custom))
        if self.beta_kind is BetaKind.CUSTOM and self.beta_custom is None:
            raise ValueError("custom beta kind needs beta_custom")

    def to_dict(self):
        return {
            "n": self.n, "p": self.p, "rho": self.rho, "sigma_xi": self.sigma_xi,
            "sigma_w": self.sigma_w, "beta_kind": self.beta_kind.value,
            "beta_custom": None if self.beta_custom is None else list(self.beta_custom),
            "regime": self.regime.value, "pi_low": self.pi_low, "pi_high": self.pi_high,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class SimDraw:
    dataset: Dataset
    oracle_x: np.ndarray
    beta0: np.ndarray
    xi: np.ndarray
    pi_used: float = None


def make_beta(kind, p, custom=None):
    kind = BetaKind(kind)
    if kind is BetaKind.CUSTOM:
        if custom is None:
            raise ValueError("custom beta needs values")
        lead = np.asarray(custom, dtype=np.float64)
    elif kind is BetaKind.SEPARATED5:
        lead = np.ones(5)
    elif kind is BetaKind.SEPARATED6:
        lead = np.ones(6)
    else:
        lead = np.array([1.0, 1 / 2, 1 / 3, 1 / 4, 1 / 5, 1 / 10])
    if p < lead.size:
        raise ValueError(f"p = {p} is smaller than the {lead.size} leading coefficients")
    beta = np.zeros(p)
    beta[: lead.size] = lead
    return beta


def substream(seed, tag, rep):
    """Independent Philox generator for one (seed, stream tag, replication)."""
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(tag), int(rep)])
    return np.random.Generator(np.random.Philox(ss))


def std_normals(gen, shape):
    """Standard normals by Box-Muller from the generator's uniform doubles."""
    size = int(np.prod(shape))
    half = (size + 1) // 2
    u1 = 1.0 - gen.random(half)  # (0, 1]
    u2 = gen.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * math.pi * u2
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(ang)
    out[1::2] = r * np.sin(ang)
    return out[:size].reshape(shape)


def _design(cfg, rep):
    g = substream(cfg.seed, _TAG_X, rep)
    e = std_normals(g, (cfg.n, cfg.p))
    x = np.empty_like(e)
    x[:, 0] = e[:, 0]
    c = math.sqrt(1.0 - cfg.rho ** 2)
    for j in range(1, cfg.p):
        x[:, j] = cfg.rho * x[:, j - 1] + c * e[:, j]
    return x


def _response(cfg, x, beta0, rep):
    xi = cfg.sigma_xi * std_normals(substream(cfg.seed, _TAG_XI, rep), (cfg.n,))
    return x @ beta0 + xi, xi


def gen_case1(cfg, rep=0):
    """Gaussian AR(1) design observed with additive Gaussian noise."""
    if cfg.regime is not Regime.ADDITIVE:
        raise ValueError("gen_case1 needs the additive regime")
    beta0 = make_beta(cfg.beta_kind, cfg.p, cfg.beta_custom)
    x = _design(cfg, rep)
    y, xi = _response(cfg, x, beta0, rep)
    w = cfg.sigma_w * std_normals(substream(cfg.seed, _TAG_W, rep), (cfg.n, cfg.p))
    ds = Dataset(y, x + w, None, Provenance.ADDITIVE_KNOWN)
    return SimDraw(ds, x, beta0, xi, None)


def gen_case2(cfg, rep=0):
    """Same design with entries missing at random at a rate pi drawn per call."""
    if cfg.regime is not Regime.MAR:
        raise ValueError("gen_case2 needs the missing-at-random regime")
    beta0 = make_beta(cfg.beta_kind, cfg.p, cfg.beta_custom)
    x = _design(cfg, rep)
    y, xi = _response(cfg, x, beta0, rep)
    pg = substream(cfg.seed, _TAG_PI, rep)
    pi = cfg.pi_low + (cfg.pi_high - cfg.pi_low) * pg.random()
    eg = substream(cfg.seed, _TAG_ETA, rep)
    eta = (eg.random((cfg.n, cfg.p)) < 1.0 - pi).astype(np.int8)
    ds = Dataset(y, x * eta, eta, Provenance.MISSING_AT_RANDOM)
    return SimDraw(ds, x, beta0, xi, float(pi))


def generate(cfg, rep=0):
    return gen_case1(cfg, rep) if cfg.regime is Regime.ADDITIVE else gen_case2(cfg, rep)


def draw_checksum(draw):
    """SHA-256 over y, Z and the mask; methods sharing a draw must agree on it."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(draw.dataset.y).tobytes())
    h.update(np.ascontiguousarray(draw.dataset.Z).tobytes())
    if draw.dataset.mask is not None:
        h.update(np.ascontiguousarray(draw.dataset.mask).tobytes())
    return h.hexdigest()
