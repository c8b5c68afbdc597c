"""Cone descriptors and Euclidean projections."""
import enum
from dataclasses import dataclass

import numpy as np

from ._kernels import soc_project_blocks

__all__ = ["ConeKind", "ConeSpec", "project_onto_cone", "ConeLayout"]


class ConeKind(enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"


@dataclass(frozen=True)
class ConeSpec:
    kind: ConeKind
    dim: int

    def __post_init__(self):
        kind = ConeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.dim) != self.dim:
            raise ValueError("cone dimension must be an integer")
        object.__setattr__(self, "dim", int(self.dim))
        if kind is ConeKind.SOC and self.dim < 2:
            raise ValueError("a second-order cone needs dim >= 2")
        if self.dim < 1:
            raise ValueError("cone dimension must be positive")


def project_onto_cone(v, cone):
    """Euclidean projection of ``v`` onto a single cone."""
    v = np.array(v, dtype=np.float64)
    if v.shape != (cone.dim,):
        raise ValueError(f"vector of length {v.size} does not match cone dim {cone.dim}")
    if cone.kind is ConeKind.ZERO:
        return np.zeros_like(v)
    if cone.kind is ConeKind.NONNEG:
        return np.maximum(v, 0.0)
    soc_project_blocks(v, np.array([0], dtype=np.int64), np.array([cone.dim], dtype=np.int64))
    return v


class ConeLayout:
    """Row bookkeeping for a product cone, used by the solver's projections."""

    def __init__(self, cones):
        self.cones = tuple(cones)
        zero, nonneg, soc_starts, soc_dims = [], [], [], []
        offset = 0
        for cone in self.cones:
            if cone.kind is ConeKind.ZERO:
                zero.append(np.arange(offset, offset + cone.dim))
            elif cone.kind is ConeKind.NONNEG:
                nonneg.append(np.arange(offset, offset + cone.dim))
            else:
                soc_starts.append(offset)
                soc_dims.append(cone.dim)
            offset += cone.dim
        self.m = offset
        self.zero_idx = np.concatenate(zero) if zero else np.zeros(0, dtype=np.int64)
        self.nonneg_idx = np.concatenate(nonneg) if nonneg else np.zeros(0, dtype=np.int64)
        self.soc_starts = np.asarray(soc_starts, dtype=np.int64)
        self.soc_dims = np.asarray(soc_dims, dtype=np.int64)
        # scalar block id per row, used to keep row scaling constant on SOC blocks
        self.soc_block_of_row = np.full(self.m, -1, dtype=np.int64)
        for k, (a, d) in enumerate(zip(soc_starts, soc_dims)):
            self.soc_block_of_row[a:a + d] = k

    def project_primal(self, v):
        """In-place projection onto K."""
        v[self.zero_idx] = 0.0
        v[self.nonneg_idx] = np.maximum(v[self.nonneg_idx], 0.0)
        soc_project_blocks(v, self.soc_starts, self.soc_dims)

    def project_dual(self, v):
        """In-place projection onto K* (zero cone rows are free)."""
        v[self.nonneg_idx] = np.maximum(v[self.nonneg_idx], 0.0)
        soc_project_blocks(v, self.soc_starts, self.soc_dims)

    def distance_primal(self, v):
        w = v.copy()
        self.project_primal(w)
        return float(np.linalg.norm(v - w))

    def distance_dual(self, v):
        w = v.copy()
        self.project_dual(w)
        return float(np.linalg.norm(v - w))
