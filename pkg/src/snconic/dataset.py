"""Observed data container and its CSV format."""
import csv
import enum
from dataclasses import dataclass

import numpy as np

from .mathcore import as_real_matrix, as_real_vector

__all__ = ["Provenance", "Dataset", "read_dataset_csv", "write_dataset_csv"]


class Provenance(enum.Enum):
    ADDITIVE_KNOWN = "additive_known"
    MISSING_AT_RANDOM = "missing_at_random"
    EXTERNAL = "external"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``y`` (n,) and noisy design ``Z`` (n, p), read-only after load.

    ``mask`` marks observed entries with 1; masked-out entries of ``Z`` must be 0.
    """

    y: np.ndarray
    Z: np.ndarray
    mask: np.ndarray = None
    provenance: Provenance = Provenance.EXTERNAL

    def __post_init__(self):
        y = as_real_vector(self.y, "y").copy()
        Z = as_real_matrix(self.Z, "Z").copy()
        n, p = Z.shape
        if y.size != n:
            raise ValueError(f"y has {y.size} entries but Z has {n} rows")
        if n < 2 or p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        mask = self.mask
        if mask is not None:
            mask = np.asarray(mask)
            if mask.shape != Z.shape:
                raise ValueError("mask shape differs from Z")
            if not np.all((mask == 0) | (mask == 1)):
                raise ValueError("mask must be binary")
            mask = mask.astype(np.int8)
            if np.any(Z[mask == 0] != 0.0):
                raise ValueError("masked-out entries of Z must be exactly 0")
            mask.setflags(write=False)
        y.setflags(write=False)
        Z.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n(self):
        return self.Z.shape[0]

    @property
    def p(self):
        return self.Z.shape[1]

    def restrict(self, columns):
        """Dataset with only ``columns`` of Z (and of the mask)."""
        columns = np.asarray(columns, dtype=np.int64)
        mask = None if self.mask is None else self.mask[:, columns]
        return Dataset(self.y, self.Z[:, columns], mask, self.provenance)


def write_dataset_csv(dataset, path, mask_path=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"z{j + 1}" for j in range(dataset.p)])
        for yi, zi in zip(dataset.y, dataset.Z):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in zi])
    if mask_path is not None:
        if dataset.mask is None:
            raise ValueError("dataset has no mask to write")
        with open(mask_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"z{j + 1}" for j in range(dataset.p)])
            for row in dataset.mask:
                w.writerow([int(v) for v in row])


def _read_numeric_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return header, data


def read_dataset_csv(path, mask_path=None, provenance=Provenance.EXTERNAL):
    """Read ``y,z1..zp`` CSV and an optional 0/1 mask CSV of the same Z shape."""
    header, data = _read_numeric_csv(path)
    if header[0].strip() != "y":
        raise ValueError(f"{path}: first column must be 'y'")
    mask = None
    if mask_path is not None:
        _, mask = _read_numeric_csv(mask_path)
        if mask.shape != data[:, 1:].shape:
            raise ValueError("mask CSV shape differs from the design")
        mask = mask.astype(np.int8)
        if provenance is Provenance.EXTERNAL:
            provenance = Provenance.MISSING_AT_RANDOM
    return Dataset(data[:, 0], data[:, 1:], mask, provenance)
