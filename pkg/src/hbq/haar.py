"""Single-level 1-D Haar analysis/synthesis along matrix rows or columns.

The kernels are the fixed stride-2 pair [1/2, 1/2] and [1/2, -1/2] with the
matching (l + h, l - h) synthesis; one multiply-add per kernel per output
coefficient. They are averaging kernels, not the 1/sqrt(2)-scaled orthonormal
pair, so instead of norm preservation the energy identity

    sum(v^2) == 2 * (sum(low^2) + sum(high^2))

holds. Odd lengths are rejected rather than padded: padding would silently
change reconstruction shapes and bit accounting downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._kernels import haar_fwd_rows, haar_inv_rows
from .errors import ShapeError
from .tensor import as_matrix

__all__ = [
    "Axis",
    "HaarCoeffs",
    "haar_forward_1d",
    "haar_inverse_1d",
    "haar_matrix",
    "inverse_haar_matrix",
    "raw_lines",
]


class Axis(Enum):
    """Direction a transform runs along: each ROW, or each COL."""

    ROW = "row"
    COL = "col"


@dataclass(frozen=True)
class HaarCoeffs:
    """Coefficients of a single-level transform of one matrix.

    mat lays out [low | high] horizontally for ROW, low rows above high
    rows for COL. band_split is where the low band ends along the
    transformed axis, always exactly half of it.

    band_split == axis length marks an untransformed passthrough: mat is
    raw values treated as one band (the no-transform baseline), and
    synthesis is the identity. Built via raw_lines(), never haar_matrix().
    """

    mat: np.ndarray
    axis: Axis
    band_split: int

    def __post_init__(self):
        m = as_matrix(self.mat, "coefficients")
        object.__setattr__(self, "mat", m)
        length = m.shape[1] if self.axis is Axis.ROW else m.shape[0]
        if self.band_split == length:
            return  # raw passthrough, any length
        if length % 2 != 0:
            raise ShapeError(f"transformed axis length {length} is odd")
        if self.band_split != length // 2:
            raise ShapeError(
                f"band_split {self.band_split} != half of axis length {length}"
            )

    @property
    def is_raw(self) -> bool:
        length = self.mat.shape[1] if self.axis is Axis.ROW else self.mat.shape[0]
        return self.band_split == length


def haar_forward_1d(v) -> tuple[np.ndarray, np.ndarray]:
    """low_k = (v_2k + v_2k+1)/2, high_k = (v_2k - v_2k+1)/2."""
    arr = np.ascontiguousarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D sequence, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[0] % 2 != 0:
        raise ShapeError(f"length must be even and >= 2, got {arr.shape[0]}")
    out = haar_fwd_rows(arr.reshape(1, -1))
    h = arr.shape[0] // 2
    return out[0, :h].copy(), out[0, h:].copy()


def haar_inverse_1d(low, high) -> np.ndarray:
    """v_2k = low_k + high_k, v_2k+1 = low_k - high_k."""
    lo = np.ascontiguousarray(low, dtype=np.float32)
    hi = np.ascontiguousarray(high, dtype=np.float32)
    if lo.ndim != 1 or hi.ndim != 1:
        raise ShapeError("band inputs must be 1-D")
    if lo.shape[0] != hi.shape[0]:
        raise ShapeError(
            f"band length mismatch: low {lo.shape[0]} vs high {hi.shape[0]}"
        )
    if lo.shape[0] == 0:
        raise ShapeError("bands must be non-empty")
    c = np.concatenate([lo, hi]).reshape(1, -1)
    return haar_inv_rows(c)[0]


def haar_matrix(m, axis: Axis) -> HaarCoeffs:
    """Transform every row (ROW) or every column (COL) of a matrix."""
    mat = as_matrix(m)
    length = mat.shape[1] if axis is Axis.ROW else mat.shape[0]
    if length % 2 != 0:
        raise ShapeError(
            f"{axis.value} transform needs an even axis length, got {length}"
        )
    if axis is Axis.ROW:
        out = haar_fwd_rows(mat)
    else:
        # column transform == row transform of the transpose
        out = np.ascontiguousarray(haar_fwd_rows(np.ascontiguousarray(mat.T)).T)
    return HaarCoeffs(mat=out, axis=axis, band_split=length // 2)


def raw_lines(m, axis: Axis) -> HaarCoeffs:
    """Wrap a matrix untransformed, one band per line (baseline mode)."""
    mat = as_matrix(m)
    length = mat.shape[1] if axis is Axis.ROW else mat.shape[0]
    return HaarCoeffs(mat=mat, axis=axis, band_split=length)


def inverse_haar_matrix(c: HaarCoeffs) -> np.ndarray:
    """Exact synthesis along the recorded axis (identity for raw lines)."""
    if c.is_raw:
        return c.mat.copy()
    if c.axis is Axis.ROW:
        return haar_inv_rows(c.mat)
    return np.ascontiguousarray(haar_inv_rows(np.ascontiguousarray(c.mat.T)).T)
