"""Calibration statistics: the l2 Hessian, its damped inverse factor, and
per-entry saliency.

H = 2 X X^T is built from a features x samples activation matrix, damped by
lambda I, and inverted through its Cholesky factor (never a general inverse):
(H + lambda I)^-1 = T T^T with T the inverted triangular factor. A second
factorization of that inverse yields the upper U with U^T U = (H+lambda I)^-1
that block compensation consumes, and diag(T T^T) supplies the [H^-1]_ii of
the saliency metric. The damped diagonal stands in for the undamped one,
which need not exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import ConfigError, NumericError, ShapeError
from .tensor import as_matrix

__all__ = [
    "CalibStats",
    "build_hessian",
    "resolve_damping",
    "damped_cholesky_inverse",
    "build_calib_stats",
    "saliency_matrix",
]


@dataclass(frozen=True)
class CalibStats:
    """Everything Algorithm-style block compensation needs, built once.

    hessian: m x m symmetric PSD, float32.
    damping: the lambda actually applied (resolved if auto).
    chol_inv: upper-triangular U with U^T U = (H + lambda I)^-1, float32.
    hinv_diag: diag((H + lambda I)^-1), float64, all > 0.
    """

    hessian: np.ndarray
    damping: float
    chol_inv: np.ndarray
    hinv_diag: np.ndarray


def build_hessian(x) -> np.ndarray:
    """H = 2 X X^T from features x samples activations, exactly symmetric."""
    xm = as_matrix(x, "activations", check_finite=True)
    x64 = xm.astype(np.float64)
    p = x64 @ x64.T
    # p + p.T symmetrizes bitwise (addition commutes) and equals 2XX^T
    return (p + p.T).astype(np.float32)


def resolve_damping(h: np.ndarray, damping) -> float:
    """Resolve 'auto' to 0.01 * mean(diag(H)); validate explicit values."""
    if damping is None or damping == "auto":
        return float(0.01 * np.mean(np.diag(h.astype(np.float64))))
    lam = float(damping)
    if not np.isfinite(lam) or lam < 0:
        raise ConfigError(f"damping must be >= 0, got {damping!r}")
    return lam


def _factor_upper(a: np.ndarray, what: str) -> np.ndarray:
    c, info = lapack.dpotrf(a, lower=0, clean=1)
    if info != 0:
        raise NumericError(
            f"{what} is not positive definite: factorization failed at "
            f"pivot {info - 1}"
        )
    return c


def damped_cholesky_inverse(h, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Upper U with U^T U = (H + lam I)^-1, plus diag((H + lam I)^-1).

    Raises a numeric error naming the failing pivot when H + lam I is not
    positive definite.
    """
    hm = as_matrix(h, "hessian")
    if hm.shape[0] != hm.shape[1]:
        raise ShapeError(f"hessian must be square, got {hm.shape}")
    if lam < 0:
        raise ConfigError(f"damping must be >= 0, got {lam}")
    a = hm.astype(np.float64) + lam * np.eye(hm.shape[0])
    u0 = _factor_upper(a, "damped hessian")
    t, info = lapack.dtrtri(u0, lower=0)
    if info != 0:
        raise NumericError(f"triangular inversion failed at pivot {info - 1}")
    hinv_diag = np.einsum("ij,ij->i", t, t)  # diag(T T^T)
    ainv = t @ t.T
    u = _factor_upper(ainv, "inverse")
    return u.astype(np.float32), hinv_diag


def build_calib_stats(x, damping="auto") -> CalibStats:
    """Build CalibStats from a features x samples activation matrix."""
    h = build_hessian(x)
    lam = resolve_damping(h, damping)
    u, hinv_diag = damped_cholesky_inverse(h, lam)
    return CalibStats(hessian=h, damping=lam, chol_inv=u, hinv_diag=hinv_diag)


def saliency_matrix(w, hinv_diag) -> np.ndarray:
    """s_ij = w_ij^2 / hinv_diag_j^2, float64 elementwise."""
    wm = as_matrix(w, "weights")
    d = np.asarray(hinv_diag, dtype=np.float64).ravel()
    if d.size != wm.shape[1]:
        raise ShapeError(
            f"hinv_diag length {d.size} != weight columns {wm.shape[1]}"
        )
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NumericError("hinv_diag entries must be positive and finite")
    w64 = wm.astype(np.float64)
    return (w64 * w64) / (d * d)[None, :]
