"""Salient-column scoring, trial-based top-K selection, and hole filling.

Columns whose quantization error disproportionately affects layer output get
special treatment. Candidate counts K are tried with a full (uncompensated)
trial quantization of the block and the error-minimizing K wins, so "how
many columns are salient" is decided by measurement, not by a fixed ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import QuantConfig
from .errors import ConfigError, ShapeError
from .haar import Axis
from .tensor import as_matrix, frobenius_error

__all__ = [
    "SalientMask",
    "column_scores",
    "top_k_mask",
    "select_salient",
    "fill_avg",
]


@dataclass(frozen=True)
class SalientMask:
    """Which columns of one block get the salient treatment."""

    block_width: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        object.__setattr__(self, "bits", bits)
        if bits.shape != (self.block_width,):
            raise ShapeError(
                f"mask length {bits.shape} != block width {self.block_width}"
            )
        if int(bits.sum()) >= self.block_width:
            raise ConfigError("at least one column must stay non-salient")

    @property
    def k(self) -> int:
        return int(self.bits.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


def column_scores(s, norm: str = "l2") -> np.ndarray:
    """Per-column l2 (or l1) norms of a block-restricted saliency matrix."""
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if norm == "l2":
        return np.sqrt(np.sum(arr * arr, axis=0))
    if norm == "l1":
        return np.sum(np.abs(arr), axis=0)
    raise ConfigError(f"norm must be 'l1' or 'l2', got {norm!r}")


def top_k_mask(scores, k: int, block_width: int) -> SalientMask:
    """Mask of the K highest-scoring columns; ties go to the lower index."""
    sc = np.asarray(scores, dtype=np.float64).ravel()
    if sc.size != block_width:
        raise ShapeError(f"got {sc.size} scores for width {block_width}")
    if not 0 <= k < block_width:
        raise ConfigError(f"K must satisfy 0 <= K < {block_width}, got {k}")
    bits = np.zeros(block_width, dtype=bool)
    if k:
        order = np.argsort(-sc, kind="stable")  # stable: lower index wins ties
        bits[order[:k]] = True
    return SalientMask(block_width=block_width, bits=bits)


def _validated_candidates(k_candidates, block_width: int) -> list[int]:
    cands = sorted(set(int(k) for k in k_candidates))
    if not cands:
        raise ConfigError("k_candidates must not be empty")
    for k in cands:
        if k < 0 or k >= block_width:
            raise ConfigError(
                f"candidate K={k} outside [0, {block_width}) for this block"
            )
        if k % 2 != 0:
            raise ConfigError(f"candidate K={k} must be even")
    return cands


def _select_salient_full(w_block, scores, k_candidates, cfg, mode):
    """Run one trial per K; return (mask, winning block, per-K errors).

    Candidates are tried in ascending order with strict improvement
    required, so equal errors resolve to the smaller K. The winning trial
    block is returned for reuse: trials run without compensation, so the
    final quantization of the same values would reproduce it exactly.
    """
    from .pipeline import col_haarquant, reconstruct_block, row_haarquant

    wm = as_matrix(w_block, "block")
    cands = _validated_candidates(k_candidates, wm.shape[1])
    quantize = row_haarquant if mode is Axis.ROW else col_haarquant
    best = None
    errors: dict[int, float] = {}
    for k in cands:
        mask = top_k_mask(scores, k, wm.shape[1])
        block = quantize(wm, mask, cfg)
        err = frobenius_error(wm, reconstruct_block(block))
        errors[k] = err
        if best is None or err < best[0]:
            best = (err, mask, block)
    return best[1], best[2], errors


def select_salient(
    w_block, scores, k_candidates, cfg: QuantConfig, mode: Axis = Axis.ROW
) -> SalientMask:
    """Pick the error-minimizing salient-column count from k_candidates."""
    mask, _block, _errors = _select_salient_full(
        w_block, scores, k_candidates, cfg, mode
    )
    return mask


def fill_avg(w_block, mask: SalientMask) -> np.ndarray:
    """Replace each salient column, per row, by the mean of its nearest
    non-salient neighbors (single neighbor at block edges).

    Consecutive holes all look through to the same non-salient columns,
    never to other filled values, so the result is order-independent.
    """
    wm = as_matrix(w_block, "block").copy()
    if mask.block_width != wm.shape[1]:
        raise ShapeError(
            f"mask width {mask.block_width} != block width {wm.shape[1]}"
        )
    if mask.k == 0:
        return wm
    keep = np.flatnonzero(~mask.bits)  # non-empty: mask validation ensures it
    for j in mask.indices:
        pos = np.searchsorted(keep, j)
        left = keep[pos - 1] if pos > 0 else None
        right = keep[pos] if pos < keep.size else None
        if left is None:
            wm[:, j] = wm[:, right]
        elif right is None:
            wm[:, j] = wm[:, left]
        else:
            half = np.float32(0.5)
            wm[:, j] = (wm[:, left] + wm[:, right]) * half
    return wm
