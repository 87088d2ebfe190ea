"""Per-band sparse/dense grouping and sign binarization with scale search.

Each line (matrix row in ROW mode, column in COL mode) is split at the band
boundary into a low and a high band. Within a band, every candidate
threshold t (an absolute-value percentile of the band) separates sparse
positions (|c| >= t) from dense ones, each group is binarized around its
mean (or around the pooled mean when sharing is on), and the candidate with
the smallest reconstruction error wins.

Planned scalars are narrowed to binary16 at plan time, not at write time:
the error the search optimizes is then exactly the error of what the file
stores, and decode reproduces quantize-time reconstructions bit for bit.
binarize_group / shared_mean below stay in full precision; they are the
reference math the planner's narrowed search is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import plan_lines
from .config import QuantConfig, nearest_rank, percentile_levels
from .errors import ConfigError, NumericError, ShapeError
from .haar import Axis, HaarCoeffs

__all__ = [
    "BandPlan",
    "LinePlan",
    "binarize_group",
    "shared_mean",
    "candidate_thresholds",
    "plan_band",
    "quantize_lines",
    "line_recon",
    "compute_ciq",
]


@dataclass
class BandPlan:
    """Winning grouping for one band of one line.

    mu/alpha values are binary16-representable. mu_dense and alpha_dense
    are 0.0 when the dense group is empty (threshold at the band minimum
    puts every position in the sparse group). sse is the reconstruction
    error of this plan, kept for diagnostics and never serialized.
    """

    threshold_index: int
    threshold: float
    mu_sparse: float
    mu_dense: float
    alpha_sparse: float
    alpha_dense: float
    sparse_mask: np.ndarray
    sse: float = 0.0

    def __post_init__(self):
        self.sparse_mask = np.asarray(self.sparse_mask, dtype=bool)
        if self.sparse_mask.ndim != 1 or self.sparse_mask.size == 0:
            raise ShapeError("sparse_mask must be a non-empty 1-D mask")
        if self.alpha_sparse < 0 or self.alpha_dense < 0:
            raise ShapeError("alpha values must be non-negative")

    @property
    def mu_shared(self) -> float:
        """The pooled mean both groups use when mean sharing is on."""
        return self.mu_sparse

    @property
    def width(self) -> int:
        return int(self.sparse_mask.size)


@dataclass
class LinePlan:
    """Plans for one full line plus its sign bits.

    high_band is None for untransformed single-band lines; low_band then
    covers the whole line. signs are +1/-1 per coefficient position.
    """

    low_band: BandPlan
    high_band: BandPlan | None
    signs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=np.int8)
        d = self.low_band.width + (self.high_band.width if self.high_band else 0)
        if self.signs.shape != (d,):
            raise ShapeError(
                f"signs length {self.signs.shape} != line length {d}"
            )

    @property
    def width(self) -> int:
        return int(self.signs.size)


def binarize_group(values, mu: float) -> tuple[float, np.ndarray, float]:
    """Sign-binarize one group around a fixed mean, full precision.

    signs_k = sign(values_k - mu) with sign(0) = +1. alpha = mean absolute
    deviation from mu, the sse minimizer for this mu and these signs:
    d(sse)/d(alpha) = 0 at alpha = mean(|v - mu|).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ShapeError("cannot binarize an empty group")
    signs = np.where(v >= mu, 1, -1).astype(np.int8)
    alpha = float(np.mean(np.abs(v - mu)))
    deq = mu + alpha * signs.astype(np.float64)
    sse = float(np.sum((v - deq) ** 2))
    return alpha, signs, sse


def shared_mean(group1, group2) -> float:
    """Pooled arithmetic mean of two groups, either possibly empty."""
    a = np.asarray(group1, dtype=np.float64).ravel()
    b = np.asarray(group2, dtype=np.float64).ravel()
    n = a.size + b.size
    if n == 0:
        raise ShapeError("shared_mean needs at least one value")
    return float((a.sum() + b.sum()) / n)


def candidate_thresholds(band, n_candidates: int) -> np.ndarray:
    """Absolute-value percentiles of the band, evenly spaced over [10, 90].

    Nearest-rank, no interpolation: every threshold is an actual |value|
    from the band, so splits are stable across platforms.
    """
    v = np.asarray(band, dtype=np.float32).ravel()
    if v.size == 0:
        raise ShapeError("band must be non-empty")
    srt = np.sort(np.abs(v))
    levels = percentile_levels(n_candidates)
    ranks = [nearest_rank(lv, v.size) for lv in levels]
    return srt[np.array(ranks) - 1]


def _ranks_for(levels, nvals: int) -> np.ndarray:
    return np.array([nearest_rank(lv, nvals) for lv in levels], dtype=np.int64)


def _band_plan_from_arrays(thr_idx, thr_val, mu_s, mu_d, al_s, al_d, sse, sparse):
    return BandPlan(
        threshold_index=int(thr_idx),
        threshold=float(thr_val),
        mu_sparse=float(mu_s),
        mu_dense=float(mu_d),
        alpha_sparse=float(al_s),
        alpha_dense=float(al_d),
        sparse_mask=sparse.astype(bool),
        sse=float(sse),
    )


def plan_band(
    band, n_candidates: int = 40, share_mean: bool = True, levels=None
) -> BandPlan:
    """Search candidate thresholds on one band, return the best plan.

    Ties break toward the smaller threshold index. levels overrides the
    default evenly spaced percentile levels (used for nested A/B sweeps).
    """
    v = np.ascontiguousarray(band, dtype=np.float32).reshape(1, -1)
    if v.size == 0:
        raise ShapeError("band must be non-empty")
    if levels is None:
        levels = percentile_levels(n_candidates)
    ranks = _ranks_for(levels, v.shape[1])
    out = plan_lines(v, v.shape[1], ranks, np.zeros(0, np.int64), share_mean)
    thr_idx, thr_val, mu_s, mu_d, al_s, al_d, sse, sparse, _signs, _recon = out
    if not np.isfinite(sse[0, 0]):
        raise NumericError("band statistics exceed the binary16 scalar range")
    return _band_plan_from_arrays(
        thr_idx[0, 0], thr_val[0, 0], mu_s[0, 0], mu_d[0, 0],
        al_s[0, 0], al_d[0, 0], sse[0, 0], sparse[0],
    )


def quantize_lines(
    coeffs: HaarCoeffs, cfg: QuantConfig
) -> tuple[list[LinePlan], np.ndarray]:
    """Plan every line of a coefficient matrix and reconstruct it.

    ROW lines are matrix rows split at band_split into [low | high]; COL
    lines are matrix columns. Raw (untransformed) coefficients are planned
    as one band per line. recon has the same orientation as coeffs.mat.
    """
    mat = coeffs.mat
    if coeffs.axis is Axis.ROW:
        lines = mat
    else:
        lines = np.ascontiguousarray(mat.T)
    d = lines.shape[1]
    if cfg.haar_enabled and coeffs.is_raw:
        raise ConfigError("transform enabled but coefficients are raw lines")
    if not cfg.haar_enabled and not coeffs.is_raw:
        raise ConfigError("transform disabled but coefficients are transformed")
    split = d if coeffs.is_raw else coeffs.band_split

    levels = cfg.levels()
    ranks0 = _ranks_for(levels, split)
    ranks1 = (
        np.zeros(0, np.int64) if split == d else _ranks_for(levels, d - split)
    )
    out = plan_lines(lines, split, ranks0, ranks1, cfg.share_mean)
    thr_idx, thr_val, mu_s, mu_d, al_s, al_d, sse, sparse, signs, recon = out
    used = sse[:, 0] if split == d else sse
    if not np.all(np.isfinite(used)):
        raise NumericError("band statistics exceed the binary16 scalar range")

    plans = []
    for i in range(lines.shape[0]):
        low = _band_plan_from_arrays(
            thr_idx[i, 0], thr_val[i, 0], mu_s[i, 0], mu_d[i, 0],
            al_s[i, 0], al_d[i, 0], sse[i, 0], sparse[i, :split],
        )
        high = None
        if split < d:
            high = _band_plan_from_arrays(
                thr_idx[i, 1], thr_val[i, 1], mu_s[i, 1], mu_d[i, 1],
                al_s[i, 1], al_d[i, 1], sse[i, 1], sparse[i, split:],
            )
        plans.append(LinePlan(low_band=low, high_band=high, signs=signs[i]))

    if coeffs.axis is Axis.ROW:
        recon_mat = recon
    else:
        recon_mat = np.ascontiguousarray(recon.T)
    return plans, recon_mat


def line_recon(plan: LinePlan) -> np.ndarray:
    """Dequantize one line from its plan and sign bits alone.

    Matches planner reconstructions bit for bit: same f64 mu + alpha*sign
    evaluation narrowed to f32 at the end.
    """
    parts = []
    offset = 0
    for band in (plan.low_band, plan.high_band):
        if band is None:
            continue
        w = band.width
        s = plan.signs[offset : offset + w].astype(np.float64)
        mu = np.where(band.sparse_mask, band.mu_sparse, band.mu_dense)
        al = np.where(band.sparse_mask, band.alpha_sparse, band.alpha_dense)
        parts.append((mu + al * s).astype(np.float32))
        offset += w
    return np.concatenate(parts)


def compute_ciq(recon_row, tolerance: float = 1e-9) -> int:
    """Count distinct values in a reconstructed row.

    Sorted-adjacent merge: neighbors within tolerance collapse into one
    level (transitively), so near-duplicates from float noise count once.
    """
    if tolerance < 0:
        raise ShapeError("tolerance must be non-negative")
    v = np.sort(np.asarray(recon_row, dtype=np.float64).ravel())
    if v.size == 0:
        return 0
    return 1 + int(np.count_nonzero(np.diff(v) > tolerance))
