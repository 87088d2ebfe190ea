"""Quantizer configuration and the percentile-level bookkeeping.

Candidate thresholds are absolute-value percentiles of a band, evenly spaced
over [10%, 90%] inclusive. Percentile levels are carried as exact integer
rationals (num, den) so that nearest-rank positions are computed with integer
arithmetic only: float evaluation of e.g. 0.1 * 100 rounds to
10.000000000000002 and would shift a rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

DEFAULT_CANDIDATES = 40
DEFAULT_K_CANDIDATES = (0, 2, 4, 8)
MAX_CANDIDATES = 256  # threshold indices are stored as one byte

Level = tuple[int, int]


def percentile_levels(n_candidates: int) -> tuple[Level, ...]:
    """Exact rational percentile levels p_k = 10 + k*80/(n-1) (p=50 for n=1)."""
    if n_candidates < 1:
        raise ConfigError(f"candidates must be >= 1, got {n_candidates}")
    if n_candidates > MAX_CANDIDATES:
        raise ConfigError(
            f"candidates must be <= {MAX_CANDIDATES}, got {n_candidates}"
        )
    if n_candidates == 1:
        return ((50, 1),)
    den = n_candidates - 1
    return tuple((10 * den + 80 * k, den) for k in range(n_candidates))


def nested_levels(counts: tuple[int, ...]) -> dict[int, tuple[Level, ...]]:
    """Level sets for each count, nested as sets: smaller is a stride-subsample
    of the largest. Requires every count to divide the largest evenly."""
    if not counts:
        raise ConfigError("counts must be non-empty")
    top = max(counts)
    base = percentile_levels(top)
    out: dict[int, tuple[Level, ...]] = {}
    for c in counts:
        if c < 1 or top % c != 0:
            raise ConfigError(
                f"nested candidate counts must divide the largest ({top}), got {c}"
            )
        out[c] = base[:: top // c]
    return out


def nearest_rank(level: Level, nvals: int) -> int:
    """1-based nearest-rank index of percentile num/den on nvals sorted values."""
    num, den = level
    a = num * nvals
    b = 100 * den
    rank = -(-a // b)  # ceil
    return min(max(rank, 1), nvals)


@dataclass(frozen=True)
class QuantConfig:
    """Knobs shared by the grouping planner and the block pipeline.

    candidate_levels overrides the formula-derived percentile set; it exists
    for nested-candidate sweeps where monotonicity of the search must be exact.
    """

    n_candidates: int = DEFAULT_CANDIDATES
    share_mean: bool = True
    haar_enabled: bool = True
    norm: str = "l2"
    k_candidates: tuple[int, ...] = DEFAULT_K_CANDIDATES
    score_raw_weights: bool = False
    candidate_levels: tuple[Level, ...] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.n_candidates < 1 or self.n_candidates > MAX_CANDIDATES:
            raise ConfigError(
                f"candidates must be in [1, {MAX_CANDIDATES}], got {self.n_candidates}"
            )
        if self.norm not in ("l1", "l2"):
            raise ConfigError(f"norm must be 'l1' or 'l2', got {self.norm!r}")
        if len(self.k_candidates) == 0:
            raise ConfigError("k_candidates must not be empty")
        for k in self.k_candidates:
            if k < 0:
                raise ConfigError(f"k_candidates entries must be >= 0, got {k}")
            if k % 2 != 0:
                raise ConfigError(f"k_candidates entries must be even, got {k}")
        if self.candidate_levels is not None:
            if len(self.candidate_levels) != self.n_candidates:
                raise ConfigError(
                    "candidate_levels length must equal n_candidates "
                    f"({len(self.candidate_levels)} != {self.n_candidates})"
                )
            for num, den in self.candidate_levels:
                if den <= 0 or num < 0 or num > 100 * den:
                    raise ConfigError(f"bad percentile level {num}/{den}")

    def levels(self) -> tuple[Level, ...]:
        if self.candidate_levels is not None:
            return self.candidate_levels
        return percentile_levels(self.n_candidates)
