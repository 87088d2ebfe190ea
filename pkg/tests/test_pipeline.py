import numpy as np
import pytest

from hbq.config import QuantConfig
from hbq.errors import ConfigError, NumericError, ShapeError
from hbq.grouping import compute_ciq, quantize_lines
from hbq.haar import Axis, haar_matrix
from hbq.pipeline import (
    QuantizedBlock,
    QuantizedLayer,
    col_haarquant,
    compensate,
    dequantize_layer,
    hbllm_quantize,
    reconstruct_block,
    row_haarquant,
)
from hbq.salient import SalientMask, top_k_mask
from hbq.tensor import frobenius_error, matmul


def empty_mask(width):
    return SalientMask(block_width=width, bits=np.zeros(width, dtype=bool))


def dyadic_two_level_block(rng, n, width):
    """Rows whose transform bands each hold two values in equal counts.

    Every threshold split then reconstructs exactly: the pooled mean sits
    halfway between the two values and every deviation equals their half
    gap, so mu and alpha are narrowing-exact and each sign lands back on
    an original value.
    """
    grid = np.array([-1.5, -1.25, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.25, 1.5])
    half = width // 2
    coeffs = np.empty((n, width), dtype=np.float32)
    for i in range(n):
        for lo in (0, half):
            a, b = rng.choice(grid, size=2, replace=False)
            vals = np.full(half, np.float32(a))
            vals[: half // 2] = np.float32(b)
            rng.shuffle(vals)
            coeffs[i, lo : lo + half] = vals
    low, high = coeffs[:, :half], coeffs[:, half:]
    w = np.empty_like(coeffs)
    w[:, 0::2] = low + high
    w[:, 1::2] = low - high
    return w


# --- block quantizers ---


def test_row_haarquant_empty_mask_matches_plain_rows():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(6, 16)).astype(np.float32)
    cfg = QuantConfig()
    block = row_haarquant(w, empty_mask(16), cfg)
    plans, recon_coeffs = quantize_lines(haar_matrix(w, Axis.ROW), cfg)
    assert block.salient_plans == []
    assert len(block.nonsalient_plans) == 6
    for got, want in zip(block.nonsalient_plans, plans):
        assert np.array_equal(got.signs, want.signs)
        assert got.low_band.threshold == want.low_band.threshold


def test_row_haarquant_crafted_block_is_exact():
    w = np.array([[2.0, 4.0, 6.0, 10.0], [1.0, 1.0, 1.0, 1.0]], dtype=np.float32)
    block = row_haarquant(w, empty_mask(4), QuantConfig())
    recon = reconstruct_block(block)
    assert frobenius_error(w, recon) == 0.0


def test_row_haarquant_residual_pass_beats_none_on_outlier():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(64, 128)).astype(np.float32)
    w[:, 9] *= 50.0
    cfg = QuantConfig()
    scores = np.linalg.norm(w, axis=0)
    mask = top_k_mask(scores, 2, 128)
    err_res = frobenius_error(w, reconstruct_block(row_haarquant(w, mask, cfg)))
    err_none = frobenius_error(
        w, reconstruct_block(row_haarquant(w, empty_mask(128), cfg))
    )
    assert err_res < err_none


def test_col_haarquant_empty_mask_matches_plain_columns():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(8, 5)).astype(np.float32)
    cfg = QuantConfig()
    block = col_haarquant(w, empty_mask(5), cfg)
    plans, _ = quantize_lines(haar_matrix(w, Axis.COL), cfg)
    for got, want in zip(block.nonsalient_plans, plans):
        assert np.array_equal(got.signs, want.signs)


def test_col_haarquant_sign_bits_one_per_weight():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(16, 12)).astype(np.float32)
    mask = top_k_mask(np.linalg.norm(w, axis=0), 4, 12)
    block = col_haarquant(w, mask, QuantConfig())
    total_signs = sum(
        p.signs.size for p in block.nonsalient_plans + block.salient_plans
    )
    assert total_signs == 16 * 12


def test_row_haarquant_salient_columns_get_two_passes():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(8, 12)).astype(np.float32)
    mask = top_k_mask(np.linalg.norm(w, axis=0), 2, 12)
    block = row_haarquant(w, mask, QuantConfig())
    total_signs = sum(
        p.signs.size for p in block.nonsalient_plans + block.salient_plans
    )
    # every weight has a row-pass bit; salient columns add a residual bit
    assert total_signs == 8 * 12 + 2 * 8


def test_block_shape_validation():
    rng = np.random.default_rng(6)
    w = rng.normal(size=(4, 6)).astype(np.float32)
    block = row_haarquant(w, empty_mask(6), QuantConfig())
    with pytest.raises(ShapeError):
        QuantizedBlock(
            mode=Axis.ROW,
            mask=empty_mask(5),
            nonsalient_plans=block.nonsalient_plans,
            salient_plans=[],
            block_col_offset=0,
            shape=(4, 6),
        )
    with pytest.raises(ShapeError):
        QuantizedBlock(
            mode=Axis.ROW,
            mask=empty_mask(6),
            nonsalient_plans=block.nonsalient_plans[:-1],
            salient_plans=[],
            block_col_offset=0,
            shape=(4, 6),
        )


def test_row_haarquant_odd_width_rejected():
    w = np.zeros((2, 5), dtype=np.float32)
    with pytest.raises(ShapeError):
        row_haarquant(w, empty_mask(5), QuantConfig())
    # raw mode has no pairing constraint
    block = row_haarquant(w, empty_mask(5), QuantConfig(haar_enabled=False))
    assert reconstruct_block(block).shape == (2, 5)


# --- compensation ---


def test_compensate_zero_residual_leaves_w_unchanged():
    rng = np.random.default_rng(7)
    w = rng.normal(size=(3, 6)).astype(np.float32)
    before = w.copy()
    u = np.triu(rng.normal(size=(6, 6)).astype(np.float32))
    np.fill_diagonal(u, 1.0)
    compensate(w, w[:, :2].copy(), u, 0, 2)
    assert np.array_equal(w, before)


def test_compensate_worked_example():
    # single-column block, U = [[0.5, 0.1], [0, 0.4]], residual 0.2:
    # E = 0.2 / 0.5 = 0.4, trailing column drops by E * 0.1 = 0.04
    w = np.array([[1.0, 2.0]], dtype=np.float32)
    recon = np.array([[0.8]], dtype=np.float32)
    u = np.array([[0.5, 0.1], [0.0, 0.4]], dtype=np.float32)
    compensate(w, recon, u, 0, 1)
    assert w[0, 0] == np.float32(1.0)
    assert w[0, 1] == pytest.approx(1.96, abs=1e-7)


def test_compensate_last_block_is_noop():
    w = np.array([[1.0, 2.0]], dtype=np.float32)
    before = w.copy()
    u = np.array([[0.5, 0.1], [0.0, 0.4]], dtype=np.float32)
    compensate(w, np.array([[0.5]], dtype=np.float32), u, 1, 1)
    assert np.array_equal(w, before)


def test_compensate_zero_diagonal_rejected():
    w = np.ones((1, 2), dtype=np.float32)
    u = np.array([[0.0, 0.1], [0.0, 0.4]], dtype=np.float32)
    with pytest.raises(NumericError, match="diagonal at 0"):
        compensate(w, np.zeros((1, 1), dtype=np.float32), u, 0, 1)


def test_compensate_bounds_checked():
    w = np.ones((1, 2), dtype=np.float32)
    u = np.eye(2, dtype=np.float32)
    with pytest.raises(ShapeError):
        compensate(w, np.zeros((1, 2), dtype=np.float32), u, 1, 2)
    with pytest.raises(ShapeError):
        compensate(w, np.zeros((1, 1), dtype=np.float32), np.eye(3), 0, 1)


def test_compensation_reduces_activation_error():
    # the whole point of the factor dance: with compensation the product
    # (W - What) X should rarely get worse
    wins = 0
    trials = 200
    for seed in range(trials):
        rng = np.random.default_rng(9000 + seed)
        w = rng.normal(size=(16, 16)).astype(np.float32)
        x = rng.normal(size=(16, 64)).astype(np.float32)
        qa = hbllm_quantize(w.copy(), x, beta=4)
        qb = hbllm_quantize(w.copy(), x, beta=4, compensation=False)
        ea = np.linalg.norm(matmul(w - dequantize_layer(qa), x))
        eb = np.linalg.norm(matmul(w - dequantize_layer(qb), x))
        wins += ea <= eb
    assert wins >= 0.95 * trials


# --- layer pipeline ---


def test_hbllm_fixed_point_zero_error():
    # band structure must be exact per block, since each block of beta
    # columns is transformed on its own
    rng = np.random.default_rng(10)
    w = np.hstack([dyadic_two_level_block(rng, 8, 16) for _ in range(2)])
    x = np.eye(32, dtype=np.float32)
    q = hbllm_quantize(w.copy(), x, beta=16)
    assert q.diagnostics["total_error"] == 0.0
    assert all(blk["chosen_k"] == 0 for blk in q.diagnostics["per_block"])
    assert np.array_equal(dequantize_layer(q), w)


def test_hbllm_haar_beats_raw_on_most_layers():
    wins = 0
    seeds = 50
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        w = rng.normal(size=(64, 128)).astype(np.float32)
        x = rng.normal(size=(128, 256)).astype(np.float32)
        wn = float(np.linalg.norm(w))
        qa = hbllm_quantize(w.copy(), x, beta=128, cfg=QuantConfig(haar_enabled=True))
        qb = hbllm_quantize(w.copy(), x, beta=128, cfg=QuantConfig(haar_enabled=False))
        ea = frobenius_error(w, dequantize_layer(qa)) / wn
        eb = frobenius_error(w, dequantize_layer(qb)) / wn
        wins += ea < eb
    assert wins >= 0.8 * seeds


def test_hbllm_deterministic():
    rng = np.random.default_rng(11)
    w = rng.normal(size=(16, 32)).astype(np.float32)
    x = rng.normal(size=(32, 64)).astype(np.float32)
    qa = hbllm_quantize(w.copy(), x, beta=8)
    qb = hbllm_quantize(w.copy(), x, beta=8)
    assert np.array_equal(dequantize_layer(qa), dequantize_layer(qb))
    assert qa.diagnostics["total_error"] == qb.diagnostics["total_error"]
    for a, b in zip(qa.blocks, qb.blocks):
        assert np.array_equal(a.mask.bits, b.mask.bits)


def test_hbllm_reported_error_matches_dequantize():
    rng = np.random.default_rng(12)
    w = rng.normal(size=(8, 24)).astype(np.float32)
    w_orig = w.copy()
    x = rng.normal(size=(24, 48)).astype(np.float32)
    q = hbllm_quantize(w, x, beta=8)
    external = frobenius_error(w_orig, dequantize_layer(q))
    assert q.diagnostics["total_error"] == external


def test_hbllm_mutates_only_trailing_columns():
    rng = np.random.default_rng(13)
    w = rng.normal(size=(8, 32)).astype(np.float32)
    w_orig = w.copy()
    hbllm_quantize(w, rng.normal(size=(32, 64)).astype(np.float32), beta=8)
    # compensation only ever writes right of the current block, so the
    # first block's columns survive bit for bit; later ones shift
    assert np.array_equal(w[:, :8], w_orig[:, :8])
    assert not np.array_equal(w[:, 8:], w_orig[:, 8:])


def test_hbllm_col_mode_runs():
    rng = np.random.default_rng(14)
    w = rng.normal(size=(16, 24)).astype(np.float32)
    x = rng.normal(size=(24, 32)).astype(np.float32)
    q = hbllm_quantize(w.copy(), x, beta=8, mode=Axis.COL)
    assert q.mode is Axis.COL
    recon = dequantize_layer(q)
    assert recon.shape == (16, 24)
    assert frobenius_error(w, recon) < float(np.linalg.norm(w))


def test_hbllm_ciq_bound_row_mode():
    rng = np.random.default_rng(15)
    w = rng.normal(size=(8, 512)).astype(np.float32)
    x = rng.normal(size=(512, 64)).astype(np.float32)
    q = hbllm_quantize(w.copy(), x, beta=128, cfg=QuantConfig(k_candidates=(0,)))
    recon = dequantize_layer(q)
    for i in range(8):
        assert compute_ciq(recon[i]) <= 32 * (512 // 128)


def test_hbllm_small_blocks_fall_back_to_k0():
    rng = np.random.default_rng(16)
    w = rng.normal(size=(4, 4)).astype(np.float32)
    x = rng.normal(size=(4, 8)).astype(np.float32)
    q = hbllm_quantize(w.copy(), x, beta=2, cfg=QuantConfig(k_candidates=(2, 4)))
    assert all(blk.mask.k == 0 for blk in q.blocks)


def test_hbllm_calib_reuse():
    from hbq.calib import build_calib_stats

    rng = np.random.default_rng(17)
    w = rng.normal(size=(4, 8)).astype(np.float32)
    x = rng.normal(size=(8, 16)).astype(np.float32)
    stats = build_calib_stats(x)
    qa = hbllm_quantize(w.copy(), x, beta=4, calib=stats)
    qb = hbllm_quantize(w.copy(), x, beta=4)
    assert np.array_equal(dequantize_layer(qa), dequantize_layer(qb))
    with pytest.raises(ShapeError):
        hbllm_quantize(w.copy(), rng.normal(size=(8, 4)).astype(np.float32),
                       beta=4, calib=build_calib_stats(np.eye(4, dtype=np.float32)))


def test_hbllm_validation():
    rng = np.random.default_rng(18)
    w = rng.normal(size=(4, 8)).astype(np.float32)
    x = rng.normal(size=(8, 4)).astype(np.float32)
    with pytest.raises(ConfigError):
        hbllm_quantize(w.copy(), x, beta=3)  # odd beta in ROW mode
    with pytest.raises(ConfigError):
        hbllm_quantize(w.copy(), x, beta=0)
    with pytest.raises(ShapeError):
        hbllm_quantize(w.copy(), rng.normal(size=(6, 4)).astype(np.float32))
    w5 = rng.normal(size=(5, 8)).astype(np.float32)
    with pytest.raises(ConfigError):
        hbllm_quantize(w5.copy(), x, beta=8, mode=Axis.COL)  # odd rows
    with pytest.raises(ConfigError):
        hbllm_quantize(w5.copy(), x, beta=8)  # odd rows + residual pass
    q = hbllm_quantize(w5.copy(), x, beta=8, cfg=QuantConfig(k_candidates=(0,)))
    assert q.n == 5  # fine without the residual pass


def test_hbllm_odd_remainder_rejected():
    rng = np.random.default_rng(19)
    w = rng.normal(size=(4, 9)).astype(np.float32)
    x = rng.normal(size=(9, 4)).astype(np.float32)
    with pytest.raises(ConfigError):
        hbllm_quantize(w.copy(), x, beta=4)  # 9 % 4 == 1: odd trailing block


def test_layer_validation():
    rng = np.random.default_rng(20)
    w = rng.normal(size=(4, 8)).astype(np.float32)
    block = row_haarquant(w, empty_mask(8), QuantConfig())
    with pytest.raises(ShapeError):
        QuantizedLayer(
            blocks=[block], n=4, m=10, beta=8, mode=Axis.ROW,
            damping=0.01, cfg=QuantConfig(),
        )
    with pytest.raises(ShapeError):
        QuantizedLayer(
            blocks=[block], n=4, m=8, beta=8, mode=Axis.COL,
            damping=0.01, cfg=QuantConfig(),
        )
