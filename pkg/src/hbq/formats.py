"""Bit-exact file containers and storage accounting.

Two formats: RTS1 carries raw float32 tensors in and out of the tool, and
HBQ1 carries a quantized layer. Every multi-byte integer is little-endian,
every bitset is LSB-first and zero-padded to a whole byte, and all plan
scalars are IEEE-754 binary16. The HBQ1 payload ends with a CRC-32 of all
preceding bytes; decode verifies it before trusting anything else, so any
single corrupted byte surfaces as a CRC error rather than a parse error.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .config import QuantConfig
from .errors import IntegrityError, ShapeError
from .grouping import BandPlan, LinePlan
from .haar import Axis
from .pipeline import QuantizedBlock, QuantizedLayer
from .salient import SalientMask

__all__ = [
    "RAW_MAGIC",
    "HBQ_MAGIC",
    "HBQ_VERSION",
    "pack_signs",
    "unpack_signs",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "encode_layer",
    "decode_layer",
    "BitReport",
    "bit_report",
]

RAW_MAGIC = b"RTS1"
HBQ_MAGIC = b"HBQ1"
HBQ_VERSION = 1
_SCALAR_F16 = 0
_DTYPE_F32 = 0

# magic, version, n, m, beta, mode, lambda, flags, n_candidates,
# scalar code, k-candidate count
_HEADER = struct.Struct("<4sHIIIBdBHBB")
_FLAG_SHARE = 1
_FLAG_HAAR = 2
_FLAG_L1 = 4
_FLAG_RAW_SCORES = 8


def _pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=bool), bitorder="little").tobytes()


def _unpack_bits(data: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return bits[:count].astype(bool)


def _bitset_bytes(count: int) -> int:
    return (count + 7) // 8


def pack_signs(signs) -> bytes:
    """Pack a +1/-1 sequence LSB-first, +1 as bit 1, zero-padded."""
    s = np.asarray(signs)
    return _pack_bits(s > 0)


def unpack_signs(data: bytes, count: int) -> np.ndarray:
    """Inverse of pack_signs; returns int8 +1/-1 values."""
    bits = _unpack_bits(data, count)
    return np.where(bits, 1, -1).astype(np.int8)


# --- RTS1 raw tensors ---


def encode_tensor(a) -> bytes:
    arr = np.ascontiguousarray(a, dtype="<f4")
    if arr.ndim > 255:
        raise ShapeError("tensor rank exceeds container limit")
    out = bytearray(RAW_MAGIC)
    out += struct.pack("<BB", _DTYPE_F32, arr.ndim)
    for dim in arr.shape:
        out += struct.pack("<I", dim)
    out += arr.tobytes()
    return bytes(out)


def decode_tensor(data: bytes) -> np.ndarray:
    data = bytes(data)
    if len(data) < 6:
        raise IntegrityError(f"raw tensor truncated at byte {len(data)}")
    if data[:4] != RAW_MAGIC:
        raise IntegrityError("bad raw tensor magic at byte 0")
    dtype_code, rank = struct.unpack_from("<BB", data, 4)
    if dtype_code != _DTYPE_F32:
        raise IntegrityError(f"unknown dtype code {dtype_code} at byte 4")
    end = 6 + 4 * rank
    if len(data) < end:
        raise IntegrityError(f"raw tensor truncated at byte {len(data)}")
    dims = struct.unpack_from(f"<{rank}I", data, 6) if rank else ()
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(data) - end != expected:
        raise IntegrityError(
            f"payload is {len(data) - end} bytes, dims need {expected}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=end).reshape(dims)
    return arr.astype(np.float32, copy=True)


def write_tensor(path, a) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(a))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


# --- HBQ1 quantized layers ---


def _encode_band(out: bytearray, band: BandPlan, share: bool) -> None:
    out += struct.pack("<B", band.threshold_index)
    if share:
        out += struct.pack("<e", float(band.mu_sparse))
    else:
        out += struct.pack("<ee", float(band.mu_sparse), float(band.mu_dense))
    out += struct.pack("<ee", float(band.alpha_sparse), float(band.alpha_dense))
    out += _pack_bits(band.sparse_mask)


def _encode_line(out: bytearray, plan: LinePlan, share: bool) -> None:
    _encode_band(out, plan.low_band, share)
    if plan.high_band is not None:
        _encode_band(out, plan.high_band, share)
    out += pack_signs(plan.signs)


def encode_layer(q: QuantizedLayer) -> bytes:
    cfg = q.cfg
    flags = (
        (_FLAG_SHARE if cfg.share_mean else 0)
        | (_FLAG_HAAR if cfg.haar_enabled else 0)
        | (_FLAG_L1 if cfg.norm == "l1" else 0)
        | (_FLAG_RAW_SCORES if cfg.score_raw_weights else 0)
    )
    out = bytearray(
        _HEADER.pack(
            HBQ_MAGIC,
            HBQ_VERSION,
            q.n,
            q.m,
            q.beta,
            0 if q.mode is Axis.ROW else 1,
            float(q.damping),
            flags,
            cfg.n_candidates,
            _SCALAR_F16,
            len(cfg.k_candidates),
        )
    )
    for k in cfg.k_candidates:
        out += struct.pack("<H", k)
    for block in q.blocks:
        out += struct.pack("<II", block.block_col_offset, block.shape[1])
        out += _pack_bits(block.mask.bits)
        for plan in block.nonsalient_plans:
            _encode_line(out, plan, cfg.share_mean)
        for plan in block.salient_plans:
            _encode_line(out, plan, cfg.share_mean)
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Cursor:
    """Bounded little-endian reader; running past the end is an integrity
    failure reported at the offending byte offset."""

    def __init__(self, data: bytes, start: int, end: int):
        self.data = data
        self.pos = start
        self.end = end

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > self.end:
            raise IntegrityError(f"container truncated at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_band(cur: _Cursor, width: int, share: bool) -> BandPlan:
    (idx,) = cur.unpack("<B")
    if share:
        (mu_s,) = cur.unpack("<e")
        mu_d = mu_s
    else:
        mu_s, mu_d = cur.unpack("<ee")
    al_s, al_d = cur.unpack("<ee")
    mask = _unpack_bits(cur.take(_bitset_bytes(width)), width)
    return BandPlan(
        threshold_index=idx,
        threshold=float("nan"),
        mu_sparse=mu_s,
        mu_dense=mu_d,
        alpha_sparse=al_s,
        alpha_dense=al_d,
        sparse_mask=mask,
    )


def _decode_line(cur: _Cursor, width: int, haar: bool, share: bool) -> LinePlan:
    low = _decode_band(cur, width // 2 if haar else width, share)
    high = _decode_band(cur, width - width // 2, share) if haar else None
    signs = unpack_signs(cur.take(_bitset_bytes(width)), width)
    return LinePlan(low_band=low, high_band=high, signs=signs)


def decode_layer(data: bytes) -> QuantizedLayer:
    data = bytes(data)
    if len(data) < _HEADER.size + 4:
        raise IntegrityError(f"container truncated at byte {len(data)}")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise IntegrityError(f"CRC mismatch at byte {len(data) - 4}")
    (
        magic,
        version,
        n,
        m,
        beta,
        mode_code,
        damping,
        flags,
        n_candidates,
        scalar_code,
        k_count,
    ) = _HEADER.unpack_from(data, 0)
    if magic != HBQ_MAGIC:
        raise IntegrityError("bad magic at byte 0")
    if version != HBQ_VERSION:
        raise IntegrityError(f"unsupported version {version} at byte 4")
    if scalar_code != _SCALAR_F16:
        raise IntegrityError(f"unknown scalar code {scalar_code}")
    if mode_code not in (0, 1):
        raise IntegrityError(f"unknown mode code {mode_code}")
    mode = Axis.ROW if mode_code == 0 else Axis.COL
    share = bool(flags & _FLAG_SHARE)
    haar = bool(flags & _FLAG_HAAR)
    cur = _Cursor(data, _HEADER.size, len(data) - 4)
    k_candidates = tuple(cur.unpack("<H")[0] for _ in range(k_count))
    cfg = QuantConfig(
        n_candidates=n_candidates,
        share_mean=share,
        haar_enabled=haar,
        norm="l1" if flags & _FLAG_L1 else "l2",
        k_candidates=k_candidates,
        score_raw_weights=bool(flags & _FLAG_RAW_SCORES),
    )
    blocks = []
    for b in range(0, m, max(beta, 1)):
        expect_width = min(beta, m - b)
        col_offset, width = cur.unpack("<II")
        if col_offset != b or width != expect_width:
            raise IntegrityError(
                f"block record disagrees with header at byte {cur.pos - 8}"
            )
        bits = _unpack_bits(cur.take(_bitset_bytes(width)), width)
        mask = SalientMask(block_width=width, bits=bits)
        if mode is Axis.ROW:
            nonsal = [_decode_line(cur, width, haar, share) for _ in range(n)]
        else:
            nonsal = [
                _decode_line(cur, n, haar, share) for _ in range(width - mask.k)
            ]
        salient = [_decode_line(cur, n, haar, share) for _ in range(mask.k)]
        blocks.append(
            QuantizedBlock(
                mode=mode,
                mask=mask,
                nonsalient_plans=nonsal,
                salient_plans=salient,
                block_col_offset=b,
                shape=(n, width),
            )
        )
    if cur.pos != cur.end:
        raise IntegrityError(f"unexpected trailing bytes at byte {cur.pos}")
    return QuantizedLayer(
        blocks=blocks,
        n=n,
        m=m,
        beta=beta,
        mode=mode,
        damping=damping,
        cfg=cfg,
    )


# --- storage accounting ---


@dataclass(frozen=True)
class BitReport:
    """Where the stored bits go, and the resulting average per weight.

    Counts mirror the HBQ1 payload exactly: sign_bits and mask_bits are
    raw bit counts, byte-padding and per-block headers land in
    container_overhead_bits. The fixed file header and CRC are excluded.
    """

    sign_bits: int
    scalar_bits: int
    mask_bits: int
    index_bits: int
    container_overhead_bits: int
    total_weights: int
    avg_bits_per_weight: float

    @property
    def total_bits(self) -> int:
        return (
            self.sign_bits
            + self.scalar_bits
            + self.mask_bits
            + self.index_bits
            + self.container_overhead_bits
        )


def _pad_bits(count: int) -> int:
    return (-count) % 8


def bit_report(q: QuantizedLayer) -> BitReport:
    share = q.cfg.share_mean
    scalars_per_band = 3 if share else 4
    sign = scalar = mask = index = overhead = 0
    for block in q.blocks:
        width = block.shape[1]
        overhead += 64  # per-block column offset and width
        mask += width
        overhead += _pad_bits(width)
        for plan in block.nonsalient_plans + block.salient_plans:
            for band in (plan.low_band, plan.high_band):
                if band is None:
                    continue
                index += 8
                scalar += 16 * scalars_per_band
                mask += band.width
                overhead += _pad_bits(band.width)
            sign += plan.width
            overhead += _pad_bits(plan.width)
    weights = q.n * q.m
    total = sign + scalar + mask + index + overhead
    return BitReport(
        sign_bits=sign,
        scalar_bits=scalar,
        mask_bits=mask,
        index_bits=index,
        container_overhead_bits=overhead,
        total_weights=weights,
        avg_bits_per_weight=total / weights,
    )
