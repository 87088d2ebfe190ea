"""Haar-domain 1-bit weight quantization with salient-column handling."""

from .calib import CalibStats, build_calib_stats, saliency_matrix
from .config import QuantConfig
from .errors import (
    ConfigError,
    HbqError,
    IntegrityError,
    NumericError,
    ShapeError,
)
from .formats import (
    BitReport,
    bit_report,
    decode_layer,
    encode_layer,
    read_tensor,
    write_tensor,
)
from .grouping import compute_ciq
from .haar import Axis
from .pipeline import (
    QuantizedBlock,
    QuantizedLayer,
    dequantize_layer,
    hbllm_quantize,
)

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "BitReport",
    "CalibStats",
    "ConfigError",
    "HbqError",
    "IntegrityError",
    "NumericError",
    "QuantConfig",
    "QuantizedBlock",
    "QuantizedLayer",
    "ShapeError",
    "bit_report",
    "build_calib_stats",
    "compute_ciq",
    "decode_layer",
    "dequantize_layer",
    "encode_layer",
    "hbllm_quantize",
    "read_tensor",
    "saliency_matrix",
    "write_tensor",
    "__version__",
]
