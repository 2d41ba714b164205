"""Real single-precision GEMM engines emulating Tensor Core modes.

Every engine is deterministic: the k-accumulation order for an output element
is fixed (ascending), so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._validation import check_matmul_shapes, check_matrix
from .exceptions import ZeroReference
from .lowprec import FP16, TF32, RoundingMode, _as_format, split, to_low


class GemmMode(str, enum.Enum):
    FP32_REF = "FP32_REF"
    FP64_ORACLE = "FP64_ORACLE"
    TF32TC = "TF32TC"
    FP16TC = "FP16TC"
    TF32TCEC = "TF32TCEC"
    FP16TCEC = "FP16TCEC"

    @property
    def corrected(self) -> bool:
        return self in (GemmMode.TF32TCEC, GemmMode.FP16TCEC)

    @property
    def low_format(self):
        if self in (GemmMode.TF32TC, GemmMode.TF32TCEC):
            return TF32
        if self in (GemmMode.FP16TC, GemmMode.FP16TCEC):
            return FP16
        return None


@dataclass(frozen=True)
class TilingConfig:
    """Depth of one k tile in the corrected main-term accumulation."""

    k_tile: int = 16

    def __post_init__(self):
        if int(self.k_tile) < 1:
            raise ValueError(f"k_tile must be >= 1, got {self.k_tile}")


DEFAULT_TILING = TilingConfig()


def _operands(A, B, trans_a, trans_b):
    A = check_matrix(A, name="A")
    B = check_matrix(B, name="B")
    if trans_a:
        A = np.ascontiguousarray(A.T)
    if trans_b:
        B = np.ascontiguousarray(B.T)
    m, n, _ = check_matmul_shapes(A, B)
    return A, B, m, n


def gemm_ref_f32(A, B, *, trans_a=False, trans_b=False):
    """Plain float32 GEMM, RN multiply and add, ascending k."""
    A, B, m, n = _operands(A, B, trans_a, trans_b)
    C = np.zeros((m, n), dtype=np.float32)
    _kernels.gemm_rn_f32(A, B, C)
    return C


def gemm_oracle_f64(A, B, *, trans_a=False, trans_b=False):
    """Double-precision reference product of float32 inputs."""
    A, B, _, _ = _operands(A, B, trans_a, trans_b)
    return A.astype(np.float64) @ B.astype(np.float64)


def gemm_tc(A, B, fmt=FP16, tiling=DEFAULT_TILING, *, trans_a=False, trans_b=False):
    """Uncorrected Tensor Core GEMM: inputs rounded to ``fmt``, RZ accumulation."""
    A, B, m, n = _operands(A, B, trans_a, trans_b)
    fmt = _as_format(fmt)
    A_low = to_low(A, fmt, RoundingMode.RN)
    B_low = to_low(B, fmt, RoundingMode.RN)
    C = np.zeros((m, n), dtype=np.float32)
    _kernels.gemm_rz_f32(A_low, B_low, C)
    return C


def gemm_tcec_split(A_hi, A_lo, B_hi, B_lo, tiling=DEFAULT_TILING):
    """TCEC accumulation schedule on already-split operands."""
    m, n, _ = check_matmul_shapes(A_hi, B_hi)
    C = np.zeros((m, n), dtype=np.float32)
    _kernels.gemm_tcec(
        np.ascontiguousarray(A_hi, dtype=np.float32),
        np.ascontiguousarray(A_lo, dtype=np.float32),
        np.ascontiguousarray(B_hi, dtype=np.float32),
        np.ascontiguousarray(B_lo, dtype=np.float32),
        int(tiling.k_tile),
        C,
    )
    return C


def gemm_tcec(A, B, fmt=FP16, tiling=DEFAULT_TILING, *, trans_a=False, trans_b=False):
    """Error-corrected Tensor Core GEMM.

    Each operand is split into ``hi + lo * 2**-11``. The product is
    ``hi_A @ hi_B + (lo_A @ hi_B + hi_A @ lo_B) * 2**-11``, with the main term
    accumulated RZ inside each k tile and RN across tiles.
    """
    A, B, _, _ = _operands(A, B, trans_a, trans_b)
    fmt = _as_format(fmt)
    A_hi, A_lo = split(A, fmt)
    B_hi, B_lo = split(B, fmt)
    return gemm_tcec_split(A_hi, A_lo, B_hi, B_lo, tiling)


def gemm(A, B, mode=GemmMode.FP32_REF, tiling=DEFAULT_TILING, *, trans_a=False, trans_b=False):
    """Dispatch to the engine for ``mode``."""
    mode = GemmMode(mode)
    kw = dict(trans_a=trans_a, trans_b=trans_b)
    if mode is GemmMode.FP32_REF:
        return gemm_ref_f32(A, B, **kw)
    if mode is GemmMode.FP64_ORACLE:
        return gemm_oracle_f64(A, B, **kw)
    if mode.corrected:
        return gemm_tcec(A, B, mode.low_format, tiling, **kw)
    return gemm_tc(A, B, mode.low_format, tiling, **kw)


def relative_error(C, C_ref) -> float:
    """Frobenius-norm relative error ``||C - C_ref|| / ||C_ref||`` in float64.

    Works for real or complex input.
    """
    C = np.asarray(C)
    C_ref = np.asarray(C_ref)
    if C.shape != C_ref.shape:
        raise ValueError(f"shape mismatch: {C.shape} vs {C_ref.shape}")
    dt = np.complex128 if (np.iscomplexobj(C) or np.iscomplexobj(C_ref)) else np.float64
    ref = C_ref.astype(dt)
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ZeroReference("reference has zero Frobenius norm")
    return float(np.linalg.norm(C.astype(dt) - ref) / denom)
