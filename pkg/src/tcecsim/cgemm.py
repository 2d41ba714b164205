"""Complex GEMM assembled from four real GEMMs."""

from __future__ import annotations

import numpy as np

from ._validation import check_complex_matrix, check_matmul_shapes
from .emugemm import DEFAULT_TILING, GemmMode, gemm
from .exceptions import ShapeMismatch


def cgemm(A, B, mode=GemmMode.FP32_REF, tiling=DEFAULT_TILING):
    """Complex product via ``(Ar Br - Ai Bi) + i (Ar Bi + Ai Br)``.

    The four real products use the engine for ``mode``; they are combined in
    float32 RN, the real part first. ``FP64_ORACLE`` returns complex128, every
    other mode complex64.
    """
    mode = GemmMode(mode)
    A = check_complex_matrix(A, "A")
    B = check_complex_matrix(B, "B")
    check_matmul_shapes(A, B)
    Ar, Ai = np.ascontiguousarray(A.real), np.ascontiguousarray(A.imag)
    Br, Bi = np.ascontiguousarray(B.real), np.ascontiguousarray(B.imag)

    p1 = gemm(Ar, Br, mode, tiling)
    p2 = gemm(Ai, Bi, mode, tiling)
    p3 = gemm(Ar, Bi, mode, tiling)
    p4 = gemm(Ai, Br, mode, tiling)

    if mode is GemmMode.FP64_ORACLE:
        out = np.empty(p1.shape, dtype=np.complex128)
    else:
        out = np.empty(p1.shape, dtype=np.complex64)
    out.real = p1 - p2
    out.imag = p3 + p4
    return out


def cgemm_batched(pairs, mode=GemmMode.FP32_REF, tiling=DEFAULT_TILING):
    """Apply :func:`cgemm` to each ``(A, B)`` pair, preserving order."""
    out = []
    for idx, (A, B) in enumerate(pairs):
        try:
            out.append(cgemm(A, B, mode, tiling))
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"batch entry {idx}: {exc}") from exc
    return out


def cgemm_oracle(A, B):
    """complex128 product of complex64 inputs (BLAS, double precision)."""
    A = check_complex_matrix(A, "A")
    B = check_complex_matrix(B, "B")
    check_matmul_shapes(A, B)
    return A.astype(np.complex128) @ B.astype(np.complex128)
