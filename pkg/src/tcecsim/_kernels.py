"""Compiled accumulation kernels.

All kernels walk k in ascending order for every output element and only
vectorise across output columns, so results are bit-reproducible regardless
of the SIMD width LLVM picks. No fast-math flags are used: fused multiply-add
contraction or reassociation would change the emulated rounding.
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

_ROW_BLOCK = 4


@intrinsic
def _f32_to_bits(typingctx, x):
    sig = types.int32(types.float32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.IntType(32))

    return sig, codegen


@intrinsic
def _bits_to_f32(typingctx, x):
    sig = types.float32(types.int32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.FloatType())

    return sig, codegen


@njit(inline="always")
def add_rz(a, b):
    """float32 a + b rounded toward zero, exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    sb = _f32_to_bits(s)
    eb = _f32_to_bits(err)
    # RN overshot the exact sum in magnitude iff the error points back toward zero
    step = np.int32((err != 0) & ((sb ^ eb) < 0))
    return _bits_to_f32(sb - step)


@njit(cache=True)
def add_rz_array(a, b, out):
    for i in range(a.size):
        out[i] = add_rz(a[i], b[i])


@njit(cache=True)
def gemm_rn_f32(A, B, C):
    """C = A @ B with float32 RN multiply and add, ascending k."""
    m, kk = A.shape
    n = B.shape[1]
    for i0 in range(0, m, _ROW_BLOCK):
        i1 = min(i0 + _ROW_BLOCK, m)
        for k in range(kk):
            brow = B[k]
            for i in range(i0, i1):
                a = A[i, k]
                crow = C[i]
                for j in range(n):
                    crow[j] = crow[j] + a * brow[j]


@njit(cache=True)
def gemm_rz_f32(A, B, C):
    """C = A @ B with every addition rounded toward zero (Tensor Core chain)."""
    m, kk = A.shape
    n = B.shape[1]
    for i0 in range(0, m, _ROW_BLOCK):
        i1 = min(i0 + _ROW_BLOCK, m)
        for k in range(kk):
            brow = B[k]
            for i in range(i0, i1):
                a = A[i, k]
                crow = C[i]
                for j in range(n):
                    crow[j] = add_rz(crow[j], a * brow[j])


@njit(cache=True)
def gemm_tcec(Ahi, Alo, Bhi, Blo, k_tile, C):
    """Error-corrected product from split operands.

    Main term: RZ inside each k tile, RN when folding tiles together.
    Correction term: RZ for the whole k range, scaled by 2**-11 at the end and
    added to the main term with RN.
    """
    m, kk = Ahi.shape
    n = Bhi.shape[1]
    inv = np.float32(1.0 / 2048.0)
    zero = np.float32(0.0)
    acc = np.zeros((_ROW_BLOCK, n), dtype=np.float32)
    tile = np.zeros((_ROW_BLOCK, n), dtype=np.float32)
    corr = np.zeros((_ROW_BLOCK, n), dtype=np.float32)
    for i0 in range(0, m, _ROW_BLOCK):
        i1 = min(i0 + _ROW_BLOCK, m)
        acc[:] = zero
        corr[:] = zero
        for k0 in range(0, kk, k_tile):
            k1 = min(k0 + k_tile, kk)
            tile[:] = zero
            for k in range(k0, k1):
                bh = Bhi[k]
                bl = Blo[k]
                for i in range(i0, i1):
                    ah = Ahi[i, k]
                    al = Alo[i, k]
                    t = tile[i - i0]
                    c = corr[i - i0]
                    for j in range(n):
                        t[j] = add_rz(t[j], ah * bh[j])
                        cj = add_rz(c[j], al * bh[j])
                        c[j] = add_rz(cj, ah * bl[j])
            for i in range(i0, i1):
                a_ = acc[i - i0]
                t = tile[i - i0]
                for j in range(n):
                    a_[j] = a_[j] + t[j]
        for i in range(i0, i1):
            a_ = acc[i - i0]
            c = corr[i - i0]
            crow = C[i]
            for j in range(n):
                crow[j] = a_[j] + c[j] * inv
