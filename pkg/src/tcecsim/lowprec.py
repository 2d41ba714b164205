"""Value-level emulation of FP16 and TF32 inside float32 containers.

Every function here takes and returns ``numpy.float32`` data. A "low precision"
value is a float32 that happens to be exactly representable in the target
format; no 16-bit storage is ever used.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConversionOverflowWarning

#: Scale applied to the residual in :func:`split` (11 significand bits).
SPLIT_SHIFT = 11


class RoundingMode(str, enum.Enum):
    RN = "RN"  # nearest, ties to even
    RZ = "RZ"  # toward zero


@dataclass(frozen=True)
class FloatFormat:
    name: str
    exponent_bits: int
    explicit_mantissa_bits: int
    min_normal_exponent: int
    max_exponent: int

    @property
    def significand_bits(self) -> int:
        return self.explicit_mantissa_bits + 1

    @property
    def max_finite(self) -> float:
        m = self.explicit_mantissa_bits
        return float(np.ldexp(2.0 - 2.0**-m, self.max_exponent))

    @property
    def min_normal(self) -> float:
        return float(np.ldexp(1.0, self.min_normal_exponent))

    @property
    def min_subnormal(self) -> float:
        return float(np.ldexp(1.0, self.min_normal_exponent - self.explicit_mantissa_bits))


FP16 = FloatFormat("FP16", 5, 10, -14, 15)
TF32 = FloatFormat("TF32", 8, 10, -126, 127)

FORMATS = {"FP16": FP16, "TF32": TF32}


def _as_format(fmt) -> FloatFormat:
    if isinstance(fmt, FloatFormat):
        return fmt
    return FORMATS[str(fmt).upper()]


def to_low(x, fmt=FP16, mode=RoundingMode.RN, *, return_overflow=False):
    """Round float32 values onto the grid of ``fmt``.

    Subnormals of ``fmt`` are produced exactly. Magnitudes above the format's
    largest finite value saturate to it and raise a
    :class:`ConversionOverflowWarning`; pass ``return_overflow=True`` to get
    the boolean overflow mask as a second return value instead.

    Scalars in, scalar ``np.float32`` out.
    """
    fmt = _as_format(fmt)
    mode = RoundingMode(mode)
    x32 = np.asarray(x, dtype=np.float32)
    x64 = x32.astype(np.float64)

    _, e = np.frexp(x64)
    # frexp returns mantissa in [0.5, 1): the unbiased exponent is e - 1
    quantum_exp = np.maximum(e - 1, fmt.min_normal_exponent) - fmt.explicit_mantissa_bits
    scaled = np.ldexp(x64, -quantum_exp)
    scaled = np.rint(scaled) if mode is RoundingMode.RN else np.trunc(scaled)
    y = np.ldexp(scaled, quantum_exp)

    overflow = np.abs(x64) > fmt.max_finite
    if overflow.any():
        y = np.where(overflow, np.copysign(fmt.max_finite, x64), y)
        if not return_overflow:
            warnings.warn(
                f"{int(overflow.sum())} value(s) exceed the {fmt.name} range and were saturated",
                ConversionOverflowWarning,
                stacklevel=2,
            )

    out = y.astype(np.float32)
    if out.ndim == 0:
        out = out[()]
    if return_overflow:
        return out, overflow
    return out


def split(x, fmt=FP16):
    """Split float32 values into a low-precision pair ``(hi, lo)``.

    ``hi + lo * 2**-11`` reproduces ``x`` to about 22 significand bits as long
    as ``x`` lies in the normal range of ``fmt``.
    """
    x32 = np.asarray(x, dtype=np.float32)
    hi = to_low(x32, fmt, RoundingMode.RN)
    # float32 subtraction is exact here; the power-of-two shift is exact too
    resid = (x32 - hi) * np.float32(2.0**SPLIT_SHIFT)
    lo = to_low(resid, fmt, RoundingMode.RN)
    return hi, lo


def unbiased_exponents(x):
    """Vectorised ``floor(log2|x|)`` read from float32 bit patterns.

    Returns ``(exponents, nonzero_mask)``; exponents of zeros are set to 0 and
    must be ignored through the mask.
    """
    x32 = np.atleast_1d(np.asarray(x, dtype=np.float32, order="C"))
    bits = x32.view(np.uint32)
    field = ((bits >> 23) & 0xFF).astype(np.int32)
    frac = (bits & 0x7FFFFF).astype(np.int64)
    nonzero = (bits & 0x7FFFFFFF) != 0
    exps = field - 127
    sub = (field == 0) & nonzero
    if sub.any():
        # bit_length of the fraction field; exact since frac < 2**23
        bitlen = np.frexp(frac[sub].astype(np.float64))[1]
        exps[sub] = bitlen - 150
    exps[~nonzero] = 0
    shape = np.shape(x)
    return exps.reshape(shape), nonzero.reshape(shape)


def unbiased_exponent(x):
    """``floor(log2|x|)`` of a single float32 value, or ``None`` for zero."""
    exps, nz = unbiased_exponents(np.float32(x))
    if not nz[()]:
        return None
    return int(exps[()])


def conversion_underflows(x, fmt=FP16) -> bool:
    """True if splitting ``x`` pushes any nonzero hi or lo part below ``fmt``'s normal range.

    Used to decide whether power-of-two scaling commutes with a TCEC product.
    """
    fmt = _as_format(fmt)
    hi, lo = split(x, fmt)
    x32 = np.asarray(x, dtype=np.float32)
    resid = (x32 - hi) * np.float32(2.0**SPLIT_SHIFT)
    tiny = fmt.min_normal
    bad_hi = (x32 != 0) & (np.abs(x32) < tiny)
    bad_lo = (resid != 0) & (np.abs(resid) < tiny)
    return bool(bad_hi.any() or bad_lo.any())
