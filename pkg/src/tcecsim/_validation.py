"""Input validation helpers, in the spirit of ``sklearn.utils.check_array``."""

import numpy as np

from .exceptions import ShapeMismatch


def check_matrix(X, *, dtype=np.float32, name="X", allow_complex=False):
    """Return ``X`` as a C-contiguous 2-D array of ``dtype``.

    Raises ``ValueError`` for wrong rank or non-finite entries. Complex input
    is rejected for real dtypes unless ``allow_complex`` is set.
    """
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if np.iscomplexobj(arr) and not np.issubdtype(np.dtype(dtype), np.complexfloating):
        if not allow_complex:
            raise TypeError(f"{name} is complex but a real matrix was expected")
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_complex_matrix(X, name="X"):
    return check_matrix(X, dtype=np.complex64, name=name)


def check_matmul_shapes(A, B, names=("A", "B")):
    """Return ``(m, n, k)`` for the product ``A @ B`` or raise ``ShapeMismatch``."""
    if A.shape[1] != B.shape[0]:
        raise ShapeMismatch(
            f"{names[0]}.cols={A.shape[1]} does not match {names[1]}.rows={B.shape[0]}"
        )
    return A.shape[0], B.shape[1], A.shape[1]
