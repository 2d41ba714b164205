"""Automatic precision selection from exponent statistics.

Before a large complex GEMM both operands are profiled: how many components
survive conversion to FP16 as they are, and how many would survive after a
power-of-two shift that places the largest exponent at ``target_max_exponent``.
The cheapest mode that keeps the underflowing fraction at or below the
threshold ``t`` is chosen; the shift is applied to the inputs and undone on the
output.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_matrix, check_matmul_shapes
from .cgemm import cgemm
from .emugemm import DEFAULT_TILING, GemmMode, TilingConfig
from .exceptions import ScaleOverflow
from .lowprec import FP16, unbiased_exponents

FP16_MIN_NORMAL_EXP = FP16.min_normal_exponent  # -14


class ToleranceLevel(enum.IntEnum):
    """Ordered so that a larger value means a cheaper admissible mode."""

    TF32_ONLY = 0
    FP16_SCALED_OK = 1
    FP16_OK = 2


class ComputeKind(str, enum.Enum):
    FP16TCEC = "FP16TCEC"
    FP16TCEC_SCALED = "FP16TCEC_SCALED"
    TF32TCEC = "TF32TCEC"
    FP32_BASELINE = "FP32_BASELINE"
    # only reachable through a forced policy
    TF32TC = "TF32TC"
    FP16TC = "FP16TC"

    @property
    def gemm_mode(self) -> GemmMode:
        return _KIND_TO_GEMM[self]


_KIND_TO_GEMM = {
    ComputeKind.FP16TCEC: GemmMode.FP16TCEC,
    ComputeKind.FP16TCEC_SCALED: GemmMode.FP16TCEC,
    ComputeKind.TF32TCEC: GemmMode.TF32TCEC,
    ComputeKind.FP32_BASELINE: GemmMode.FP32_REF,
    ComputeKind.TF32TC: GemmMode.TF32TC,
    ComputeKind.FP16TC: GemmMode.FP16TC,
}


@dataclass(frozen=True)
class ExpStats:
    n1: int
    n2: int
    e_max: Optional[int]
    n_nonzero: int
    n_total: int
    target_max_exponent: int = 14
    window_width: int = 28
    stage2_skipped: bool = False

    @property
    def r1(self) -> float:
        """Fraction of nonzero components that underflow FP16 unshifted."""
        if self.n_nonzero == 0:
            return 0.0
        return (self.n_nonzero - self.n1) / self.n_nonzero

    @property
    def r2(self) -> Optional[float]:
        """Fraction that underflows the shifted window; None if stage 2 was skipped."""
        if self.stage2_skipped:
            return None
        if self.n_nonzero == 0:
            return 0.0
        return (self.n_nonzero - self.n2) / self.n_nonzero

    @property
    def scale_exp(self) -> int:
        """Shift that moves ``e_max`` onto the target exponent (0 for an all-zero matrix)."""
        if self.e_max is None:
            return 0
        return self.target_max_exponent - self.e_max


@dataclass(frozen=True)
class MatrixTolerance:
    level: ToleranceLevel
    e_max: Optional[int]
    target_max_exponent: int = 14


@dataclass(frozen=True)
class ComputeMode:
    """The "mode flag": which engine runs the GEMM and how inputs are shifted."""

    kind: ComputeKind
    scale_exp_a: int = 0
    scale_exp_b: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ComputeKind(self.kind))
        object.__setattr__(self, "scale_exp_a", int(self.scale_exp_a))
        object.__setattr__(self, "scale_exp_b", int(self.scale_exp_b))


@dataclass(frozen=True)
class SelectionPolicy:
    """Dispatch policy.

    ``force`` bypasses both the size rule and the statistics and runs every
    GEMM in the named :class:`ComputeKind`; it exists for the experiment
    harness, which compares fixed modes against AUTO.
    """

    threshold_t: float = 0.0
    size_auto: int = 2048
    size_tf32: int = 512
    target_max_exponent: int = 14
    window_width: int = 28
    force: Optional[ComputeKind] = None
    tiling: TilingConfig = DEFAULT_TILING

    def __post_init__(self):
        if not 0.0 <= self.threshold_t <= 1.0:
            raise ValueError(f"threshold_t must be in [0, 1], got {self.threshold_t}")
        if self.size_tf32 > self.size_auto:
            raise ValueError("size_tf32 must not exceed size_auto")
        if self.force is not None:
            object.__setattr__(self, "force", ComputeKind(self.force))

    @classmethod
    def auto(cls, t=0.0, **kw):
        return cls(threshold_t=t, **kw)

    @classmethod
    def forced(cls, kind, **kw):
        return cls(force=ComputeKind(kind), **kw)

    @property
    def name(self) -> str:
        if self.force is not None:
            return self.force.value
        return f"AUTO-{self.threshold_t:g}"

    def route(self, m, n, k) -> str:
        """Size rule: ``"AUTO"``, ``"TF32TCEC"`` or ``"FP32_BASELINE"``."""
        smallest = min(m, n, k)
        if smallest >= self.size_auto:
            return "AUTO"
        if smallest >= self.size_tf32:
            return "TF32TCEC"
        return "FP32_BASELINE"


def _components(M):
    M = np.asarray(M)
    if np.iscomplexobj(M):
        M = np.ascontiguousarray(M, dtype=np.complex64)
        return M.reshape(-1).view(np.float32)
    return np.ascontiguousarray(M, dtype=np.float32).reshape(-1)


def exp_stats(M, target_max_exponent=14, *, window_width=28, threshold=None) -> ExpStats:
    """Two-stage exponent statistics over all real and imaginary components.

    Stage 1 counts components at or above the FP16 minimum normal (``n1``) and
    finds ``e_max``. Stage 2 counts components within ``window_width`` binades
    below ``e_max`` (``n2``). When ``threshold`` is given and stage 1 already
    admits plain FP16, stage 2 is skipped and ``n2`` is reported equal to
    ``n1`` with ``stage2_skipped`` set.
    """
    comps = _components(M)
    if not np.all(np.isfinite(comps)):
        raise ValueError("matrix contains non-finite values")
    exps, nz = unbiased_exponents(comps)
    n_total = int(comps.size)
    n_nonzero = int(np.count_nonzero(nz))
    if n_nonzero == 0:
        return ExpStats(0, 0, None, 0, n_total, target_max_exponent, window_width)

    live = exps[nz]
    e_max = int(live.max())
    n1 = int(np.count_nonzero(live >= FP16_MIN_NORMAL_EXP))

    if threshold is not None and e_max <= target_max_exponent:
        r1 = (n_nonzero - n1) / n_nonzero
        if r1 <= threshold:
            return ExpStats(
                n1, n1, e_max, n_nonzero, n_total, target_max_exponent, window_width,
                stage2_skipped=True,
            )

    n2 = int(np.count_nonzero(live >= e_max - window_width))
    return ExpStats(n1, n2, e_max, n_nonzero, n_total, target_max_exponent, window_width)


def matrix_tolerance(stats: ExpStats, t: float) -> MatrixTolerance:
    """Classify one operand against underflow threshold ``t``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {t}")
    fits_unshifted = stats.e_max is None or stats.e_max <= stats.target_max_exponent
    if fits_unshifted and stats.r1 <= t:
        level = ToleranceLevel.FP16_OK
    else:
        if stats.stage2_skipped:
            raise ValueError("stage 2 statistics were skipped; recompute without a threshold")
        level = ToleranceLevel.FP16_SCALED_OK if stats.r2 <= t else ToleranceLevel.TF32_ONLY
    return MatrixTolerance(level, stats.e_max, stats.target_max_exponent)


def _shift_for(tol: MatrixTolerance) -> int:
    if tol.e_max is None:
        return 0
    return tol.target_max_exponent - tol.e_max


def select_mode(tol_a: MatrixTolerance, tol_b: MatrixTolerance) -> ComputeMode:
    """Pair rule: both FP16_OK -> FP16TCEC; both at least scaled -> scaled; else TF32TCEC."""
    worst = min(tol_a.level, tol_b.level)
    if worst is ToleranceLevel.FP16_OK:
        return ComputeMode(ComputeKind.FP16TCEC)
    if worst is ToleranceLevel.FP16_SCALED_OK:
        return ComputeMode(ComputeKind.FP16TCEC_SCALED, _shift_for(tol_a), _shift_for(tol_b))
    return ComputeMode(ComputeKind.TF32TCEC)


def scale_matrix(M, scale_exp, *, out=None):
    """Multiply every component by ``2**scale_exp``.

    Exact for components that stay in the float32 normal range. Pass
    ``out=M`` to scale in place.
    """
    M = np.asarray(M)
    scale_exp = int(scale_exp)
    if scale_exp == 0:
        if out is None:
            return M.copy()
        out[...] = M
        return out
    comps = _components(M).reshape(M.shape + ((2,) if np.iscomplexobj(M) else ()))
    with np.errstate(over="ignore"):
        scaled = np.ldexp(comps, np.int32(scale_exp)).astype(comps.dtype, copy=False)
    if not np.all(np.isfinite(scaled)):
        raise ScaleOverflow(f"scaling by 2**{scale_exp} overflows float32")
    if np.iscomplexobj(M):
        scaled = scaled.view(np.complex64).reshape(M.shape)
    if out is None:
        return scaled
    out[...] = scaled
    return out


def descale_output(C, scale_exp_a, scale_exp_b):
    """Undo input shifts on a product: multiply by ``2**-(scale_exp_a + scale_exp_b)``."""
    shift = -(int(scale_exp_a) + int(scale_exp_b))
    if shift == 0:
        return np.array(C, copy=True)
    C = np.asarray(C)
    comps = _components(C).reshape(C.shape + ((2,) if np.iscomplexobj(C) else ()))
    with np.errstate(under="ignore"):
        scaled = np.ldexp(comps, np.int32(shift)).astype(comps.dtype, copy=False)
    if np.iscomplexobj(C):
        return scaled.view(np.complex64).reshape(C.shape)
    return scaled


@dataclass(frozen=True)
class LogEntry:
    m: int
    n: int
    k: int
    mode: ComputeKind
    scale_a: int
    scale_b: int
    stats_a: Optional[ExpStats] = None
    stats_b: Optional[ExpStats] = None
    # wall time of the product itself; not part of the text line
    seconds: Optional[float] = None

    def to_line(self) -> str:
        def fmt(v):
            return "" if v is None else f"{v:.6g}"

        def st(s, attr):
            return None if s is None else getattr(s, attr)

        fields = [
            self.m, self.n, self.k, self.mode.value, self.scale_a, self.scale_b,
            fmt(st(self.stats_a, "r1")), fmt(st(self.stats_a, "r2")),
            fmt(st(self.stats_b, "r1")), fmt(st(self.stats_b, "r2")),
            "" if st(self.stats_a, "e_max") is None else self.stats_a.e_max,
            "" if st(self.stats_b, "e_max") is None else self.stats_b.e_max,
        ]
        return ",".join(str(f) for f in fields)


LOG_HEADER = "m,n,k,mode,scale_a,scale_b,r1_a,r2_a,r1_b,r2_b,e_max_a,e_max_b"


@dataclass
class DecisionLog:
    """Append-only record of dispatch decisions; safe to share between threads."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def append(self, entry: LogEntry):
        with self._lock:
            self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(list(self.entries))

    def lines(self):
        with self._lock:
            return [e.to_line() for e in self.entries]

    def histogram(self):
        counts = {}
        for e in self:
            counts[e.mode.value] = counts.get(e.mode.value, 0) + 1
        return counts

    def write(self, path, header=True):
        with open(path, "w") as fh:
            if header:
                fh.write(LOG_HEADER + "\n")
            for line in self.lines():
                fh.write(line + "\n")


def _profile_pair(A, B, policy, skip_stage2=True):
    t = policy.threshold_t if skip_stage2 else None
    sa = exp_stats(A, policy.target_max_exponent, window_width=policy.window_width, threshold=t)
    sb = exp_stats(B, policy.target_max_exponent, window_width=policy.window_width, threshold=t)
    return sa, sb


def decide(A, B, policy: SelectionPolicy):
    """Return ``(ComputeMode, stats_pair_or_None)`` without running the GEMM."""
    m, n, k = check_matmul_shapes(A, B)
    if policy.force is not None:
        if policy.force is ComputeKind.FP16TCEC_SCALED:
            sa, sb = _profile_pair(A, B, policy, skip_stage2=False)
            return ComputeMode(policy.force, sa.scale_exp, sb.scale_exp), (sa, sb)
        return ComputeMode(policy.force), None
    route = policy.route(m, n, k)
    if route == "TF32TCEC":
        return ComputeMode(ComputeKind.TF32TCEC), None
    if route == "FP32_BASELINE":
        return ComputeMode(ComputeKind.FP32_BASELINE), None
    sa, sb = _profile_pair(A, B, policy)
    tol_a = matrix_tolerance(sa, policy.threshold_t)
    tol_b = matrix_tolerance(sb, policy.threshold_t)
    return select_mode(tol_a, tol_b), (sa, sb)


def dispatch_cgemm(A, B, policy: SelectionPolicy = SelectionPolicy(), log: DecisionLog = None,
                   *, dry_run=False):
    """Size-gated, statistics-driven complex GEMM.

    Returns ``(C, decision, stats)`` where ``stats`` is the pair of
    :class:`ExpStats` when profiling ran and ``None`` otherwise. With
    ``dry_run`` the decision is made and logged but no product is computed
    (``C`` is ``None``). Inputs are never modified.
    """
    A = check_complex_matrix(A, "A")
    B = check_complex_matrix(B, "B")
    m, n, k = check_matmul_shapes(A, B)
    decision, stats = decide(A, B, policy)
    C, seconds = None, None
    if not dry_run:
        start = time.perf_counter()
        C = run_mode(A, B, decision, policy.tiling)
        seconds = time.perf_counter() - start
    if log is not None:
        sa, sb = stats if stats is not None else (None, None)
        log.append(LogEntry(m, n, k, decision.kind, decision.scale_exp_a, decision.scale_exp_b,
                            sa, sb, seconds))
    return C, decision, stats


def run_mode(A, B, decision: ComputeMode, tiling=DEFAULT_TILING):
    """Compute ``A @ B`` under an already-made decision, scaling if it says so."""
    mode = decision.kind.gemm_mode
    if decision.kind is ComputeKind.FP16TCEC_SCALED:
        As = scale_matrix(A, decision.scale_exp_a)
        Bs = scale_matrix(B, decision.scale_exp_b)
        C = cgemm(As, Bs, mode, tiling)
        return descale_output(C, decision.scale_exp_a, decision.scale_exp_b)
    return cgemm(A, B, mode, tiling)


class PowerOfTwoScaler(TransformerMixin, BaseEstimator):
    """Exact power-of-two rescaling that parks the largest exponent at a target.

    ``fit`` profiles the matrix; ``transform`` applies the shift and
    ``inverse_transform`` undoes it.

    Parameters
    ----------
    target_max_exponent : int, default=14
    window_width : int, default=28
    """

    def __init__(self, target_max_exponent=14, window_width=28):
        self.target_max_exponent = target_max_exponent
        self.window_width = window_width

    def fit(self, X, y=None):
        self.stats_ = exp_stats(X, self.target_max_exponent, window_width=self.window_width)
        self.scale_exp_ = self.stats_.scale_exp
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_exp_")
        return scale_matrix(X, self.scale_exp_)

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_exp_")
        return scale_matrix(X, -self.scale_exp_)


class PrecisionSelector(BaseEstimator):
    """Estimator wrapper around :func:`dispatch_cgemm`.

    ``fit(A, B)`` profiles both operands and stores the chosen mode in
    ``mode_``; ``predict(A, B)`` computes the product under that fitted mode,
    including its input shifts.
    Hyperparameters mirror :class:`SelectionPolicy`.
    """

    def __init__(self, threshold=0.0, size_auto=2048, size_tf32=512, target_max_exponent=14,
                 window_width=28, k_tile=16):
        self.threshold = threshold
        self.size_auto = size_auto
        self.size_tf32 = size_tf32
        self.target_max_exponent = target_max_exponent
        self.window_width = window_width
        self.k_tile = k_tile

    @property
    def policy(self) -> SelectionPolicy:
        return SelectionPolicy(
            threshold_t=self.threshold,
            size_auto=self.size_auto,
            size_tf32=self.size_tf32,
            target_max_exponent=self.target_max_exponent,
            window_width=self.window_width,
            tiling=TilingConfig(self.k_tile),
        )

    def fit(self, A, B):
        A = check_complex_matrix(A, "A")
        B = check_complex_matrix(B, "B")
        self.mode_, self.stats_ = decide(A, B, self.policy)
        return self

    def predict(self, A, B):
        check_is_fitted(self, "mode_")
        A = check_complex_matrix(A, "A")
        B = check_complex_matrix(B, "B")
        check_matmul_shapes(A, B)
        return run_mode(A, B, self.mode_, TilingConfig(self.k_tile))
