"""Emulated error-corrected Tensor-Core GEMM with automatic precision selection.

The low-precision arithmetic is emulated bit-exactly on the CPU in float32
containers, so accuracy and mode-selection behaviour can be studied without a
GPU.
"""

from .cgemm import cgemm, cgemm_batched, cgemm_oracle
from .emugemm import (
    DEFAULT_TILING,
    GemmMode,
    TilingConfig,
    gemm,
    gemm_oracle_f64,
    gemm_ref_f32,
    gemm_tc,
    gemm_tcec,
    gemm_tcec_split,
    relative_error,
)
from .exceptions import (
    ConversionOverflowWarning,
    DisconnectedNetwork,
    ExtentMismatch,
    InfeasibleDegrees,
    InvalidPath,
    InvalidPermutation,
    ScaleOverflow,
    ShapeMismatch,
    TooManyQubits,
    ZeroReference,
)
from .lowprec import FP16, TF32, FloatFormat, RoundingMode, split, to_low, unbiased_exponent
from .precsel import (
    ComputeKind,
    ComputeMode,
    DecisionLog,
    ExpStats,
    LogEntry,
    MatrixTolerance,
    PowerOfTwoScaler,
    PrecisionSelector,
    SelectionPolicy,
    ToleranceLevel,
    descale_output,
    dispatch_cgemm,
    exp_stats,
    matrix_tolerance,
    scale_matrix,
    select_mode,
)
from .qcircuit import (
    Circuit,
    Gate,
    GateKind,
    amplitude,
    amplitude_oracle,
    circuit_to_network,
    read_circuit,
    rqc_rectangular,
    statevector,
    write_circuit,
)
from .tensornet import (
    ContractionPath,
    TensorC32,
    TensorNetwork,
    contract_network,
    contract_network_f64,
    contract_pair,
    greedy_path,
    permute,
    random_network,
    read_network,
    write_network,
)

__version__ = "0.1.0"
