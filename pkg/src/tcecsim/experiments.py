"""Seeded experiment drivers behind the command-line harness.

Each driver returns a list of flat dict rows whose keys match a fixed column
list (``*_COLUMNS``). Every row carries the full configuration needed to
recompute it; only the timing cells vary between reruns.
"""

from __future__ import annotations

import math
import statistics
import time
from collections import defaultdict

import numpy as np

from .cgemm import cgemm
from .emugemm import GemmMode, TilingConfig, relative_error
from .exceptions import TooManyQubits
from .precsel import ComputeKind, DecisionLog, SelectionPolicy
from .qcircuit import (
    MAX_ORACLE_QUBITS,
    amplitude,
    bits_from_int,
    circuit_to_network,
    rqc_rectangular,
    statevector,
)
from .tensornet import contract_network, contract_network_f64, greedy_path, random_network

KIND_NAMES = tuple(k.value for k in ComputeKind)
HIST_COLUMNS = tuple(f"n_{name}" for name in KIND_NAMES)

GEMM_BENCH_COLUMNS = (
    "size", "mode", "seed", "k_tile", "reps", "rel_error", "seconds_min", "seconds_median",
)
RANDTN_COLUMNS = (
    "type", "dim", "nodes", "degree_min", "degree_max", "seed", "mode", "threshold",
    "size_auto", "size_tf32", "k_tile", "rel_error", "result_abs", "oracle_abs", "n_gemm",
) + HIST_COLUMNS + ("seconds",)
RQC_COLUMNS = (
    "rows", "cols", "depth", "seed", "mode", "threshold", "size_auto", "size_tf32", "k_tile",
    "n_bitstrings", "reference", "n_zero_ref", "median_rel_error", "max_rel_error",
    "max_abs_error", "median_abs_amp", "n_gemm",
) + HIST_COLUMNS + ("seconds",)
BREAKDOWN_COLUMNS = (
    "rows", "cols", "depth", "seed", "mode", "m", "n", "k", "decision", "count", "seconds",
)

GEMM_BENCH_MODES = ("FP64_ORACLE", "FP32_REF", "TF32TC", "FP16TC", "TF32TCEC", "FP16TCEC")
MODE_ALIASES = {"BASELINE": ComputeKind.FP32_BASELINE.value}

# references below this magnitude are structural zeros polluted by f64 rounding
ZERO_AMPLITUDE = 1e-12


def uniform_complex(rng, shape):
    """Real and imaginary parts i.i.d. uniform on (-1, 1), stored as complex64."""
    re = rng.uniform(-1.0, 1.0, shape)
    im = rng.uniform(-1.0, 1.0, shape)
    return (re + 1j * im).astype(np.complex64)


def scalar_rel_error(value, reference) -> float:
    """``|value - reference| / |reference|``; NaN when the reference is zero."""
    ref = complex(reference)
    if ref == 0:
        return math.nan
    return abs(complex(value) - ref) / abs(ref)


def parse_policy(name, *, size_auto=2048, size_tf32=512, k_tile=16) -> SelectionPolicy:
    """``"AUTO-<t>"`` or a :class:`ComputeKind` name (``BASELINE`` is accepted)."""
    tiling = TilingConfig(k_tile)
    common = dict(size_auto=size_auto, size_tf32=size_tf32, tiling=tiling)
    upper = name.strip().upper()
    if upper.startswith("AUTO"):
        rest = upper[4:].lstrip("-")
        t = float(rest) if rest else 0.0
        return SelectionPolicy.auto(t, **common)
    kind = MODE_ALIASES.get(upper, upper)
    return SelectionPolicy.forced(ComputeKind(kind), **common)


def expand_modes(modes, thresholds):
    """Replace a bare ``AUTO`` entry with one ``AUTO-t`` per threshold."""
    out = []
    for m in modes:
        if m.strip().upper() == "AUTO":
            out.extend(f"AUTO-{t:g}" for t in thresholds)
        else:
            out.append(m.strip())
    return out


def _histogram_cells(log: DecisionLog):
    hist = log.histogram()
    return {f"n_{name}": hist.get(name, 0) for name in KIND_NAMES}


def _threshold_cell(policy: SelectionPolicy):
    return "" if policy.force is not None else policy.threshold_t


def run_gemm_bench(sizes, modes=GEMM_BENCH_MODES, seed=0, reps=1, k_tile=16):
    """Square complex GEMMs against the double-precision product.

    Inputs depend only on ``(seed, size)``. The error cell comes from the
    first repetition; timings are indicative only.
    """
    tiling = TilingConfig(k_tile)
    rows = []
    for size in sizes:
        if size < 1:
            raise ValueError(f"size must be positive, got {size}")
        rng = np.random.default_rng([seed, size])
        A = uniform_complex(rng, (size, size))
        B = uniform_complex(rng, (size, size))
        ref = cgemm(A, B, GemmMode.FP64_ORACLE)
        for mode in modes:
            # first call may load compiled kernels; keep it out of the timings
            cgemm(A[:2, :2], B[:2, :2], mode, tiling)
            mode = GemmMode(mode)
            times = []
            err = None
            for _ in range(max(1, reps)):
                start = time.perf_counter()
                C = cgemm(A, B, mode, tiling)
                times.append(time.perf_counter() - start)
                if err is None:
                    err = relative_error(C, ref)
            rows.append(dict(
                size=size, mode=mode.value, seed=seed, k_tile=k_tile, reps=len(times),
                rel_error=err, seconds_min=min(times), seconds_median=statistics.median(times),
            ))
    return rows


def run_randtn(init="Type1", dim=32, modes=("BASELINE", "TF32TCEC", "FP16TCEC", "FP16TCEC_SCALED",
                                            "AUTO-0"),
               seeds=(0,), n_nodes=4, degree_range=(2, 4), size_auto=0, size_tf32=0, k_tile=16,
               log_sink=None):
    """Contract random closed networks in each mode and compare with complex128.

    ``log_sink``, if given, receives ``(row, DecisionLog)`` for every row.
    """
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    policies = [parse_policy(m, size_auto=size_auto, size_tf32=size_tf32, k_tile=k_tile)
                for m in modes]
    rows = []
    for seed in seeds:
        net = random_network(n_nodes, degree_range, dim, init, seed)
        path = greedy_path(net)
        _, ref = contract_network_f64(net, path)
        ref = complex(ref)
        for policy in policies:
            log = DecisionLog()
            start = time.perf_counter()
            res = contract_network(net, path, policy, log)
            elapsed = time.perf_counter() - start
            value = complex(res.data.reshape(()))
            row = dict(
                type=init, dim=dim, nodes=n_nodes, degree_min=degree_range[0],
                degree_max=degree_range[1], seed=seed, mode=policy.name,
                threshold=_threshold_cell(policy), size_auto=size_auto, size_tf32=size_tf32,
                k_tile=k_tile, rel_error=scalar_rel_error(value, ref), result_abs=abs(value),
                oracle_abs=abs(ref), n_gemm=len(log), **_histogram_cells(log), seconds=elapsed,
            )
            rows.append(row)
            if log_sink is not None:
                log_sink(row, log)
    return rows


def pick_bitstrings(n_qubits, count, seed):
    """``count`` distinct bitstrings, seeded independently of the circuit."""
    rng = np.random.default_rng([seed, 1])
    space = 2**n_qubits
    count = min(count, space)
    if n_qubits <= 62:
        values = rng.choice(space, size=count, replace=False)
        return [bits_from_int(int(v), n_qubits) for v in values]
    seen = set()
    while len(seen) < count:
        seen.add(tuple(int(b) for b in rng.integers(0, 2, n_qubits)))
    return [list(b) for b in sorted(seen)]


def run_rqc(rows=4, cols=4, depths=(8,), modes=("BASELINE", "TF32TC", "FP16TC", "TF32TCEC",
                                                 "FP16TCEC", "AUTO-0"),
            seeds=(0,), n_bitstrings=10, oracle=True, size_auto=2048, size_tf32=512, k_tile=16,
            breakdown=None):
    """Median relative amplitude error per mode over ``n_bitstrings`` outputs.

    Bitstrings whose reference amplitude is below ``ZERO_AMPLITUDE`` are left
    out of the relative statistics and counted in ``n_zero_ref``; they still
    enter ``max_abs_error``. The reference is the complex128 state vector
    when ``oracle`` is set and a complex128 contraction of the same network
    otherwise. ``breakdown``, if a list, is extended with per-shape timing
    rows.
    """
    n = rows * cols
    if oracle and n > MAX_ORACLE_QUBITS:
        raise TooManyQubits(f"{n} qubits exceeds the state-vector limit of {MAX_ORACLE_QUBITS}")
    policies = [parse_policy(m, size_auto=size_auto, size_tf32=size_tf32, k_tile=k_tile)
                for m in modes]
    out = []
    for depth in depths:
        for seed in seeds:
            circuit = rqc_rectangular(rows, cols, depth, seed)
            bitstrings = pick_bitstrings(n, n_bitstrings, seed)
            nets = [circuit_to_network(circuit, x) for x in bitstrings]
            path = greedy_path(nets[0], allow_disconnected=True)
            if oracle:
                state = statevector(circuit)
                refs = [complex(state[int("".join(map(str, x)), 2)]) for x in bitstrings]
            else:
                refs = [complex(contract_network_f64(net, path)[1]) for net in nets]
            for policy in policies:
                log = DecisionLog()
                errs, abs_errs, amps = [], [], []
                start = time.perf_counter()
                for x, ref in zip(bitstrings, refs):
                    amp = amplitude(circuit, x, policy, log, path)
                    abs_errs.append(abs(amp - ref))
                    amps.append(abs(amp))
                    if abs(ref) > ZERO_AMPLITUDE:
                        errs.append(scalar_rel_error(amp, ref))
                elapsed = time.perf_counter() - start
                out.append(dict(
                    rows=rows, cols=cols, depth=depth, seed=seed, mode=policy.name,
                    threshold=_threshold_cell(policy), size_auto=size_auto, size_tf32=size_tf32,
                    k_tile=k_tile, n_bitstrings=len(bitstrings),
                    reference="statevector" if oracle else "tn_complex128",
                    n_zero_ref=len(bitstrings) - len(errs),
                    median_rel_error=statistics.median(errs) if errs else math.nan,
                    max_rel_error=max(errs) if errs else math.nan,
                    max_abs_error=max(abs_errs), median_abs_amp=statistics.median(amps),
                    n_gemm=len(log),
                    **_histogram_cells(log), seconds=elapsed,
                ))
                if breakdown is not None:
                    breakdown.extend(shape_breakdown(log, rows=rows, cols=cols, depth=depth,
                                                     seed=seed, mode=policy.name))
    return out


def shape_breakdown(log: DecisionLog, **config):
    """Aggregate logged GEMMs by ``(m, n, k, decision)``, largest time first."""
    agg = defaultdict(lambda: [0, 0.0])
    for e in log:
        cell = agg[(e.m, e.n, e.k, e.mode.value)]
        cell[0] += 1
        cell[1] += e.seconds or 0.0
    rows = [dict(config, m=m, n=n, k=k, decision=d, count=c, seconds=s)
            for (m, n, k, d), (c, s) in agg.items()]
    rows.sort(key=lambda r: (-r["seconds"], r["m"], r["n"], r["k"], r["decision"]))
    return rows
