"""Random quantum circuits on a rectangular lattice, as tensor networks.

Gate matrices are indexed ``U[out, in]``; for CZ the tensor axes are
``(out0, out1, in0, in1)``. Qubits are numbered row-major over the lattice.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import TooManyQubits
from .precsel import SelectionPolicy
from .tensornet import TensorC32, TensorNetwork, contract_network, greedy_path

MAX_ORACLE_QUBITS = 24


class GateKind(str, enum.Enum):
    H = "H"
    T = "T"
    SqrtX = "SX"
    SqrtY = "SY"
    CZ = "CZ"

    @property
    def arity(self) -> int:
        return 2 if self is GateKind.CZ else 1


_S2 = 1.0 / math.sqrt(2.0)
GATE_MATRICES = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=np.complex128) * _S2,
    GateKind.T: np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=np.complex128),
    GateKind.SqrtX: 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=np.complex128),
    GateKind.SqrtY: 0.5 * np.array([[1 + 1j, -1 - 1j], [1 + 1j, 1 + 1j]], dtype=np.complex128),
    GateKind.CZ: np.diag([1, 1, 1, -1]).astype(np.complex128),
}

SINGLE_QUBIT_POOL = (GateKind.T, GateKind.SqrtX, GateKind.SqrtY)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple

    def __post_init__(self):
        kind = GateKind(self.kind)
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != kind.arity:
            raise ValueError(f"{kind.value} acts on {kind.arity} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"repeated qubit in {qubits}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", qubits)


@dataclass
class Circuit:
    n_qubits: int
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for depth, layer in enumerate(self.layers):
            used = set()
            for g in layer:
                if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                    raise ValueError(f"layer {depth}: qubit out of range in {g}")
                if used.intersection(g.qubits):
                    raise ValueError(f"layer {depth}: gates overlap on {g.qubits}")
                used.update(g.qubits)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def gates(self):
        for layer in self.layers:
            yield from layer


def gate_tensor(g: Gate, labels=None) -> TensorC32:
    """Rank-2 (or rank-4 for CZ) tensor of a gate; default labels ``o*``/``i*``."""
    g = g if isinstance(g, Gate) else Gate(*g)
    mat = GATE_MATRICES[g.kind]
    if g.kind.arity == 1:
        data = mat
        default = ("o0", "i0")
    else:
        data = mat.reshape(2, 2, 2, 2)
        default = ("o0", "o1", "i0", "i1")
    return TensorC32(labels or default, data.astype(np.complex64))


def cz_pattern(rows, cols, index):
    """Qubit pairs of the ``index``-th (mod 8) staggered CZ layer.

    Four horizontal and four vertical configurations; within one
    configuration every qubit is touched at most once.
    """
    order = (0, 5, 1, 4, 2, 7, 3, 6)
    internal = order[index % 8]
    d_row = internal % 2
    d_col = 1 - d_row
    shift = (internal >> 1) % 4
    pairs = []
    for r in range(rows):
        for c in range(cols):
            r2, c2 = r + d_row, c + d_col
            if r2 >= rows or c2 >= cols:
                continue
            if (r * (2 - d_row) + c * (2 - d_col)) % 4 != shift:
                continue
            pairs.append((r * cols + c, r2 * cols + c2))
    return pairs


def rqc_rectangular(rows, cols, mid_depth, seed=0) -> Circuit:
    """H layer, ``mid_depth`` CZ layers with random single-qubit fillers, H layer.

    In each middle layer the qubits not hit by a CZ get a gate drawn from
    {T, SqrtX, SqrtY}, never the same one a qubit received last.
    """
    if rows < 1 or cols < 1 or mid_depth < 0:
        raise ValueError("rows, cols must be >= 1 and mid_depth >= 0")
    n = rows * cols
    rng = np.random.default_rng(seed)
    layers = [[Gate(GateKind.H, (q,)) for q in range(n)]]
    last = [None] * n
    for step in range(mid_depth):
        pairs = cz_pattern(rows, cols, step)
        layer = [Gate(GateKind.CZ, p) for p in pairs]
        touched = {q for p in pairs for q in p}
        for q in range(n):
            if q in touched:
                continue
            choices = [k for k in SINGLE_QUBIT_POOL if k is not last[q]]
            kind = choices[int(rng.integers(len(choices)))]
            last[q] = kind
            layer.append(Gate(kind, (q,)))
        layers.append(layer)
    layers.append([Gate(GateKind.H, (q,)) for q in range(n)])
    return Circuit(n, layers)


def _check_bits(c: Circuit, x):
    bits = [int(b) for b in x]
    if len(bits) != c.n_qubits or any(b not in (0, 1) for b in bits):
        raise ValueError(f"bitstring must be {c.n_qubits} bits of 0/1, got {x!r}")
    return bits


def circuit_to_network(c: Circuit, x) -> TensorNetwork:
    """Network whose full contraction is ``<x|U|0...0>``.

    Wire labels are ``q{qubit}_{segment}``; the segment counter advances each
    time a gate touches the qubit.
    """
    bits = _check_bits(c, x)
    seg = [0] * c.n_qubits
    ket0 = np.array([1, 0], dtype=np.complex64)
    nodes = [TensorC32((f"q{q}_0",), ket0) for q in range(c.n_qubits)]
    for g in c.gates():
        ins = [f"q{q}_{seg[q]}" for q in g.qubits]
        for q in g.qubits:
            seg[q] += 1
        outs = [f"q{q}_{seg[q]}" for q in g.qubits]
        nodes.append(gate_tensor(g, tuple(outs + ins)))
    for q, b in enumerate(bits):
        bra = np.zeros(2, dtype=np.complex64)
        bra[b] = 1
        nodes.append(TensorC32((f"q{q}_{seg[q]}",), bra))
    return TensorNetwork(nodes)


def amplitude(c: Circuit, x, policy: SelectionPolicy = SelectionPolicy(), log=None, path=None):
    """``<x|U|0>`` by tensor network contraction, as a Python complex.

    The greedy path depends only on the circuit, so callers sweeping many
    bitstrings can compute it once and pass it in. Qubits that never meet a
    CZ form separate components; their scalars are multiplied together.
    """
    net = circuit_to_network(c, x)
    if path is None:
        path = greedy_path(net, allow_disconnected=True)
    res = contract_network(net, path, policy, log)
    return complex(res.data.reshape(()))


def _apply(state, mat, qubits, n):
    k = len(qubits)
    psi = state.reshape((2,) * n)
    gate = mat.reshape((2,) * (2 * k))
    psi = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), list(qubits)))
    # tensordot puts the gate's output axes first; move them back into place
    psi = np.moveaxis(psi, list(range(k)), list(qubits))
    return psi.reshape(-1)


def statevector(c: Circuit) -> np.ndarray:
    """Full complex128 state ``U|0...0>``; qubit 0 is the most significant bit."""
    n = c.n_qubits
    if n > MAX_ORACLE_QUBITS:
        raise TooManyQubits(f"{n} qubits exceeds the state-vector limit of {MAX_ORACLE_QUBITS}")
    state = np.zeros(2**n, dtype=np.complex128)
    state[0] = 1.0
    for g in c.gates():
        state = _apply(state, GATE_MATRICES[g.kind], g.qubits, n)
    return state


def amplitude_oracle(c: Circuit, x) -> complex:
    bits = _check_bits(c, x)
    idx = int("".join(map(str, bits)), 2) if bits else 0
    return complex(statevector(c)[idx])


def bits_from_int(value, n):
    return [(value >> (n - 1 - i)) & 1 for i in range(n)]


def write_circuit(c: Circuit, fh):
    """Text format: ``layer`` / gate lines / ``endlayer`` blocks."""
    fh.write(f"qubits {c.n_qubits}\n")
    for layer in c.layers:
        fh.write("layer\n")
        for g in layer:
            fh.write(f"{g.kind.value} {' '.join(str(q) for q in g.qubits)}\n")
        fh.write("endlayer\n")


def read_circuit(fh, n_qubits=None) -> Circuit:
    layers = []
    current = None
    declared = None
    for lineno, raw in enumerate(fh, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "qubits":
            declared = int(tok[1])
        elif tok[0] == "layer":
            if current is not None:
                raise ValueError(f"line {lineno}: nested layer")
            current = []
        elif tok[0] == "endlayer":
            if current is None:
                raise ValueError(f"line {lineno}: endlayer without layer")
            layers.append(current)
            current = None
        else:
            if current is None:
                raise ValueError(f"line {lineno}: gate outside a layer")
            current.append(Gate(GateKind(tok[0]), tuple(int(q) for q in tok[1:])))
    if current is not None:
        raise ValueError("unterminated layer")
    n = n_qubits or declared
    if n is None:
        n = 1 + max((q for layer in layers for g in layer for q in g.qubits), default=-1)
    return Circuit(n, layers)
