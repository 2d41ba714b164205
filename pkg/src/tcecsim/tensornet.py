"""Labeled dense tensors and TTGT contraction through the precision dispatcher.

A pairwise contraction is done the TTGT way: both operands are physically
transposed so the contracted labels sit on the inner side, reshaped into
matrices, multiplied with :func:`~tcecsim.precsel.dispatch_cgemm`, and the
product is reshaped back into a tensor with labels ``free_A + free_B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import (
    DisconnectedNetwork,
    ExtentMismatch,
    InfeasibleDegrees,
    InvalidPath,
    InvalidPermutation,
)
from .precsel import SelectionPolicy, dispatch_cgemm


@dataclass(frozen=True, eq=False)
class TensorC32:
    labels: tuple
    data: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        data = np.asarray(self.data, dtype=np.complex64, order="C")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        if data.ndim != len(labels):
            raise ValueError(f"data has rank {data.ndim} but {len(labels)} labels were given")
        if any(d < 1 for d in data.shape):
            raise ValueError("every extent must be >= 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def rank(self) -> int:
        return len(self.labels)

    def extent(self, label) -> int:
        return self.data.shape[self.labels.index(label)]

    def __repr__(self):
        return f"TensorC32(labels={self.labels}, dims={self.dims})"


@dataclass
class TensorNetwork:
    """A list of tensors; a label shared by two nodes is a contracted edge."""

    nodes: list = field(default_factory=list)

    def __post_init__(self):
        seen = {}
        for t in self.nodes:
            for lab, d in zip(t.labels, t.dims):
                if lab in seen:
                    count, extent = seen[lab]
                    if count >= 2:
                        raise ValueError(f"label {lab!r} appears in more than two nodes")
                    if extent != d:
                        raise ExtentMismatch(f"label {lab!r} has extents {extent} and {d}")
                    seen[lab] = (count + 1, extent)
                else:
                    seen[lab] = (1, d)

    def __len__(self):
        return len(self.nodes)

    def open_labels(self):
        counts = {}
        for t in self.nodes:
            for lab in t.labels:
                counts[lab] = counts.get(lab, 0) + 1
        return [lab for lab, c in counts.items() if c == 1]


@dataclass(frozen=True)
class ContractionPath:
    """Ordered node-id pairs. Node ids start at ``0..n-1``; each step appends
    its result with the next free id."""

    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((int(a), int(b)) for a, b in self.steps))

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def permute(T: TensorC32, new_order: Sequence) -> TensorC32:
    """Physically transpose ``T`` into ``new_order``."""
    new_order = tuple(new_order)
    if len(new_order) != T.rank or set(new_order) != set(T.labels):
        raise InvalidPermutation(f"{new_order} is not a permutation of {T.labels}")
    axes = [T.labels.index(lab) for lab in new_order]
    return TensorC32(new_order, np.asarray(np.transpose(T.data, axes), order="C"))


def _split_labels(A: TensorC32, B: TensorC32):
    in_b = set(B.labels)
    shared = [lab for lab in A.labels if lab in in_b]
    for lab in shared:
        if A.extent(lab) != B.extent(lab):
            raise ExtentMismatch(f"label {lab!r}: {A.extent(lab)} vs {B.extent(lab)}")
    free_a = [lab for lab in A.labels if lab not in in_b]
    shared_set = set(shared)
    free_b = [lab for lab in B.labels if lab not in shared_set]
    return free_a, shared, free_b


def contract_pair(A: TensorC32, B: TensorC32, policy: SelectionPolicy = SelectionPolicy(),
                  log=None) -> TensorC32:
    """Sum over the labels ``A`` and ``B`` share.

    With no shared labels the result is the outer product (a GEMM with inner
    extent 1).
    """
    free_a, shared, free_b = _split_labels(A, B)
    Ap = permute(A, free_a + shared)
    Bp = permute(B, shared + free_b)
    dims_fa = [A.extent(lab) for lab in free_a]
    dims_fb = [B.extent(lab) for lab in free_b]
    k = math.prod(A.extent(lab) for lab in shared)
    Am = Ap.data.reshape(math.prod(dims_fa), k)
    Bm = Bp.data.reshape(k, math.prod(dims_fb))
    C, _, _ = dispatch_cgemm(Am, Bm, policy, log)
    return TensorC32(tuple(free_a + free_b), C.reshape(tuple(dims_fa + dims_fb)))


def _fold(nodes, path: ContractionPath, pair_fn):
    live = dict(enumerate(nodes))
    next_id = len(nodes)
    for a, b in path:
        if a == b or a not in live or b not in live:
            raise InvalidPath(f"step ({a}, {b}) does not reference two live nodes")
        live[next_id] = pair_fn(live.pop(a), live.pop(b))
        next_id += 1
    if len(live) != 1:
        raise InvalidPath(f"path leaves {len(live)} nodes instead of one")
    return next(iter(live.values()))


def contract_network(net: TensorNetwork, path: ContractionPath,
                     policy: SelectionPolicy = SelectionPolicy(), log=None) -> TensorC32:
    """Contract ``net`` along ``path``; a rank-0 result holds the scalar."""
    return _fold(net.nodes, path, lambda x, y: contract_pair(x, y, policy, log))


def contract_network_f64(net: TensorNetwork, path: ContractionPath):
    """Same path as :func:`contract_network` but in complex128 via ``tensordot``.

    Returns ``(labels, array)``.
    """

    def pair(x, y):
        (lx, dx), (ly, dy) = x, y
        shared = [lab for lab in lx if lab in ly]
        axes = ([lx.index(l) for l in shared], [ly.index(l) for l in shared])
        out = np.tensordot(dx, dy, axes=axes)
        labels = tuple(l for l in lx if l not in shared) + tuple(l for l in ly if l not in shared)
        return labels, out

    nodes = [(t.labels, t.data.astype(np.complex128)) for t in net.nodes]
    return _fold(nodes, path, pair)


def _result_size(la, lb, dims):
    return math.prod(dims[lab] for lab in la.symmetric_difference(lb))


def greedy_path(net: TensorNetwork, *, allow_disconnected=False) -> ContractionPath:
    """Repeatedly contract the connected pair whose result has the fewest elements.

    Ties go to the lexicographically smallest ``(id_a, id_b)``. A network
    that falls apart into components raises :class:`DisconnectedNetwork`
    unless ``allow_disconnected`` is set, in which case the finished
    components are joined pairwise as outer products, smallest result first.
    """
    dims = {}
    for t in net.nodes:
        dims.update(zip(t.labels, t.dims))
    live = {i: frozenset(t.labels) for i, t in enumerate(net.nodes)}
    owners = {}
    for i, labs in live.items():
        for lab in labs:
            owners.setdefault(lab, set()).add(i)
    next_id = len(net.nodes)
    steps = []
    while len(live) > 1:
        best = None
        for lab, ids in owners.items():
            if len(ids) != 2:
                continue
            a, b = sorted(ids)
            key = (_result_size(live[a], live[b], dims), a, b)
            if best is None or key < best:
                best = key
        if best is None:
            if not allow_disconnected:
                raise DisconnectedNetwork("no remaining pair of nodes shares a label")
            ids = sorted(live)
            best = min((_result_size(live[a], live[b], dims), a, b)
                       for i, a in enumerate(ids) for b in ids[i + 1:])
        _, a, b = best
        merged = live[a].symmetric_difference(live[b])
        for lab in live[a] | live[b]:
            owners[lab].discard(a)
            owners[lab].discard(b)
            if lab in merged:
                owners[lab].add(next_id)
            else:
                del owners[lab]
        del live[a], live[b]
        live[next_id] = merged
        steps.append((a, b))
        next_id += 1
    return ContractionPath(tuple(steps))


def path_max_size(net: TensorNetwork, path: ContractionPath) -> int:
    """Largest intermediate element count produced along ``path``."""
    dims = {}
    for t in net.nodes:
        dims.update(zip(t.labels, t.dims))
    live = {i: frozenset(t.labels) for i, t in enumerate(net.nodes)}
    next_id = len(net.nodes)
    biggest = max((math.prod(t.dims) for t in net.nodes), default=1)
    for a, b in path:
        merged = live.pop(a).symmetric_difference(live.pop(b))
        live[next_id] = merged
        next_id += 1
        biggest = max(biggest, _result_size(merged, frozenset(), dims))
    return biggest


INIT_TYPES = ("Type1", "Type2", "Type3")
TYPE1_STD = 1e-2  # variance 1e-4
TYPE2_FACTOR = 1e-6


def _random_multigraph(n_nodes, lo, hi, rng, max_tries):
    for _ in range(max_tries):
        degrees = rng.integers(lo, hi + 1, n_nodes)
        if degrees.sum() % 2:
            continue
        stubs = rng.permutation(np.repeat(np.arange(n_nodes), degrees))
        edges = stubs.reshape(-1, 2)
        if np.any(edges[:, 0] == edges[:, 1]):
            continue
        # connectivity via union-find
        parent = list(range(n_nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in edges:
            parent[find(u)] = find(v)
        if len({find(i) for i in range(n_nodes)}) == 1:
            return [tuple(sorted((int(u), int(v)))) for u, v in edges]
    raise InfeasibleDegrees(
        f"no connected loop-free multigraph with {n_nodes} nodes and degrees {lo}..{hi} "
        f"found in {max_tries} tries"
    )


def random_network(n_nodes=10, degree_range=(2, 4), dim=32, init="Type1", seed=0,
                   *, max_tries=10000) -> TensorNetwork:
    """Closed random network: every label joins two nodes, every extent is ``dim``.

    ``init`` picks the element distribution:

    * ``Type1``: real and imaginary parts i.i.d. normal, variance 1e-4.
    * ``Type2``: Type1 scaled by 1e-6.
    * ``Type3``: Type2, then 10 to 20 elements drawn uniformly from the whole
      network are set to 1.
    """
    if init not in INIT_TYPES:
        raise ValueError(f"init must be one of {INIT_TYPES}, got {init!r}")
    lo, hi = degree_range
    if n_nodes < 2 or lo < 1 or hi < lo:
        raise InfeasibleDegrees(f"n_nodes={n_nodes}, degree_range={degree_range}")
    rng = np.random.default_rng(seed)
    edges = _random_multigraph(n_nodes, lo, hi, rng, max_tries)
    incident = [[] for _ in range(n_nodes)]
    for idx, (u, v) in enumerate(edges):
        incident[u].append(f"e{idx}")
        incident[v].append(f"e{idx}")

    arrays = []
    for labels in incident:
        shape = (dim,) * len(labels)
        re = rng.normal(0.0, TYPE1_STD, shape)
        im = rng.normal(0.0, TYPE1_STD, shape)
        vals = re + 1j * im
        if init != "Type1":
            vals = vals * TYPE2_FACTOR
        arrays.append(vals.astype(np.complex64))

    if init == "Type3":
        sizes = np.array([a.size for a in arrays])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        count = int(rng.integers(10, 21))
        picks = rng.choice(offsets[-1], size=count, replace=False)
        for p in picks:
            node = int(np.searchsorted(offsets, p, side="right") - 1)
            arrays[node].reshape(-1)[p - offsets[node]] = 1.0

    return TensorNetwork([TensorC32(tuple(l), a) for l, a in zip(incident, arrays)])


def write_network(net: TensorNetwork, fh):
    """Text fixture format: a ``node`` header line then the element pairs."""
    for i, t in enumerate(net.nodes):
        labels = ",".join(t.labels) if t.labels else "-"
        dims = ",".join(str(d) for d in t.dims) if t.dims else "-"
        fh.write(f"node {i} labels {labels} dims {dims}\n")
        flat = t.data.reshape(-1)
        fh.write(" ".join(f"{z.real:.9g} {z.imag:.9g}" for z in flat))
        fh.write("\n")


def read_network(fh) -> TensorNetwork:
    nodes = []
    header = None
    for raw in fh:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("node "):
            parts = line.split()
            if len(parts) != 6 or parts[2] != "labels" or parts[4] != "dims":
                raise ValueError(f"malformed node header: {line!r}")
            labels = () if parts[3] == "-" else tuple(parts[3].split(","))
            dims = () if parts[5] == "-" else tuple(int(d) for d in parts[5].split(","))
            header = (labels, dims)
            continue
        if header is None:
            raise ValueError("element data before any node header")
        vals = np.array(line.split(), dtype=np.float64)
        labels, dims = header
        data = (vals[0::2] + 1j * vals[1::2]).astype(np.complex64).reshape(dims)
        nodes.append(TensorC32(labels, data))
        header = None
    return TensorNetwork(nodes)
