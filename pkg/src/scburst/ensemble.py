"""Random regular (dv, dc, w, L, M) spatially coupled LDPC ensemble.

Variable nodes (VNs) are numbered ``0 .. L*M-1``; VN ``v`` sits at spatial
position ``v // M + 1``.  Check nodes (CNs) live at positions ``1 .. L+w-1``
with ``M*dv/dc`` CNs per position, and CN ``c`` sits at position
``c // (M*dv/dc) + 1``.  Ids of CNs that end up with degree zero are kept
(never renumbered) but such CNs are not part of the stored graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .errors import GraphSamplingError, ParameterError

# Swap attempts allowed for parallel-edge repair, per VN.
_SWAPS_PER_VN = 10
# Whole-graph attempts (each on a derived seed) before giving up.
_GRAPH_ATTEMPTS = 8


@dataclass(frozen=True)
class EnsembleParams:
    """Parameters of the (dv, dc, w, L, M) ensemble.

    ``M`` may be left at ``None`` for purely asymptotic (density evolution)
    work, where only ``dv, dc, w, L`` matter.
    """

    dv: int
    dc: int
    w: int
    L: int
    M: int | None = None

    def __post_init__(self):
        for name in ("dv", "dc", "w", "L"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or val < 1:
                raise ParameterError(f"{name} must be a positive integer, got {val!r}")
        if self.dv < 2:
            raise ParameterError("dv must be at least 2")
        if self.dc <= 1:
            raise ParameterError("dc must be at least 2")
        if self.w < 2:
            raise ParameterError("coupling width w must be at least 2")
        if self.L <= self.w:
            raise ParameterError(f"chain length L={self.L} must exceed w={self.w}")
        if self.M is not None:
            if not isinstance(self.M, (int, np.integer)) or self.M < 1:
                raise ParameterError(f"M must be a positive integer, got {self.M!r}")
            if (self.M * self.dv) % self.dc:
                raise ParameterError("M*dv/dc must be an integer")

    def require_finite(self) -> None:
        """Check the conditions needed to sample finite graphs."""
        if self.M is None:
            raise ParameterError("M is required to sample a code")
        if self.dv < 3:
            raise ParameterError("graph sampling requires dv >= 3")
        if self.w * self.M < 2 * (self.dv + 1) * self.dc:
            raise ParameterError(
                f"w*M = {self.w * self.M} < 2(dv+1)dc = {2 * (self.dv + 1) * self.dc}"
            )

    @property
    def cns_per_position(self) -> int:
        return self.M * self.dv // self.dc

    @property
    def n_vn(self) -> int:
        return self.L * self.M

    @property
    def n_cn_positions(self) -> int:
        return self.L + self.w - 1

    def with_M(self, M: int | None) -> "EnsembleParams":
        return EnsembleParams(self.dv, self.dc, self.w, self.L, M)

    def with_L(self, L: int) -> "EnsembleParams":
        return EnsembleParams(self.dv, self.dc, self.w, L, self.M)


@njit(cache=True)
def _partial_shuffle(buf, k):
    """Put a uniform random k-subset of ``buf`` (in random order) into buf[:k]."""
    n = len(buf)
    for t in range(k):
        j = t + np.random.randint(0, n - t)
        tmp = buf[t]
        buf[t] = buf[j]
        buf[j] = tmp


@njit(cache=True)
def _sample_adjacency(dv, dc, w, L, M, seed, max_swaps):
    """Socket-permutation sampler.  Returns (adjacency, ok)."""
    np.random.seed(seed)
    mc = M * dv // dc
    n_sock = M * dv  # edge sockets per VN position == CN sockets per CN position
    n_pos = L + w - 1
    n_edges = L * n_sock
    # edge e of VN v is flat index v*dv + e; VN position z owns [z*n_sock, (z+1)*n_sock)
    edge_pos = np.empty(n_edges, np.int64)
    perm = np.arange(n_sock)
    for z in range(L):
        _partial_shuffle(perm, n_sock)
        for i in range(w):
            lo = (i * n_sock) // w
            hi = ((i + 1) * n_sock) // w
            for t in range(lo, hi):
                edge_pos[z * n_sock + perm[t]] = z + i
    counts = np.zeros(n_pos, np.int64)
    for t in range(n_edges):
        counts[edge_pos[t]] += 1
    ptr = np.zeros(n_pos + 1, np.int64)
    for p in range(n_pos):
        ptr[p + 1] = ptr[p] + counts[p]
    fill = ptr[:-1].copy()
    edges_at = np.empty(n_edges, np.int64)
    for t in range(n_edges):
        p = edge_pos[t]
        edges_at[fill[p]] = t
        fill[p] += 1
    flat = np.empty(n_edges, np.int64)
    sock = np.arange(mc * dc)
    for p in range(n_pos):
        k = counts[p]
        _partial_shuffle(sock, k)
        for t in range(k):
            flat[edges_at[ptr[p] + t]] = p * mc + sock[t] // dc
    adj = flat.reshape((L * M, dv))

    # parallel-edge repair: swap the CN of a duplicated edge with a random
    # edge landing at the same CN position, keeping degrees and offsets fixed
    swaps = 0
    for v in range(L * M):
        e = 1
        while e < dv:
            dup = False
            for f in range(e):
                if adj[v, f] == adj[v, e]:
                    dup = True
                    break
            if not dup:
                e += 1
                continue
            c1 = adj[v, e]
            p = c1 // mc
            u = edges_at[ptr[p] + np.random.randint(0, counts[p])]
            v2 = u // dv
            e2 = u % dv
            c2 = adj[v2, e2]
            swaps += 1
            if swaps > max_swaps:
                return adj, False
            if c2 == c1 or v2 == v:
                continue
            ok = True
            for f in range(dv):
                if f != e and adj[v, f] == c2:
                    ok = False
                if f != e2 and adj[v2, f] == c1:
                    ok = False
            if not ok:
                continue
            adj[v, e] = c2
            adj[v2, e2] = c1
            # v2 is fine by the check above; re-scan v from its first slot
            e = 1
    return adj, True


def _kernel_seed(seed: int, attempt: int) -> int:
    """Map a 64-bit user seed (and attempt number) to the sampler's 32-bit seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(attempt,))
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(eq=False)
class CodeGraph:
    """A sampled Tanner graph.

    ``adjacency[v]`` holds the dv CN ids of VN ``v`` in the order the edges
    were drawn.  Arrays are read-only.
    """

    params: EnsembleParams
    seed: int
    adjacency: np.ndarray

    def __post_init__(self):
        self.adjacency = np.ascontiguousarray(self.adjacency, dtype=np.int64)
        self.adjacency.setflags(write=False)

    @property
    def vn_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def cn_id_count(self) -> int:
        """Size of the CN id space, including dropped degree-0 ids."""
        return self.params.n_cn_positions * self.params.cns_per_position

    @cached_property
    def cn_degree(self) -> np.ndarray:
        deg = np.bincount(self.adjacency.ravel(), minlength=self.cn_id_count)
        deg.setflags(write=False)
        return deg

    @cached_property
    def cn_ids(self) -> np.ndarray:
        """Ids of the stored CNs (degree at least one)."""
        return np.flatnonzero(self.cn_degree)

    @property
    def cn_count(self) -> int:
        return len(self.cn_ids)

    def position_of_vn(self, v) -> np.ndarray | int:
        return np.asarray(v) // self.params.M + 1

    def position_of_cn(self, c) -> np.ndarray | int:
        return np.asarray(c) // self.params.cns_per_position + 1

    @cached_property
    def cn_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (pointer, VN ids) view of the CN side over the full id space."""
        flat = self.adjacency.ravel()
        order = np.argsort(flat, kind="stable")
        vns = order // self.params.dv
        ptr = np.zeros(self.cn_id_count + 1, np.int64)
        np.cumsum(self.cn_degree, out=ptr[1:])
        return ptr, vns

    def edge_offsets(self) -> np.ndarray:
        """Position offset (CN position minus VN position) of every edge."""
        vpos = np.repeat(self.position_of_vn(np.arange(self.vn_count)), self.params.dv)
        return self.position_of_cn(self.adjacency.ravel()) - vpos

    def __eq__(self, other):
        if not isinstance(other, CodeGraph):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.adjacency, other.adjacency)


def sample_code(params: EnsembleParams, seed: int) -> CodeGraph:
    """Sample a code from the ensemble.

    The ``M*dv`` edge sockets of each VN position z are randomly permuted and
    split into w groups of (near) equal size; group i is attached to CN
    position z+i through a uniformly random choice of free CN sockets there.
    Each edge therefore lands on a uniformly random socket among the
    ``w*M*dv`` sockets of its window, interior CNs get degree exactly dc and
    boundary CNs may end up with fewer edges.  Parallel edges are then
    removed by swapping CN endpoints with random edges arriving at the same
    CN position.  The result depends only on ``(params, seed)``.
    """
    params.require_finite()
    for attempt in range(_GRAPH_ATTEMPTS):
        adj, ok = _sample_adjacency(
            params.dv, params.dc, params.w, params.L, params.M,
            _kernel_seed(seed, attempt), _SWAPS_PER_VN * params.n_vn,
        )
        if ok:
            return CodeGraph(params, int(seed), adj)
    raise GraphSamplingError(
        f"socket sampler stalled in {_GRAPH_ATTEMPTS} attempts for {params}, seed={seed}"
    )


def design_rate(graph: CodeGraph) -> Fraction:
    """``1 - (#stored CNs) / (L*M)``."""
    return 1 - Fraction(graph.cn_count, graph.vn_count)


def cn_neighborhood(graph: CodeGraph, vn: int) -> frozenset[int]:
    if not 0 <= vn < graph.vn_count:
        raise ParameterError(f"unknown VN id {vn}")
    return frozenset(int(c) for c in graph.adjacency[vn])


def save_edgelist(graph: CodeGraph, path) -> None:
    """Write ``vn cn`` lines (0-based ids) after a header carrying the parameters."""
    p = graph.params
    lines = [f"# dv={p.dv} dc={p.dc} w={p.w} L={p.L} M={p.M} seed={graph.seed}"]
    v = np.repeat(np.arange(graph.vn_count), p.dv)
    lines.extend(f"{a} {b}" for a, b in zip(v.tolist(), graph.adjacency.ravel().tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_edgelist(path) -> CodeGraph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ParameterError(f"{path}: missing header line")
    fields = dict(tok.split("=") for tok in text[0][1:].split())
    params = EnsembleParams(*(int(fields[k]) for k in ("dv", "dc", "w", "L", "M")))
    pairs = np.loadtxt(text[1:], dtype=np.int64, ndmin=2)
    if pairs.shape[0] != params.n_vn * params.dv:
        raise ParameterError(f"{path}: expected {params.n_vn * params.dv} edges, found {pairs.shape[0]}")
    counts = np.bincount(pairs[:, 0], minlength=params.n_vn)
    if np.any(counts != params.dv):
        raise ParameterError(f"{path}: every VN must appear exactly dv times")
    order = np.argsort(pairs[:, 0], kind="stable")
    adj = pairs[order, 1].reshape(params.n_vn, params.dv)
    return CodeGraph(params, int(fields["seed"]), adj)


def window_ok(graph: CodeGraph) -> bool:
    """True when every edge lands within its VN's coupling window."""
    off = graph.edge_offsets()
    return bool(np.all((off >= 0) & (off < graph.params.w)))


def expected_rate(params: EnsembleParams) -> float:
    """Rate of the uncoupled code, ``1 - dv/dc``."""
    return 1.0 - params.dv / params.dc


__all__ = [
    "EnsembleParams", "CodeGraph", "sample_code", "design_rate", "cn_neighborhood",
    "save_edgelist", "load_edgelist", "window_ok", "expected_rate",
]
