"""Size-2 stopping sets: ensemble averages, enumeration and the error floor.

Two VNs form a size-2 stopping set exactly when they have the same CN
neighborhood.  For VNs at positions z and z+k the probability of this is
``q_k = P_R * (1 - k/w)^dv`` (zero for k >= w), where ``P_R`` is evaluated
in exact rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .burst import burst_length_bits, erased_counts
from .ensemble import CodeGraph, EnsembleParams, sample_code
from .errors import ParameterError


@dataclass
class PairStats:
    params: EnsembleParams
    p_r: float
    q: np.ndarray
    lam: np.ndarray | None = None
    empirical: np.ndarray | None = None
    empirical_se: np.ndarray | None = None
    n_codes: int = 0

    @property
    def expected_total(self) -> float:
        return float(np.sum(self.lam))

    def to_dict(self) -> dict:
        p = self.params
        out = {
            "params": {"dv": p.dv, "dc": p.dc, "w": p.w, "L": p.L, "M": p.M},
            "p_r": self.p_r,
            "q": self.q.tolist(),
            "lambda": None if self.lam is None else self.lam.tolist(),
        }
        if self.empirical is not None:
            out["empirical_counts"] = self.empirical.tolist()
            out["empirical_se"] = self.empirical_se.tolist()
            out["n_codes"] = self.n_codes
        return out


@dataclass
class FloorEstimate:
    b: float
    value: float
    bits: int
    note: str = ""


def pair_probability_exact(params: EnsembleParams) -> tuple[Fraction, list[Fraction]]:
    """``P_R`` and ``q_0..q_{w-1}`` as exact fractions."""
    if params.M is None:
        raise ParameterError("M is required")
    dv, dc, w = params.dv, params.dc, params.w
    n_cn = w * params.cns_per_position
    # numerator and denominator both scaled by dc^dv to stay in integers
    denom = sum(
        comb(dv, l) * comb(n_cn - dv, dv - l) * (dc - 1) ** l * dc ** (dv - l)
        for l in range(dv + 1)
    )
    p_r = Fraction((dc - 1) ** dv, denom)
    q = [p_r * Fraction(w - k, w) ** dv for k in range(w)]
    return p_r, q


def pair_probability(params: EnsembleParams) -> PairStats:
    p_r, q = pair_probability_exact(params)
    return PairStats(params, float(p_r), np.array([float(v) for v in q]))


def expected_counts(params: EnsembleParams) -> PairStats:
    """Average number of size-2 stopping sets per position offset k."""
    p_r, q = pair_probability_exact(params)
    L, M = params.L, params.M
    lam = [L * comb(M, 2) * q[0]] + [(L - k) * M * M * q[k] for k in range(1, params.w)]
    return PairStats(params, float(p_r), np.array([float(v) for v in q]),
                     np.array([float(v) for v in lam]))


def _check_vn(graph: CodeGraph, v: int) -> None:
    if not 0 <= v < graph.vn_count:
        raise ParameterError(f"unknown VN id {v}")


def is_pair_stopping_set(graph: CodeGraph, vi: int, vj: int) -> bool:
    _check_vn(graph, vi)
    _check_vn(graph, vj)
    if vi == vj:
        raise ParameterError("a size-2 stopping set needs two distinct VNs")
    return set(graph.adjacency[vi].tolist()) == set(graph.adjacency[vj].tolist())


def enumerate_size2(graph: CodeGraph) -> list[tuple[int, int]]:
    """All VN pairs (i < j) with identical CN neighborhoods."""
    keys = np.sort(graph.adjacency, axis=1)
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    same = np.all(sk[1:] == sk[:-1], axis=1)
    pairs = []
    i = 0
    n = len(order)
    while i < n - 1:
        if not same[i]:
            i += 1
            continue
        j = i
        while j < n - 1 and same[j]:
            j += 1
        group = sorted(order[i:j + 1].tolist())
        for a in range(len(group)):
            for c in range(a + 1, len(group)):
                if is_pair_stopping_set(graph, group[a], group[c]):
                    pairs.append((group[a], group[c]))
        i = j + 1
    return sorted(pairs)


def pair_counts_by_offset(graph: CodeGraph) -> np.ndarray:
    """Number of size-2 stopping sets per position difference 0..w-1."""
    counts = np.zeros(graph.params.w, np.int64)
    M = graph.params.M
    for vi, vj in enumerate_size2(graph):
        k = abs(vj // M - vi // M)
        if k >= graph.params.w:
            raise AssertionError(f"pair ({vi}, {vj}) spans {k} >= w positions")
        counts[k] += 1
    return counts


def is_stopping_set(graph: CodeGraph, vn_set) -> bool:
    vs = np.unique(np.asarray(list(vn_set), dtype=np.int64))
    if len(vs) == 0:
        raise ParameterError("stopping-set test needs a nonempty set")
    hits = np.bincount(graph.adjacency[vs].ravel(), minlength=graph.cn_id_count)
    return bool(np.all((hits == 0) | (hits >= 2)))


def empirical_pair_statistics(params: EnsembleParams, n_codes: int, seed: int = 0) -> PairStats:
    """Analytic stats plus mean and standard error of pair counts over sampled codes.

    Code ``i`` is sampled with the seed derived from ``(seed, i)``.
    """
    stats = expected_counts(params)
    counts = np.empty((n_codes, params.w))
    for i in range(n_codes):
        graph = sample_code(params, code_seed(seed, i))
        counts[i] = pair_counts_by_offset(graph)
    stats.empirical = counts.mean(axis=0)
    stats.empirical_se = counts.std(axis=0, ddof=1) / math.sqrt(n_codes) if n_codes > 1 else np.zeros(params.w)
    stats.n_codes = n_codes
    return stats


def code_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def error_floor_estimate(b: float, params: EnsembleParams) -> FloorEstimate:
    """Expected number of size-2 stopping sets inside a random burst of b*M bits.

    The start is averaged over one period of M bit positions (the boundary
    region of the last ceil(b) positions is ignored).  Non-integral ``b*M``
    is floored.
    """
    if params.M is None:
        raise ParameterError("M is required")
    if not 0 <= b < params.L:
        raise ParameterError(f"b={b} must lie in [0, L)")
    M, w = params.M, params.w
    note = ""
    try:
        B = burst_length_bits(b, M)
    except ParameterError:
        B = math.floor(b * M)
        note = f"b*M = {b * M:g} not integral; evaluated at {B} bits"
    _, q = pair_probability_exact(params)
    qf = np.array([float(v) for v in q])
    nz = math.ceil(B / M) + 1
    m = np.array([erased_counts(S, B, M, nz + w) for S in range(1, M + 1)], dtype=float)
    inner = m[:, :nz] * (m[:, :nz] - 1) / 2 * qf[0]
    for k in range(1, w):
        inner = inner + m[:, :nz] * m[:, k:nz + k] * qf[k]
    return FloorEstimate(b, float(inner.sum() / M), B, note)


def floor_lower_bound_note(b: float, params: EnsembleParams) -> FloorEstimate:
    est = error_floor_estimate(b, params)
    msg = ("approximate lower bound on the block erasure probability "
           "(P[at least one size-2 stopping set erased] ~ expected count)")
    est.note = f"{est.note}; {msg}" if est.note else msg
    return est


def stopping_set_report(params: EnsembleParams, n_codes: int = 0, seed: int = 0,
                        b_values=()) -> dict:
    stats = empirical_pair_statistics(params, n_codes, seed) if n_codes else expected_counts(params)
    out = stats.to_dict()
    out["seed"] = seed
    out["floor"] = [
        {"b": e.b, "value": e.value, **({"note": e.note} if e.note else {})}
        for e in (error_floor_estimate(b, params) for b in b_values)
    ]
    return out


__all__ = [
    "PairStats", "FloorEstimate", "pair_probability_exact", "pair_probability",
    "expected_counts", "is_pair_stopping_set", "enumerate_size2", "pair_counts_by_offset",
    "is_stopping_set", "empirical_pair_statistics", "code_seed", "error_floor_estimate",
    "floor_lower_bound_note", "stopping_set_report",
]

