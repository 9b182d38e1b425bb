"""Scalar density evolution for coupled ensembles on a BEC plus one burst.

Positions are 1..L in the docs and 0..L-1 in arrays.  Erasure probabilities
of VNs outside the chain are identically zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .burst import ErasureProfile, burst_fraction, start_grid
from .ensemble import EnsembleParams
from .errors import ParameterError

_CHUNK = 4096


@dataclass(frozen=True)
class DEControls:
    """Iteration and search controls.

    ``stop_tol`` bounds the mean absolute per-position update at which a run
    stops; ``success_tol`` is the level below which the start-averaged bit
    erasure probability counts as "recovered".
    """

    stop_tol: float = 1e-5
    t_max: int = 100_000
    delta: float = 0.001
    success_tol: float = 1e-6
    bracket: float = 0.005

    def __post_init__(self):
        for name in ("stop_tol", "delta", "success_tol", "bracket"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.delta > 1:
            raise ParameterError("grid step delta must not exceed 1")
        if self.t_max < 1:
            raise ParameterError("t_max must be a positive integer")


@dataclass
class ScalarDEState:
    x: np.ndarray
    t: int = 0
    converged: bool = False

    @classmethod
    def initial(cls, L: int) -> "ScalarDEState":
        return cls(np.ones(L), 0, False)


@njit(cache=True)
def _check_mix(x, dv, dc, w, g):
    """g[z] = (1/w) sum_i (1 - (1/w) sum_j x[z+i-j])^(dc-1), x = 0 off-chain."""
    L = x.shape[0]
    npos = L + w - 1
    f = np.empty(npos)
    for p in range(npos):
        acc = 0.0
        for j in range(w):
            q = p - j
            if 0 <= q < L:
                acc += x[q]
        f[p] = (1.0 - acc / w) ** (dc - 1)
    for z in range(L):
        acc = 0.0
        for i in range(w):
            acc += f[z + i]
        g[z] = acc / w


@njit(cache=True)
def _run(eps_z, dv, dc, w, stop_tol, t_max, x, g):
    L = x.shape[0]
    for t in range(1, t_max + 1):
        _check_mix(x, dv, dc, w, g)
        diff = 0.0
        for z in range(L):
            xn = eps_z[z] * (1.0 - g[z]) ** (dv - 1)
            diff += abs(xn - x[z])
            x[z] = xn
        if diff / L < stop_tol:
            # x^(t-1) already passed the test; report its index
            return t - 1, True
    return t_max, False


@njit(cache=True)
def _bit_error(eps_z, x, dv, dc, w, g):
    _check_mix(x, dv, dc, w, g)
    acc = 0.0
    for z in range(x.shape[0]):
        acc += eps_z[z] * (1.0 - g[z]) ** dv
    return acc / x.shape[0]


@njit(cache=True)
def _batch(profiles, dv, dc, w, stop_tol, t_max, abort_sum):
    """Pe for each profile row; stops early once the running sum exceeds abort_sum."""
    n, L = profiles.shape
    pe = np.full(n, np.nan)
    iters = np.zeros(n, np.int64)
    x = np.empty(L)
    g = np.empty(L)
    all_conv = True
    total = 0.0
    for r in range(n):
        x[:] = 1.0
        T, ok = _run(profiles[r], dv, dc, w, stop_tol, t_max, x, g)
        all_conv = all_conv and ok
        iters[r] = T
        pe[r] = _bit_error(profiles[r], x, dv, dc, w, g)
        total += pe[r]
        if total > abort_sum:
            return pe, iters, r + 1, all_conv
    return pe, iters, n, all_conv


@njit(cache=True)
def _uncoupled_converges(eps, dv, dc, t_max):
    x = eps
    for _ in range(t_max):
        xn = eps * (1.0 - (1.0 - x) ** (dc - 1)) ** (dv - 1)
        if xn < 1e-12:
            return True
        if x - xn < 1e-15:
            return False
        x = xn
    return False


def de_step(state: ScalarDEState, profile: ErasureProfile, params: EnsembleParams) -> ScalarDEState:
    if len(state.x) != profile.L or profile.L != params.L:
        raise ParameterError("state, profile and params disagree on L")
    g = np.empty(params.L)
    _check_mix(state.x, params.dv, params.dc, params.w, g)
    x = profile.eps_z * (1.0 - g) ** (params.dv - 1)
    return ScalarDEState(x, state.t + 1, False)


def run_de(profile: ErasureProfile, params: EnsembleParams,
           controls: DEControls = DEControls()) -> tuple[ScalarDEState, int]:
    """Iterate from x = 1 until the mean absolute update drops below ``stop_tol``.

    Hitting ``t_max`` first returns the state with ``converged=False``.
    """
    x = np.ones(params.L)
    g = np.empty(params.L)
    T, ok = _run(np.asarray(profile.eps_z, float), params.dv, params.dc, params.w,
                 controls.stop_tol, controls.t_max, x, g)
    return ScalarDEState(x, T, ok), T


def bit_error_prob(state: ScalarDEState, profile: ErasureProfile, params: EnsembleParams) -> float:
    g = np.empty(params.L)
    return float(_bit_error(np.asarray(profile.eps_z, float), state.x, params.dv, params.dc, params.w, g))


@dataclass
class StartAverage:
    """Start-averaged bit erasure probability ``Pe(T, b, eps)``.

    With ``complete=False`` the evaluation stopped early because the partial
    sum already exceeded the requested level; ``pe`` is then a lower bound.
    """

    pe: float
    starts: np.ndarray
    per_start: np.ndarray
    iterations: np.ndarray
    converged: bool
    complete: bool = True


def unit_starts(b: float, L: int, delta: float) -> np.ndarray:
    """One period of starts ``s0 + k*delta`` (k < 1/delta), centred in the chain."""
    n = int(round(1.0 / delta))
    if abs(n * delta - 1.0) > 1e-9:
        raise ParameterError("unit start grid needs 1/delta to be an integer")
    s0 = math.floor((L - b - 1.0) / 2.0)
    if s0 < 0:
        raise ParameterError(f"chain of length {L} too short for b={b}")
    return np.round(s0 + np.arange(n) * delta, 12)


def _chunk_task(args):
    profiles, dv, dc, w, stop_tol, t_max, abort_sum = args
    return _batch(profiles, dv, dc, w, stop_tol, t_max, abort_sum)


def avg_error_over_start(b: float, eps: float, params: EnsembleParams,
                         controls: DEControls = DEControls(), *,
                         starts: str | np.ndarray = "full",
                         abort_above: float | None = None,
                         workers: int = 1) -> StartAverage:
    """Average ``Pe(T, b, s)`` over a grid of burst starts (rectangle rule).

    ``starts="full"`` uses s = k*delta over [0, L-b]; ``"unit"`` uses one
    period of starts in the middle of the chain; an array is used as given.
    With ``abort_above`` set, evaluation may stop as soon as the average is
    certain to exceed that level.
    """
    if b > params.L:
        raise ParameterError(f"b={b} exceeds L={params.L}")
    if isinstance(starts, str):
        if starts == "full":
            s = start_grid(b, params.L, controls.delta)
        elif starts == "unit":
            s = unit_starts(b, params.L, controls.delta)
        else:
            raise ParameterError(f"unknown start grid {starts!r}")
    else:
        s = np.asarray(starts, float)
    n = len(s)
    # integral starts are the hardest (fully erased first position); try them first
    order = np.argsort(np.abs(s - np.round(s)) > 1e-9, kind="stable")
    abort_sum = np.inf if abort_above is None else abort_above * n
    per_start = np.full(n, np.nan)
    iters = np.zeros(n, np.int64)
    converged = True
    complete = True
    chunks = [order[i:i + _CHUNK] for i in range(0, n, _CHUNK)]

    def tasks():
        for idx in chunks:
            prof = eps + (1.0 - eps) * burst_fraction(b, s[idx], params.L)
            yield (np.ascontiguousarray(prof), params.dv, params.dc, params.w,
                   controls.stop_tol, controls.t_max, abort_sum)

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_chunk_task, tasks()))
    else:
        results = []
        running = 0.0
        for task in tasks():
            task = task[:-1] + (abort_sum - running,)
            res = _chunk_task(task)
            results.append(res)
            running += np.nansum(res[0])
            if running > abort_sum:
                break
    for idx, (pe, it, done, ok) in zip(chunks, results):
        per_start[idx[:done]] = pe[:done]
        iters[idx[:done]] = it[:done]
        converged = converged and ok
        complete = complete and done == len(idx)
    complete = complete and len(results) == len(chunks)
    if complete:
        avg = float(np.sum(per_start) / n)
    else:
        avg = float(np.nansum(per_start) / n)
    return StartAverage(avg, s, per_start, iters, converged, complete)


@dataclass
class BurstLengthResult:
    """Outcome of the b_BP search.

    ``above_threshold`` means even b = 0 is not recovered, in which case
    ``b_bp`` is 0.  ``converged`` is False if any DE run hit ``t_max``.
    """

    b_bp: float
    lo: float
    hi: float
    above_threshold: bool = False
    converged: bool = True
    evaluations: list = field(default_factory=list)


def _bisect_burst(recovered, b_hi: float, b_max: float, width: float) -> BurstLengthResult:
    res = BurstLengthResult(0.0, 0.0, 0.0)

    def probe(b):
        ok, conv = recovered(b)
        res.evaluations.append((b, ok))
        res.converged = res.converged and conv
        return ok

    if not probe(0.0):
        res.above_threshold = True
        return res
    lo, hi = 0.0, min(b_hi, b_max)
    while probe(hi):
        lo = hi
        if hi >= b_max:
            res.b_bp = res.lo = res.hi = b_max
            return res
        hi = min(2.0 * hi, b_max)
    while hi - lo >= width:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    res.lo, res.hi, res.b_bp = lo, hi, 0.5 * (lo + hi)
    return res


def max_burst_length(eps: float, params: EnsembleParams, controls: DEControls = DEControls(),
                     b_hi: float | None = None, *, starts: str = "full",
                     workers: int = 1) -> BurstLengthResult:
    """Largest recoverable normalized burst length by bisection on b.

    ``b`` counts as recoverable when the start-averaged bit erasure
    probability after DE is below ``controls.success_tol``.  The initial
    upper bracket defaults to w and is doubled while it is still recoverable.
    """
    if not 0.0 <= eps < 1.0:
        raise ParameterError("eps must lie in [0, 1)")

    def recovered(b):
        avg = avg_error_over_start(b, eps, params, controls, starts=starts,
                                   abort_above=controls.success_tol, workers=workers)
        return avg.pe < controls.success_tol, avg.converged

    b_max = float(params.L - 1) if starts == "unit" else float(params.L)
    return _bisect_burst(recovered, float(b_hi or params.w), b_max, controls.bracket)


def uncoupled_bp_threshold(dv: int, dc: int, tol: float = 1e-5, t_max: int = 1_000_000) -> float:
    """BP threshold of the uncoupled (dv, dc) ensemble on the BEC, by bisection."""
    if dv < 2 or dc <= dv:
        raise ParameterError("need dv >= 2 and dc > dv")
    lo, hi = 0.0, 1.0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if _uncoupled_converges(mid, dv, dc, t_max):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def coupled_bp_threshold(params: EnsembleParams, controls: DEControls = DEControls(),
                         tol: float = 1e-4) -> float:
    """Largest eps for which the burst-free chain is recovered (where b_BP hits 0)."""
    lo, hi = 0.0, 1.0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        prof = ErasureProfile(np.full(params.L, mid), None)
        state, _ = run_de(prof, params, controls)
        if bit_error_prob(state, prof, params) < controls.success_tol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def w_conditions(dv: int, dc: int, k: int = 1) -> tuple[int, int]:
    """(necessary w for b_BP(0) >= 1, sufficient w for b_BP(0) >= k)."""
    if k < 1:
        raise ParameterError("k must be a positive integer")
    eps_bp = uncoupled_bp_threshold(dv, dc)
    return math.ceil(1.0 / eps_bp), math.ceil((k + 1) / eps_bp)


def reduced_burst_step(x: float, dv: int, dc: int, w: int) -> float:
    """DE at a lone fully erased position: x <- (1 - (1 - x/w)^(dc-1))^(dv-1)."""
    return (1.0 - (1.0 - x / w) ** (dc - 1)) ** (dv - 1)


def uncoupled_step(x: float, eps: float, dv: int, dc: int) -> float:
    return eps * (1.0 - (1.0 - x) ** (dc - 1)) ** (dv - 1)


def with_controls(controls: DEControls, **kw) -> DEControls:
    return replace(controls, **kw)


__all__ = [
    "DEControls", "ScalarDEState", "de_step", "run_de", "bit_error_prob",
    "StartAverage", "avg_error_over_start", "unit_starts", "BurstLengthResult",
    "max_burst_length", "uncoupled_bp_threshold", "coupled_bp_threshold",
    "w_conditions", "reduced_burst_step", "uncoupled_step",
]
