"""Finite-length peeling decoding and the P_B Monte Carlo protocol."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.stats import binomtest

from .burst import apply_background_erasures, burst_length_bits, sample_burst_pattern
from .ensemble import CodeGraph, EnsembleParams, sample_code
from .errors import ParameterError
from .stopping_sets import error_floor_estimate

_FIXED_CODE_KEY = 2**31 - 1


@njit(cache=True)
def _peel(adj, n_cn, erased):
    """Peel with a queue of CNs that see exactly one erased VN.

    Each CN keeps the count and the sum of ids of its erased neighbors, so a
    CN with count 1 names its erased neighbor directly.
    """
    dv = adj.shape[1]
    cnt = np.zeros(n_cn, np.int64)
    idsum = np.zeros(n_cn, np.int64)
    alive = np.zeros(adj.shape[0], np.bool_)
    for v in erased:
        if alive[v]:
            continue
        alive[v] = True
        for e in range(dv):
            c = adj[v, e]
            cnt[c] += 1
            idsum[c] += v
    queue = np.empty(n_cn + len(erased) * dv, np.int64)
    head = 0
    tail = 0
    for v in erased:
        for e in range(dv):
            c = adj[v, e]
            if cnt[c] == 1:
                queue[tail] = c
                tail += 1
    while head < tail:
        c = queue[head]
        head += 1
        if cnt[c] != 1:
            continue
        v = idsum[c]
        alive[v] = False
        for e in range(dv):
            c2 = adj[v, e]
            cnt[c2] -= 1
            idsum[c2] -= v
            if cnt[c2] == 1:
                queue[tail] = c2
                tail += 1
    n = 0
    for v in erased:
        if alive[v]:
            n += 1
    out = np.empty(n, np.int64)
    k = 0
    for v in np.sort(erased):
        if alive[v]:
            out[k] = v
            k += 1
            alive[v] = False
    return out


def peel(graph: CodeGraph, erased) -> np.ndarray:
    """Residual erased VNs after peeling (sorted); empty iff decoding succeeds."""
    erased = np.unique(np.asarray(erased, dtype=np.int64))
    if len(erased) and (erased[0] < 0 or erased[-1] >= graph.vn_count):
        raise ParameterError("erased set contains unknown VN ids")
    return _peel(graph.adjacency, graph.cn_id_count, erased)


@dataclass
class TrialOutcome:
    success: bool
    residual: int
    has_pair: bool = False


def run_trial(graph: CodeGraph, b: float, eps: float, rng) -> TrialOutcome:
    """One burst (plus BEC(eps) background) through the peeling decoder."""
    rng = np.random.default_rng(rng)
    p = graph.params
    pattern = sample_burst_pattern(p.L, p.M, b, rng)
    erased = apply_background_erasures(pattern, eps, graph.vn_count, rng)
    residual = peel(graph, erased)
    has_pair = False
    if len(residual):
        keys = np.sort(graph.adjacency[residual], axis=1)
        has_pair = len(np.unique(keys, axis=0)) < len(residual)
    return TrialOutcome(len(residual) == 0, len(residual), has_pair)


@dataclass
class SimConfig:
    params: EnsembleParams
    b_grid: list
    eps: float = 0.0
    target_failures: int = 400
    max_trials: int = 10_000_000
    seed: int = 0
    resample_code_per_trial: bool = True
    batch: int = 256

    def __post_init__(self):
        self.params.require_finite()
        if len(self.b_grid) == 0:
            raise ParameterError("b_grid must not be empty")
        for b in self.b_grid:
            burst_length_bits(b, self.params.M)
            if b > self.params.L:
                raise ParameterError(f"b={b} exceeds L")
        if self.target_failures < 1 or self.max_trials < 1:
            raise ParameterError("target_failures and max_trials must be positive")
        if not 0.0 <= self.eps <= 1.0:
            raise ParameterError("eps must lie in [0, 1]")


@dataclass
class SimPoint:
    b: float
    trials: int
    failures: int
    p_b: float
    ci_lo: float
    ci_hi: float
    censored: bool
    pair_failures: int = 0

    def row(self) -> dict:
        return asdict(self)


def wilson_interval(failures: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(failures, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _trial_streams(seed: int, b_index: int, trial: int) -> tuple[int, np.random.SeedSequence]:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(b_index), int(trial)))
    code_ss, burst_ss = ss.spawn(2)
    return int(code_ss.generate_state(1, np.uint64)[0]), burst_ss


def _run_batch(args):
    params, b, eps, seed, b_index, first, count, fixed_code = args
    fixed = sample_code(params, fixed_code) if fixed_code is not None else None
    out = np.empty((count, 2), np.int8)
    for t in range(count):
        code_seed, burst_ss = _trial_streams(seed, b_index, first + t)
        graph = fixed if fixed is not None else sample_code(params, code_seed)
        res = run_trial(graph, b, eps, burst_ss)
        out[t] = (res.success, res.has_pair)
    return out


@dataclass
class _Tally:
    trials: int = 0
    failures: int = 0
    pair_failures: int = 0
    done: bool = False


def _load_checkpoint(path, config: SimConfig) -> dict[int, _Tally]:
    if path is None or not Path(path).exists():
        return {}
    data = json.loads(Path(path).read_text())
    if data.get("seed") != config.seed or data.get("b_grid") != list(config.b_grid):
        raise ParameterError(f"checkpoint {path} belongs to a different sweep")
    return {int(k): _Tally(**v) for k, v in data["tallies"].items()}


def _save_checkpoint(path, config: SimConfig, tallies: dict[int, _Tally]) -> None:
    if path is None:
        return
    p = config.params
    data = {
        "params": {"dv": p.dv, "dc": p.dc, "w": p.w, "L": p.L, "M": p.M},
        "seed": config.seed,
        "b_grid": list(config.b_grid),
        "eps": config.eps,
        "target_failures": config.target_failures,
        # next trial index per b is the RNG stream cursor
        "tallies": {str(k): asdict(v) for k, v in tallies.items()},
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(data, indent=1))
    tmp.replace(path)


def run_sweep(config: SimConfig, workers: int = 1, checkpoint=None, progress=None) -> list[SimPoint]:
    """Estimate P_B(b) for every grid point.

    Trials run until ``target_failures`` failures or ``max_trials`` trials.
    Trial t at grid index i draws its code and burst from streams derived
    from ``(seed, i, t)`` and the stopping trial is located in trial order,
    so the counts do not depend on ``workers`` or on batching.
    """
    tallies = _load_checkpoint(checkpoint, config)
    fixed_code = None
    if not config.resample_code_per_trial:
        fixed_code = int(np.random.SeedSequence(config.seed, spawn_key=(_FIXED_CODE_KEY,))
                         .generate_state(1, np.uint64)[0])
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    results = []
    try:
        for i, b in enumerate(config.b_grid):
            tally = tallies.setdefault(i, _Tally())
            while not tally.done:
                budget = config.max_trials - tally.trials
                n = min(config.batch * max(workers, 1), budget)
                parts = [(tally.trials + k, min(config.batch, n - k)) for k in range(0, n, config.batch)]
                args = [(config.params, b, config.eps, config.seed, i, first, cnt, fixed_code)
                        for first, cnt in parts]
                outs = list(pool.map(_run_batch, args)) if pool else [_run_batch(a) for a in args]
                outcome = np.concatenate(outs)
                fails = np.cumsum(outcome[:, 0] == 0)
                need = config.target_failures - tally.failures
                stop = np.searchsorted(fails, need)
                used = len(outcome) if stop >= len(outcome) else stop + 1
                tally.trials += int(used)
                tally.failures += int(fails[used - 1])
                tally.pair_failures += int(np.sum((outcome[:used, 0] == 0) & (outcome[:used, 1] == 1)))
                tally.done = tally.failures >= config.target_failures or tally.trials >= config.max_trials
                _save_checkpoint(checkpoint, config, tallies)
                if progress:
                    progress(b, tally.trials, tally.failures)
            lo, hi = wilson_interval(tally.failures, tally.trials)
            results.append(SimPoint(
                b, tally.trials, tally.failures, tally.failures / tally.trials, lo, hi,
                tally.failures < config.target_failures, tally.pair_failures,
            ))
    finally:
        if pool:
            pool.shutdown()
    return results


@dataclass
class ComparisonRow:
    b: float
    trials: int
    failures: int
    p_b: float
    ci_lo: float
    ci_hi: float
    floor_estimate: float
    ratio: float
    overlap: bool
    censored: bool = False


def floor_vs_sim_report(config: SimConfig, workers: int = 1, points=None) -> list[ComparisonRow]:
    """Join simulated P_B with the size-2 stopping-set floor estimate per b."""
    points = points if points is not None else run_sweep(config, workers)
    rows = []
    for pt in points:
        est = error_floor_estimate(pt.b, config.params).value
        ratio = pt.p_b / est if est > 0 else math.inf if pt.p_b > 0 else 1.0
        rows.append(ComparisonRow(pt.b, pt.trials, pt.failures, pt.p_b, pt.ci_lo, pt.ci_hi,
                                  est, ratio, pt.ci_lo <= est <= pt.ci_hi, pt.censored))
    return rows


__all__ = [
    "peel", "TrialOutcome", "run_trial", "SimConfig", "SimPoint", "wilson_interval",
    "run_sweep", "ComparisonRow", "floor_vs_sim_report",
]

