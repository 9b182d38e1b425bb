"""Quantized LLR density evolution for BiAWGN transmission with a burst of erasures.

Densities live on a uniform grid of LLR values ``k * bin_width`` for
``|k * bin_width| <= half_range`` plus two overflow cells at -inf and +inf.
Index 0 is -inf, index ``n + 1`` is +inf and the finite bins sit in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import integrate, optimize, stats

from .burst import burst_fraction, start_grid
from .de_scalar import DEControls, BurstLengthResult, _bisect_burst, unit_starts
from .ensemble import EnsembleParams
from .errors import ParameterError


@dataclass(frozen=True)
class LLRGrid:
    bin_width: float = 0.1
    half_range: float = 15.0

    def __post_init__(self):
        if self.bin_width <= 0 or self.half_range <= 0:
            raise ParameterError("bin_width and half_range must be positive")
        if self.half_range < self.bin_width:
            raise ParameterError("half_range must be at least one bin")

    @property
    def half_bins(self) -> int:
        return int(round(self.half_range / self.bin_width))

    @property
    def n(self) -> int:
        """Number of finite bins."""
        return 2 * self.half_bins + 1

    @property
    def size(self) -> int:
        return self.n + 2

    @property
    def zero(self) -> int:
        return 1 + self.half_bins

    @property
    def values(self) -> np.ndarray:
        v = np.empty(self.size)
        v[0], v[-1] = -np.inf, np.inf
        v[1:-1] = np.arange(-self.half_bins, self.half_bins + 1) * self.bin_width
        return v

    def index_of(self, llr: float) -> int:
        if llr == np.inf:
            return self.size - 1
        if llr == -np.inf:
            return 0
        k = int(np.rint(llr / self.bin_width))
        if k > self.half_bins:
            return self.size - 1
        if k < -self.half_bins:
            return 0
        return self.zero + k


@dataclass(frozen=True)
class LLRDensity:
    mass: np.ndarray
    grid: LLRGrid

    def __post_init__(self):
        if self.mass.shape != (self.grid.size,):
            raise ParameterError(f"mass has shape {self.mass.shape}, grid needs ({self.grid.size},)")

    @classmethod
    def point(cls, grid: LLRGrid, llr: float) -> "LLRDensity":
        m = np.zeros(grid.size)
        m[grid.index_of(llr)] = 1.0
        return cls(m, grid)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def flipped(self) -> np.ndarray:
        return self.mass[::-1]

    def is_symmetric(self, rtol: float = 1e-6, atol: float = 1e-14) -> bool:
        """Check ``a(-x) = exp(-x) a(x)`` on the finite bins."""
        v = self.grid.values[1:-1]
        pos = v > 0
        m = self.mass[1:-1]
        lhs = m[::-1][pos]
        rhs = np.exp(-v[pos]) * m[pos]
        return bool(np.allclose(lhs, rhs, rtol=rtol, atol=atol))

    def error_mass(self) -> float:
        return error_mass(self)


@dataclass(frozen=True)
class BmsChannelSpec:
    n0: float
    erasure_weight: float = 0.0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ParameterError(f"n0 must be positive, got {self.n0}")
        if not 0.0 <= self.erasure_weight <= 1.0:
            raise ParameterError(f"erasure_weight must lie in [0, 1], got {self.erasure_weight}")

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(2.0 / self.n0)


def _check_grid(*dens: LLRDensity) -> LLRGrid:
    g = dens[0].grid
    for d in dens[1:]:
        if d.grid != g:
            raise ParameterError("densities are on different grids")
    return g


def gaussian_llr_mass(n0: float, grid: LLRGrid) -> np.ndarray:
    """Quantized LLR density of the BiAWGN channel given the all-zero codeword.

    The LLR is Gaussian with mean ``4/n0`` and variance ``8/n0``; bin k gets
    the probability of ``[(k - 1/2) w, (k + 1/2) w)``.  The upper tail goes to
    the +inf cell (an observation too reliable to resolve), the lower tail is
    clipped into the lowest finite bin so that no message is ever certain and
    wrong.
    """
    mu = 4.0 / n0
    sd = math.sqrt(8.0 / n0)
    h, bw = grid.half_bins, grid.bin_width
    edges = (np.arange(-h, h + 2) - 0.5) * bw
    cdf = stats.norm.cdf(edges, loc=mu, scale=sd)
    sf_top = stats.norm.sf(edges[-1], loc=mu, scale=sd)
    m = np.zeros(grid.size)
    m[1:-1] = np.diff(cdf)
    m[1] += cdf[0]
    m[-1] = sf_top
    return m / m.sum()


def channel_density(spec: BmsChannelSpec, grid: LLRGrid) -> LLRDensity:
    """Mixture of the Gaussian LLR density and a point mass at 0 (erased bits)."""
    m = (1.0 - spec.erasure_weight) * gaussian_llr_mass(spec.n0, grid)
    m[grid.zero] += spec.erasure_weight
    return LLRDensity(m, grid)


def bec_density(eps: float, grid: LLRGrid) -> LLRDensity:
    m = np.zeros(grid.size)
    m[grid.zero] = eps
    m[-1] = 1.0 - eps
    return LLRDensity(m, grid)


@lru_cache(maxsize=8)
def _cn_table_cached(bin_width: float, half_range: float) -> np.ndarray:
    grid = LLRGrid(bin_width, half_range)
    v = grid.values
    a = v[:, None]
    b = v[None, :]
    with np.errstate(invalid="ignore", over="ignore"):
        # a [+] b = log((1 + e^(a+b)) / (e^a + e^b)), evaluated without overflow
        c = np.logaddexp(0.0, a + b) - np.logaddexp(a, b)
        sign = np.sign(a) * np.sign(b)
        mag = np.minimum(np.abs(a), np.abs(b))
        c = np.where(np.isinf(a) | np.isinf(b), sign * mag, c)
    c = np.where(np.isnan(c), 0.0, c)
    k = np.rint(c / grid.bin_width)
    idx = np.where(
        np.isposinf(c), grid.size - 1,
        np.where(np.isneginf(c), 0, grid.zero + np.clip(np.nan_to_num(k, posinf=0, neginf=0), -grid.half_bins, grid.half_bins)),
    )
    t = idx.astype(np.int32)
    t.setflags(write=False)
    return t


def cn_table(grid: LLRGrid) -> np.ndarray:
    """Two-input check-node table: output bin of ``a [+] b`` for every bin pair."""
    return _cn_table_cached(grid.bin_width, grid.half_range)


@njit(cache=True)
def _cn_pair(a, b, table, out):
    out[:] = 0.0
    n = a.shape[0]
    for i in range(n):
        ai = a[i]
        if ai == 0.0:
            continue
        row = table[i]
        for j in range(n):
            bj = b[j]
            if bj != 0.0:
                out[row[j]] += ai * bj
    # total mass evolves as T -> T^k under repeated updates, so round-off must
    # be removed at every step
    out /= out.sum()


@njit(cache=True)
def _vn_pair(a, b, out):
    """Density of the sum of two LLRs.

    Finite sums are clipped to the outermost finite bins; the overflow cells
    only receive genuinely infinite inputs, and (+inf) + (-inf) counts as 0.
    """
    n = a.shape[0] - 2
    h = n // 2
    out[:] = 0.0
    an, ap = a[0], a[n + 1]
    bn, bp = b[0], b[n + 1]
    af = 0.0
    bf = 0.0
    for i in range(1, n + 1):
        af += a[i]
        bf += b[i]
    for i in range(1, n + 1):
        ai = a[i]
        if ai == 0.0:
            continue
        for j in range(1, n + 1):
            bj = b[j]
            if bj == 0.0:
                continue
            k = (i - 1 - h) + (j - 1 - h)
            if k > h:
                out[n] += ai * bj
            elif k < -h:
                out[1] += ai * bj
            else:
                out[k + h + 1] += ai * bj
    out[n + 1] += ap * (bf + bp) + af * bp
    out[0] += an * (bf + bn) + af * bn
    out[h + 1] += ap * bn + an * bp
    out /= out.sum()


def _pair_op(op, dens):
    g = _check_grid(*dens)
    acc = dens[0].mass.copy()
    tmp = np.empty_like(acc)
    for d in dens[1:]:
        op(acc, d.mass, tmp)
        acc, tmp = tmp, acc
    return LLRDensity(acc, g)


def vn_update(incoming, channel: LLRDensity) -> LLRDensity:
    """Density of the channel LLR plus the incoming CN messages."""
    return _pair_op(_vn_pair, [channel, *incoming])


def cn_update(incoming) -> LLRDensity:
    """Check-node output density, folded left over the inputs with the pairwise table."""
    incoming = list(incoming)
    if not incoming:
        raise ParameterError("cn_update needs at least one input")
    table = cn_table(_check_grid(*incoming))
    return _pair_op(lambda a, b, out: _cn_pair(a, b, table, out), incoming)


@njit(cache=True)
def _error_mass(m):
    n = m.shape[0] - 2
    h = n // 2
    e = m[0]
    for i in range(1, h + 1):
        e += m[i]
    return e + 0.5 * m[h + 1]


def error_mass(density: LLRDensity) -> float:
    """Negative mass plus half the mass at zero."""
    return float(_error_mass(density.mass))


@njit(cache=True)
def _step(a, ch, dv, dc, w, table, cn_out, mix, tmp, tmp2, new):
    """One coupled iteration on a chain of positions; ``a`` holds VN-to-CN densities."""
    L, S = a.shape
    inf = S - 1
    for c in range(L + w - 1):
        mix[:] = 0.0
        for j in range(w):
            z = c - j
            if 0 <= z < L:
                mix += a[z]
            else:
                mix[inf] += 1.0
        mix /= w
        tmp[:] = mix
        for _ in range(dc - 2):
            _cn_pair(tmp, mix, table, tmp2)
            tmp[:] = tmp2
        cn_out[c] = tmp
    for z in range(L):
        mix[:] = 0.0
        for i in range(w):
            mix += cn_out[z + i]
        mix /= w
        tmp[:] = ch[z]
        for _ in range(dv - 1):
            _vn_pair(tmp, mix, tmp2)
            tmp[:] = tmp2
        new[z] = tmp
        # keep the CN mixture for the a-posteriori density
        cn_out[z, :] = mix


@njit(cache=True)
def _run(ch, dv, dc, w, table, stop_tol, decoded_tol, t_max, a):
    L, S = a.shape
    cn_out = np.empty((L + w - 1, S))
    mix = np.empty(S)
    tmp = np.empty(S)
    tmp2 = np.empty(S)
    new = np.empty((L, S))
    err = np.empty(L)
    for z in range(L):
        err[z] = _error_mass(a[z])
    t = 0
    ok = False
    while t < t_max:
        _step(a, ch, dv, dc, w, table, cn_out, mix, tmp, tmp2, new)
        t += 1
        d = 0.0
        e_mean = 0.0
        for z in range(L):
            e = _error_mass(new[z])
            d += abs(e - err[z])
            e_mean += e
            err[z] = e
        a[:, :] = new
        e_mean /= L
        if e_mean < decoded_tol or d / L < stop_tol * e_mean:
            ok = True
            break
    # a-posteriori densities: channel plus dv CN messages (mixtures kept in cn_out[:L])
    pe = np.empty(L)
    for z in range(L):
        tmp[:] = a[z]
        _vn_pair(tmp, cn_out[z], tmp2)
        pe[z] = _error_mass(tmp2)
    return t, ok, pe


@dataclass
class DensityDEState:
    messages: np.ndarray
    grid: LLRGrid
    t: int = 0
    converged: bool = False
    pe_z: np.ndarray | None = None

    def density(self, z: int) -> LLRDensity:
        """VN-to-CN density at 1-based position z."""
        return LLRDensity(self.messages[z - 1].copy(), self.grid)


def initial_messages(L: int, grid: LLRGrid) -> np.ndarray:
    """All positions start fully erased (point mass at LLR 0)."""
    a = np.zeros((L, grid.size))
    a[:, grid.zero] = 1.0
    return a


def de_step_bms(state: DensityDEState, channels: np.ndarray, params: EnsembleParams) -> DensityDEState:
    """One coupled density update for every position.

    ``channels`` holds one channel density per position (rows).  Positions
    outside the chain send the point mass at +inf.
    """
    a = np.ascontiguousarray(state.messages, dtype=float)
    L, S = a.shape
    w = params.w
    table = cn_table(state.grid)
    cn_out = np.empty((L + w - 1, S))
    new = np.empty_like(a)
    _step(a, np.ascontiguousarray(channels, dtype=float), params.dv, params.dc, w, table,
          cn_out, np.empty(S), np.empty(S), np.empty(S), new)
    return DensityDEState(new, state.grid, state.t + 1, False)


def channel_profile(n0: float | None, weights, grid: LLRGrid) -> np.ndarray:
    """Channel densities for per-position erasure weights ``m_z/M``.

    ``n0=None`` gives a BEC background of zero erasure probability (only the
    burst), useful for checking against scalar DE.
    """
    weights = np.asarray(weights, float)
    base = gaussian_llr_mass(n0, grid) if n0 is not None else LLRDensity.point(grid, np.inf).mass
    ch = (1.0 - weights)[:, None] * base[None, :]
    ch[:, grid.zero] += weights
    return ch


def run_density_de(channels: np.ndarray, params: EnsembleParams, grid: LLRGrid,
                   controls: DEControls = DEControls(), decoded_tol: float = 1e-12) -> DensityDEState:
    """Iterate from the all-erased state until the messages stall or are decoded.

    A run stops when the mean message error probability falls below
    ``decoded_tol``, or when its mean absolute change per iteration drops
    below ``stop_tol`` times its mean (a nonzero fixed point).  Gaussian
    messages approach zero error only gradually, so an absolute change
    threshold would stop runs with error near the success level.
    """
    channels = np.ascontiguousarray(channels, dtype=float)
    a = initial_messages(channels.shape[0], grid)
    t, ok, pe = _run(channels, params.dv, params.dc, params.w, cn_table(grid),
                     controls.stop_tol, decoded_tol, controls.t_max, a)
    return DensityDEState(a, grid, int(t), bool(ok), pe)


def biawgn_capacity(n0: float) -> float:
    """Capacity in bits of the BiAWGN channel with noise variance ``n0/2`` per dimension.

    Integrates ``1 - E[log2(1 + exp(-L))]`` over the Gaussian LLR density.
    """
    if not n0 > 0:
        raise ParameterError(f"n0 must be positive, got {n0}")
    mu = 4.0 / n0
    sd = math.sqrt(8.0 / n0)

    def f(llr):
        return stats.norm.pdf(llr, mu, sd) * np.logaddexp(0.0, -llr) / math.log(2.0)

    lo, hi = mu - 40.0 * sd, mu + 40.0 * sd
    val, _ = integrate.quad(f, lo, hi, points=[0.0, mu] if lo < 0 < hi else [mu],
                            epsabs=1e-12, epsrel=1e-12, limit=400)
    return float(min(1.0, max(0.0, 1.0 - val)))


def n0_for_capacity(capacity: float) -> float:
    """Inverse of ``biawgn_capacity`` on (0, 1)."""
    if not 0.0 < capacity < 1.0:
        raise ParameterError(f"capacity must lie in (0, 1), got {capacity}")
    ln = optimize.brentq(lambda x: biawgn_capacity(math.exp(x)) - capacity,
                         math.log(1e-3), math.log(1e4), xtol=1e-13, rtol=1e-13)
    return float(math.exp(ln))


@dataclass
class DensityControls:
    """Numerical controls of the BiAWGN burst search.

    ``margin`` is the number of positions kept on each side of the burst when
    the chain is shortened to a local window (``None`` simulates all L
    positions).  Positions beyond the window are treated as decoded; error
    probabilities are still averaged over all L positions.
    """

    grid: LLRGrid = field(default_factory=LLRGrid)
    de: DEControls = field(default_factory=lambda: DEControls(delta=0.01))
    margin: int | None = 6
    starts: str = "unit"


def _window(b: float, s: float, L: int, w: int, margin: int | None) -> tuple[int, int]:
    if margin is None:
        return 0, L
    first = max(0, int(math.floor(s + 1e-9)) - margin)
    last = min(L, int(math.ceil(s + b - 1e-9)) + margin + w)
    return first, last


def burst_error_probability(b: float, s: float, n0: float | None, params: EnsembleParams,
                            controls: DensityControls = DensityControls()) -> tuple[float, int, bool]:
    """Bit error probability after DE for one burst (b, s); returns (Pe, iterations, converged)."""
    L = params.L
    lo, hi = _window(b, s, L, params.w, controls.margin)
    frac = burst_fraction(b, s, L)[lo:hi]
    ch = channel_profile(n0, frac, controls.grid)
    st = run_density_de(ch, params, controls.grid, controls.de)
    return float(np.sum(st.pe_z) / L), st.t, st.converged


@dataclass
class DensityStartAverage:
    pe: float
    starts: np.ndarray
    per_start: np.ndarray
    converged: bool
    complete: bool


def avg_error_over_start_bms(b: float, n0: float | None, params: EnsembleParams,
                             controls: DensityControls = DensityControls(),
                             abort_above: float | None = None) -> DensityStartAverage:
    if controls.starts == "unit":
        s = unit_starts(b, params.L, controls.de.delta)
    elif controls.starts == "full":
        s = start_grid(b, params.L, controls.de.delta)
    else:
        raise ParameterError(f"unknown start grid {controls.starts!r}")
    n = len(s)
    if b == 0.0:
        # no burst: every start gives the same channel
        pe, _, ok = burst_error_probability(0.0, s[0], n0, params, controls)
        return DensityStartAverage(pe, s, np.full(n, pe), ok, True)
    order = np.argsort(np.abs(s - np.round(s)) > 1e-9, kind="stable")
    per = np.full(n, np.nan)
    conv = True
    running = 0.0
    limit = np.inf if abort_above is None else abort_above * n
    for k in order:
        pe, _, ok = burst_error_probability(b, s[k], n0, params, controls)
        per[k] = pe
        conv = conv and ok
        running += pe
        if running > limit:
            return DensityStartAverage(float(np.nansum(per) / n), s, per, conv, False)
    return DensityStartAverage(float(np.sum(per) / n), s, per, conv, True)


def max_burst_length_awgn(n0: float | None, params: EnsembleParams,
                          controls: DensityControls = DensityControls(),
                          b_hi: float | None = None) -> BurstLengthResult:
    """Largest b whose start-averaged bit error probability falls below ``success_tol``.

    Same bisection as the BEC search.  ``n0=None`` runs the burst-only channel.
    """
    tol = controls.de.success_tol

    def recovered(b):
        avg = avg_error_over_start_bms(b, n0, params, controls, abort_above=tol)
        return avg.pe < tol, avg.converged

    b_hi = float(params.w) if b_hi is None else b_hi
    return _bisect_burst(recovered, b_hi, float(params.L - 1), controls.de.bracket)


@njit(cache=True)
def _uncoupled_converges(ch, dv, dc, table, t_max, pe_tol, stall_tol):
    a = ch.copy()
    c = np.empty_like(a)
    v = np.empty_like(a)
    tmp = np.empty_like(a)
    e_old = _error_mass(a)
    for _ in range(t_max):
        c[:] = a
        for _ in range(dc - 2):
            _cn_pair(c, a, table, tmp)
            c[:] = tmp
        v[:] = ch
        for _ in range(dv - 1):
            _vn_pair(v, c, tmp)
            v[:] = tmp
        e = _error_mass(v)
        if e < pe_tol:
            return True
        if abs(e - e_old) < stall_tol * e:
            return False
        e_old = e
        a[:] = v
    return False


def uncoupled_threshold_awgn(dv: int, dc: int, grid: LLRGrid = LLRGrid(), tol: float = 1e-4,
                             t_max: int = 50000, pe_tol: float = 1e-9,
                             stall_tol: float = 1e-7) -> float:
    """Largest n0 for which uncoupled quantized DE drives the error probability to zero.

    A run fails once the relative per-iteration change of the error
    probability drops below ``stall_tol`` (a nonzero fixed point).
    """
    table = cn_table(grid)

    def converges(n0):
        return _uncoupled_converges(gaussian_llr_mass(n0, grid), dv, dc, table,
                                    t_max, pe_tol, stall_tol)

    lo, hi = 0.5, 4.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


__all__ = [
    "LLRGrid", "LLRDensity", "BmsChannelSpec", "gaussian_llr_mass", "channel_density",
    "bec_density", "cn_table", "vn_update", "cn_update", "error_mass", "DensityDEState",
    "initial_messages", "de_step_bms", "channel_profile", "run_density_de", "biawgn_capacity",
    "n0_for_capacity", "DensityControls", "burst_error_probability", "DensityStartAverage",
    "avg_error_over_start_bms", "max_burst_length_awgn", "uncoupled_threshold_awgn",
]
