"""Single burst of erasures on top of a BEC.

Two views of the same channel are provided: the per-position average erasure
probability used by density evolution (continuous start ``s``), and concrete
random erasure patterns for finite-length simulation.  Bit (= VN) indices are
0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError

# burst starts on a Delta-grid are k*Delta in floating point; snap before ceil()
_SNAP = 1e-9


def _ceil(s):
    return np.ceil(np.asarray(s, dtype=float) - _SNAP)


@dataclass(frozen=True)
class BurstSpec:
    """Normalized burst length ``b``, normalized start ``s`` and background ``eps``."""

    b: float
    s: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if self.b < 0 or self.s < 0:
            raise ParameterError(f"burst length and start must be nonnegative (b={self.b}, s={self.s})")
        if not 0.0 <= self.eps <= 1.0:
            raise ParameterError(f"eps must lie in [0, 1], got {self.eps}")

    def validate(self, L: int) -> None:
        if self.b > L:
            raise ParameterError(f"burst length b={self.b} exceeds L={L}")
        if self.s + self.b > L + _SNAP:
            raise ParameterError(f"burst [s, s+b] = [{self.s}, {self.s + self.b}] leaves the chain of length {L}")


@dataclass(frozen=True)
class ErasureProfile:
    """Average erasure probability ``eps_z`` per spatial position z = 1..L."""

    eps_z: np.ndarray
    spec: BurstSpec

    @property
    def L(self) -> int:
        return len(self.eps_z)

    def burst_mass(self) -> float:
        """``sum_z (eps_z - eps) / (1 - eps)``; equals b when eps < 1."""
        eps = self.spec.eps
        return float(np.sum((self.eps_z - eps) / (1.0 - eps)))

    def to_csv(self, path) -> None:
        sp = self.spec
        lines = [f"# b={sp.b!r} s={sp.s!r} eps={sp.eps!r}", "z,eps_z"]
        lines += [f"{z},{e!r}" for z, e in enumerate(self.eps_z.tolist(), start=1)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ErasureProfile":
        rows = Path(path).read_text().splitlines()
        meta = dict(tok.split("=") for tok in rows[0][1:].split())
        spec = BurstSpec(float(meta["b"]), float(meta["s"]), float(meta["eps"]))
        eps_z = np.array([float(r.split(",")[1]) for r in rows[2:] if r])
        return cls(eps_z, spec)


def burst_fraction(b: float, s, L: int) -> np.ndarray:
    """Fraction of each position z = 1..L covered by the burst [s, s+b].

    ``s`` may be an array of starts; the result then has shape (len(s), L).
    When s is integral, position s itself gets nothing and the burst occupies
    positions s+1 onwards.
    """
    s = np.asarray(s, dtype=float)
    z = np.arange(1, L + 1, dtype=float)
    z0 = _ceil(s)[..., None]
    s_ = s[..., None]
    head = np.minimum(b, z0 - s_)
    tail = np.clip(b + s_ - z + 1.0, 0.0, 1.0)
    frac = np.where(z < z0, 0.0, np.where(z == z0, head, tail))
    return np.clip(frac, 0.0, 1.0)


def profile_from_burst(spec: BurstSpec, L: int) -> ErasureProfile:
    spec.validate(L)
    frac = burst_fraction(spec.b, spec.s, L)
    return ErasureProfile(spec.eps + (1.0 - spec.eps) * frac, spec)


def profiles_for_starts(b: float, starts, eps: float, L: int) -> np.ndarray:
    """Stacked ``eps_z`` rows for many burst starts (shape (len(starts), L))."""
    return eps + (1.0 - eps) * burst_fraction(b, starts, L)


def burst_length_bits(b: float, M: int) -> int:
    """``B = b*M``; raises unless it is integral."""
    B = b * M
    Bi = int(round(B))
    if abs(B - Bi) > 1e-9 * max(1.0, B):
        raise ParameterError(f"b*M = {B} is not an integer (b={b}, M={M})")
    return Bi


def erased_counts(start: int, B: int, M: int, L: int) -> np.ndarray:
    """Number of burst bits ``m_z`` in each position z = 1..L.

    ``start`` is the 1-based index S of the first erased bit, so the burst
    covers bits S..S+B-1 and position z holds bits (z-1)M+1..zM.
    """
    z = np.arange(1, L + 1)
    lo = np.maximum(start, (z - 1) * M + 1)
    hi = np.minimum(start + B - 1, z * M)
    return np.maximum(hi - lo + 1, 0)


def sample_burst_pattern(L: int, M: int, b: float, rng) -> np.ndarray:
    """Erased VN indices of a burst of ``b*M`` bits with uniform start.

    The 0-based start is uniform on ``[0, L*M - b*M]``.
    """
    B = burst_length_bits(b, M)
    N = L * M
    if B > N:
        raise ParameterError(f"burst of {B} bits exceeds the code length {N}")
    rng = np.random.default_rng(rng)
    start = int(rng.integers(0, N - B + 1))
    return np.arange(start, start + B, dtype=np.int64)


def apply_background_erasures(pattern, eps: float, N: int, rng) -> np.ndarray:
    """Union of ``pattern`` with i.i.d. Bernoulli(eps) erasures elsewhere (sorted)."""
    if not 0.0 <= eps <= 1.0:
        raise ParameterError(f"eps must lie in [0, 1], got {eps}")
    pattern = np.asarray(pattern, dtype=np.int64)
    if eps == 0.0:
        return np.unique(pattern)
    rng = np.random.default_rng(rng)
    mask = rng.random(N) < eps
    mask[pattern] = True
    return np.flatnonzero(mask)


def start_grid(b: float, L: int, delta: float) -> np.ndarray:
    """Burst starts ``s = k*delta`` for k = 0..floor((L-b)/delta)."""
    if delta <= 0:
        raise ParameterError("grid step must be positive")
    kmax = math.floor((L - b) / delta + _SNAP)
    return np.round(np.arange(kmax + 1) * delta, 12)


__all__ = [
    "BurstSpec", "ErasureProfile", "burst_fraction", "profile_from_burst",
    "profiles_for_starts", "burst_length_bits", "erased_counts",
    "sample_burst_pattern", "apply_background_erasures", "start_grid",
]
