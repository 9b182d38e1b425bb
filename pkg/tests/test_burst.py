import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from scburst.burst import (BurstSpec, ErasureProfile, apply_background_erasures, burst_fraction,
                           erased_counts, profile_from_burst, sample_burst_pattern, start_grid)
from scburst.errors import ParameterError


def test_no_burst():
    prof = profile_from_burst(BurstSpec(0.0, 3.7, 0.3), 10)
    assert np.allclose(prof.eps_z, 0.3)


def test_integral_start_fills_next_position():
    prof = profile_from_burst(BurstSpec(1.0, 2.0, 0.0), 10)
    expected = np.zeros(10)
    expected[2] = 1.0  # position 3
    assert np.array_equal(prof.eps_z, expected)
    assert prof.eps_z.sum() == 1.0


def test_case_formula_by_hand():
    # b=1.5, s=2.25: position 3 gets 0.75, position 4 gets 0.75
    prof = profile_from_burst(BurstSpec(1.5, 2.25, 0.1), 8)
    frac = (prof.eps_z - 0.1) / 0.9
    assert np.allclose(frac, [0, 0, 0.75, 0.75, 0, 0, 0, 0])
    assert prof.burst_mass() == pytest.approx(1.5, abs=1e-12)


def test_burst_must_fit():
    with pytest.raises(ParameterError):
        profile_from_burst(BurstSpec(2.0, 9.0, 0.0), 10)
    with pytest.raises(ParameterError):
        BurstSpec(1.0, 0.0, 1.5)


@given(b=st.floats(0, 20), s_frac=st.floats(0, 1), eps=st.floats(0, 0.99))
def test_mass_conservation(b, s_frac, eps):
    L = 25
    s = s_frac * (L - b)
    prof = profile_from_burst(BurstSpec(b, s, eps), L)
    assert np.all(prof.eps_z >= eps - 1e-15) and np.all(prof.eps_z <= 1.0)
    assert abs(prof.burst_mass() - b) < 1e-12 * max(1.0, L)


@given(b=st.floats(0, 8), extra=st.floats(0, 4), s=st.floats(0, 10))
def test_monotone_nesting(b, extra, s):
    L = 30
    lo = burst_fraction(b, s, L)
    hi = burst_fraction(b + extra, s, L)
    assert np.all(hi >= lo - 1e-15)


@given(M=st.integers(1, 400), z0=st.integers(1, 5), j=st.integers(0, 399), b=st.floats(0.1, 3))
def test_finite_counts_match_profile(M, z0, j, b):
    j = j % M
    L = 12
    B = int(round(b * M))
    start = (z0 - 1) * M + j + 1
    if start + B - 1 > L * M:
        return
    m = erased_counts(start, B, M, L)
    assert m.sum() == B
    s = (start - 1) / M
    frac = burst_fraction(B / M, s, L)
    assert np.all(np.abs(m / M - frac) <= 1.0 / M + 1e-12)


def test_pattern_contiguous_and_reproducible():
    a = sample_burst_pattern(10, 100, 1.0, 42)
    b = sample_burst_pattern(10, 100, 1.0, 42)
    assert np.array_equal(a, b)
    assert len(a) == 100 and np.all(np.diff(a) == 1)
    assert a[0] >= 0 and a[-1] < 1000


def test_pattern_full_length():
    a = sample_burst_pattern(10, 100, 10.0, 1)
    assert np.array_equal(a, np.arange(1000))


def test_pattern_rejects_fractional_bits():
    with pytest.raises(ParameterError):
        sample_burst_pattern(10, 100, 1.005, 1)


def test_start_uniform_chi2():
    L, M, b = 4, 5, 1.0
    rng = np.random.default_rng(3)
    starts = np.array([sample_burst_pattern(L, M, b, rng)[0] for _ in range(100_000)])
    n_cells = L * M - int(b * M) + 1
    counts = np.bincount(starts, minlength=n_cells)
    assert len(counts) == n_cells
    assert stats.chisquare(counts).pvalue > 1e-3


def test_background_erasures():
    pat = np.arange(10, 20)
    assert np.array_equal(apply_background_erasures(pat, 0.0, 100, 1), pat)
    assert np.array_equal(apply_background_erasures(pat, 1.0, 100, 1), np.arange(100))
    N = 100_000
    out = apply_background_erasures(pat, 0.2, N, 5)
    assert set(pat.tolist()) <= set(out.tolist())
    off = np.setdiff1d(out, pat)
    assert abs(len(off) / (N - len(pat)) - 0.2) < 0.005


def test_profile_csv_round_trip(tmp_path):
    prof = profile_from_burst(BurstSpec(1.37, 4.1, 0.25), 12)
    f = tmp_path / "p.csv"
    prof.to_csv(f)
    back = ErasureProfile.from_csv(f)
    assert np.array_equal(back.eps_z, prof.eps_z) and back.spec == prof.spec


def test_start_grid():
    s = start_grid(1.0, 10, 0.01)
    assert s[0] == 0 and s[-1] == pytest.approx(9.0) and len(s) == 901
