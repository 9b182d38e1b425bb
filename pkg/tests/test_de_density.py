import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from scburst.burst import BurstSpec, profile_from_burst
from scburst.de_density import (BmsChannelSpec, DensityControls, DensityDEState, LLRDensity,
                                LLRGrid, avg_error_over_start_bms, bec_density,
                                biawgn_capacity, burst_error_probability, channel_density,
                                channel_profile, cn_table, cn_update, de_step_bms, error_mass,
                                gaussian_llr_mass, initial_messages, max_burst_length_awgn,
                                n0_for_capacity, run_density_de, uncoupled_threshold_awgn,
                                vn_update)
from scburst.de_scalar import DEControls, ScalarDEState, de_step
from scburst.ensemble import EnsembleParams
from scburst.errors import ParameterError

G = LLRGrid()
COARSE = LLRGrid(0.5, 6.0)


def random_density(rng, grid, symmetric=False):
    if symmetric:
        # Gaussian channel densities mixed with erasures are symmetric
        n0 = rng.uniform(0.5, 4.0)
        return channel_density(BmsChannelSpec(n0, rng.uniform(0, 1)), grid)
    m = rng.random(grid.size) * (rng.random(grid.size) < 0.6)
    m[grid.zero] += 1e-3
    return LLRDensity(m / m.sum(), grid)


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5))
def test_mass_conservation(seed, k):
    rng = np.random.default_rng(seed)
    dens = [random_density(rng, COARSE) for _ in range(k + 1)]
    assert abs(vn_update(dens[1:], dens[0]).total - 1) < 1e-10
    assert abs(cn_update(dens).total - 1) < 1e-10


def test_vn_examples():
    z = LLRDensity.point(G, 0.0)
    assert vn_update([z, z], z).mass[G.zero] == 1.0
    out = vn_update([LLRDensity.point(G, 1.2)], LLRDensity.point(G, 2.3))
    assert out.mass[G.index_of(3.5)] == pytest.approx(1.0)
    out = vn_update([LLRDensity.point(G, 10.0)], LLRDensity.point(G, 9.0))
    assert out.mass[G.index_of(G.half_range)] == pytest.approx(1.0)
    out = vn_update([LLRDensity.point(G, -10.0)], LLRDensity.point(G, -9.0))
    assert out.mass[G.index_of(-G.half_range)] == pytest.approx(1.0)
    out = vn_update([LLRDensity.point(G, np.inf)], LLRDensity.point(G, -3.0))
    assert out.mass[-1] == pytest.approx(1.0)


def test_cn_examples():
    rng = np.random.default_rng(0)
    d = random_density(rng, G)
    out = cn_update([d, LLRDensity.point(G, 0.0), d])
    assert out.mass[G.zero] == pytest.approx(1.0)
    inf = LLRDensity.point(G, np.inf)
    assert cn_update([inf, inf, inf]).mass[-1] == pytest.approx(1.0)
    out = cn_update([LLRDensity.point(G, -2.0), inf])
    assert out.mass[G.index_of(-2.0)] == pytest.approx(1.0)


def _dense_cn_index(x, y, grid):
    """Independent formula: 2 atanh(tanh(x/2) tanh(y/2)) rounded to the grid."""
    with np.errstate(divide="ignore"):
        val = 2.0 * np.arctanh(np.tanh(x / 2.0) * np.tanh(y / 2.0))
    if np.isinf(val):
        return 0 if val < 0 else grid.size - 1
    k = int(np.clip(np.rint(val / grid.bin_width), -grid.half_bins, grid.half_bins))
    return grid.zero + k


def test_cn_table_against_dense_oracle():
    grid = COARSE
    table = cn_table(grid)
    v = grid.values
    for i in range(grid.size):
        for j in range(grid.size):
            assert abs(int(table[i, j]) - _dense_cn_index(v[i], v[j], grid)) <= 1
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = random_density(rng, grid), random_density(rng, grid)
        oracle = np.zeros(grid.size)
        for i in range(grid.size):
            for j in range(grid.size):
                oracle[_dense_cn_index(v[i], v[j], grid)] += a.mass[i] * b.mass[j]
        ours = np.cumsum(cn_update([a, b]).mass)
        ref = np.cumsum(oracle)
        # one-bin shift bound on the cumulative distribution
        assert np.all(ref[1:] <= np.append(ours[2:], 1.0) + 1e-12)
        assert np.all(ours[1:] <= np.append(ref[2:], 1.0) + 1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_symmetry_preserved(seed):
    rng = np.random.default_rng(seed)
    grid = LLRGrid(0.05, 20.0)
    a, b = random_density(rng, grid, True), random_density(rng, grid, True)
    assert a.is_symmetric(rtol=0.2, atol=1e-8)
    for out in (vn_update([a], b), cn_update([a, b])):
        assert out.is_symmetric(rtol=0.35, atol=1e-6)


def test_error_mass_examples():
    assert error_mass(LLRDensity.point(G, 0.0)) == 0.5
    assert error_mass(LLRDensity.point(G, np.inf)) == 0.0
    for n0 in (0.5, 1.0, 2.0, 4.0):
        sigma = math.sqrt(n0 / 2)
        q = stats.norm.sf(1.0 / sigma)
        d = channel_density(BmsChannelSpec(n0), G)
        assert error_mass(d) == pytest.approx(q, abs=3e-3)
    fine = LLRGrid(0.01, 20.0)
    assert error_mass(channel_density(BmsChannelSpec(2.0), fine)) == pytest.approx(stats.norm.sf(1.0), abs=3e-4)


def test_channel_density_examples():
    d = channel_density(BmsChannelSpec(1.0, 1.0), G)
    assert d.mass[G.zero] == 1.0
    d = channel_density(BmsChannelSpec(1e-3), G)
    assert d.mass[-1] > 1 - 1e-9
    for n0 in (0.8, 1.5, 3.0):
        m = gaussian_llr_mass(n0, LLRGrid(0.1, 60.0))
        v = LLRGrid(0.1, 60.0).values[1:-1]
        mean = float(np.sum(m[1:-1] * v))
        assert abs(mean - 4.0 / n0) <= 0.1
    with pytest.raises(ParameterError):
        BmsChannelSpec(0.0)
    with pytest.raises(ParameterError):
        BmsChannelSpec(1.0, 1.5)
    assert BmsChannelSpec(2.0).snr_db == pytest.approx(0.0)


def test_grid_mismatch():
    with pytest.raises(ParameterError):
        vn_update([LLRDensity.point(G, 0.0)], LLRDensity.point(COARSE, 0.0))
    with pytest.raises(ParameterError):
        cn_update([LLRDensity.point(G, 0.0), LLRDensity.point(COARSE, 0.0)])
    with pytest.raises(ParameterError):
        LLRDensity(np.ones(3), G)


def test_capacity_limits():
    assert biawgn_capacity(1e4) < 1e-3
    assert biawgn_capacity(1e-2) > 1 - 1e-9
    caps = [biawgn_capacity(n0) for n0 in (0.5, 1, 2, 4, 8)]
    assert all(a > b for a, b in zip(caps, caps[1:]))
    for c in (0.1, 0.5, 0.9):
        assert biawgn_capacity(n0_for_capacity(c)) == pytest.approx(c, abs=1e-9)
    with pytest.raises(ParameterError):
        biawgn_capacity(0.0)


def test_capacity_monte_carlo_oracle():
    """I(X;Y) estimated from 1e7 channel uses with uniform inputs."""
    rng = np.random.default_rng(2024)
    n0 = 2.0
    n = 10**7
    x = 1.0 - 2.0 * rng.integers(0, 2, n)
    y = x + rng.normal(0.0, math.sqrt(n0 / 2), n)
    llr = 4.0 * y * x / n0
    mi = 1.0 - np.mean(np.logaddexp(0.0, -llr)) / math.log(2.0)
    assert biawgn_capacity(n0) == pytest.approx(mi, abs=1e-3)


def test_bec_embedding_matches_scalar_de():
    params = EnsembleParams(3, 6, 3, 14)
    prof = profile_from_burst(BurstSpec(1.6, 5.3, 0.35), 14)
    ch = np.stack([bec_density(e, G).mass for e in prof.eps_z])
    st_d = DensityDEState(initial_messages(14, G), G)
    st_s = ScalarDEState.initial(14)
    for _ in range(40):
        st_d = de_step_bms(st_d, ch, params)
        st_s = de_step(st_s, prof, params)
        m = st_d.messages
        # support stays on {0, +inf}
        assert np.all(m[:, 1:-1][:, np.arange(G.n) != G.half_bins] == 0) and np.all(m[:, 0] == 0)
        assert np.allclose(m[:, G.zero], st_s.x, atol=1e-9)


def test_first_step_gives_channel():
    params = EnsembleParams(3, 6, 3, 12)
    ch = channel_profile(1.2, np.linspace(0, 1, 12), G)
    st_d = de_step_bms(DensityDEState(initial_messages(12, G), G), ch, params)
    # interior positions see only erased CN messages in the first step
    assert np.allclose(st_d.messages[3:9], ch[3:9], atol=1e-12)


def test_converges_below_threshold_and_flags_failure():
    params = EnsembleParams(3, 6, 3, 30)
    good = run_density_de(channel_profile(n0_for_capacity(0.6), np.zeros(30), G), params, G)
    assert good.converged and good.pe_z.max() < 1e-9
    res = max_burst_length_awgn(n0_for_capacity(1 - 0.51), EnsembleParams(3, 6, 3, 30))
    assert res.b_bp == 0.0 and res.above_threshold


def test_degradation_monotone():
    params = EnsembleParams(3, 6, 3, 16)
    n0 = n0_for_capacity(0.7)
    rng = np.random.default_rng(5)
    base = rng.uniform(0, 0.5, 16)
    pe0 = run_density_de(channel_profile(n0, base, G), params, G, DEControls(t_max=60)).pe_z.sum()
    for z in (0, 7, 15):
        more = base.copy()
        more[z] += 0.3
        pe1 = run_density_de(channel_profile(n0, more, G), params, G, DEControls(t_max=60)).pe_z.sum()
        assert pe1 >= pe0 - 1e-12


def test_local_window_matches_full_chain():
    params = EnsembleParams(3, 6, 3, 40)
    n0 = n0_for_capacity(0.8)
    win = burst_error_probability(1.3, 17.4, n0, params, DensityControls(margin=6))
    full = burst_error_probability(1.3, 17.4, n0, params, DensityControls(margin=None))
    assert win[0] == pytest.approx(full[0], rel=1e-6, abs=1e-15)
    win = burst_error_probability(2.5, 17.4, n0, params, DensityControls(margin=6))
    full = burst_error_probability(2.5, 17.4, n0, params, DensityControls(margin=None))
    assert win[0] == pytest.approx(full[0], rel=1e-3)


def test_burst_only_density_search_matches_scalar():
    """The density search on the burst-only BEC reproduces the scalar b_BP."""
    params = EnsembleParams(3, 6, 3, 40)
    ctl = DensityControls(de=DEControls(delta=0.05, bracket=0.02))
    res = max_burst_length_awgn(None, params, ctl, b_hi=2.0)
    assert res.b_bp == pytest.approx(1.61, abs=0.03)


def test_start_average_b0_shortcut():
    params = EnsembleParams(3, 6, 3, 30)
    n0 = n0_for_capacity(0.7)
    avg = avg_error_over_start_bms(0.0, n0, params)
    assert avg.complete and np.all(avg.per_start == avg.per_start[0])
    with pytest.raises(ParameterError):
        avg_error_over_start_bms(1.0, n0, params, DensityControls(starts="other"))


def test_uncoupled_threshold_known_value():
    n0 = uncoupled_threshold_awgn(3, 6, tol=1e-3)
    # known (3,6) BiAWGN BP threshold sigma* = 0.8809, i.e. n0 = 2 sigma^2 = 1.552
    assert n0 == pytest.approx(1.552, abs=0.01)
