import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossy_cavity import SystemParams, TruncatedScenario, amplitudes, p_in, populations_and_cumulative
from lossy_cavity.trajectory import (
    JumpChannel,
    TrajectoryRecord,
    click_histogram,
    ks_survival_distance,
    run_ensemble,
    sample_channel,
    sample_jump_time,
    seed_indices,
    trajectory_uniforms,
)

# Gamma = kappa on resonance makes p_no(t) = exp(-kappa t) exactly
EXP_CASE = SystemParams(g=0.7, kappa1=1.0, gamma=1.0)


@given(st.floats(1e-6, 1 - 1e-6))
def test_jump_time_inverts_exponential(u):
    t = sample_jump_time(EXP_CASE, u, math.inf)
    assert t == pytest.approx(-math.log(u), abs=1e-9)


def test_jump_time_edge_draws(base):
    assert sample_jump_time(base, 1 - 1e-12, 10.0) < 1e-9
    # survival at the horizon exceeds u: no jump
    assert sample_jump_time(EXP_CASE, math.exp(-3.0) * 0.99, 2.0) is None
    with pytest.raises(ValueError):
        sample_jump_time(base, 0.0, 1.0)


def test_sample_channel(base):
    amps = amplitudes(base, 0.0)
    assert sample_channel(base, amps, 0.999) is JumpChannel.SPONTANEOUS
    amps = amplitudes(base, 0.2)
    rates = np.array([0.9 * amps.p_b, 0.1 * amps.p_b, 0.5 * amps.p_a]) / (amps.p_b + 0.5 * amps.p_a)
    assert sample_channel(base, amps, rates[0] * 0.5) is JumpChannel.EXTRACTION
    assert sample_channel(base, amps, rates[0] + rates[1] * 0.5) is JumpChannel.ABSORPTION
    assert sample_channel(base, amps, 1 - 1e-12) is JumpChannel.SPONTANEOUS
    with pytest.raises(ValueError):
        sample_channel(SystemParams(g=1.0, kappa1=0.0), amps, 0.5)


def test_uniforms_are_open_interval_and_keyed():
    u = trajectory_uniforms(seed_indices(7, 0, 10000))
    assert u.shape == (4, 10000)
    assert np.all((u > 0) & (u < 1))
    np.testing.assert_array_equal(u[:, 5], trajectory_uniforms(np.array([7 ^ 5]))[:, 0])
    assert abs(np.mean(u) - 0.5) < 0.01


def test_record_validation():
    TrajectoryRecord((JumpChannel.EXTRACTION, 1.0), 1.0, 0)
    with pytest.raises(ValueError):
        TrajectoryRecord((JumpChannel.EXTRACTION, 0.0), 1.0, 0)
    with pytest.raises(ValueError):
        TrajectoryRecord((JumpChannel.EXTRACTION, 1.5), 1.0, 0)


def test_zero_trajectories_rejected(base):
    with pytest.raises(ValueError):
        run_ensemble(base, 0, [0.0, 1.0], master_seed=1)


def test_uncoupled_atom_is_exponential():
    p = SystemParams(g=0.0, kappa1=1.0, gamma=0.8)
    e = run_ensemble(p, 20000, np.linspace(0, 8, 9), master_seed=11)
    assert e.counts[JumpChannel.SPONTANEOUS] == np.count_nonzero(e.channels >= 0)
    assert e.counts[JumpChannel.EXTRACTION] == 0
    times = e.jump_times[~np.isnan(e.jump_times)]
    assert np.mean(times) == pytest.approx(1 / 0.8, rel=0.03)


def test_thread_count_does_not_change_results(base):
    t = np.linspace(0, 10, 51)
    one = run_ensemble(base, 10000, t, master_seed=5, threads=1)
    many = run_ensemble(base, 10000, t, master_seed=5, threads=8)
    np.testing.assert_array_equal(one.jump_times, many.jump_times)
    np.testing.assert_array_equal(one.channels, many.channels)
    np.testing.assert_array_equal(one.est_p_a, many.est_p_a)


def test_records_have_at_most_one_jump(base):
    e = run_ensemble(base, 500, np.linspace(0, 10, 11), master_seed=2)
    recs = list(e.records())
    assert len(recs) == 500
    assert {r.seed_index for r in recs} == set(int(s) for s in seed_indices(2, 0, 500))
    for r in recs:
        assert r.jump is None or isinstance(r.jump[0], JumpChannel)


def test_single_trajectory(base):
    e = run_ensemble(base, 1, np.linspace(0, 10, 11), master_seed=9)
    assert e.n_trajectories == 1
    assert np.all(np.isfinite(e.est_p_a))


@pytest.fixture(scope="module")
def base_ensemble():
    from conftest import BASE
    return run_ensemble(BASE, 20000, np.linspace(0, 10, 51), master_seed=2007)


def test_populations_sum_to_one(base_ensemble):
    e = base_ensemble
    assert np.max(np.abs(e.est_p_a + e.est_p_b + e.est_p_c - 1.0)) <= 4 * 2.0 ** -52


def test_ensemble_matches_analytic(base, base_ensemble):
    e = base_ensemble
    b = populations_and_cumulative(base, e.t_grid)
    for est, se, ref in ((e.est_p_a, e.se_a, b.p_a), (e.est_p_b, e.se_b, b.p_b)):
        z = np.abs(est - ref) / np.maximum(se, 1e-12)
        assert np.max(z[1:]) < 4.0


def test_ks_distance(base, base_ensemble):
    assert ks_survival_distance(base_ensemble, base) < 1.63 / math.sqrt(base_ensemble.n_trajectories)


def test_click_histogram_tracks_extraction_rate(base, base_ensemble):
    h = click_histogram(base_ensemble, JumpChannel.EXTRACTION, 0.25)
    ref = populations_and_cumulative(base, h.edges).p_ext
    expected = np.diff(ref) / h.bin_width
    q = expected * h.bin_width
    sigma = np.sqrt(q * (1 - q) / h.n_trajectories) / h.bin_width
    z = np.abs(h.density - expected) / np.maximum(sigma, 1e-12)
    assert np.mean(z < 3) > 0.95
    assert h.integral() == pytest.approx(ref[-1], rel=0.02)


def test_no_extraction_without_output_mirror():
    p = SystemParams(g=2.0, kappa1=0.0, kappa2=1.0, gamma=0.5)
    e = run_ensemble(p, 2000, np.linspace(0, 10, 11), master_seed=4)
    h = click_histogram(e, JumpChannel.EXTRACTION, 0.5)
    assert h.integral() == 0.0


def test_truncated_ensemble(base):
    sc = TruncatedScenario.half_rabi(base)
    t = np.linspace(0, 4, 41)
    e = run_ensemble(sc, 20000, t, master_seed=31)
    z = np.abs(e.est_p_b - p_in(sc, t)) / np.maximum(e.se_b, 1e-12)
    assert np.max(z[1:]) < 4.0
    assert np.max(np.abs(e.est_p_a + e.est_p_b + e.est_p_c - 1.0)) <= 4 * 2.0 ** -52
