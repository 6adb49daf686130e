import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import small_scenario
from uavcrn.bcd import IT_SAFE, BcdConfig, optimize
from uavcrn.errors import InfeasibleScenario
from uavcrn.model import (
    Eavesdropper,
    PowerProfile,
    RadioConstants,
    Trajectory,
    a2g_gain,
    interference_bound,
    legit_rate_lb,
    secrecy_rate,
)
from uavcrn.oracles import (
    DEFAULT_SEED,
    FadingSampler,
    grid_oracle_power,
    grid_oracle_trajectory_slot,
    mc_interference_estimate,
    mc_rate_estimate,
)
from uavcrn.power import solve_power
from uavcrn.validation import jensen_probes, power_grid_check, random_probes, snapshot

NO_JAM = RadioConstants(1e-6, 1e-14, 2.2, 0.0)


def test_sampler_reproducible_per_stream():
    s = FadingSampler(DEFAULT_SEED)
    np.testing.assert_array_equal(s.draw(10, stream=3), s.draw(10, stream=3))
    assert not np.array_equal(s.draw(10, stream=3), s.draw(10, stream=4))


def test_sampler_unit_mean():
    x = FadingSampler(DEFAULT_SEED).draw(1_000_000)
    assert abs(float(np.mean(x)) - 1.0) <= 0.005


def test_sampler_partition_independent():
    # one block of draws summed whole or in pieces
    x = FadingSampler(DEFAULT_SEED).draw(100_000, stream=7)
    parts = sum(float(np.sum(c)) for c in np.array_split(x, 13))
    assert parts == pytest.approx(float(np.sum(x)), rel=1e-12)


def test_rate_estimate_exact_without_jamming():
    scen = small_scenario(radio=NO_JAM)
    q = np.array([20.0, 40.0])
    mean, se = mc_rate_estimate(q, 0.7, scen, 1000)
    assert se == 0.0
    assert mean == pytest.approx(float(legit_rate_lb(q, 0.7, scen)), rel=1e-12)


def test_interference_estimate_exact_without_jamming():
    scen = small_scenario(radio=NO_JAM)
    q = np.array([20.0, 40.0])
    mean, se = mc_interference_estimate(q, 0.7, scen, 0, 1000)
    assert se == 0.0
    assert mean == pytest.approx(0.7 * a2g_gain(q, scen.primaries[0], scen.altitude, scen.radio), rel=1e-12)


def test_too_few_samples_rejected(small):
    with pytest.raises(ValueError):
        mc_rate_estimate(np.zeros(2), 1.0, small, 10)


def test_rate_bound_single_user_single_eve():
    scen = small_scenario(users=[(0.0, 100.0)])
    q = np.array([0.0, 60.0])
    mean, se = mc_rate_estimate(q, 1.0, scen, 100_000, DEFAULT_SEED + 1)
    assert se > 0
    assert mean >= float(legit_rate_lb(q, 1.0, scen)) - 3 * se


def test_stderr_scales_with_root_samples():
    scen = small_scenario(users=[(0.0, 100.0)], radio=RadioConstants(1e-6, 1e-14, 2.2, 1e-3))
    q = np.array([0.0, 60.0])
    _, se1 = mc_rate_estimate(q, 1.0, scen, 50_000, DEFAULT_SEED + 2)
    _, se2 = mc_rate_estimate(q, 1.0, scen, 100_000, DEFAULT_SEED + 3)
    assert se1 / se2 == pytest.approx(math.sqrt(2.0), rel=0.05)


def test_interference_bound_on_table_geometry(scen1):
    q = np.array([-100.0, 200.0])
    for r in range(scen1.R):
        mean, se = mc_interference_estimate(q, 1e-3, scen1, r, 100_000, DEFAULT_SEED + 4)
        # unit-mean fading makes the bound an equality in expectation
        assert float(interference_bound(q, 1e-3, scen1, r)) >= mean - 3 * se


def test_jamming_mean_matches_worst_case_sum(scen1):
    # direct link switched off, only the jamming expectation remains
    mean, se = mc_interference_estimate(np.zeros(2), 0.0, scen1, 0, 1_000_000, DEFAULT_SEED + 5)
    assert mean == pytest.approx(float(scen1.jam_primaries[0]), rel=0.01)


def test_jensen_probes_small(small):
    rep = jensen_probes(small, probes=10, samples=20_000)
    assert rep.ok
    assert rep.probes == 10


def test_random_probes_outside_discs(small):
    for q, p in random_probes(small, 200):
        assert np.all(np.linalg.norm(small.eve_xy - q, axis=1) > small.eve_radius)
        assert 0.0 <= p <= small.p_max


# ---------------------------------------------------------------------------
# power grid


def test_grid_matches_solver_single_slot():
    scen = small_scenario(n_slots=1, q_end=(-150.0, 0.0), gamma_it=math.inf, see_min=0.0)
    traj = Trajectory.straight_line(scen)
    p_ref = PowerProfile.uniform(scen, 0.2)
    res = solve_power(traj, scen, p_ref)
    grid = grid_oracle_power(traj, scen, p_ref, 2001)
    assert abs(res.obj - grid.best_obj) <= grid.resolution
    assert res.obj >= grid.best_obj - 1e-9


def test_grid_infeasible_matches_solver():
    scen = small_scenario(n_slots=2, gamma_it=1e-22)
    traj = Trajectory(np.array([scen.q_start, scen.q_start]))
    grid = grid_oracle_power(traj, scen, PowerProfile.uniform(scen, 0.1))
    assert not grid.feasible
    with pytest.raises(InfeasibleScenario):
        solve_power(traj, scen, PowerProfile.uniform(scen, 0.1))


def test_grid_rejects_large_coupled_instances(small):
    with pytest.raises(ValueError):
        grid_oracle_power(Trajectory.straight_line(small), small, PowerProfile.uniform(small, 0.1))


def test_grid_snapshot_unconstrained(scen1):
    scen = replace(scen1.with_gamma(math.inf), see_min=0.0)
    small, traj = snapshot(scen, 3)
    p_ref = PowerProfile.uniform(small, 1e-3)
    res = solve_power(traj, small, p_ref)
    grid = grid_oracle_power(traj, small, p_ref, 200)
    assert abs(res.obj - grid.best_obj) <= 1e-3


def test_grid_snapshot_coupled(scen1):
    ok, s_obj, g_obj, resolution = power_grid_check(scen1, 3, 200)
    assert ok, (s_obj, g_obj, resolution)


# ---------------------------------------------------------------------------
# trajectory slot lattice


def test_slot_lattice_single_user_far_eve():
    scen = small_scenario(users=[(13.0, 27.0)], eves=[Eavesdropper((5000.0, 5000.0), 10.0)])
    g = grid_oracle_trajectory_slot(1.0, scen, 0, (-100.0, 100.0, -100.0, 100.0, 10.0))
    assert g.best_points == [(10.0, 30.0)]


def test_slot_lattice_mirror_tie():
    scen = small_scenario(
        users=[(0.0, 0.0)],
        eves=[Eavesdropper((0.0, 60.0), 10.0), Eavesdropper((0.0, -60.0), 10.0)],
        primaries=[(500.0, 0.0)],
    )
    g = grid_oracle_trajectory_slot(1.0, scen, 0, (-100.0, 100.0, -100.0, 100.0, 10.0))
    pts = set(g.best_points)
    assert len(pts) >= 2
    assert all((x, -y) in pts for x, y in pts)


@pytest.mark.slow
def test_bcd_midpoint_near_lattice_max(scen1):
    # motion and interference made slack so the slot landscape alone decides
    scen = replace(scen1, v_max=1000.0).with_gamma(math.inf)
    sol, _ = optimize(scen, BcdConfig(init_power=IT_SAFE))
    n = scen.N // 2
    p = float(sol.power.powers[n])
    h = 10.0
    g = grid_oracle_trajectory_slot(p, scen, n, (-400.0, 200.0, -300.0, 900.0, h))
    best = np.array(g.best_points[0])
    # lattice error: largest drop from the best lattice point to a neighbour
    steps = [np.array([dx, dy]) * h for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy]
    drop = max(g.best_value - float(secrecy_rate(best + s, p, scen)) for s in steps)
    assert abs(sol.secrecy_rates[n] - g.best_value) <= drop
