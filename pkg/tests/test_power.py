import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_scenario
from uavcrn.convex import gradient_error
from uavcrn.errors import InfeasibleScenario
from uavcrn.model import PowerProfile, Trajectory, audit_solution, evaluate_solution
from uavcrn.power import (
    build_power_coeffs,
    check_jamming_feasible,
    it_scale,
    mean_interference,
    power_program,
    repair_power,
    repair_see,
    secrecy_unclamped,
    see_holds,
    solve_power,
    surrogate_derivative,
    surrogate_secrecy,
)

coef = st.floats(1e-3, 1e6)
power = st.floats(0.0, 10.0)


@settings(max_examples=300, deadline=None)
@given(a=coef, b=coef, p=power, p_ref=power)
def test_surrogate_is_global_lower_bound(a, b, p, p_ref):
    exact = float(secrecy_unclamped(p, a, b))
    sur = float(surrogate_secrecy(p, p_ref, a, b))
    assert sur <= exact + 1e-9 * (1 + abs(exact))


@settings(max_examples=300, deadline=None)
@given(a=coef, b=coef, p_ref=power)
def test_surrogate_is_tight_at_reference(a, b, p_ref):
    exact = float(secrecy_unclamped(p_ref, a, b))
    assert float(surrogate_secrecy(p_ref, p_ref, a, b)) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_surrogate_derivative_matches_differences():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.uniform(1, 1e4, 2)
        p_ref, p = rng.uniform(0, 2, 2)
        h = 1e-7
        fd = (surrogate_secrecy(p + h, p_ref, a, b) - surrogate_secrecy(p - h, p_ref, a, b)) / (2 * h)
        assert surrogate_derivative(p, p_ref, a, b) == pytest.approx(fd, rel=1e-5)


def test_coefficient_shapes(small):
    c = build_power_coeffs(Trajectory.straight_line(small), small)
    assert c.a.shape == (small.N,)
    assert c.it_rows.shape == (small.R, small.N)
    assert c.n_slots == small.N


def test_it_scale_meets_threshold():
    gains = np.array([[2.0], [1.0]])
    s = it_scale(np.array([1.0, 1.0]), gains, np.array([0.5]), np.array([1.0]))
    # load 1.5 per unit against a budget of 0.5
    assert s == pytest.approx(1.0 / 3.0, rel=1e-9)
    assert s < 1.0 / 3.0
    assert it_scale(np.array([1.0, 1.0]), gains, np.array([0.0]), np.array([10.0])) == 1.0


def test_repair_see_bisects_to_the_boundary():
    a = np.array([10.0, 10.0])
    b = np.array([1.0, 1.0])
    p = np.array([3.0, 3.0])
    psi = 2.0
    assert not see_holds(p, a, b, psi)
    q = repair_see(p, a, b, psi)
    assert see_holds(q, a, b, psi)
    assert see_holds(q * 1.001, a, b, psi) is False


def test_repair_see_zeroes_leaky_slots():
    a = np.array([10.0, 1.0])
    b = np.array([1.0, 10.0])
    q = repair_see(np.array([1.0, 1.0]), a, b, 100.0)
    assert q[1] == 0.0


def test_repair_power_is_feasible(scen1):
    traj = Trajectory.straight_line(scen1)
    c = build_power_coeffs(traj, scen1)
    p = repair_power(np.full(scen1.N, 3.0), c, scen1)
    audit = audit_solution(evaluate_solution(traj, PowerProfile(p), scen1), scen1)
    assert audit.ok()
    assert np.all(mean_interference(p, c) <= scen1.gamma)


def test_jamming_alone_infeasible():
    scen = small_scenario(gamma_it=1e-22)
    with pytest.raises(InfeasibleScenario, match="primary 0"):
        check_jamming_feasible(scen)


def test_solve_power_ascent_and_feasibility(scen1):
    traj = Trajectory.straight_line(scen1)
    c = build_power_coeffs(traj, scen1)
    p0 = repair_power(np.full(scen1.N, 1.5), c, scen1)
    res = solve_power(traj, scen1, PowerProfile(p0))
    before = evaluate_solution(traj, PowerProfile(p0), scen1).wasr
    after = evaluate_solution(traj, res.power, scen1)
    assert after.wasr >= before - 1e-8
    assert audit_solution(after, scen1).ok()
    # surrogate value is a lower bound of the exact un-hinged average
    assert res.obj <= float(np.mean(secrecy_unclamped(res.power.powers, c.a, c.b))) + 1e-12
    power, obj = res
    assert obj == res.obj and power is res.power


def test_solve_power_unconstrained_frozen(scen1):
    scen = scen1.with_gamma(math.inf)
    traj = Trajectory.straight_line(scen)
    res = solve_power(traj, scen, PowerProfile.uniform(scen, 1.5))
    assert res.report.ok
    # frozen from this implementation
    assert res.obj == pytest.approx(1.2366147650550872, rel=1e-7)


def test_psi_zero_drops_see_row(small):
    traj = Trajectory.straight_line(small)
    c = build_power_coeffs(traj, small)
    names = [g.name for g in power_program(c, np.full(small.N, 0.1), small).inequalities]
    assert "see" in names
    no_see = replace(small, see_min=0.0)
    names0 = [g.name for g in power_program(c, np.full(small.N, 0.1), no_see).inequalities]
    assert "see" not in names0


def test_redundant_thresholds_are_left_out(small):
    traj = Trajectory.straight_line(small)
    c = build_power_coeffs(traj, small)
    loose = small.with_gamma(1.0)
    names = [g.name for g in power_program(c, np.full(small.N, 0.1), loose).inequalities]
    assert "interference" not in names


def test_all_slots_leaky_gives_zero_power():
    # eavesdropper right beside the whole path, users far away
    scen = small_scenario(
        eves=[((50.0, 15.0), 10.0)],
        users=[(0.0, 2000.0)],
        q_start=(0.0, 0.0),
        q_end=(100.0, 0.0),
        gamma_it=math.inf,
    )
    res = solve_power(Trajectory.straight_line(scen), scen, PowerProfile.uniform(scen, 1.0))
    assert np.all(res.power.powers == 0.0)


def test_power_program_gradients(scen1):
    traj = Trajectory.straight_line(scen1)
    c = build_power_coeffs(traj, scen1)
    rng = np.random.default_rng(11)
    p_ref = rng.uniform(0, 1e-3, scen1.N)
    prog = power_program(c, p_ref, scen1.with_gamma(1e-16))
    for _ in range(100):
        x = rng.uniform(0, 3e-3, scen1.N)
        assert gradient_error(prog.objective, x) <= 1e-4
        for g in prog.inequalities:
            assert gradient_error(g.fun, x) <= 1e-4


def test_power_program_is_concave_along_segments(scen1):
    traj = Trajectory.straight_line(scen1)
    c = build_power_coeffs(traj, scen1)
    rng = np.random.default_rng(12)
    prog = power_program(c, rng.uniform(0, 1e-3, scen1.N), scen1.with_gamma(1e-16))
    for _ in range(100):
        x, y = rng.uniform(0, 3.0, (2, scen1.N))
        f = prog.objective
        chord = 0.5 * (f(x, 0) + f(y, 0))
        assert f(0.5 * (x + y), 0) >= chord - 1e-12 * (1 + abs(chord))
        for g in prog.inequalities:
            mid = g.fun(0.5 * (x + y), 0)
            chord = 0.5 * (g.fun(x, 0) + g.fun(y, 0))
            assert np.all(mid <= chord + 1e-12 * (1 + np.abs(chord)))
