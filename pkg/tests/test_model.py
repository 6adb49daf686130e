import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_scenario
from uavcrn.errors import DegenerateDistance, EveExclusionViolated, ValidationError
from uavcrn.model import (
    Eavesdropper,
    PowerProfile,
    RadioConstants,
    Trajectory,
    a2g_gain,
    audit_solution,
    eve_rate,
    eve_snr_per_watt,
    evaluate_solution,
    exact_wasr,
    interference_bound,
    legit_rate_lb,
    legit_sinr_per_watt,
    primary_gain,
    secrecy_rate,
    worst_case_eve_gain,
    worst_case_g2g_gain_coeff,
)
from uavcrn.units import db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm

RADIO = RadioConstants(beta0=1e-6, sigma2=1e-14, alpha=2.2, pe=1e-7)


# ---------------------------------------------------------------------------
# units


def test_table_units():
    assert db_to_linear(-60) == pytest.approx(1e-6, rel=1e-12)
    assert dbm_to_watts(-110) == pytest.approx(1e-14, rel=1e-12)
    assert dbm_to_watts(30) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(-200, 100))
def test_unit_round_trip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)
    assert watts_to_dbm(dbm_to_watts(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# channels


def test_a2g_gain_hand_value():
    # 30-40-50 triangle on the ground, 100 m altitude
    assert a2g_gain((30.0, 40.0), (0.0, 0.0), 100.0, RADIO) == pytest.approx(1e-6 / 12500.0, rel=1e-12)


def test_a2g_gain_broadcasts():
    q = np.array([[0.0, 0.0], [30.0, 40.0]])
    g = a2g_gain(q, (0.0, 0.0), 100.0, RADIO)
    assert g.shape == (2,)
    assert g[0] == pytest.approx(1e-10, rel=1e-12)


def test_worst_case_eve_gain_uses_near_edge():
    eve = Eavesdropper((0.0, 0.0), 10.0)
    g = worst_case_eve_gain((50.0, 0.0), eve, 100.0, RADIO)
    assert g == pytest.approx(1e-6 / (40.0**2 + 100.0**2), rel=1e-12)
    # the worst case dominates the gain at the estimated position
    assert g > a2g_gain((50.0, 0.0), (0.0, 0.0), 100.0, RADIO)


def test_worst_case_eve_gain_on_disc_edge_is_overhead_gain():
    eve = Eavesdropper((0.0, 0.0), 10.0)
    assert worst_case_eve_gain((10.0, 0.0), eve, 100.0, RADIO) == pytest.approx(1e-10, rel=1e-12)


def test_exclusion_violation_raises():
    eve = Eavesdropper((0.0, 0.0), 10.0)
    with pytest.raises(EveExclusionViolated) as info:
        worst_case_eve_gain((3.0, 4.0), eve, 100.0, RADIO, index=1)
    assert info.value.eve_index == 1
    assert info.value.distance == pytest.approx(5.0)


def test_g2g_coefficient():
    eve = Eavesdropper((100.0, 0.0), 10.0)
    assert worst_case_g2g_gain_coeff((0.0, 0.0), eve, RADIO) == pytest.approx(1e-6 * 90.0**-2.2, rel=1e-12)


def test_g2g_degenerate_distance():
    eve = Eavesdropper((10.0, 0.0), 10.0)
    with pytest.raises(DegenerateDistance):
        worst_case_g2g_gain_coeff((0.0, 0.0), eve, RADIO)


# ---------------------------------------------------------------------------
# rates


def test_pe_zero_removes_jamming():
    scen = small_scenario(radio=RadioConstants(1e-6, 1e-14, 2.2, 0.0))
    q = np.array([10.0, 20.0])
    expected = sum(a2g_gain(q, w, scen.altitude, scen.radio) for w in scen.users) / scen.radio.sigma2
    assert float(legit_sinr_per_watt(q, scen)) == pytest.approx(expected, rel=1e-12)
    assert np.all(scen.jam_primaries == 0)


def test_zero_power_gives_zero_rates(small):
    q = np.array([0.0, 0.0])
    assert float(legit_rate_lb(q, 0.0, small)) == 0.0
    assert float(eve_rate(q, 0.0, small)) == 0.0
    assert float(secrecy_rate(q, 0.0, small)) == 0.0


def test_negative_power_rejected(small):
    with pytest.raises(ValueError):
        legit_rate_lb(np.zeros(2), -1.0, small)


def test_frozen_coefficients_scenario1(scen1):
    q = np.array([-100.0, 300.0])
    assert float(legit_sinr_per_watt(q, scen1)) == pytest.approx(5332.476987429854, rel=1e-9)
    assert float(eve_snr_per_watt(q, scen1)) == pytest.approx(1215.526585347514, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(-400, 400),
    y=st.floats(-400, 400),
    p=st.floats(0.0, 3.0),
)
def test_secrecy_rate_is_hinged_difference(x, y, p):
    scen = small_scenario()
    q = np.array([x, y])
    if np.linalg.norm(q - scen.eve_xy[0]) < scen.eve_radius[0]:
        return
    r = float(secrecy_rate(q, p, scen))
    diff = float(legit_rate_lb(q, p, scen) - eve_rate(q, p, scen))
    assert r >= 0.0
    assert r == pytest.approx(max(0.0, diff), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(p1=st.floats(0.0, 3.0), p2=st.floats(0.0, 3.0))
def test_legit_rate_monotone_in_power(p1, p2):
    scen = small_scenario()
    q = np.array([0.0, 50.0])
    lo, hi = sorted((p1, p2))
    assert float(legit_rate_lb(q, lo, scen)) <= float(legit_rate_lb(q, hi, scen)) + 1e-15


def test_interference_bound_matches_components(small):
    q = np.array([50.0, -20.0])
    expected = 0.2 * a2g_gain(q, small.primaries[0], small.altitude, small.radio) + small.jam_primaries[0]
    assert float(interference_bound(q, 0.2, small, 0)) == pytest.approx(expected, rel=1e-12)
    assert primary_gain(q, small).shape == (1,)


# ---------------------------------------------------------------------------
# solutions and audit


def test_evaluate_solution_frozen_scenario1(scen1):
    traj = Trajectory.straight_line(scen1)
    sol = evaluate_solution(traj, PowerProfile.uniform(scen1, 1e-3), scen1)
    assert sol.wasr == pytest.approx(0.3419156679447138, rel=1e-9)
    assert sol.see == pytest.approx(341.91566794471373, rel=1e-9)
    assert len(sol.per_slot) == 60
    assert exact_wasr(traj, PowerProfile.uniform(scen1, 1e-3), scen1) == sol.wasr


def test_audit_flags_interference_and_speed(scen1):
    traj = Trajectory.straight_line(scen1)
    audit = audit_solution(evaluate_solution(traj, PowerProfile.uniform(scen1, 1e-3), scen1), scen1)
    # 1 mW breaks the first threshold on the straight line, by a relative 0.623
    assert audit.interference[0] == pytest.approx(0.6229621187582806, rel=1e-9)
    assert not audit.ok()
    assert audit.endpoints == 0.0
    assert audit.speed < 0


def test_audit_detects_speeding(small):
    pts = Trajectory.straight_line(small).points.copy()
    pts[3] += np.array([0.0, 200.0])
    sol = evaluate_solution(Trajectory(pts), PowerProfile.uniform(small, 0.0), small)
    assert audit_solution(sol, small).speed > 0


def test_see_undefined_at_zero_power(small):
    sol = evaluate_solution(Trajectory.straight_line(small), PowerProfile.uniform(small, 0.0), small)
    assert sol.see is None
    assert audit_solution(sol, small).see == 0.0


def test_evaluate_rejects_wrong_length(small):
    with pytest.raises(ValueError):
        evaluate_solution(Trajectory(np.zeros((3, 2))), PowerProfile.uniform(small, 0.0), small)


def test_straight_line_degenerate():
    scen = small_scenario(q_end=(-150.0, 0.0), n_slots=5)
    pts = Trajectory.straight_line(scen).points
    assert np.all(pts == np.array([-150.0, 0.0]))


def test_reachability():
    assert small_scenario().is_reachable
    assert not small_scenario(v_max=10.0).is_reachable


# ---------------------------------------------------------------------------
# validation


@pytest.mark.parametrize(
    "kw, key",
    [
        (dict(altitude=-1.0), "altitude"),
        (dict(gamma_it=(1e-12, 1e-12)), "gamma_it"),
        (dict(n_slots=0), "n_slots"),
        (dict(see_min=-1.0), "see_min"),
        (dict(users=[]), "users"),
    ],
)
def test_scenario_validation(kw, key):
    with pytest.raises(ValidationError) as info:
        small_scenario(**kw)
    assert info.value.key == key


def test_radio_validation():
    with pytest.raises(ValidationError):
        RadioConstants(beta0=1e-6, sigma2=1e-14, alpha=2.0, pe=0.0)


def test_infinite_threshold_is_allowed():
    scen = small_scenario(gamma_it=math.inf)
    assert scen.gamma[0] == math.inf
