"""Oracle suite run by ``uavcrn validate`` and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import PowerProfile, Scenario, Trajectory, interference_bound, legit_rate_lb
from .oracles import DEFAULT_SEED, FadingSampler, grid_oracle_power, mc_interference_estimate, mc_rate_estimate
from .power import build_power_coeffs, repair_power, solve_power


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def service_box(scen: Scenario, margin=100.0):
    """Bounding box of every node and both endpoints, padded by ``margin`` metres."""
    pts = np.vstack([scen.user_xy, scen.primary_xy, scen.eve_xy, [scen.q_start, scen.q_end]])
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    return lo, hi


def random_probes(scen: Scenario, count, seed=DEFAULT_SEED):
    """``count`` random (q, p) pairs with q outside every uncertainty disc."""
    rng = FadingSampler(seed).generator(stream=1000)
    lo, hi = service_box(scen)
    out = []
    while len(out) < count:
        q = lo + (hi - lo) * rng.random(2)
        d = np.linalg.norm(scen.eve_xy - q, axis=1)
        if np.any(d <= scen.eve_radius + 1.0):
            continue
        out.append((q, float(rng.uniform(0.0, scen.p_max))))
    return out


@dataclass(frozen=True)
class JensenReport:
    probes: int
    rate_failures: int
    interference_failures: int
    worst_rate_margin: float
    worst_interference_margin: float

    @property
    def ok(self):
        return self.rate_failures == 0 and self.interference_failures == 0


def jensen_probes(scen: Scenario, probes=50, samples=100_000, seed=DEFAULT_SEED):
    """Check both Jensen bounds against Monte-Carlo at 3 standard errors.

    Margins are in units of standard errors (``inf`` when the estimate is
    exact); a negative margin below -3 is a failure.
    """
    rate_fail = it_fail = 0
    worst_rate = worst_it = math.inf
    for i, (q, p) in enumerate(random_probes(scen, probes, seed)):
        mean, se = mc_rate_estimate(q, p, scen, samples, seed + i)
        lb = float(legit_rate_lb(q, p, scen))
        margin = (mean - lb) / se if se > 0 else (math.inf if mean >= lb - 1e-12 else -math.inf)
        worst_rate = min(worst_rate, margin)
        rate_fail += margin < -3.0
        for r in range(scen.R):
            mean, se = mc_interference_estimate(q, p, scen, r, samples, seed + i)
            ub = float(interference_bound(q, p, scen, r))
            margin = (ub - mean) / se if se > 0 else (math.inf if ub >= mean * (1 - 1e-12) else -math.inf)
            worst_it = min(worst_it, margin)
            it_fail += margin < -3.0
    return JensenReport(probes, rate_fail, it_fail, worst_rate, worst_it)


def snapshot(scen: Scenario, slots=3):
    """Reduced scenario keeping ``slots`` evenly spaced waypoints of the straight line."""
    line = Trajectory.straight_line(scen).points
    idx = np.linspace(0, scen.N - 1, slots).round().astype(int)
    span = scen.N * scen.slot_len
    small = replace(scen, n_slots=slots, slot_len=span / slots)
    return small, Trajectory(line[idx])


def power_grid_check(scen: Scenario, slots=3, grid_pts=200, p_ref=None):
    """Solver objective against the exhaustive grid on a reduced instance.

    Passes when the two objectives agree to within the grid resolution. Returns ``(ok, solver_obj, grid_obj, resolution)``.
    """
    small, traj = snapshot(scen, slots)
    if p_ref is None:
        p_ref = PowerProfile.uniform(small, 1e-3 * small.p_max)
    res = solve_power(traj, small, p_ref)
    # the solver expands around its repaired reference, the grid must too
    grid = grid_oracle_power(traj, small, PowerProfile(_repaired_reference(traj, small, p_ref)), grid_pts)
    if not grid.feasible:
        return False, res.obj, grid.best_obj, math.nan
    ok = abs(res.obj - grid.best_obj) <= grid.resolution
    return bool(ok), res.obj, grid.best_obj, grid.resolution


def _repaired_reference(traj, scen, p_ref):
    return repair_power(p_ref.powers, build_power_coeffs(traj, scen), scen)


def sampler_check(seed=DEFAULT_SEED, draws=1_000_000):
    x = FadingSampler(seed).draw(draws)
    return abs(float(np.mean(x)) - 1.0) <= 0.005


def run_suite(scen: Scenario, seed=DEFAULT_SEED, probes=50, samples=100_000):
    """Every oracle check as a list of :class:`Check`."""
    checks = [Check("fading sampler mean", sampler_check(seed), "1e6 draws within 0.5% of 1")]
    jr = jensen_probes(scen, probes, samples, seed)
    checks.append(
        Check(
            "jensen rate bound",
            jr.rate_failures == 0,
            f"{jr.rate_failures}/{jr.probes} failures, worst margin {jr.worst_rate_margin:.3g} se",
        )
    )
    checks.append(
        Check(
            "jensen interference bound",
            jr.interference_failures == 0,
            f"{jr.interference_failures}/{jr.probes * scen.R} failures, "
            f"worst margin {jr.worst_interference_margin:.3g} se",
        )
    )
    ok, s_obj, g_obj, res = power_grid_check(scen)
    checks.append(
        Check("power grid oracle", ok, f"solver {s_obj:.9g} grid {g_obj:.9g} resolution {res:.3g}")
    )
    return checks
