"""Power allocation for a fixed trajectory.

Per slot the (un-hinged) secrecy rate is ``log2(1 + a p) - log2(1 + b p)``.
The eavesdropper term is convex in ``p`` so it is replaced by its tangent at
the reference power, which gives a concave global lower bound that is tight at
the reference. The program maximises the slot average of that bound under the
secrecy-energy-efficiency constraint, the power box and the interference
thresholds of the primary users.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex import ConvexProgram, Inequality, SolverOptions, SolverReport, Status, solve
from .errors import InfeasibleScenario, SolverFailure
from .model import (
    PowerProfile,
    Scenario,
    Trajectory,
    eve_snr_per_watt,
    legit_sinr_per_watt,
    primary_gain,
)

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
ASCENT_TOL = 1e-8


@dataclass(frozen=True)
class PowerCoefficients:
    """Per-slot SNR-per-Watt coefficients and interference rows.

    ``it_rows[r, n]`` is the UAV-to-primary gain in slot ``n``; ``it_const[r]``
    is the mean jamming interference the eavesdroppers put on primary ``r``.
    """

    a: np.ndarray
    b: np.ndarray
    it_rows: np.ndarray
    it_const: np.ndarray

    @property
    def n_slots(self):
        return len(self.a)


def build_power_coeffs(traj: Trajectory, scen: Scenario) -> PowerCoefficients:
    q = traj.points
    a = legit_sinr_per_watt(q, scen)
    b = eve_snr_per_watt(q, scen)
    rows = primary_gain(q, scen).T.reshape(scen.R, len(q))
    return PowerCoefficients(a, b, rows, np.array(scen.jam_primaries, dtype=float))


def secrecy_unclamped(p, a, b):
    """log2(1 + a p) - log2(1 + b p), the secrecy rate before the hinge."""
    p = np.asarray(p, dtype=float)
    return (np.log1p(a * p) - np.log1p(b * p)) / LN2


def surrogate_secrecy(p, p_ref, a, b):
    """Concave lower bound of :func:`secrecy_unclamped`, tight at ``p_ref``."""
    p = np.asarray(p, dtype=float)
    br = b * p_ref
    return (np.log1p(a * p) - np.log1p(br) - b * (p - p_ref) / (1.0 + br)) / LN2


def surrogate_derivative(p, p_ref, a, b):
    return (a / (1.0 + a * p) - b / (1.0 + b * p_ref)) / LN2


def mean_interference(p, coeffs: PowerCoefficients):
    """Time-averaged interference bound at every primary, shape (R,)."""
    p = np.asarray(p, dtype=float)
    return coeffs.it_rows @ p / len(p) + coeffs.it_const


def check_jamming_feasible(scen: Scenario):
    """Raise if eavesdropper jamming alone already breaks some threshold."""
    for r in range(scen.R):
        if scen.jam_primaries[r] > scen.gamma[r]:
            raise InfeasibleScenario(
                f"jamming interference at primary {r} ({scen.jam_primaries[r]:.4g} W) "
                f"exceeds its threshold ({scen.gamma[r]:.4g} W) for any UAV power"
            )


def see_holds(p, a, b, psi):
    total = float(np.sum(p))
    if total <= 0:
        return True
    r = np.maximum(secrecy_unclamped(p, a, b), 0.0)
    return float(np.sum(r)) >= psi * total


def repair_see(p, a, b, psi):
    """Scale ``p`` down until the secrecy-efficiency constraint holds.

    Secrecy per Watt only grows as power shrinks, so bisection on a uniform
    factor works. If even the small-power limit fails, slots that leak more
    than they deliver are switched off, and as a last resort all power is.
    """
    p = np.asarray(p, dtype=float)
    if see_holds(p, a, b, psi):
        return p
    if see_holds(p * 1e-12, a, b, psi):
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if see_holds(p * mid, a, b, psi):
                lo = mid
            else:
                hi = mid
        return p * lo
    p = np.where(a > b, p, 0.0)
    return p if see_holds(p, a, b, psi) else np.zeros_like(p)


def it_scale(p, gains, jam, gamma):
    """Largest factor s <= 1 such that s*p meets every interference threshold.

    ``gains`` has shape (N, R).
    """
    p = np.asarray(p, dtype=float)
    if gains.shape[1] == 0:
        return 1.0
    load = p @ gains / len(p)
    budget = gamma - jam
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(load > 0, budget / load, np.inf)
    s = float(np.min(ratios))
    # shave a few ulps so the scaled load sits on the safe side
    return 1.0 if s >= 1.0 else max(s, 0.0) * (1.0 - 1e-12)


def repair_power(p_ref, coeffs: PowerCoefficients, scen: Scenario):
    """Make a reference power vector feasible.

    Slots with non-positive secrecy slope are switched off, the rest is
    clipped to the box, scaled down uniformly until every interference
    threshold holds and then until the secrecy-efficiency constraint holds.
    """
    p = np.clip(np.asarray(p_ref, dtype=float), 0.0, scen.p_max)
    p = np.where(coeffs.a > coeffs.b, p, 0.0)
    p = p * it_scale(p, coeffs.it_rows.T, coeffs.it_const, scen.gamma)
    return repair_see(p, coeffs.a, coeffs.b, scen.see_min)


def power_program(coeffs: PowerCoefficients, p_ref, scen: Scenario) -> ConvexProgram:
    """Assemble the concave power program around ``p_ref``."""
    a, b = coeffs.a, coeffs.b
    N = len(a)
    p_ref = np.asarray(p_ref, dtype=float)
    db = b / (1.0 + b * p_ref)

    def curvature(p):
        return a * a / ((1.0 + a * p) ** 2 * LN2)

    def objective(p, order=2):
        with np.errstate(all="ignore"):
            v = float(np.sum(surrogate_secrecy(p, p_ref, a, b))) / N
            if order == 0:
                return v
            g = surrogate_derivative(p, p_ref, a, b) / N
            if order == 1:
                return v, g
            return v, g, np.diag(-curvature(p) / N)

    ineqs = []
    if scen.see_min > 0:
        psi = scen.see_min

        def see(p, order=1):
            with np.errstate(all="ignore"):
                v = np.array([psi * np.sum(p) - np.sum(surrogate_secrecy(p, p_ref, a, b))])
                if order == 0:
                    return v
                return v, (psi - (a / (1.0 + a * p) - db) / LN2)[None, :]

        def see_hess(p, w):
            return np.diag(w[0] * curvature(p))

        ineqs.append(Inequality(see, see_hess, "see"))

    # rows that cannot bind even at full power everywhere are left out
    worst = coeffs.it_rows @ np.full(N, scen.p_max) / N + coeffs.it_const
    finite = np.isfinite(scen.gamma) & (worst > scen.gamma)
    if np.any(finite):
        # scaled by 1/Gamma_r so the rows are O(1)
        G = scen.gamma[finite]
        rows = coeffs.it_rows[finite] / (N * G[:, None])
        const = coeffs.it_const[finite] / G - 1.0

        def it(p, order=1):
            v = rows @ p + const
            return v if order == 0 else (v, rows)

        ineqs.append(Inequality(it, None, "interference"))

    return ConvexProgram(
        dim=N,
        objective=objective,
        inequalities=ineqs,
        lower=np.zeros(N),
        upper=np.full(N, scen.p_max),
    )


@dataclass
class PowerResult:
    """Outcome of one power step. Unpacks as ``(power, obj)``."""

    power: PowerProfile
    obj: float
    report: Optional[SolverReport]
    retained_reference: bool = False

    def __iter__(self):
        yield self.power
        yield self.obj


def solve_power(
    traj: Trajectory,
    scen: Scenario,
    p_ref: PowerProfile,
    opts: Optional[SolverOptions] = None,
) -> PowerResult:
    """One SCA step on the power block.

    ``obj`` is the surrogate objective at the returned power, which by
    tightness also bounds the exact un-hinged average secrecy rate from below.
    """
    check_jamming_feasible(scen)
    coeffs = build_power_coeffs(traj, scen)
    p0 = repair_power(p_ref.powers, coeffs, scen)
    N = len(p0)
    ref_obj = float(np.mean(secrecy_unclamped(p0, coeffs.a, coeffs.b)))

    if not np.any(coeffs.a > coeffs.b):
        # every slot leaks more to the eavesdroppers than it delivers
        return PowerResult(PowerProfile(np.zeros(N)), 0.0, None, bool(np.any(p0)))

    prog = power_program(coeffs, p0, scen)
    report = solve(prog, p0, opts)
    if report.status == Status.NUMERICAL_FAILURE:
        raise SolverFailure("power subproblem hit a numerical failure", report)
    if report.status == Status.INFEASIBLE:
        log.debug("power program has no strict interior; keeping the reference")
        return PowerResult(PowerProfile(p0), ref_obj, report, True)

    p = np.clip(report.x_opt, 0.0, scen.p_max)
    obj = float(np.mean(surrogate_secrecy(p, p0, coeffs.a, coeffs.b)))
    exact_new = float(np.mean(np.maximum(secrecy_unclamped(p, coeffs.a, coeffs.b), 0.0)))
    exact_ref = float(np.mean(np.maximum(secrecy_unclamped(p0, coeffs.a, coeffs.b), 0.0)))
    if exact_new < exact_ref - ASCENT_TOL or not _feasible(p, coeffs, scen):
        return PowerResult(PowerProfile(p0), ref_obj, report, True)
    return PowerResult(PowerProfile(p), obj, report)


def _feasible(p, coeffs: PowerCoefficients, scen: Scenario, tol=1e-6):
    if np.any(p < -tol) or np.any(p > scen.p_max + tol):
        return False
    if scen.R:
        it = mean_interference(p, coeffs)
        finite = np.isfinite(scen.gamma)
        if np.any(it[finite] / scen.gamma[finite] - 1.0 > tol):
            return False
    total = float(np.sum(p))
    if total > 0:
        r_sec = np.maximum(secrecy_unclamped(p, coeffs.a, coeffs.b), 0.0)
        if scen.see_min * total - float(np.sum(r_sec)) > tol:
            return False
    return True
