"""Block coordinate descent over power and trajectory, plus benchmark schemes.

Each outer iteration solves the power step for the current trajectory and
then the trajectory step for the new power. Both steps only accept iterates
that do not lower the exact (hinged) average secrecy rate, so the trace is
monotone by construction.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .convex import SolverOptions, SolverReport
from .errors import InfeasibleScenario, SolverFailure
from .model import (
    PowerProfile,
    Scenario,
    Trajectory,
    audit_solution,
    eve_snr_per_watt,
    evaluate_solution,
    legit_sinr_per_watt,
    primary_gain,
)
from .power import check_jamming_feasible, it_scale, repair_see, solve_power
from .trajectory import solve_trajectory

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8
IT_SAFE = "it_safe"
AUDIT_TOL = 1e-6


class Scheme(str, enum.Enum):
    PROPOSED = "proposed"
    FPFT = "fpft"
    FPOT = "fpot"
    OPFT = "opft"


@dataclass(frozen=True)
class BcdConfig:
    """Outer-loop settings.

    ``init_trajectory`` of ``None`` means the straight line from start to end.
    ``init_power`` is a fraction of ``p_max`` applied to every slot, an
    explicit :class:`PowerProfile`, or ``"it_safe"`` for the uniform power
    that meets every threshold wherever the UAV flies (see
    :func:`it_safe_power`). All are repaired to feasibility.
    """

    epsilon: float = 0.01
    max_iters: int = 50
    init_trajectory: Optional[Trajectory] = None
    init_power: Union[float, str, PowerProfile] = 0.5
    solver: Optional[SolverOptions] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if isinstance(self.init_power, str) and self.init_power != IT_SAFE:
            raise ValueError(f"unknown initial power {self.init_power!r}")


@dataclass
class BcdRecord:
    iter: int
    wasr_exact: float
    wasr_surrogate_power: float
    wasr_surrogate_traj: float
    see: Optional[float]
    max_it_violation: float
    power_solver_report: Optional[SolverReport] = None
    traj_solver_report: Optional[SolverReport] = None


@dataclass
class BcdTrace:
    initial_wasr: float
    records: list = field(default_factory=list)
    converged: bool = False
    failure: Optional[str] = None

    def wasr_history(self):
        """Exact WASR at initialisation followed by every outer iteration."""
        return [self.initial_wasr] + [r.wasr_exact for r in self.records]

    def is_monotone(self, tol=MONOTONE_TOL):
        h = self.wasr_history()
        return all(b >= a - tol for a, b in zip(h, h[1:]))


# ---------------------------------------------------------------------------
# initialisation


def initialize(scen: Scenario, cfg: BcdConfig = BcdConfig()):
    """Feasible starting pair (trajectory, power)."""
    if not scen.is_reachable:
        raise InfeasibleScenario(
            f"end point is {math.dist(scen.q_start, scen.q_end):.4g} m from the start but at most "
            f"{(scen.N - 1) * scen.max_step:.4g} m can be covered"
        )
    check_jamming_feasible(scen)
    traj = cfg.init_trajectory if cfg.init_trajectory is not None else Trajectory.straight_line(scen)
    if len(traj) != scen.N:
        raise ValueError(f"initial trajectory has {len(traj)} points, scenario needs {scen.N}")
    q = traj.points
    d = np.linalg.norm(q[:, None, :] - scen.eve_xy[None], axis=-1)
    inside = d < scen.eve_radius[None, :]
    if np.any(inside):
        n, m = np.argwhere(inside)[0]
        raise InfeasibleScenario(
            f"initial trajectory waypoint {n} crosses the uncertainty disc of eavesdropper {m}"
        )
    if isinstance(cfg.init_power, PowerProfile):
        p = np.clip(cfg.init_power.powers, 0.0, scen.p_max)
        if len(p) != scen.N:
            raise ValueError(f"initial power has {len(p)} slots, scenario needs {scen.N}")
    elif cfg.init_power == IT_SAFE:
        p = it_safe_power(scen).powers
    else:
        frac = float(cfg.init_power)
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"power fraction must lie in [0, 1], got {frac}")
        p = np.full(scen.N, frac * scen.p_max)
    p = p * it_scale(p, primary_gain(q, scen), scen.jam_primaries, scen.gamma)
    p = repair_see(p, legit_sinr_per_watt(q, scen), eve_snr_per_watt(q, scen), scen.see_min)
    return traj, PowerProfile(p)


def it_safe_power(scen: Scenario, fraction=0.5):
    """Uniform power meeting every threshold wherever the UAV flies.

    Uses the largest possible UAV-primary gain, beta0 / H^2, so the result is
    interference-feasible for any trajectory.
    """
    check_jamming_feasible(scen)
    p = np.full(scen.N, fraction * scen.p_max)
    worst = np.full((scen.N, scen.R), scen.radio.beta0 / scen.altitude**2)
    p = p * it_scale(p, worst, scen.jam_primaries, scen.gamma)
    return PowerProfile(p)


# ---------------------------------------------------------------------------
# outer loop


def _run(scen: Scenario, cfg: BcdConfig, do_power: bool, do_traj: bool):
    traj, power = initialize(scen, cfg)
    sol = evaluate_solution(traj, power, scen)
    trace = BcdTrace(initial_wasr=sol.wasr)
    if not (do_power or do_traj):
        trace.converged = True
        return sol, trace

    current = sol.wasr
    for it in range(1, cfg.max_iters + 1):
        sur_p = sur_q = float("nan")
        rep_p = rep_q = None
        try:
            new_power = power
            if do_power:
                res = solve_power(traj, scen, power, cfg.solver)
                new_power, sur_p, rep_p = res.power, res.obj, res.report
            new_traj = traj
            if do_traj:
                res_q = solve_trajectory(new_power, traj, scen, cfg.solver)
                new_traj, sur_q, rep_q = res_q.trajectory, res_q.obj, res_q.report
        except SolverFailure as exc:
            trace.failure = f"iteration {it}: {exc}"
            log.warning("stopping early: %s", trace.failure)
            break

        new_sol = evaluate_solution(new_traj, new_power, scen)
        audit = audit_solution(new_sol, scen)
        if not audit.ok(AUDIT_TOL):
            trace.failure = f"iteration {it}: constraint audit failed ({audit})"
            log.warning("stopping early: %s", trace.failure)
            break
        if new_sol.wasr < current - MONOTONE_TOL:
            # never expected; steps are ascent-checked individually
            trace.failure = f"iteration {it}: WASR regressed {current:.12g} -> {new_sol.wasr:.12g}"
            log.warning("stopping early: %s", trace.failure)
            break

        trace.records.append(
            BcdRecord(
                it,
                new_sol.wasr,
                sur_p,
                sur_q,
                new_sol.see,
                max(audit.interference) if audit.interference else -1.0,
                rep_p,
                rep_q,
            )
        )
        gain = new_sol.wasr - current
        traj, power, sol, current = new_traj, new_power, new_sol, new_sol.wasr
        log.info("iteration %d: wasr %.6f (gain %.3g)", it, current, gain)
        if gain < cfg.epsilon:
            trace.converged = True
            break
    return sol, trace


def optimize(scen: Scenario, cfg: BcdConfig = BcdConfig()):
    """Alternate power and trajectory steps until the WASR gain drops below epsilon."""
    return _run(scen, cfg, True, True)


def run_benchmark(scen: Scenario, scheme, cfg: BcdConfig = BcdConfig()):
    """Run one of the four schemes; returns ``(Solution, BcdTrace)``."""
    scheme = Scheme(scheme)
    flags = {
        Scheme.PROPOSED: (True, True),
        Scheme.FPFT: (False, False),
        Scheme.FPOT: (False, True),
        Scheme.OPFT: (True, False),
    }[scheme]
    return _run(scen, cfg, *flags)


def sweep_it_threshold(scen: Scenario, gammas, cfg: BcdConfig = BcdConfig(), schemes=tuple(Scheme)):
    """WASR of each scheme for every interference threshold (Watts).

    All runs share one initial power, chosen to satisfy the smallest threshold
    for any trajectory, so the fixed-power schemes see identical inputs.
    Returns a list of ``(gamma, scheme, wasr)`` rows.
    """
    gammas = [float(g) for g in gammas]
    base = scen.with_gamma(min(gammas))
    if isinstance(cfg.init_power, PowerProfile):
        p0 = cfg.init_power
    else:
        frac = 0.5 if cfg.init_power == IT_SAFE else cfg.init_power
        p0 = it_safe_power(base, frac)
    shared = BcdConfig(cfg.epsilon, cfg.max_iters, cfg.init_trajectory, p0, cfg.solver)
    rows = []
    for g in gammas:
        s = scen.with_gamma(g)
        for scheme in schemes:
            sol, _trace = run_benchmark(s, scheme, shared)
            rows.append((g, Scheme(scheme).value, sol.wasr))
    return rows
