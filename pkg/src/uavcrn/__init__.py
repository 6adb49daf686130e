"""Worst-case secrecy rate design for a UAV base station in an underlay CRN."""

from .bcd import IT_SAFE, BcdConfig, BcdTrace, Scheme, initialize, optimize, run_benchmark, sweep_it_threshold
from .convex import ConvexProgram, SolverOptions, SolverReport, Status, solve
from .errors import (
    InfeasibleScenario,
    ParseError,
    ReferenceInfeasible,
    SolverFailure,
    UavCrnError,
    ValidationError,
)
from .io import emit_results, load_bundled, load_scenario
from .model import (
    Eavesdropper,
    PowerProfile,
    RadioConstants,
    Scenario,
    Solution,
    Trajectory,
    audit_solution,
    evaluate_solution,
    exact_wasr,
)
from .power import solve_power
from .trajectory import solve_trajectory

__version__ = "0.1.0"

__all__ = [
    "IT_SAFE",
    "BcdConfig",
    "BcdTrace",
    "ConvexProgram",
    "Eavesdropper",
    "InfeasibleScenario",
    "ParseError",
    "PowerProfile",
    "RadioConstants",
    "ReferenceInfeasible",
    "Scenario",
    "Scheme",
    "Solution",
    "SolverFailure",
    "SolverOptions",
    "SolverReport",
    "Status",
    "Trajectory",
    "UavCrnError",
    "ValidationError",
    "audit_solution",
    "emit_results",
    "evaluate_solution",
    "exact_wasr",
    "initialize",
    "load_bundled",
    "load_scenario",
    "optimize",
    "run_benchmark",
    "solve",
    "solve_power",
    "solve_trajectory",
    "sweep_it_threshold",
]
