"""Command line entry point.

Exit codes: 0 success, 1 infeasible scenario, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bcd import IT_SAFE, BcdConfig, Scheme, run_benchmark, sweep_it_threshold
from .errors import InfeasibleScenario, ModelError, ScenarioError, SolverFailure
from .io import (
    emit_results,
    read_power_csv,
    read_scenario_file,
    read_trajectory_csv,
    summary_dict,
    write_sweep_csv,
)
from .model import audit_solution, evaluate_solution
from .oracles import DEFAULT_SEED
from .units import dbm_to_watts
from .validation import run_suite

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)


def _parser():
    p = _Parser(prog="uavcrn", description="Secure UAV trajectory and power design for underlay CRNs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("optimize", help="run one scheme and write its result files")
    o.add_argument("--scenario", required=True)
    o.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    o.add_argument("--out", required=True)
    o.add_argument("--epsilon", type=float)
    o.add_argument("--max-iters", type=int, default=50)
    o.add_argument(
        "--init-power",
        default="0.5",
        help="fraction of p_max, or it_safe for a power that meets every threshold anywhere",
    )

    s = sub.add_parser("sweep-gamma", help="WASR of every scheme over interference thresholds")
    s.add_argument("--scenario", required=True)
    s.add_argument("--gammas-dbm", required=True, help="comma separated, e.g. -130,-120,-110")
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-iters", type=int, default=50)
    s.add_argument(
        "--init-power",
        default="0.5",
        help="fraction of p_max, or it_safe for a power that meets every threshold anywhere",
    )

    v = sub.add_parser("validate", help="run the oracle suite (seed from CRN_SEED)")
    v.add_argument("--scenario", required=True)
    v.add_argument("--probes", type=int, default=50)
    v.add_argument("--samples", type=int, default=100_000)

    e = sub.add_parser("evaluate", help="score a supplied trajectory and power profile")
    e.add_argument("--scenario", required=True)
    e.add_argument("--trajectory", required=True)
    e.add_argument("--power", required=True)
    return p


def _config(args, file_eps):
    eps = args.epsilon if args.epsilon is not None else file_eps
    init = args.init_power
    if init != IT_SAFE:
        try:
            init = float(init)
        except ValueError as exc:
            raise ScenarioError(f"--init-power: expected a fraction or {IT_SAFE}, got {init!r}") from exc
    return BcdConfig(epsilon=eps, max_iters=args.max_iters, init_power=init)


def _gammas(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ScenarioError(f"--gammas-dbm: {exc}") from exc
    if not vals:
        raise ScenarioError("--gammas-dbm: no values given")
    return vals


def _optimize(args):
    sf = read_scenario_file(args.scenario)
    cfg = _config(args, sf.epsilon)
    sol, trace = run_benchmark(sf.scenario, args.scheme, cfg)
    paths = emit_results(sol, trace, args.out, sf.scenario, args.scheme)
    print(f"{args.scheme}: wasr {sol.wasr:.12g} after {len(trace.records)} iterations")
    for p in paths.values():
        print(f"  wrote {p}")
    if trace.failure:
        print(f"stopped early: {trace.failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _sweep(args):
    sf = read_scenario_file(args.scenario)
    cfg = _config(args, sf.epsilon)
    dbm = _gammas(args.gammas_dbm)
    rows = sweep_it_threshold(sf.scenario, [dbm_to_watts(g) for g in dbm], cfg)
    per_w = dict(zip([dbm_to_watts(g) for g in dbm], dbm))
    rows = [(per_w[g], s, w) for g, s, w in rows]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    for g, s, w in rows:
        print(f"{g:g} dBm  {s:<8} {w:.12g}")
    return EXIT_OK


def _validate(args):
    sf = read_scenario_file(args.scenario)
    raw = os.environ.get("CRN_SEED")
    try:
        seed = int(raw, 0) if raw else DEFAULT_SEED
    except ValueError as exc:
        raise ScenarioError(f"CRN_SEED: expected an integer, got {raw!r}") from exc
    checks = run_suite(sf.scenario, seed, args.probes, args.samples)
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_NUMERICAL


def _evaluate(args):
    sf = read_scenario_file(args.scenario)
    scen = sf.scenario
    traj = read_trajectory_csv(args.trajectory)
    power = read_power_csv(args.power)
    if len(traj) != scen.N or len(power.powers) != scen.N:
        raise ScenarioError(
            f"expected {scen.N} slots, got {len(traj)} waypoints and {len(power.powers)} powers"
        )
    sol = evaluate_solution(traj, power, scen)
    audit = audit_solution(sol, scen)
    print(json.dumps(summary_dict(sol, scen, None, "external"), indent=2, sort_keys=True))
    return EXIT_OK if audit.ok() else EXIT_INFEASIBLE


_COMMANDS = {"optimize": _optimize, "sweep-gamma": _sweep, "validate": _validate, "evaluate": _evaluate}


def _join_negative_lists(argv):
    """``--gammas-dbm -130,-120`` would read as a flag; glue the value on."""
    out = []
    it = iter(argv)
    for a in it:
        if a == "--gammas-dbm":
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parser().parse_args(_join_negative_lists(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_BAD_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleScenario as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ModelError, FileNotFoundError, ValueError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except SolverFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def run():
    sys.exit(main())

