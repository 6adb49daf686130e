"""Scenario files, result emission and CSV helpers.

Scenario files are JSON::

    {
      "nodes":   {"users": [[x, y], ...], "primaries": [[x, y], ...],
                  "eves": [{"pos_est": [x, y], "radius_m": r}, ...]},
      "uav":     {"start": [x, y], "end": [x, y], "altitude_m": H,
                  "v_max_mps": v, "p_max_w": p},
      "radio":   {"beta0_db": b, "sigma2_dbm": s, "alpha": a, "pe_w": pe},
      "limits":  {"gamma_it_dbm": g or [g_1, ...], "see_min": psi, "epsilon": eps},
      "horizon": {"T_s": T, "slot_s": dt}
    }

Keys starting with an underscore are comments and ignored.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .model import (
    Eavesdropper,
    PowerProfile,
    RadioConstants,
    Scenario,
    Trajectory,
    audit_solution,
)
from .units import db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm

DEFAULT_EPSILON = 0.01
BUNDLED = ("scenario1", "scenario2", "scenario3", "scenario1_r30", "scenario1_pe_table")


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    epsilon: float
    horizon_s: float


def fmt(x):
    """Float formatting used in every emitted file (12 significant digits)."""
    return format(float(x), ".12g")


def _get(doc, path):
    cur = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ValidationError(path, "missing required key")
        cur = cur[part]
    return cur


def _number(doc, path, default=None):
    try:
        v = _get(doc, path)
    except ValidationError:
        if default is not None:
            return default
        raise
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _points(doc, path):
    v = _get(doc, path)
    if not isinstance(v, list):
        raise ValidationError(path, "expected a list of [x, y] points")
    out = []
    for i, p in enumerate(v):
        out.append(_point(p, f"{path}[{i}]"))
    return out


def _point(p, path):
    if (
        not isinstance(p, list)
        or len(p) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)
    ):
        raise ValidationError(path, f"expected [x, y], got {p!r}")
    return (float(p[0]), float(p[1]))


def scenario_from_dict(doc) -> ScenarioFile:
    if not isinstance(doc, dict):
        raise ValidationError("<root>", "expected a JSON object")
    users = _points(doc, "nodes.users")
    primaries = _points(doc, "nodes.primaries")
    eves_raw = _get(doc, "nodes.eves")
    if not isinstance(eves_raw, list):
        raise ValidationError("nodes.eves", "expected a list of eavesdropper records")
    eves = []
    for i, e in enumerate(eves_raw):
        key = f"nodes.eves[{i}]"
        if not isinstance(e, dict):
            raise ValidationError(key, "expected an object with pos_est and radius_m")
        pos = _point(_get(e, "pos_est") if "pos_est" in e else _missing(f"{key}.pos_est"), f"{key}.pos_est")
        radius = _number(e, "radius_m") if "radius_m" in e else _missing(f"{key}.radius_m")
        eves.append(Eavesdropper(pos, radius))

    start = _point(_get(doc, "uav.start"), "uav.start")
    end = _point(_get(doc, "uav.end"), "uav.end")
    altitude = _number(doc, "uav.altitude_m")
    v_max = _number(doc, "uav.v_max_mps")
    p_max = _number(doc, "uav.p_max_w")

    radio = RadioConstants(
        beta0=db_to_linear(_number(doc, "radio.beta0_db")),
        sigma2=dbm_to_watts(_number(doc, "radio.sigma2_dbm")),
        alpha=_number(doc, "radio.alpha"),
        pe=_number(doc, "radio.pe_w"),
    )

    g = _get(doc, "limits.gamma_it_dbm")
    if isinstance(g, list):
        gamma = tuple(dbm_to_watts(_num_value(v, f"limits.gamma_it_dbm[{i}]")) for i, v in enumerate(g))
    else:
        gamma = dbm_to_watts(_num_value(g, "limits.gamma_it_dbm"))
    see_min = _number(doc, "limits.see_min")
    epsilon = _number(doc, "limits.epsilon", DEFAULT_EPSILON)
    if not epsilon > 0:
        raise ValidationError("limits.epsilon", f"must be > 0, got {epsilon}")

    T = _number(doc, "horizon.T_s")
    dt = _number(doc, "horizon.slot_s")
    if not dt > 0:
        raise ValidationError("horizon.slot_s", f"must be > 0, got {dt}")
    n = round(T / dt)
    if n < 1:
        raise ValidationError("horizon.T_s", f"T_s/slot_s must round to at least one slot, got {T}/{dt}")

    scen = Scenario(
        users=users,
        primaries=primaries,
        eves=eves,
        altitude=altitude,
        q_start=start,
        q_end=end,
        n_slots=n,
        slot_len=dt,
        v_max=v_max,
        p_max=p_max,
        gamma_it=gamma,
        see_min=see_min,
        radio=radio,
    )
    return ScenarioFile(scen, epsilon, T)


def _missing(key):
    raise ValidationError(key, "missing required key")


def _num_value(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(key, f"expected a number, got {v!r}")
    return float(v)


def read_scenario_file(path) -> ScenarioFile:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    return read_scenario_file(path).scenario


def bundled_path(name) -> Path:
    """Path of a bundled scenario file, e.g. ``bundled_path("scenario1")``."""
    if not name.endswith(".json"):
        name = name + ".json"
    return Path(str(resources.files("uavcrn") / "data" / name))


def load_bundled(name) -> ScenarioFile:
    return read_scenario_file(bundled_path(name))


def scenario_to_dict(scen: Scenario, epsilon=DEFAULT_EPSILON):
    gammas = [watts_to_dbm(g) for g in scen.gamma_it]
    gamma = gammas[0] if gammas and all(g == gammas[0] for g in gammas) else gammas
    return {
        "nodes": {
            "users": [list(u) for u in scen.users],
            "primaries": [list(p) for p in scen.primaries],
            "eves": [{"pos_est": list(e.w_hat), "radius_m": e.radius} for e in scen.eves],
        },
        "uav": {
            "start": list(scen.q_start),
            "end": list(scen.q_end),
            "altitude_m": scen.altitude,
            "v_max_mps": scen.v_max,
            "p_max_w": scen.p_max,
        },
        "radio": {
            "beta0_db": linear_to_db(scen.radio.beta0),
            "sigma2_dbm": watts_to_dbm(scen.radio.sigma2),
            "alpha": scen.radio.alpha,
            "pe_w": scen.radio.pe,
        },
        "limits": {"gamma_it_dbm": gamma, "see_min": scen.see_min, "epsilon": epsilon},
        "horizon": {"T_s": scen.n_slots * scen.slot_len, "slot_s": scen.slot_len},
    }


def dump_scenario(scen: Scenario, path, epsilon=DEFAULT_EPSILON):
    Path(path).write_text(json.dumps(scenario_to_dict(scen, epsilon), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# CSV


def _write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int)) else fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _read_csv(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[c]) for c in columns])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {i}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def read_trajectory_csv(path) -> Trajectory:
    return Trajectory(_read_csv(path, ["x_m", "y_m"]))


def read_power_csv(path) -> PowerProfile:
    return PowerProfile(_read_csv(path, ["watts"])[:, 0])


def write_trajectory_csv(traj: Trajectory, path):
    _write_csv(path, ["slot", "x_m", "y_m"], [(n, x, y) for n, (x, y) in enumerate(traj.points)])


def write_power_csv(power: PowerProfile, path):
    _write_csv(path, ["slot", "watts"], [(n, p) for n, p in enumerate(power.powers)])


def _round(x):
    return float(fmt(x)) if x is not None and math.isfinite(x) else x


def summary_dict(sol, scen: Scenario, trace=None, scheme="proposed"):
    audit = audit_solution(sol, scen)
    out = {
        "scheme": scheme,
        "wasr": _round(sol.wasr),
        "see": _round(sol.see),
        "iterations": len(trace.records) if trace is not None else 0,
        "converged": bool(trace.converged) if trace is not None else None,
        "feasibility": {
            "see": _round(audit.see),
            "power": _round(audit.power),
            "interference": [_round(v) for v in audit.interference],
            "endpoints": _round(audit.endpoints),
            "speed": _round(audit.speed),
            "max_violation": _round(audit.max_violation),
        },
    }
    if trace is not None and trace.failure:
        out["failure"] = trace.failure
    return out


def emit_results(sol, trace, out_dir, scen: Scenario, scheme="proposed", comparison=None):
    """Write the five result files into ``out_dir`` and return their paths.

    ``comparison`` optionally maps scheme names to further solutions whose
    per-slot secrecy rates become extra columns of ``secrecy_rate.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out / "trajectory.csv",
        "power": out / "power.csv",
        "secrecy_rate": out / "secrecy_rate.csv",
        "convergence": out / "convergence.csv",
        "summary": out / "summary.json",
    }
    write_trajectory_csv(sol.trajectory, paths["trajectory"])
    write_power_csv(sol.power, paths["power"])

    cols = {scheme: sol.secrecy_rates}
    for name, other in (comparison or {}).items():
        cols[name] = other.secrecy_rates
    names = list(cols)
    _write_csv(
        paths["secrecy_rate"],
        ["slot", *[f"{n}_bits_per_s_hz" for n in names]],
        [(n, *[cols[c][n] for c in names]) for n in range(len(sol.secrecy_rates))],
    )
    wasr = trace.wasr_history() if trace is not None else [sol.wasr]
    _write_csv(paths["convergence"], ["iter", "wasr"], list(enumerate(wasr)))
    paths["summary"].write_text(
        json.dumps(summary_dict(sol, scen, trace, scheme), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return paths


def write_sweep_csv(rows, path):
    _write_csv(path, ["gamma_dbm", "scheme", "wasr"], [(g, s, w) for g, s, w in rows])
