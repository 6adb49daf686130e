"""Trajectory optimisation for fixed per-slot power.

Slack variables bound the squared UAV-user distances from above (``zeta``),
the worst-case squared UAV-eavesdropper distances from below (``xi``) and the
squared UAV-primary distances from below (``dt``). The legitimate rate is
linearised in ``zeta`` and the nonconvex distance lower bounds use first-order
expansions around the reference trajectory, so the program is concave.

Internally lengths are measured in units of the altitude ``H`` and squared
lengths in ``H**2`` to keep every variable O(1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .convex import (
    ConvexProgram,
    Inequality,
    SecondOrderCone,
    SolverOptions,
    SolverReport,
    Status,
    solve,
)
from .errors import EveExclusionViolated, ReferenceInfeasible, SolverFailure
from .model import (
    TOL_EQ,
    TOL_FEAS,
    PowerProfile,
    Scenario,
    Trajectory,
    eve_snr_per_watt,
    legit_sinr_per_watt,
    primary_gain,
)

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
EPS_SMOOTH = 1e-3  # m, smoothing of ||q - w_hat|| inside callbacks
XI_FLOOR_FRAC = 0.5  # xi >= 0.5 H^2
DT_FLOOR_FRAC = -0.5  # dt > -0.5 H^2 keeps 1/(dt + H^2) finite
ASCENT_TOL = 1e-8
MAX_SHRINK = 10


@dataclass(frozen=True)
class TrajectoryProgramPoint:
    """Expansion point data (unscaled SI units)."""

    q_ref: np.ndarray  # (N, 2)
    f1: np.ndarray  # (K, N)
    f2: np.ndarray  # (N,)
    slack_zeta_ref: np.ndarray  # (K, N)


class TrajectoryProgram:
    """Concave trajectory program around a reference path.

    Decision vector layout (scaled units): ``[q (N*2), zeta (N*K), xi (N*M),
    dt (N*R)]``, each block stored slot-major.
    """

    def __init__(self, power: PowerProfile, q_ref: Trajectory, scen: Scenario):
        self.scen = scen
        N, K, M, R = scen.N, scen.K, scen.M, scen.R
        if len(power) != N or len(q_ref) != N:
            raise ValueError("power and reference trajectory must have one entry per slot")
        _check_reference(q_ref, scen)
        self.N, self.K, self.M = N, K, M
        # a threshold that holds with the UAV hovering straight above the
        # primary in every slot cannot bind, so its rows are left out
        P_all = np.asarray(power.powers, dtype=float)
        worst = np.mean(P_all) * scen.radio.beta0 / scen.altitude**2 + scen.jam_primaries
        self.it_idx = np.flatnonzero(np.isfinite(scen.gamma) & (worst > scen.gamma))
        self.R = len(self.it_idx)
        R = self.R

        L = scen.altitude
        self.L = L
        P = np.asarray(power.powers, dtype=float)
        self.P = P
        radio = scen.radio
        qr = np.asarray(q_ref.points, dtype=float) / L
        self.qr = qr
        self.w_user = scen.user_xy / L
        self.w_eve = scen.eve_xy / L
        self.r_eve = scen.eve_radius / L
        self.w_pri = scen.primary_xy[self.it_idx] / L
        self.eps = EPS_SMOOTH / L

        # offsets
        self.o_q = 0
        self.o_z = 2 * N
        self.o_x = self.o_z + N * K
        self.o_d = self.o_x + N * M
        self.dim = self.o_d + N * R

        # legitimate side: f1 / zeta with everything scaled by L^2
        f1 = P[:, None] * radio.beta0 / (scen.jam_users[None, :] + radio.sigma2)  # (N, K), m^2
        self.f1 = f1 / L**2
        self.zeta_ref = np.sum((qr[:, None, :] - self.w_user[None]) ** 2, axis=-1) + 1.0
        s1 = np.sum(self.f1 / self.zeta_ref, axis=1)
        self.coef_z = self.f1 / self.zeta_ref**2 / (LN2 * (1.0 + s1[:, None]))
        self.const_z = np.log2(1.0 + s1) + np.sum(self.coef_z * self.zeta_ref, axis=1)

        # eavesdropper side
        self.c2 = radio.rho0 * P / L**2
        self.point = TrajectoryProgramPoint(
            q_ref=np.asarray(q_ref.points, dtype=float).copy(),
            f1=f1.T.copy(),
            f2=radio.rho0 * P,
            slack_zeta_ref=(self.zeta_ref * L**2).T.copy(),
        )
        ge = qr[:, None, :] - self.w_eve[None]  # (N, M, 2)
        self.eve_lin_g = ge
        self.eve_lin_c = 1.0 + self.r_eve[None, :] ** 2 + np.sum(ge**2, axis=-1)
        dref = np.linalg.norm(ge, axis=-1)
        self.excl_dir = ge / dref[..., None]
        self.excl_dref = dref

        # interference side
        if R:
            gp = qr[:, None, :] - self.w_pri[None]  # (N, R, 2)
            self.pri_lin_g = gp
            self.pri_lin_c = np.sum(gp**2, axis=-1)
            G = scen.gamma[self.it_idx]
            self.c_it = radio.beta0 * P[None, :] / (L**2 * G[:, None])  # (R, N)
            self.it_const = scen.jam_primaries[self.it_idx] / G - 1.0

        self.program = self._build()

    # -- indexing ----------------------------------------------------------

    def q_of(self, x):
        return x[: 2 * self.N].reshape(self.N, 2)

    def zeta_of(self, x):
        return x[self.o_z : self.o_x].reshape(self.N, self.K)

    def xi_of(self, x):
        return x[self.o_x : self.o_d].reshape(self.N, self.M)

    def dt_of(self, x):
        return x[self.o_d :].reshape(self.N, self.R)

    def _qi(self, n, c):
        return 2 * n + c

    # -- rate pieces -------------------------------------------------------

    def _eve_term(self, xi):
        """E_n = log2(1 + sum_m c2_n / xi_nm) and its derivatives."""
        c = self.c2[:, None]
        ratio = c / xi
        S = np.sum(ratio, axis=1)
        E = np.log1p(S) / LN2
        dE = -(c / xi**2) / ((1.0 + S)[:, None] * LN2)  # dE/dxi
        return E, dE, S

    def _eve_hess_blocks(self, xi, S):
        """Per-slot M x M Hessians of E_n with respect to xi_n."""
        c = self.c2[:, None]
        u = c / xi**2  # (N, M)
        diag = 2.0 * c / xi**3 / (1.0 + S)[:, None]
        outer = u[:, :, None] * u[:, None, :] / ((1.0 + S) ** 2)[:, None, None]
        blocks = -outer
        idx = np.arange(self.M)
        blocks[:, idx, idx] += diag
        return blocks / LN2

    def slot_rates(self, x):
        """Per-slot surrogate secrecy rate at decision vector ``x``."""
        z = self.zeta_of(x)
        xi = self.xi_of(x)
        legit = self.const_z - np.sum(self.coef_z * z, axis=1)
        with np.errstate(all="ignore"):
            E, _, _ = self._eve_term(xi)
        return legit - E

    # -- assembly ----------------------------------------------------------

    def _build(self):
        N, K, M, R = self.N, self.K, self.M, self.R
        n_dim = self.dim
        o_z, o_x, o_d = self.o_z, self.o_x, self.o_d
        scen = self.scen

        xi_cols = o_x + np.arange(N * M).reshape(N, M)

        # sparsity pattern of the per-slot xi blocks
        blk_rows = np.repeat(xi_cols, M, axis=1).reshape(-1)
        blk_cols = np.tile(xi_cols, (1, M)).reshape(-1)

        def xi_hess(xi, S, scale):
            blocks = self._eve_hess_blocks(xi, S) * scale
            return sp.csr_matrix((blocks.reshape(-1), (blk_rows, blk_cols)), shape=(n_dim, n_dim))

        def objective(x, order=2):
            with np.errstate(all="ignore"):
                xi = self.xi_of(x)
                if np.any(xi <= 0):
                    return -np.inf if order == 0 else (-np.inf, np.zeros(n_dim), None)
                z = self.zeta_of(x)
                E, dE, S = self._eve_term(xi)
                val = float(np.sum(self.const_z - np.sum(self.coef_z * z, axis=1) - E)) / N
                if order == 0:
                    return val
                g = np.zeros(n_dim)
                g[o_z:o_x] = -self.coef_z.reshape(-1) / N
                g[o_x:o_d] = -dE.reshape(-1) / N
                if order == 1:
                    return val, g
                return val, g, xi_hess(xi, S, -1.0 / N)

        ineqs = []

        # zeta_nk >= ||q_n - w_k||^2 + 1
        rows = np.arange(N * K)
        n_of = np.repeat(np.arange(N), K)
        k_of = np.tile(np.arange(K), N)

        def users(x, order=1):
            q = self.q_of(x)
            diff = q[n_of] - self.w_user[k_of]
            v = np.sum(diff**2, axis=1) + 1.0 - x[o_z + rows]
            if order == 0:
                return v
            data = np.concatenate([2 * diff[:, 0], 2 * diff[:, 1], -np.ones(N * K)])
            cols = np.concatenate([2 * n_of, 2 * n_of + 1, o_z + rows])
            J = sp.csr_matrix((data, (np.tile(rows, 3), cols)), shape=(N * K, n_dim))
            return v, J

        def users_hess(x, w):
            h = np.zeros(n_dim)
            wn = np.bincount(n_of, weights=w, minlength=N)
            h[0 : 2 * N : 2] = 2 * wn
            h[1 : 2 * N : 2] = 2 * wn
            return sp.diags(h)

        ineqs.append(Inequality(users, users_hess, "user_slack"))

        # xi_nm <= 1 + r^2 - 2 r ||q - w_hat|| + ||q_ref - w_hat||^2 + 2 (q_ref - w_hat).(q - q_ref)
        rows_e = np.arange(N * M)
        n_e = np.repeat(np.arange(N), M)
        m_e = np.tile(np.arange(M), N)
        r_e = self.r_eve[m_e]
        g_e = self.eve_lin_g.reshape(-1, 2)
        c_e = self.eve_lin_c.reshape(-1)
        qr_e = self.qr[n_e]
        eps2 = self.eps**2

        def eves(x, order=1):
            q = self.q_of(x)
            u = q[n_e] - self.w_eve[m_e]
            s = np.sqrt(np.sum(u**2, axis=1) + eps2)
            lin = c_e - 2 * r_e * s + 2 * np.sum(g_e * (q[n_e] - qr_e), axis=1)
            v = x[o_x + rows_e] - lin
            if order == 0:
                return v
            dq = 2 * r_e[:, None] * u / s[:, None] - 2 * g_e
            data = np.concatenate([dq[:, 0], dq[:, 1], np.ones(N * M)])
            cols = np.concatenate([2 * n_e, 2 * n_e + 1, o_x + rows_e])
            J = sp.csr_matrix((data, (np.tile(rows_e, 3), cols)), shape=(N * M, n_dim))
            return v, J

        def eves_hess(x, w):
            q = self.q_of(x)
            u = q[n_e] - self.w_eve[m_e]
            s = np.sqrt(np.sum(u**2, axis=1) + eps2)
            coef = 2 * r_e * w
            blocks = coef[:, None, None] * (
                np.eye(2)[None] / s[:, None, None] - u[:, :, None] * u[:, None, :] / s[:, None, None] ** 3
            )
            Hq = np.zeros((N, 2, 2))
            np.add.at(Hq, n_e, blocks)
            return _q_block_hess(Hq, n_dim)

        ineqs.append(Inequality(eves, eves_hess, "eve_slack"))

        # eve exclusion, linearised inner approximation of ||q - w_hat|| >= r
        dir_e = self.excl_dir.reshape(-1, 2)
        dref_e = self.excl_dref.reshape(-1)
        Jex = sp.csr_matrix(
            (
                np.concatenate([-dir_e[:, 0], -dir_e[:, 1]]),
                (np.tile(rows_e, 2), np.concatenate([2 * n_e, 2 * n_e + 1])),
            ),
            shape=(N * M, n_dim),
        )
        ex_const = r_e - dref_e + np.sum(dir_e * qr_e, axis=1)

        def exclusion(x, order=1):
            v = Jex @ x + ex_const
            return v if order == 0 else (v, Jex)

        # only rows for discs with a positive radius carry information
        if np.any(r_e > 0):
            ineqs.append(Inequality(exclusion, None, "eve_exclusion"))

        # interference, with d_nr bounded by the tangent of the squared distance
        if R:
            n_p = np.repeat(np.arange(N), R)
            rows_p = np.arange(N * R)
            g_p = self.pri_lin_g.reshape(-1, 2)
            Jd = sp.csr_matrix(
                (
                    np.concatenate([np.ones(N * R), -2 * g_p[:, 0], -2 * g_p[:, 1]]),
                    (np.tile(rows_p, 3), np.concatenate([o_d + rows_p, 2 * n_p, 2 * n_p + 1])),
                ),
                shape=(N * R, n_dim),
            )
            d_const = -self.pri_lin_c.reshape(-1) + 2 * np.sum(g_p * self.qr[n_p], axis=1)

            def dslack(x, order=1):
                v = Jd @ x + d_const
                return v if order == 0 else (v, Jd)

            ineqs.append(Inequality(dslack, None, "primary_slack"))

            c_it = self.c_it  # (R, N)
            it_const = self.it_const

            def interference(x, order=1):
                with np.errstate(all="ignore"):
                    d = self.dt_of(x).T + 1.0  # (R, N)
                    v = np.sum(c_it / d, axis=1) / N + it_const
                    if order == 0:
                        return v
                    dd = -c_it / d**2 / N
                    J = np.zeros((R, n_dim))
                    for r in range(R):
                        J[r, o_d + np.arange(N) * R + r] = dd[r]
                    return v, J

            def interference_hess(x, w):
                d = self.dt_of(x).T + 1.0
                h = np.zeros(n_dim)
                vals = (w[:, None] * 2 * c_it / d**3 / N).T.reshape(-1)  # slot-major
                h[o_d:] = vals
                return sp.diags(h)

            ineqs.append(Inequality(interference, interference_hess, "interference"))

        # secrecy energy efficiency. The hinge makes [r]^+ >= r on any
        # subset of slots, so summing only slots with a positive rate at the
        # reference keeps an inner approximation that is tight there.
        total_p = float(np.sum(self.P))
        if scen.see_min > 0 and total_p > 0:
            psi_p = scen.see_min * total_p
            live = (self.slot_rates(self.binding_point(self.qr * self.L)) > 0).astype(float)
            live_blk = live[:, None, None]

            def see(x, order=1):
                with np.errstate(all="ignore"):
                    xi = self.xi_of(x)
                    z = self.zeta_of(x)
                    E, dE, _ = self._eve_term(xi)
                    r = self.const_z - np.sum(self.coef_z * z, axis=1) - E
                    v = np.array([psi_p - float(np.sum(live * r))])
                    if order == 0:
                        return v
                    g = np.zeros(n_dim)
                    g[o_z:o_x] = (live[:, None] * self.coef_z).reshape(-1)
                    g[o_x:o_d] = (live[:, None] * dE).reshape(-1)
                    return v, g[None, :]

            def see_hess(x, w):
                xi = self.xi_of(x)
                _, _, S = self._eve_term(xi)
                return xi_hess(xi, S, w[0] * live_blk)

            ineqs.append(Inequality(see, see_hess, "see"))

        # bounds
        lower = np.full(n_dim, -np.inf)
        lower[o_x:o_d] = XI_FLOOR_FRAC
        lower[o_d:] = DT_FLOOR_FRAC

        # endpoints
        A = np.zeros((4, n_dim))
        A[0, 0] = A[1, 1] = 1.0
        A[2, 2 * (N - 1)] = A[3, 2 * (N - 1) + 1] = 1.0
        b = np.concatenate([np.asarray(scen.q_start), np.asarray(scen.q_end)]) / self.L

        # speed
        cones = []
        step = scen.max_step / self.L
        for n in range(N - 1):
            rows_c = np.array([0, 0, 1, 1])
            cols_c = np.array([2 * (n + 1), 2 * n, 2 * (n + 1) + 1, 2 * n + 1])
            Ac = sp.csr_matrix((np.array([1.0, -1.0, 1.0, -1.0]), (rows_c, cols_c)), shape=(2, n_dim))
            cones.append(SecondOrderCone(Ac, np.zeros(2), None, step, f"speed_{n}"))

        return ConvexProgram(n_dim, objective, ineqs, lower, None, A, b, cones)

    # -- points ------------------------------------------------------------

    def binding_point(self, q, margin=0.0):
        """Decision vector at waypoints ``q`` (metres) with every slack binding.

        ``margin`` (in scaled units) pushes each slack strictly inside.
        """
        q = np.asarray(q, dtype=float) / self.L
        x = np.zeros(self.dim)
        x[: 2 * self.N] = q.reshape(-1)
        z = np.sum((q[:, None, :] - self.w_user[None]) ** 2, axis=-1) + 1.0
        x[self.o_z : self.o_x] = (z + margin).reshape(-1)
        u = q[:, None, :] - self.w_eve[None]
        s = np.sqrt(np.sum(u**2, axis=-1) + self.eps**2)
        lin = self.eve_lin_c - 2 * self.r_eve[None, :] * s + 2 * np.sum(
            self.eve_lin_g * (q[:, None, :] - self.qr[:, None, :]), axis=-1
        )
        x[self.o_x : self.o_d] = np.maximum(lin - margin, XI_FLOOR_FRAC + margin).reshape(-1)
        if self.R:
            lin_d = self.pri_lin_c + 2 * np.sum(self.pri_lin_g * (q[:, None, :] - self.qr[:, None, :]), axis=-1)
            x[self.o_d :] = np.maximum(lin_d - margin, DT_FLOOR_FRAC + margin).reshape(-1)
        return x

    def surrogate_objective(self, q):
        """(1/N) sum of the surrogate rate at ``q`` with binding slacks."""
        return float(np.mean(self.slot_rates(self.binding_point(q))))

    def waypoints(self, x):
        return self.q_of(x) * self.L


def build_trajectory_program(power: PowerProfile, q_ref: Trajectory, scen: Scenario):
    return TrajectoryProgram(power, q_ref, scen)


def _q_block_hess(Hq, n_dim):
    """Sparse matrix with per-slot 2x2 blocks on the q part of the vector."""
    N = len(Hq)
    base = 2 * np.arange(N)
    rows = np.concatenate([base, base, base + 1, base + 1])
    cols = np.concatenate([base, base + 1, base, base + 1])
    data = np.concatenate([Hq[:, 0, 0], Hq[:, 0, 1], Hq[:, 1, 0], Hq[:, 1, 1]])
    return sp.csr_matrix((data, (rows, cols)), shape=(n_dim, n_dim))


def _check_reference(q_ref: Trajectory, scen: Scenario):
    q = np.asarray(q_ref.points)
    d = np.linalg.norm(q[:, None, :] - scen.eve_xy[None], axis=-1)
    bad = d < scen.eve_radius[None, :]
    if np.any(bad):
        n, m = np.argwhere(bad)[0]
        raise ReferenceInfeasible(
            f"reference waypoint {n} lies {d[n, m]:.4g} m from eavesdropper {m}, inside its "
            f"{scen.eve_radius[m]:.4g} m uncertainty disc"
        )
    if np.linalg.norm(q[0] - scen.q_start) > TOL_EQ or np.linalg.norm(q[-1] - scen.q_end) > TOL_EQ:
        raise ReferenceInfeasible("reference trajectory does not start and end at the fixed endpoints")
    if len(q) > 1 and np.max(np.linalg.norm(np.diff(q, axis=0), axis=1)) > scen.max_step + TOL_FEAS:
        raise ReferenceInfeasible("reference trajectory exceeds the speed limit")


# ---------------------------------------------------------------------------
# exact per-trajectory evaluation used for acceptance of a step


def exact_unclamped_rates(q, P, scen: Scenario):
    a = legit_sinr_per_watt(q, scen)
    b = eve_snr_per_watt(q, scen)
    return (np.log1p(a * P) - np.log1p(b * P)) / LN2


def _trajectory_ok(q, P, scen: Scenario):
    """Exact feasibility of waypoints ``q`` for fixed power ``P``."""
    try:
        rates = exact_unclamped_rates(q, P, scen)
    except EveExclusionViolated:
        return False, None
    if np.linalg.norm(q[0] - scen.q_start) > TOL_EQ or np.linalg.norm(q[-1] - scen.q_end) > TOL_EQ:
        return False, None
    if len(q) > 1 and np.max(np.linalg.norm(np.diff(q, axis=0), axis=1)) > scen.max_step + TOL_FEAS:
        return False, None
    if scen.R:
        it = P @ primary_gain(q, scen) / len(P) + scen.jam_primaries
        finite = np.isfinite(scen.gamma)
        if np.any(it[finite] / scen.gamma[finite] - 1.0 > TOL_FEAS):
            return False, None
    r_sec = np.maximum(rates, 0.0)
    total = float(np.sum(P))
    if total > 0 and scen.see_min * total - float(np.sum(r_sec)) > TOL_FEAS:
        return False, None
    return True, float(np.mean(r_sec))


@dataclass
class TrajectoryResult:
    """Outcome of one trajectory step. Unpacks as ``(trajectory, obj)``."""

    trajectory: Trajectory
    obj: float
    report: Optional[SolverReport]
    retained_reference: bool = False
    shrink_steps: int = 0

    def __iter__(self):
        yield self.trajectory
        yield self.obj


def solve_trajectory(
    power: PowerProfile,
    q_ref: Trajectory,
    scen: Scenario,
    opts: Optional[SolverOptions] = None,
) -> TrajectoryResult:
    """One SCA step on the trajectory block.

    ``obj`` is the surrogate objective at the returned waypoints. The step is
    accepted only if the exact hinged average secrecy rate does not drop and
    every original constraint holds; otherwise the reference is returned.
    """
    prog = TrajectoryProgram(power, q_ref, scen)
    P = prog.P
    q0 = np.asarray(q_ref.points, dtype=float)
    ok_ref, exact_ref = _trajectory_ok(q0, P, scen)
    ref_obj = prog.surrogate_objective(q0)
    keep = TrajectoryResult(q_ref, ref_obj, None, True)

    if not np.any(P > 0):
        # no power, nothing to gain from moving
        return keep

    x0 = prog.binding_point(q0, margin=1e-9)
    report = solve(prog.program, x0, opts)
    keep.report = report
    if report.status == Status.NUMERICAL_FAILURE:
        raise SolverFailure("trajectory subproblem hit a numerical failure", report)
    if report.status == Status.INFEASIBLE:
        log.debug("trajectory program has no strict interior; keeping the reference")
        return keep

    q_new = prog.waypoints(report.x_opt)
    # pin the endpoints exactly; the solver leaves them within rounding
    q_new[0] = scen.q_start
    q_new[-1] = scen.q_end
    for k in range(MAX_SHRINK + 1):
        q_try = q0 + 0.5**k * (q_new - q0)
        ok, exact_new = _trajectory_ok(q_try, P, scen)
        if ok and (exact_ref is None or exact_new >= exact_ref - ASCENT_TOL):
            obj = prog.surrogate_objective(q_try)
            return TrajectoryResult(Trajectory(q_try), obj, report, False, k)
    if not ok_ref:
        raise ReferenceInfeasible("no acceptable trajectory step and the reference itself is infeasible")
    return keep
