"""Log-barrier interior-point solver for smooth concave maximisation.

A :class:`ConvexProgram` maximises a concave ``objective`` subject to

* blocks of smooth convex inequalities ``g(x) <= 0`` (:class:`Inequality`),
* per-variable bounds ``lower < x < upper``,
* second-order cones ``||A x + b|| <= c.x + d`` (:class:`SecondOrderCone`),
* linear equalities ``eq_matrix @ x == eq_rhs``.

Callbacks take an ``order`` argument so the line search can ask for values
only::

    objective(x, 0) -> value
    objective(x, 1) -> (value, grad)
    objective(x, 2) -> (value, grad, hess)

    inequality.fun(x, 0) -> values            # shape (m,)
    inequality.fun(x, 1) -> (values, jac)     # jac (m, n), dense or scipy.sparse
    inequality.hess(x, w) -> sum_i w_i * hess(g_i)   # None for affine blocks

Returning non-finite values signals "outside the domain"; the line search
backs off from such points.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
_FULL_STEP_DEC = 0.05  # lambda^2 / 2 below which full Newton steps are taken
_STALL_DEC = 1e-9


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class InfeasibleProgram(Exception):
    """Phase I could not find a strictly feasible point."""

    def __init__(self, message, min_violation=None):
        super().__init__(message)
        self.min_violation = min_violation


@dataclass
class Inequality:
    fun: Callable
    hess: Optional[Callable] = None
    name: str = ""


@dataclass
class SecondOrderCone:
    A: object
    b: np.ndarray
    c: Optional[np.ndarray]
    d: float
    name: str = ""


@dataclass
class ConvexProgram:
    dim: int
    objective: Callable
    inequalities: list = field(default_factory=list)
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    eq_matrix: Optional[np.ndarray] = None
    eq_rhs: Optional[np.ndarray] = None
    cones: list = field(default_factory=list)


@dataclass
class SolverOptions:
    tol_gap: float = 1e-7
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-6
    mu: float = 10.0
    t0: float = 1.0
    max_newton: int = 200
    max_stages: int = 60
    newton_tol: float = 1e-12
    armijo: float = 1e-4
    backtrack: float = 0.5


@dataclass
class SolverReport:
    x_opt: np.ndarray
    obj: float
    max_violation: float
    iterations: int
    status: Status
    kkt_residual: float = float("nan")
    gap: float = float("nan")
    phase1: bool = False
    # accepted barrier-objective values (t*f - phi) per stage, for auditing
    stage_values: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == Status.CONVERGED


# ---------------------------------------------------------------------------
# helpers


def _dense(m, n):
    if m is None:
        return np.zeros((n, n))
    if sp.issparse(m):
        return m.toarray()
    return np.asarray(m, dtype=float)


def _as_sparse(m):
    return m if sp.issparse(m) else sp.csr_matrix(np.atleast_2d(np.asarray(m, dtype=float)))


def _scatter(H, M):
    """Add a sparse or dense ``M`` into the dense matrix ``H`` in place."""
    if M is None:
        return
    if sp.issparse(M):
        c = M.tocoo()
        np.add.at(H, (c.row, c.col), c.data)
    else:
        H += np.asarray(M, dtype=float)


def _add_gram(H, J, w2):
    """H += J^T diag(w2) J for a sparse ``J`` without sparse products.

    Every pair of nonzeros sharing a row contributes one entry, which keeps
    the cost proportional to the sum of squared row lengths.
    """
    J = J.tocsr()
    J.sum_duplicates()
    indptr, indices, data = J.indptr, J.indices, J.data
    lengths = np.diff(indptr)
    row_of = np.repeat(np.arange(J.shape[0]), lengths)
    reps = lengths[row_of]
    a = np.repeat(np.arange(len(data)), reps)
    starts = np.cumsum(reps) - reps
    within = np.arange(len(a)) - np.repeat(starts, reps)
    b = indptr[row_of[a]] + within
    np.add.at(H, (indices[a], indices[b]), data[a] * data[b] * w2[row_of[a]])


class _Cones:
    """Second-order cones stored as small dense blocks over their support.

    Cones with the same shape (rows, support size) are stacked so the barrier
    and its derivatives are evaluated with a handful of array operations.
    """

    def __init__(self, cones, n):
        self.k = len(cones)
        self.groups = []
        if not self.k:
            return
        buckets = {}
        for cone in cones:
            A = _as_sparse(cone.A).tocsc()
            c = np.zeros(n) if cone.c is None else np.asarray(cone.c, dtype=float).reshape(-1)
            cols = np.union1d(np.flatnonzero(np.diff(A.indptr)), np.flatnonzero(c))
            Ad = A[:, cols].toarray()
            key = Ad.shape
            buckets.setdefault(key, []).append(
                (Ad, c[cols], np.asarray(cone.b, dtype=float).reshape(-1), float(cone.d), cols)
            )
        for items in buckets.values():
            self.groups.append(
                (
                    np.stack([it[0] for it in items]),
                    np.stack([it[1] for it in items]),
                    np.stack([it[2] for it in items]),
                    np.array([it[3] for it in items]),
                    np.stack([it[4] for it in items]),
                )
            )

    @staticmethod
    def _parts(group, x):
        A, c, b, d, cols = group
        xs = x[cols]
        U = np.einsum("krs,ks->kr", A, xs) + b
        S = np.einsum("ks,ks->k", c, xs) + d
        D = S * S - np.sum(U * U, axis=1)
        return U, S, D

    def parts(self, x):
        """Concatenated (S, D) over every cone."""
        out = [self._parts(g, x) for g in self.groups]
        return np.concatenate([o[1] for o in out]), np.concatenate([o[2] for o in out])

    def violation(self, x):
        out = []
        for g in self.groups:
            U, S, _ = self._parts(g, x)
            out.append(np.sqrt(np.sum(U * U, axis=1)) - S)
        return np.concatenate(out)

    def add_derivatives(self, x, G, H):
        """Add gradient and Hessian of -sum log D into G and H; returns -sum log D."""
        F = 0.0
        for g in self.groups:
            A, c, _b, _d, cols = g
            U, S, D = self._parts(g, x)
            F -= np.sum(np.log(D))
            gD = 2.0 * S[:, None] * c - 2.0 * np.einsum("krs,kr->ks", A, U)
            np.add.at(G, cols, -gD / D[:, None])
            hD = 2.0 * c[:, :, None] * c[:, None, :] - 2.0 * np.einsum("krs,krt->kst", A, A)
            blk = -hD / D[:, None, None] + gD[:, :, None] * gD[:, None, :] / (D * D)[:, None, None]
            np.add.at(H, (cols[:, :, None], cols[:, None, :]), blk)
        return F


class _Barrier:
    """Evaluates F_t(x) = -t f(x) + phi(x) and its derivatives."""

    def __init__(self, prog: ConvexProgram):
        self.prog = prog
        n = prog.dim
        self.n = n
        lo = np.full(n, -np.inf) if prog.lower is None else np.asarray(prog.lower, dtype=float)
        hi = np.full(n, np.inf) if prog.upper is None else np.asarray(prog.upper, dtype=float)
        self.lo, self.hi = lo, hi
        self.lo_idx = np.flatnonzero(np.isfinite(lo))
        self.hi_idx = np.flatnonzero(np.isfinite(hi))
        self.cones = _Cones(prog.cones, n)
        if prog.eq_matrix is not None and np.size(prog.eq_matrix):
            self.A = np.atleast_2d(np.asarray(prog.eq_matrix, dtype=float))
            self.b = np.asarray(prog.eq_rhs, dtype=float).reshape(-1)
        else:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self._m_ineq = None

    def barrier_param(self, x):
        if self._m_ineq is None:
            self._m_ineq = sum(len(np.atleast_1d(g.fun(x, 0))) for g in self.prog.inequalities)
        return self._m_ineq + len(self.lo_idx) + len(self.hi_idx) + 2 * self.cones.k

    def value(self, x, t):
        """F_t(x), or +inf outside the strict interior / objective domain."""
        with np.errstate(all="ignore"):
            phi = 0.0
            if len(self.lo_idx):
                s = x[self.lo_idx] - self.lo[self.lo_idx]
                if np.any(s <= 0):
                    return np.inf
                phi -= np.sum(np.log(s))
            if len(self.hi_idx):
                s = self.hi[self.hi_idx] - x[self.hi_idx]
                if np.any(s <= 0):
                    return np.inf
                phi -= np.sum(np.log(s))
            for g in self.prog.inequalities:
                v = np.atleast_1d(g.fun(x, 0))
                if not np.all(np.isfinite(v)) or np.any(v >= 0):
                    return np.inf
                phi -= np.sum(np.log(-v))
            if self.cones.k:
                S, D = self.cones.parts(x)
                if np.any(S <= 0) or np.any(D <= 0):
                    return np.inf
                phi -= np.sum(np.log(D))
            f = self.prog.objective(x, 0)
            if not np.isfinite(f):
                return np.inf
            return -t * f + phi

    def derivatives(self, x, t):
        """Return (F, grad F, hess F, f, grad f)."""
        n = self.n
        f, gf, Hf = self.prog.objective(x, 2)
        gf = np.asarray(gf, dtype=float)
        F = -t * f
        G = -t * gf
        H = np.zeros((n, n))
        _scatter(H, Hf)
        H *= -t
        diag = np.zeros(n)
        if len(self.lo_idx):
            i = self.lo_idx
            s = x[i] - self.lo[i]
            F -= np.sum(np.log(s))
            G[i] -= 1.0 / s
            diag[i] += 1.0 / s**2
        if len(self.hi_idx):
            i = self.hi_idx
            s = self.hi[i] - x[i]
            F -= np.sum(np.log(s))
            G[i] += 1.0 / s
            diag[i] += 1.0 / s**2
        for g in self.prog.inequalities:
            v, J = g.fun(x, 1)
            v = np.atleast_1d(np.asarray(v, dtype=float))
            w = 1.0 / (-v)
            F -= np.sum(np.log(-v))
            if sp.issparse(J):
                G += J.T @ w
                _add_gram(H, J, w * w)
            else:
                J = np.atleast_2d(np.asarray(J, dtype=float))
                G += J.T @ w
                H += (J.T * (w * w)) @ J
            if g.hess is not None:
                _scatter(H, g.hess(x, w))
        if self.cones.k:
            F += self.cones.add_derivatives(x, G, H)
        H[np.diag_indices(n)] += diag
        return F, G, H, f, gf

    def strictly_feasible(self, x):
        return np.isfinite(self.value(x, 0.0)) and self.eq_residual(x) <= 1e-9 * (
            1.0 + np.max(np.abs(self.b), initial=0.0)
        )

    def eq_residual(self, x):
        if not len(self.b):
            return 0.0
        return float(np.max(np.abs(self.A @ x - self.b)))

    def max_violation(self, x):
        viol = [self.eq_residual(x)]
        if len(self.lo_idx):
            viol.append(np.max(self.lo[self.lo_idx] - x[self.lo_idx]))
        if len(self.hi_idx):
            viol.append(np.max(x[self.hi_idx] - self.hi[self.hi_idx]))
        for g in self.prog.inequalities:
            v = np.atleast_1d(g.fun(x, 0))
            viol.append(np.max(v) if np.all(np.isfinite(v)) else np.inf)
        if self.cones.k:
            viol.append(np.max(self.cones.violation(x)))
        return max(0.0, float(max(viol)))

    def project_eq(self, x):
        if not len(self.b):
            return x
        r = self.b - self.A @ x
        return x + np.linalg.lstsq(self.A, r, rcond=None)[0]


def _newton_step(H, G, A):
    """Solve the (equality-constrained) Newton system; returns dx.

    The Hessian is Jacobi-scaled and factored by Cholesky, with equalities
    eliminated through the Schur complement. A symmetric-indefinite solve of
    the full KKT matrix is the fallback when the Hessian is not numerically
    positive definite.
    """
    n = len(G)
    m = A.shape[0]
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Ds = 1.0 / d
    Hs = H * Ds[:, None] * Ds[None, :]
    Gs = G * Ds
    try:
        factor = scipy.linalg.cho_factor(Hs, lower=True, check_finite=False)
        y = scipy.linalg.cho_solve(factor, Gs, check_finite=False)
        if m:
            As = A * Ds[None, :]
            Z = scipy.linalg.cho_solve(factor, As.T, check_finite=False)
            nu = np.linalg.solve(As @ Z, -(As @ y))
            dxs = -(y + Z @ nu)
        else:
            dxs = -y
        if np.all(np.isfinite(dxs)):
            return dxs * Ds
    except (np.linalg.LinAlgError, ValueError):
        pass
    scale = max(1.0, float(np.max(np.abs(np.diag(Hs)))))
    K = np.zeros((n + m, n + m))
    K[:n, :n] = Hs
    K[:n, :n][np.diag_indices(n)] += 1e-14 * scale
    if m:
        K[:n, n:] = (A * Ds[None, :]).T
        K[n:, :n] = A * Ds[None, :]
    rhs = np.concatenate([-Gs, np.zeros(m)])
    try:
        with warnings.catch_warnings():
            # barrier Hessians are ill-conditioned by design near the boundary
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(K, rhs, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n] * Ds


def _default_start(bar: _Barrier):
    lo, hi = bar.lo, bar.hi
    x = np.zeros(bar.n)
    both = np.isfinite(lo) & np.isfinite(hi)
    x[both] = 0.5 * (lo[both] + hi[both])
    only_lo = np.isfinite(lo) & ~np.isfinite(hi)
    x[only_lo] = lo[only_lo] + 1.0
    only_hi = ~np.isfinite(lo) & np.isfinite(hi)
    x[only_hi] = hi[only_hi] - 1.0
    return x


def _barrier_method(bar: _Barrier, x, opts: SolverOptions, stop=None):
    """Run the barrier outer loop from a strictly feasible ``x``.

    ``stop(x)`` may end the run early (used by phase I). Returns
    (x, t, iterations, stage_values, centred, failure).
    """
    t = opts.t0
    m = max(bar.barrier_param(x), 1)
    iterations = 0
    stage_values = []
    centred = False
    for _stage in range(opts.max_stages):
        values = []
        centred = False
        prev_dec = np.inf
        for _ in range(opts.max_newton):
            F, G, H, f, _gf = bar.derivatives(x, t)
            if not (np.isfinite(F) and np.all(np.isfinite(G)) and np.all(np.isfinite(H))):
                return x, t, iterations, stage_values, False, "non-finite derivatives"
            values.append(-F)
            dx = _newton_step(H, G, bar.A)
            if not np.all(np.isfinite(dx)):
                return x, t, iterations, stage_values, False, "non-finite Newton step"
            slope = float(G @ dx)
            dec = -slope / 2.0
            if dec <= opts.newton_tol:
                centred = True
                log.debug("t=%.3g centred: decrement %.3g", t, dec)
                break
            if slope >= 0 or np.all(np.abs(dx) <= 4 * _EPS * np.abs(x)):
                # numerically flat or a step below rounding; centred as far as doubles allow
                centred = True
                log.debug("t=%.3g centred: flat step (decrement %.3g)", t, dec)
                break
            if dec < _STALL_DEC and dec > 0.25 * prev_dec:
                # quadratic convergence has stopped: rounding floor reached
                centred = True
                log.debug("t=%.3g centred: stalled at decrement %.3g", t, dec)
                break
            prev_dec = dec
            if dec < _FULL_STEP_DEC and np.isfinite(bar.value(x + dx, t)):
                # inside the quadratic-convergence region the full step is taken;
                # F itself may be too large to resolve the decrease
                x = x + dx
                iterations += 1
                if stop is not None and stop(x):
                    stage_values.append(values)
                    return x, t, iterations, stage_values, centred, None
                continue
            # F is only known to a few ulps, so Armijo gets matching slack
            slack = 16 * _EPS * (1.0 + abs(F))
            step = 1.0
            accepted = False
            while step > 1e-20:
                x_new = x + step * dx
                F_new = bar.value(x_new, t)
                if np.isfinite(F_new) and F_new <= F + opts.armijo * step * slope + slack:
                    accepted = True
                    break
                step *= opts.backtrack
            iterations += 1
            if not accepted:
                centred = True
                log.debug("t=%.3g centred: line search failed at decrement %.3g", t, dec)
                break
            x = x_new
            if stop is not None and stop(x):
                # phase I only needs any strictly feasible point
                stage_values.append(values)
                return x, t, iterations, stage_values, centred, None
        stage_values.append(values)
        if stop is not None and stop(x):
            return x, t, iterations, stage_values, centred, None
        if m / t <= opts.tol_gap:
            break
        t *= opts.mu
    return x, t, iterations, stage_values, centred, None


def _kkt_residual(bar: _Barrier, x, t):
    _F, G, _H, _f, gf = bar.derivatives(x, t)
    r = -G / t
    if len(bar.b):
        nu = np.linalg.lstsq(bar.A.T, r, rcond=None)[0]
        r = r - bar.A.T @ nu
    return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(gf))))


# ---------------------------------------------------------------------------
# phase I


def _phase1_program(prog: ConvexProgram, bar: _Barrier, s_floor, hard_box=False):
    n = prog.dim

    def objective(y, order=2):
        if order == 0:
            return -y[n]
        g = np.zeros(n + 1)
        g[n] = -1.0
        if order == 1:
            return -y[n], g
        return -y[n], g, None

    ineqs = []
    for ineq in prog.inequalities:
        ineqs.append(_shifted(ineq, n))

    lo_idx, hi_idx = bar.lo_idx, bar.hi_idx
    if not hard_box and (len(lo_idx) or len(hi_idx)):
        rows = []
        rhs = []
        for i in lo_idx:
            r = np.zeros(n + 1)
            r[i] = -1.0
            r[n] = -1.0
            rows.append(r)
            rhs.append(bar.lo[i])
        for i in hi_idx:
            r = np.zeros(n + 1)
            r[i] = 1.0
            r[n] = -1.0
            rows.append(r)
            rhs.append(-bar.hi[i])
        L = sp.csr_matrix(np.array(rows))
        c0 = np.array(rhs)

        def box(y, order=1, L=L, c0=c0):
            v = L @ y + c0
            return v if order == 0 else (v, L)

        ineqs.append(Inequality(box, None, "box"))

    cones = []
    for cone in prog.cones:
        A = _as_sparse(cone.A)
        A1 = sp.hstack([A, sp.csr_matrix((A.shape[0], 1))]).tocsr()
        c = np.zeros(n) if cone.c is None else np.asarray(cone.c, dtype=float)
        cones.append(SecondOrderCone(A1, cone.b, np.append(c, 1.0), cone.d, cone.name))

    lower = np.full(n + 1, -np.inf)
    upper = None
    if hard_box:
        lower[:n] = bar.lo
        upper = np.append(bar.hi, np.inf)
    lower[n] = s_floor
    A = None if not len(bar.b) else np.hstack([bar.A, np.zeros((bar.A.shape[0], 1))])
    return ConvexProgram(n + 1, objective, ineqs, lower, upper, A, bar.b if len(bar.b) else None, cones)


def _shifted(ineq: Inequality, n):
    def fun(y, order=1):
        x = y[:n]
        if order == 0:
            return np.atleast_1d(ineq.fun(x, 0)) - y[n]
        v, J = ineq.fun(x, 1)
        v = np.atleast_1d(v)
        col = -np.ones((len(v), 1))
        if sp.issparse(J):
            J1 = sp.hstack([J, sp.csr_matrix(col)]).tocsr()
        else:
            J1 = np.hstack([np.atleast_2d(J), col])
        return v - y[n], J1

    def hess(y, w):
        Hx = ineq.hess(y[:n], w)
        if sp.issparse(Hx):
            c = Hx.tocoo()
            return sp.coo_matrix((c.data, (c.row, c.col)), shape=(n + 1, n + 1))
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = _dense(Hx, n)
        return out

    return Inequality(fun, hess if ineq.hess is not None else None, ineq.name)


def phase1_feasible_point(prog: ConvexProgram, x0=None, opts: Optional[SolverOptions] = None):
    """Return a strictly feasible point of ``prog`` or raise :class:`InfeasibleProgram`."""
    opts = opts or SolverOptions()
    bar = _Barrier(prog)
    x = _default_start(bar) if x0 is None else np.array(x0, dtype=float)
    x = bar.project_eq(x)
    if bar.strictly_feasible(x):
        return x

    viol = bar.max_violation(x)
    if not np.isfinite(viol):
        raise InfeasibleProgram("starting point lies outside a constraint's domain")
    s0 = viol + 1.0
    s_floor = -1.0
    y = np.append(x, s0)
    # bounds often guard function domains, so keep them hard when the start
    # already respects them
    lo_ok = np.all(x[bar.lo_idx] > bar.lo[bar.lo_idx])
    hi_ok = np.all(x[bar.hi_idx] < bar.hi[bar.hi_idx])
    p1 = _phase1_program(prog, bar, s_floor, hard_box=bool(lo_ok and hi_ok))
    bar1 = _Barrier(p1)
    if not bar1.strictly_feasible(y):
        raise InfeasibleProgram("could not build a phase-I starting point")

    n = prog.dim

    def stop(y):
        return y[n] < 0 and bar.strictly_feasible(y[:n])

    y, t, _it, _sv, _c, failure = _barrier_method(bar1, y, opts, stop=stop)
    if failure:
        raise InfeasibleProgram(f"phase I failed: {failure}")
    if y[n] < 0 and bar.strictly_feasible(y[:n]):
        return y[:n]
    raise InfeasibleProgram(
        f"no strictly feasible point (minimum max-violation {y[n]:.3g})", min_violation=float(y[n])
    )


# ---------------------------------------------------------------------------
# main entry


def solve(prog: ConvexProgram, x0=None, opts: Optional[SolverOptions] = None) -> SolverReport:
    """Maximise ``prog.objective`` with the log-barrier method.

    Infeasibility and numerical breakdown are reported through
    :attr:`SolverReport.status` rather than raised.
    """
    opts = opts or SolverOptions()
    bar = _Barrier(prog)
    x = _default_start(bar) if x0 is None else np.array(x0, dtype=float)
    used_phase1 = False
    if not bar.strictly_feasible(x):
        used_phase1 = True
        try:
            x = phase1_feasible_point(prog, x, opts)
        except InfeasibleProgram as exc:
            log.debug("phase I failed: %s", exc)
            return SolverReport(x, float("nan"), bar.max_violation(x), 0, Status.INFEASIBLE, phase1=True)

    if not np.isfinite(prog.objective(x, 0)):
        return SolverReport(x, float("nan"), bar.max_violation(x), 0, Status.NUMERICAL_FAILURE, phase1=used_phase1)

    x, t, iterations, stage_values, centred, failure = _barrier_method(bar, x, opts)
    obj = float(prog.objective(x, 0))
    viol = bar.max_violation(x)
    m = max(bar.barrier_param(x), 1)
    gap = m / t
    if failure or not np.isfinite(obj):
        return SolverReport(
            x, obj, viol, iterations, Status.NUMERICAL_FAILURE, gap=gap, phase1=used_phase1,
            stage_values=stage_values,
        )
    kkt = _kkt_residual(bar, x, t)
    ok = gap <= opts.tol_gap and viol <= opts.tol_feas and kkt <= opts.tol_kkt and centred
    status = Status.CONVERGED if ok else Status.MAX_ITER
    return SolverReport(x, obj, viol, iterations, status, kkt, gap, used_phase1, stage_values)


def gradient_error(fun, x, step_scale=1e-6):
    """Relative Frobenius error between an analytic derivative and central differences.

    ``fun(x, 1)`` must return ``(value, derivative)`` where value is a scalar
    (derivative a gradient) or a vector (derivative a Jacobian).
    """
    x = np.asarray(x, dtype=float)
    _, d = fun(x, 1)
    d = d.toarray() if sp.issparse(d) else np.asarray(d, dtype=float)
    cols = []
    for i in range(len(x)):
        h = step_scale * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(fun(xp, 0), dtype=float) - np.asarray(fun(xm, 0), dtype=float)) / (2 * h))
    fd = np.stack(cols, axis=-1)
    d = d.reshape(fd.shape)
    denom = max(np.linalg.norm(d), np.linalg.norm(fd), 1e-300)
    return float(np.linalg.norm(d - fd) / denom)
