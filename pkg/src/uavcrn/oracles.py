"""Brute-force and Monte-Carlo oracles.

The rate and interference formulas here are written out again on purpose
rather than imported from :mod:`uavcrn.model`, so a shared mistake cannot
make an oracle agree with the code it checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import PowerProfile, Scenario, Trajectory

DEFAULT_SEED = 0xC0FFEE


@dataclass(frozen=True)
class FadingSampler:
    """Unit-mean exponential fading draws, reproducible per (seed, stream)."""

    seed: int = DEFAULT_SEED

    def generator(self, stream=0):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, stream])))

    def draw(self, shape, stream=0):
        return self.generator(stream).exponential(1.0, size=shape)


# ---------------------------------------------------------------------------
# independent primitives


def _dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _a2g(q, w, scen):
    return scen.radio.beta0 / (_dist(q, w) ** 2 + scen.altitude**2)


def _ground_worst(w, eve, scen):
    return scen.radio.beta0 * abs(_dist(w, eve.w_hat) - eve.radius) ** (-scen.radio.alpha)


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# Monte-Carlo


def mc_rate_estimate(q, p, scen: Scenario, samples=100_000, seed=DEFAULT_SEED):
    """Fading-averaged CoMP/MRC rate of the cognitive users.

    Jamming links use the worst-case ground distances with unit-mean
    exponential fading; returns ``(mean, stderr)`` in bits/s/Hz.
    """
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    q = (float(q[0]), float(q[1]))
    K, M = len(scen.users), len(scen.eves)
    sig = np.array([p * _a2g(q, w, scen) for w in scen.users])
    jam = np.array([[scen.radio.pe * _ground_worst(w, e, scen) for e in scen.eves] for w in scen.users])
    if scen.radio.pe == 0:
        sinr = np.sum(sig / scen.radio.sigma2)
        return float(np.log2(1.0 + sinr)), 0.0
    xi = FadingSampler(seed).draw((samples, K, M), stream=1)
    interference = np.einsum("skm,km->sk", xi, jam) + scen.radio.sigma2
    rates = np.log2(1.0 + np.sum(sig[None, :] / interference, axis=1))
    return _mean_stderr(rates)


def mc_interference_estimate(q, p, scen: Scenario, r_index, samples=100_000, seed=DEFAULT_SEED):
    """Fading-averaged interference at primary ``r_index``; ``(mean, stderr)`` in Watts."""
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    q = (float(q[0]), float(q[1]))
    w = scen.primaries[r_index]
    direct = p * _a2g(q, w, scen)
    jam = np.array([scen.radio.pe * _ground_worst(w, e, scen) for e in scen.eves])
    if scen.radio.pe == 0:
        return direct, 0.0
    xi = FadingSampler(seed).draw((samples, len(scen.eves)), stream=2 + r_index)
    return _mean_stderr(direct + xi @ jam)


# ---------------------------------------------------------------------------
# grid oracles


def _snr_coeffs(points, scen: Scenario):
    """Legitimate and eavesdropper SNR per Watt for each waypoint."""
    a, b = [], []
    for q in points:
        q = (float(q[0]), float(q[1]))
        acc = 0.0
        for w in scen.users:
            jam = sum(scen.radio.pe * _ground_worst(w, e, scen) for e in scen.eves)
            acc += _a2g(q, w, scen) / (jam + scen.radio.sigma2)
        a.append(acc)
        acc = 0.0
        for e in scen.eves:
            d = _dist(q, e.w_hat) - e.radius
            acc += scen.radio.beta0 / (d * d + scen.altitude**2) / scen.radio.sigma2
        b.append(acc)
    return np.array(a), np.array(b)


@dataclass(frozen=True)
class GridPowerResult:
    best_p: object  # ndarray, or None when the grid has no feasible point
    best_obj: float
    grid_step: float
    lipschitz: float

    @property
    def feasible(self):
        return self.best_p is not None

    @property
    def resolution(self):
        """Upper bound on how far the continuous optimum can sit above ``best_obj``."""
        return self.lipschitz * self.grid_step


def grid_oracle_power(traj: Trajectory, scen: Scenario, p_ref: PowerProfile, grid_pts=200):
    """Exhaustive search of the surrogate power program on a per-slot grid.

    Slot ``n`` is gridded uniformly on ``[0, u_n]``. ``u_n`` is the smallest
    of ``p_max``, the largest power any single interference threshold allows
    in that slot with the other slots silent, and the power beyond which the
    slot's surrogate must decrease. The box therefore always holds an optimum.
    """
    pts = np.asarray(traj.points, dtype=float)
    N = len(pts)
    a, b = _snr_coeffs(pts, scen)
    pr = np.asarray(p_ref.powers, dtype=float)
    ln2 = math.log(2.0)

    gains = np.array([[_a2g(tuple(q), w, scen) for w in scen.primaries] for q in pts]).reshape(N, -1)
    jam = np.array(
        [sum(scen.radio.pe * _ground_worst(w, e, scen) for e in scen.eves) for w in scen.primaries]
    )
    gam = np.array(scen.gamma_it, dtype=float)
    active_it = np.isfinite(gam)
    if np.any(jam[active_it] > gam[active_it]):
        return GridPowerResult(None, -math.inf, math.nan, math.nan)

    upper = np.full(N, scen.p_max)
    for r in np.flatnonzero(active_it):
        upper = np.minimum(upper, N * (gam[r] - jam[r]) / gains[:, r])
    # the surrogate slope (a / (1 + a p) - c) / ln2 is negative for p > 1/c,
    # and more power there only tightens the coupling constraints
    slope = b / (1.0 + b * pr)
    with np.errstate(divide="ignore"):
        upper = np.minimum(upper, np.where(slope > 0, 1.0 / slope, np.inf))
    grids = np.stack([np.linspace(0.0, u, grid_pts) for u in upper])  # (N, G)
    step = float(np.max(upper)) / (grid_pts - 1) if grid_pts > 1 else float(np.max(upper))

    def sur(p, n):
        return (
            np.log2(1.0 + a[n] * p)
            - np.log2(1.0 + b[n] * pr[n])
            - b[n] * (p - pr[n]) / (ln2 * (1.0 + b[n] * pr[n]))
        )

    table = np.stack([sur(grids[n], n) for n in range(N)])  # (N, G)
    lip = float(np.max(np.abs(a - b / (1 + b * pr))) / ln2) / N

    coupled = scen.see_min > 0 or np.any(active_it)
    if not coupled:
        idx = np.argmax(table, axis=1)
        best = grids[np.arange(N), idx]
        return GridPowerResult(best, float(np.sum(table[np.arange(N), idx]) / N), step, lip)

    if N > 4:
        raise ValueError("coupled grid search is limited to N <= 4")
    best_obj, best_p = -math.inf, None
    # enumerate the first N-1 coordinates as a product, vectorise the last
    for head in itertools.product(range(grid_pts), repeat=N - 1):
        head = list(head)
        p_all = np.empty((grid_pts, N))
        p_all[:, : N - 1] = grids[np.arange(N - 1), head]
        p_all[:, N - 1] = grids[N - 1]
        vals = table[np.arange(N - 1), head].sum() + table[N - 1]
        ok = np.ones(grid_pts, dtype=bool)
        if np.any(active_it):
            load = p_all @ gains[:, active_it] / N + jam[active_it]
            ok &= np.all(load <= gam[active_it], axis=1)
        if scen.see_min > 0:
            ok &= vals >= scen.see_min * p_all.sum(axis=1)
        if np.any(ok):
            j = int(np.argmax(np.where(ok, vals, -np.inf)))
            if vals[j] / N > best_obj:
                best_obj, best_p = float(vals[j] / N), p_all[j].copy()
    return GridPowerResult(best_p, best_obj, step, lip)


@dataclass(frozen=True)
class GridSlotResult:
    best_points: list
    best_value: float
    spacing: float


def grid_oracle_trajectory_slot(power_n, scen: Scenario, slot_n, grid, rtol=1e-12):
    """Best lattice point for the exact hinged secrecy rate of one slot.

    ``grid`` is ``(x_min, x_max, y_min, y_max, spacing)``. Points inside an
    uncertainty disc are skipped. Every point within ``rtol`` of the maximum
    is returned so symmetric layouts report all mirror images. ``slot_n`` is
    recorded only for the caller's bookkeeping; motion constraints are ignored.
    """
    x0, x1, y0, y1, h = grid
    xs = np.arange(x0, x1 + 0.5 * h, h)
    ys = np.arange(y0, y1 + 0.5 * h, h)
    best, pts = -math.inf, []
    for x in xs:
        for y in ys:
            q = (float(x), float(y))
            if any(_dist(q, e.w_hat) < e.radius for e in scen.eves):
                continue
            a, b = _snr_coeffs([q], scen)
            v = max(0.0, math.log2(1.0 + a[0] * power_n) - math.log2(1.0 + b[0] * power_n))
            tol = rtol * abs(best) if math.isfinite(best) else 0.0
            if v > best + tol:
                best, pts = v, [q]
            elif abs(v - best) <= tol:
                pts.append(q)
    return GridSlotResult(pts, best, float(h))
