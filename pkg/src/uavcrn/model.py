"""Domain types and closed-form channel / rate expressions.

All quantities are linear SI: metres, seconds, Watts. Rates are per Hz
(bits/s/Hz), so the secrecy energy efficiency is in bits/s/Hz per Watt.

Positions are 2-D horizontal coordinates; the UAV flies at a constant
altitude ``H`` above the ground plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DegenerateDistance, EveExclusionViolated, ValidationError

EPS_DIST = 1e-6  # m, guard on |d_hat - r| denominators
TOL_EQ = 1e-6  # m, endpoint equality
TOL_FEAS = 1e-6  # constraint residuals
TOL_NUM = 1e-9  # relative, recomputation checks


def _point(v, key):
    v = tuple(float(c) for c in v)
    if len(v) != 2 or not all(math.isfinite(c) for c in v):
        raise ValidationError(key, f"expected a finite 2-D point, got {v!r}")
    return v


@dataclass(frozen=True)
class RadioConstants:
    """Propagation constants shared by every link.

    ``beta0`` is the channel power gain at 1 m, ``sigma2`` the AWGN power,
    ``alpha`` the ground-to-ground path-loss exponent and ``pe`` the jamming
    power every full-duplex eavesdropper transmits.
    """

    beta0: float
    sigma2: float
    alpha: float
    pe: float

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValidationError("beta0", f"must be > 0, got {self.beta0}")
        if not self.sigma2 > 0:
            raise ValidationError("sigma2", f"must be > 0, got {self.sigma2}")
        if not self.alpha > 2:
            raise ValidationError("alpha", f"must be > 2, got {self.alpha}")
        if not self.pe >= 0:
            raise ValidationError("pe", f"must be >= 0, got {self.pe}")

    @property
    def rho0(self):
        return self.beta0 / self.sigma2


@dataclass(frozen=True)
class Eavesdropper:
    w_hat: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "w_hat", _point(self.w_hat, "eves.w_hat"))
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValidationError("eves.radius", f"must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    Reachability of ``q_end`` from ``q_start`` is deliberately not a
    construction-time check; :func:`uavcrn.bcd.initialize` reports it as an
    infeasible scenario instead.
    """

    users: tuple
    primaries: tuple
    eves: tuple
    altitude: float
    q_start: tuple
    q_end: tuple
    n_slots: int
    slot_len: float
    v_max: float
    p_max: float
    gamma_it: tuple
    see_min: float
    radio: RadioConstants

    def __post_init__(self):
        users = tuple(_point(u, "users") for u in self.users)
        primaries = tuple(_point(u, "primaries") for u in self.primaries)
        eves = tuple(e if isinstance(e, Eavesdropper) else Eavesdropper(*e) for e in self.eves)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "primaries", primaries)
        object.__setattr__(self, "eves", eves)
        object.__setattr__(self, "q_start", _point(self.q_start, "q_start"))
        object.__setattr__(self, "q_end", _point(self.q_end, "q_end"))

        gamma = self.gamma_it
        if np.ndim(gamma) == 0:
            gamma = (gamma,) * len(primaries)
        gamma = tuple(float(g) for g in gamma)
        object.__setattr__(self, "gamma_it", gamma)

        if len(users) < 1:
            raise ValidationError("users", "need at least one cognitive user")
        if len(eves) < 1:
            raise ValidationError("eves", "need at least one eavesdropper")
        if len(gamma) != len(primaries):
            raise ValidationError(
                "gamma_it", f"expected {len(primaries)} thresholds, got {len(gamma)}"
            )
        if any(not g > 0 for g in gamma):
            raise ValidationError("gamma_it", f"thresholds must be > 0, got {gamma}")
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ValidationError("n_slots", f"must be an integer >= 1, got {self.n_slots}")
        object.__setattr__(self, "n_slots", int(self.n_slots))
        for key in ("altitude", "slot_len", "v_max", "p_max"):
            v = getattr(self, key)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(key, f"must be finite and > 0, got {v}")
        if not (self.see_min >= 0 and math.isfinite(self.see_min)):
            raise ValidationError("see_min", f"must be finite and >= 0, got {self.see_min}")

    # -- array views -------------------------------------------------------

    @cached_property
    def user_xy(self):
        return _frozen(np.array(self.users, dtype=float).reshape(-1, 2))

    @cached_property
    def primary_xy(self):
        return _frozen(np.array(self.primaries, dtype=float).reshape(-1, 2))

    @cached_property
    def eve_xy(self):
        return _frozen(np.array([e.w_hat for e in self.eves], dtype=float).reshape(-1, 2))

    @cached_property
    def eve_radius(self):
        return _frozen(np.array([e.radius for e in self.eves], dtype=float))

    @cached_property
    def gamma(self):
        return _frozen(np.array(self.gamma_it, dtype=float))

    @property
    def K(self):
        return len(self.users)

    @property
    def R(self):
        return len(self.primaries)

    @property
    def M(self):
        return len(self.eves)

    @property
    def N(self):
        return self.n_slots

    @property
    def max_step(self):
        """Longest distance the UAV may cover between consecutive waypoints."""
        return self.v_max * self.slot_len

    @property
    def is_reachable(self):
        gap = math.dist(self.q_start, self.q_end)
        return gap <= (self.n_slots - 1) * self.max_step + TOL_EQ

    # -- constant jamming terms (memoised) --------------------------------

    @cached_property
    def jam_users(self):
        """Mean jamming power received by each cognitive user, beta0*P_E*sum_m A_km^-alpha."""
        out = np.zeros(self.K)
        for k, w in enumerate(self.users):
            out[k] = self.radio.pe * sum(
                worst_case_g2g_gain_coeff(w, e, self.radio) for e in self.eves
            )
        return _frozen(out)

    @cached_property
    def jam_primaries(self):
        """Jamming interference bound at each primary user (second term of I_r)."""
        out = np.zeros(self.R)
        for r, w in enumerate(self.primaries):
            out[r] = self.radio.pe * sum(
                worst_case_g2g_gain_coeff(w, e, self.radio) for e in self.eves
            )
        return _frozen(out)

    def with_gamma(self, gamma):
        return replace(self, gamma_it=gamma)


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self):
        return len(self.points)

    @classmethod
    def straight_line(cls, scen: Scenario):
        t = np.linspace(0.0, 1.0, scen.n_slots)[:, None] if scen.n_slots > 1 else np.zeros((1, 1))
        a = np.asarray(scen.q_start)
        b = np.asarray(scen.q_end)
        return cls(a + t * (b - a))


@dataclass(frozen=True, eq=False)
class PowerProfile:
    powers: np.ndarray

    def __post_init__(self):
        p = np.array(self.powers, dtype=float).reshape(-1)
        object.__setattr__(self, "powers", _frozen(p))

    def __len__(self):
        return len(self.powers)

    @classmethod
    def uniform(cls, scen: Scenario, value):
        return cls(np.full(scen.n_slots, float(value)))


@dataclass(frozen=True)
class SlotDiagnostics:
    rate_legit_lb: float
    rate_eve: float
    rate_secrecy: float
    interference: tuple


@dataclass(frozen=True, eq=False)
class Solution:
    """Evaluated (trajectory, power) pair.

    ``see`` is ``None`` when the total transmit power is zero; the efficiency
    is undefined there and the SEE constraint counts as satisfied.
    """

    trajectory: Trajectory
    power: PowerProfile
    per_slot: tuple
    wasr: float
    see: Optional[float]

    @property
    def secrecy_rates(self):
        return np.array([s.rate_secrecy for s in self.per_slot])

    @property
    def mean_interference(self):
        if not self.per_slot or not self.per_slot[0].interference:
            return np.zeros(0)
        return np.mean([s.interference for s in self.per_slot], axis=0)


# ---------------------------------------------------------------------------
# channels


def a2g_gain(q, w, H, radio: RadioConstants):
    """LoS air-to-ground power gain beta0 / (||q - w||^2 + H^2).

    Broadcasts over leading axes of ``q`` and ``w``.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    d2 = np.sum((q - w) ** 2, axis=-1)
    g = radio.beta0 / (d2 + H * H)
    return float(g) if np.ndim(g) == 0 else g


def _check_exclusion(d, radius, index):
    bad = np.asarray(d < radius)
    if bad.any():
        dist = float(np.asarray(d)[bad].flat[0])
        raise EveExclusionViolated(index, dist, radius)


def worst_case_eve_gain(q, eve: Eavesdropper, H, radio: RadioConstants, index=0):
    """Largest A2G gain to an eavesdropper anywhere within its uncertainty disc."""
    q = np.asarray(q, dtype=float)
    d = np.sqrt(np.sum((q - np.asarray(eve.w_hat)) ** 2, axis=-1))
    _check_exclusion(d, eve.radius, index)
    g = radio.beta0 / ((d - eve.radius) ** 2 + H * H)
    return float(g) if np.ndim(g) == 0 else g


def worst_case_g2g_gain_coeff(w_d, eve: Eavesdropper, radio: RadioConstants):
    """Mean worst-case ground-to-ground gain beta0 * |d_hat - r|^-alpha."""
    a = abs(math.dist(tuple(w_d), eve.w_hat) - eve.radius)
    if a <= EPS_DIST:
        raise DegenerateDistance(
            f"uncertainty disc of eavesdropper at {eve.w_hat} (r={eve.radius}) touches node {tuple(w_d)}"
        )
    return radio.beta0 * a ** (-radio.alpha)


# ---------------------------------------------------------------------------
# per-Watt SNR coefficients (vectorised over waypoints)


def legit_sinr_per_watt(points, scen: Scenario):
    """Sum over users of h_SDk / (jamming_k + sigma^2), i.e. A_n for every waypoint."""
    pts = np.asarray(points, dtype=float)
    H = scen.altitude
    d2 = np.sum((pts[..., None, :] - scen.user_xy) ** 2, axis=-1)
    h = scen.radio.beta0 / (d2 + H * H)
    return np.sum(h / (scen.jam_users + scen.radio.sigma2), axis=-1)


def eve_snr_per_watt(points, scen: Scenario):
    """Sum over eavesdroppers of worst-case h_SEm / sigma^2, i.e. B_n for every waypoint."""
    pts = np.asarray(points, dtype=float)
    H = scen.altitude
    d = np.sqrt(np.sum((pts[..., None, :] - scen.eve_xy) ** 2, axis=-1))
    for m, e in enumerate(scen.eves):
        _check_exclusion(d[..., m], e.radius, m)
    h = scen.radio.beta0 / ((d - scen.eve_radius) ** 2 + H * H)
    return np.sum(h, axis=-1) / scen.radio.sigma2


def primary_gain(points, scen: Scenario):
    """A2G gains to every primary user, shape (..., R)."""
    pts = np.asarray(points, dtype=float)
    d2 = np.sum((pts[..., None, :] - scen.primary_xy) ** 2, axis=-1)
    return scen.radio.beta0 / (d2 + scen.altitude**2)


# ---------------------------------------------------------------------------
# rates


def legit_rate_lb(q, p, scen: Scenario):
    """Jensen lower bound on the CoMP/MRC rate of the cognitive users."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("transmit power must be >= 0")
    return np.log2(1.0 + p * legit_sinr_per_watt(q, scen))


def eve_rate(q, p, scen: Scenario):
    """Rate of the colluding eavesdroppers at their worst-case positions."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("transmit power must be >= 0")
    return np.log2(1.0 + p * eve_snr_per_watt(q, scen))


def secrecy_rate(q, p, scen: Scenario):
    return np.maximum(0.0, legit_rate_lb(q, p, scen) - eve_rate(q, p, scen))


def interference_bound(q, p, scen: Scenario, r_index):
    """Upper bound on the interference at primary ``r_index`` (UAV + mean jamming)."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("transmit power must be >= 0")
    h = a2g_gain(q, scen.primaries[r_index], scen.altitude, scen.radio)
    return p * h + scen.jam_primaries[r_index]


# ---------------------------------------------------------------------------
# solution evaluation


def evaluate_solution(traj: Trajectory, power: PowerProfile, scen: Scenario) -> Solution:
    N = scen.n_slots
    if len(traj) != N or len(power) != N:
        raise ValueError(
            f"trajectory has {len(traj)} points and power {len(power)} entries; scenario needs {N}"
        )
    p = power.powers
    if np.any(p < 0):
        raise ValueError("transmit power must be >= 0")
    q = traj.points
    r_legit = np.log2(1.0 + p * legit_sinr_per_watt(q, scen))
    r_eve = np.log2(1.0 + p * eve_snr_per_watt(q, scen))
    r_sec = np.maximum(0.0, r_legit - r_eve)
    interf = p[:, None] * primary_gain(q, scen) + scen.jam_primaries[None, :]
    per_slot = tuple(
        SlotDiagnostics(float(r_legit[n]), float(r_eve[n]), float(r_sec[n]), tuple(map(float, interf[n])))
        for n in range(N)
    )
    total_p = float(np.sum(p))
    see = float(np.sum(r_sec)) / total_p if total_p > 0 else None
    return Solution(traj, power, per_slot, float(np.mean(r_sec)), see)


def exact_wasr(traj: Trajectory, power: PowerProfile, scen: Scenario):
    """Objective of the original problem (hinged secrecy rate, time-averaged)."""
    return evaluate_solution(traj, power, scen).wasr


@dataclass(frozen=True)
class ConstraintAudit:
    """Signed residuals of the original constraints (<= 0 means satisfied).

    Interference residuals are relative, ``mean(I_r) / Gamma_r - 1``, because
    the thresholds live around 1e-14 W and an absolute tolerance would be
    vacuous.
    """

    see: float
    power: float
    interference: tuple = field(default=())
    endpoints: float = 0.0
    speed: float = 0.0

    @property
    def max_violation(self):
        vals = [self.see, self.power, self.endpoints, self.speed, *self.interference]
        return max(0.0, *vals)

    def ok(self, tol=TOL_FEAS):
        return self.max_violation <= tol


def audit_solution(sol: Solution, scen: Scenario) -> ConstraintAudit:
    p = sol.power.powers
    q = sol.trajectory.points
    total_p = float(np.sum(p))
    total_r = float(np.sum(sol.secrecy_rates))
    see = scen.see_min * total_p - total_r if total_p > 0 else 0.0
    power = float(max(np.max(p - scen.p_max), np.max(-p)))
    it = []
    for r, mean_i in enumerate(sol.mean_interference):
        g = scen.gamma[r]
        it.append(float(mean_i / g - 1.0) if math.isfinite(g) else -1.0)
    endpoints = max(math.dist(tuple(q[0]), scen.q_start), math.dist(tuple(q[-1]), scen.q_end))
    if len(q) > 1:
        speed = float(np.max(np.linalg.norm(np.diff(q, axis=0), axis=1)) - scen.max_step)
    else:
        speed = -scen.max_step
    return ConstraintAudit(see, power, tuple(it), endpoints, speed)
