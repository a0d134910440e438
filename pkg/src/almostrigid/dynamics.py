"""The almost-rigid body: inertia schedules, Hamiltonian, equations of motion,
flow, momentum map, conservation checks, and the reduced momentum sphere.

The state is body-trivialized (attitude Lam, body momentum Pi); the spatial
angular momentum is pi = Lam @ Pi and the reduced dynamics closes in Pi.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import so3
from .numerics import NumericsError, rk4_step, rkmk4_attitude_step

# Safety net against rounding accumulation in long attitude integrations.
REORTHONORMALIZE_EVERY = 10_000

CSV_HEADER = "t,L00,L01,L02,L10,L11,L12,L20,L21,L22,Px,Py,Pz,pix,piy,piz,h"


def _sym3(M, label):
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"{label} must be a 3x3 matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{label} must be finite")
    scale = max(float(np.abs(M).max()), 1.0)
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise ValueError(f"{label} must be symmetric")
    return 0.5 * (M + M.T)


def _minors3(J):
    m1 = J[0, 0]
    m2 = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    m3 = (J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
          - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
          + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0]))
    return m1, m2, m3


def _check_spd(M, label):
    if not all(m > 0.0 for m in _minors3(M)):
        raise ValueError(f"{label} must be positive definite")


def _sym_inv3(J, t):
    """Closed-form inverse of a symmetric 3x3; avoids LAPACK overhead in step loops."""
    a = J[0, 0]
    b = J[0, 1]
    c = J[0, 2]
    d = J[1, 1]
    e = J[1, 2]
    f = J[2, 2]
    A = d * f - e * e
    B = c * e - b * f
    C = b * e - c * d
    det = a * A + b * B + c * C
    if not det > 0.0:
        raise NumericsError(f"inertia is not positive definite at t={t}")
    D = a * f - c * c
    E = b * c - a * e
    F = a * d - b * b
    return np.array([[A, B, C], [B, D, E], [C, E, F]]) / det


class InertiaSchedule:
    """Symmetric positive definite inertia J(t) with an exact rate and a declared limit.

    Kinds: constant; exp_decay with J(t) = J_limit + exp(-kappa t) B;
    linear_ramp from J0 to J1 over [0, ramp_time] and held afterwards;
    table, piecewise linear between knots and held at the last knot.
    Every kind declares its limit matrix, which stands in for the tail of
    [t0, inf) whenever window bounds are taken. All four kinds trace line
    segments between SPD endpoints, so positive definiteness on t >= 0 is
    guaranteed at construction; inertia_at still checks at evaluation time.
    """

    def __init__(self, kind, J_limit, params):
        self.kind = kind
        self.J_limit = J_limit
        self._params = params
        self._Jinv_const = _sym_inv3(J_limit, 0.0) if kind == "constant" else None

    @classmethod
    def constant(cls, J):
        J = _sym3(J, "J")
        _check_spd(J, "J")
        return cls("constant", J, {"J": J})

    @classmethod
    def exp_decay(cls, J_limit, B, kappa):
        J_limit = _sym3(J_limit, "J_limit")
        _check_spd(J_limit, "J_limit")
        B = _sym3(B, "B")
        kappa = float(kappa)
        if not (math.isfinite(kappa) and kappa > 0):
            raise ValueError("kappa must be positive")
        _check_spd(J_limit + B, "J_limit + B (the t=0 inertia)")
        return cls("exp_decay", J_limit, {"B": B, "kappa": kappa})

    @classmethod
    def linear_ramp(cls, J0, J1, ramp_time):
        J0 = _sym3(J0, "J0")
        _check_spd(J0, "J0")
        J1 = _sym3(J1, "J1")
        _check_spd(J1, "J1")
        ramp_time = float(ramp_time)
        if not (math.isfinite(ramp_time) and ramp_time > 0):
            raise ValueError("ramp_time must be positive")
        return cls("linear_ramp", J1, {"J0": J0, "dJ": J1 - J0, "ramp_time": ramp_time})

    @classmethod
    def table(cls, times, matrices):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("table needs at least two knots")
        if not np.all(np.isfinite(times)) or np.any(np.diff(times) <= 0):
            raise ValueError("table knot times must be finite and strictly increasing")
        mats = [_sym3(M, f"matrices[{k}]") for k, M in enumerate(matrices)]
        if len(mats) != times.size:
            raise ValueError("table needs one matrix per knot time")
        for k, M in enumerate(mats):
            _check_spd(M, f"matrices[{k}]")
        return cls("table", mats[-1], {"times": times, "matrices": np.array(mats)})

    def _value(self, t):
        p = self._params
        if self.kind == "constant":
            return p["J"].copy()
        if self.kind == "exp_decay":
            return self.J_limit + math.exp(-p["kappa"] * t) * p["B"]
        if self.kind == "linear_ramp":
            s = min(max(t, 0.0), p["ramp_time"]) / p["ramp_time"]
            return p["J0"] + s * p["dJ"]
        times = p["times"]
        mats = p["matrices"]
        if t <= times[0]:
            return mats[0].copy()
        if t >= times[-1]:
            return mats[-1].copy()
        i = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return mats[i] + w * (mats[i + 1] - mats[i])

    def _rate(self, t):
        p = self._params
        if self.kind == "constant":
            return np.zeros((3, 3))
        if self.kind == "exp_decay":
            return -p["kappa"] * math.exp(-p["kappa"] * t) * p["B"]
        if self.kind == "linear_ramp":
            if 0.0 <= t < p["ramp_time"]:
                return p["dJ"] / p["ramp_time"]
            return np.zeros((3, 3))
        times = p["times"]
        mats = p["matrices"]
        if t < times[0] or t >= times[-1]:
            return np.zeros((3, 3))
        i = int(np.searchsorted(times, t, side="right")) - 1
        return (mats[i + 1] - mats[i]) / (times[i + 1] - times[i])

    def _values_many(self, ts):
        ts = np.asarray(ts, dtype=float)
        p = self._params
        if self.kind == "constant":
            return np.broadcast_to(p["J"], (ts.size, 3, 3)).copy()
        if self.kind == "exp_decay":
            return self.J_limit[None] + np.exp(-p["kappa"] * ts)[:, None, None] * p["B"]
        if self.kind == "linear_ramp":
            s = np.clip(ts, 0.0, p["ramp_time"]) / p["ramp_time"]
            return p["J0"][None] + s[:, None, None] * p["dJ"]
        out = np.empty((ts.size, 3, 3))
        for i in range(3):
            for j in range(3):
                out[:, i, j] = np.interp(ts, p["times"], p["matrices"][:, i, j])
        return out

    def _rates_many(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.array([self._rate(t) for t in ts])


def inertia_at(schedule, t):
    """J(t), checked positive definite; t = inf returns the declared limit."""
    J = schedule._value(t)
    if not all(m > 0.0 for m in _minors3(J)):
        raise NumericsError(f"inertia is not positive definite at t={t}")
    return J


def inertia_rate_at(schedule, t):
    """Exact analytic dJ/dt of the schedule kind; table kind uses the
    piecewise-constant slope of its interpolant."""
    return schedule._rate(t)


def _inv_at(schedule, t):
    if schedule.kind == "constant":
        return schedule._Jinv_const
    return _sym_inv3(inertia_at(schedule, t), t)


def _inv_rate_at(schedule, t):
    # d(J^-1)/dt = -J^-1 (dJ/dt) J^-1
    Jinv = _inv_at(schedule, t)
    return -Jinv @ schedule._rate(t) @ Jinv


@dataclass
class BodyState:
    """Attitude and body angular momentum (Lam, Pi); pi = Lam @ Pi is spatial."""

    Lam: np.ndarray
    Pi: np.ndarray

    def __post_init__(self):
        Lam = np.asarray(self.Lam, dtype=float)
        Pi = np.asarray(self.Pi, dtype=float)
        if not so3.is_rotation(Lam):
            raise ValueError("BodyState attitude is not a rotation to 1e-12")
        if Pi.shape != (3,) or not np.all(np.isfinite(Pi)):
            raise ValueError("BodyState momentum must be a finite 3-vector")
        object.__setattr__(self, "Lam", Lam)
        object.__setattr__(self, "Pi", Pi)


@dataclass
class Trajectory:
    """Fixed-step samples (t, Lam, Pi) with strictly increasing times."""

    times: np.ndarray
    Lams: np.ndarray
    Pis: np.ndarray
    dt: float

    def __len__(self):
        return self.times.size

    def state(self, k):
        return BodyState(self.Lams[k], self.Pis[k])


def hamiltonian(schedule, t, state):
    """h(t, state) = (1/2) Pi . J_t^{-1} Pi, the body-frame kinetic energy.

    Equals the spatial form (1/2) pi . (Lam J_t Lam^T)^{-1} pi to rounding,
    which is what makes the reduced dynamics close in Pi alone.
    """
    Pi = np.asarray(state.Pi, dtype=float)
    return 0.5 * float(Pi @ (Pi @ _inv_at(schedule, t)))


def euler_field(schedule, t, Pi):
    """Reduced equations of motion on the momentum sphere: Pi x (J_t^{-1} Pi).

    Accepts (..., 3) batches; each row evolves independently.
    """
    Pi = np.asarray(Pi, dtype=float)
    return so3.cross3(Pi, Pi @ _inv_at(schedule, t))


def momentum_map(state):
    """Spatial angular momentum pi = Lam @ Pi; conserved along the flow."""
    return np.asarray(state.Lam, dtype=float) @ np.asarray(state.Pi, dtype=float)


def flow(schedule, state0, window, dt):
    """Integrate from window.t0 to window.t1 with fixed step dt.

    Momentum advances by two half rk4 steps per step, so the attitude stage
    times t, t + dt/2, t + dt all have O(dt^5)-accurate momenta to draw on;
    the attitude then takes one rkmk4 step with omega(s) = J_s^{-1} Pi(s).
    Deterministic: same inputs give bitwise-identical trajectories.
    """
    if dt <= 0:
        raise ValueError("flow requires dt > 0")
    span = window.t1 - window.t0
    n_steps = int(round(span / dt))
    if n_steps < 1 or abs(n_steps * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError("flow requires dt to divide the window span")
    Lam = np.array(state0.Lam, dtype=float)
    Pi = np.array(state0.Pi, dtype=float)
    if not so3.is_rotation(Lam):
        raise ValueError("flow initial attitude is not a rotation to 1e-12")
    times = window.t0 + dt * np.arange(n_steps + 1)
    Lams = np.empty((n_steps + 1, 3, 3))
    Pis = np.empty((n_steps + 1, 3))
    Lams[0] = Lam
    Pis[0] = Pi

    def field(s, y):
        return euler_field(schedule, s, y)

    half = 0.5 * dt
    for k in range(n_steps):
        t = times[k]
        Pi_mid = rk4_step(field, t, Pi, half)
        Pi_end = rk4_step(field, t + half, Pi_mid, half)
        stages = (Pi, Pi_mid, Pi_end)

        def omega(s, _t=t, _stages=stages):
            idx = int(round((s - _t) / half))
            y = _stages[0 if idx < 0 else (2 if idx > 2 else idx)]
            return y @ _inv_at(schedule, s)

        Lam = rkmk4_attitude_step(omega, t, Lam, dt)
        if (k + 1) % REORTHONORMALIZE_EVERY == 0:
            Lam = so3.orthonormalize(Lam)
        Pi = Pi_end
        Lams[k + 1] = Lam
        Pis[k + 1] = Pi
    return Trajectory(times, Lams, Pis, float(dt))


def _energies(schedule, times, Pis):
    Js = schedule._values_many(times)
    Jinvs = np.linalg.inv(Js)
    return 0.5 * np.einsum("ni,nij,nj->n", Pis, Jinvs, Pis)


@dataclass
class ConservationReport:
    pi_drift_max: float
    casimir_drift_max: float
    casimir_drift_rel: float
    energy_rate_residual_max: float

    def to_json_dict(self):
        return {
            "pi_drift_max": self.pi_drift_max,
            "casimir_drift_max": self.casimir_drift_max,
            "casimir_drift_rel": self.casimir_drift_rel,
            "energy_rate_residual_max": self.energy_rate_residual_max,
        }


def conservation_report(schedule, traj):
    """Drift metrics along a trajectory: spatial momentum, Casimir ||Pi||, and
    the residual between finite-difference dh/dt and the analytic rate."""
    pis = np.einsum("nij,nj->ni", traj.Lams, traj.Pis)
    if traj.times.size < 2:
        return ConservationReport(0.0, 0.0, 0.0, 0.0)
    pi_drift = float(np.sqrt(((pis - pis[0]) ** 2).sum(axis=1)).max())
    norms = np.sqrt((traj.Pis ** 2).sum(axis=1))
    casimir = float(np.abs(norms - norms[0]).max())
    casimir_rel = casimir / norms[0] if norms[0] > 0 else 0.0
    hs = _energies(schedule, traj.times, traj.Pis)
    if traj.times.size < 3:
        return ConservationReport(pi_drift, casimir, casimir_rel, 0.0)
    hdot_fd = (hs[2:] - hs[:-2]) / (2.0 * traj.dt)
    # dh/dt along the flow equals the explicit time dependence (1/2) Pi . d(J^-1)/dt Pi
    Js = schedule._values_many(traj.times[1:-1])
    Jinvs = np.linalg.inv(Js)
    Jdots = schedule._rates_many(traj.times[1:-1])
    Kdots = -np.einsum("nij,njk,nkl->nil", Jinvs, Jdots, Jinvs)
    hdot_true = 0.5 * np.einsum("ni,nij,nj->n", traj.Pis[1:-1], Kdots, traj.Pis[1:-1])
    residual = float(np.abs(hdot_fd - hdot_true).max())
    return ConservationReport(pi_drift, casimir, casimir_rel, residual)


def reduce(state):
    """Reduced point of a state: the body momentum Pi represents the orbit."""
    return np.array(state.Pi, dtype=float)


def reduced_distance(p, q):
    """Great-circle distance radius * angle between two reduced points."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    rp = float(np.sqrt(p @ p))
    rq = float(np.sqrt(q @ q))
    if abs(rp - rq) > 1e-6 * max(rp, rq):
        raise ValueError("reduced_distance: points lie on different momentum spheres")
    angle = math.atan2(float(np.sqrt(so3.cross3(p, q) @ so3.cross3(p, q))), float(p @ q))
    return 0.5 * (rp + rq) * angle


@dataclass(frozen=True)
class SphereChart:
    """Orthographic chart on the momentum sphere centered at its pole n.

    from_chart(x) = x1 e1 + x2 e2 + sqrt(r^2 - |x|^2) n with {e1, e2, n}
    right-handed orthonormal; defined on the open disc |x| < r.
    """

    n: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    radius: float

    def to_chart(self, Pi):
        Pi = np.asarray(Pi, dtype=float)
        return np.stack((Pi @ self.e1, Pi @ self.e2), axis=-1)

    def from_chart(self, x):
        x = np.asarray(x, dtype=float)
        s2 = (x * x).sum(axis=-1)
        if np.any(s2 >= self.radius * self.radius):
            raise ValueError("chart point outside the open disc x1^2 + x2^2 < r^2")
        z = np.sqrt(self.radius * self.radius - s2)
        return (x[..., 0, None] * self.e1 + x[..., 1, None] * self.e2
                + np.asarray(z)[..., None] * self.n)


def sphere_chart(Pi_e):
    """Deterministic chart construction: e1 comes from the coordinate axis
    least aligned with n = Pi_e/||Pi_e||, and e2 = n x e1 closes the frame."""
    Pi_e = np.asarray(Pi_e, dtype=float)
    r = float(np.sqrt(Pi_e @ Pi_e))
    if r == 0.0:
        raise ValueError("sphere_chart needs a nonzero center")
    n = Pi_e / r
    k = int(np.argmin(np.abs(n)))
    a = np.zeros(3)
    a[k] = 1.0
    e1 = a - (a @ n) * n
    e1 = e1 / np.sqrt(e1 @ e1)
    e2 = so3.cross3(n, e1)
    return SphereChart(n, e1, e2, r)


def trajectory_to_csv(schedule, traj, path):
    """Write samples as CSV, 17 significant digits, '.' decimal, LF newlines."""
    pis = np.einsum("nij,nj->ni", traj.Lams, traj.Pis)
    hs = _energies(schedule, traj.times, traj.Pis)
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for k in range(traj.times.size):
            row = [traj.times[k], *traj.Lams[k].reshape(9), *traj.Pis[k], *pis[k], hs[k]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
