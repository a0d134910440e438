"""Relative equilibria of the almost-rigid body.

A relative equilibrium spins about an axis that stays principal for the whole
inertia schedule. This module finds such common axes, builds the equilibrium
data (spatial momentum, generator, eigenvalue curve), verifies the critical
point property two independent ways, checks the reconstructed orbit, and
checks the one-dimensional foliated structure of the dynamics on group orbits.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .dynamics import BodyState, euler_field, flow, hamiltonian, inertia_at, momentum_map
from .numerics import fd_gradient, sym_eigen

AXIS_RESIDUAL_REL = 1e-9
DEGENERACY_GAP_REL = 1e-8
ISOTROPY_SAMPLES = 8


def _fix_sign(v):
    for c in v:
        if abs(c) > 1e-12:
            return v.copy() if c > 0 else -v
    return v.copy()


def _principal_residual(J, u):
    Ju = J @ u
    r = Ju - (u @ Ju) * u
    return float(np.sqrt(r @ r))


@dataclass
class AxisSearchResult:
    """Common principal axes plus degeneracy diagnostics."""

    axes: list
    degenerate_times: list
    warning: str = None

    def __iter__(self):
        return iter(self.axes)

    def __len__(self):
        return len(self.axes)

    def __getitem__(self, k):
        return self.axes[k]


def find_common_axes(schedule, window):
    """Unit directions u with J_t u parallel to u at every sample and at the limit.

    Samples with a degenerate spectrum (relative eigenvalue gap below 1e-8) are
    flagged and excluded from the computation; if every sample is degenerate the
    coordinate axes are tried as candidates. Axes are normalized with the first
    nonzero component positive and sorted for deterministic output.
    """
    ts = list(window.times()) + [math.inf]
    Js = [inertia_at(schedule, t) for t in ts]
    degenerate = []
    first_good = None
    for t, J in zip(ts, Js):
        ev = sym_eigen(J).eigenvalues
        gap = float(min(np.diff(ev)))
        if gap < DEGENERACY_GAP_REL * float(ev[-1]):
            degenerate.append(t)
        elif first_good is None:
            first_good = (t, J)

    if first_good is None:
        candidates = [np.eye(3)[k] for k in range(3)]
        check_against = list(zip(ts, Js))
        warning = ("every sampled inertia has a degenerate spectrum; "
                   "coordinate axes used as candidates")
    else:
        vecs = sym_eigen(first_good[1]).eigenvectors
        candidates = [_fix_sign(vecs[:, k]) for k in range(3)]
        check_against = [(t, J) for t, J in zip(ts, Js) if t not in degenerate]
        warning = None
        if degenerate:
            warning = (f"degenerate eigenvalue gap at {len(degenerate)} of {len(ts)} "
                       "samples; axes computed from non-degenerate samples only")

    axes = []
    for u in candidates:
        if all(_principal_residual(J, u) <= AXIS_RESIDUAL_REL * np.sqrt((J * J).sum())
               for _, J in check_against):
            axes.append(_fix_sign(u))
    axes.sort(key=lambda a: tuple(np.round(a, 12)), reverse=True)
    return AxisSearchResult(axes, degenerate, warning)


@dataclass
class RelativeEquilibrium:
    """Spinning state about a common principal axis.

    pi_e = p * Lam_e @ axis is the spatial momentum, xi(t) = lam(t) * pi_e the
    generator, and lam(t) = 1 / (axis . J_t axis) the inverse-inertia eigenvalue
    curve. The body momentum Pi_e = p * axis is the fixed reduced point.
    """

    Lam_e: np.ndarray
    pi_e: np.ndarray
    axis: np.ndarray
    p: float
    xi: object = field(repr=False)
    lam: object = field(repr=False)

    @property
    def Pi_e(self):
        return self.p * self.axis


def make_equilibrium(schedule, axis, p, Lam_e=None, window=None):
    """Build the relative equilibrium spinning about a common principal axis.

    If a window is given, the axis is checked principal at every sample and at
    the schedule limit; otherwise the caller vouches for it (axes returned by
    find_common_axes qualify).
    """
    axis = np.asarray(axis, dtype=float)
    nrm = float(np.sqrt(axis @ axis))
    if not (nrm > 0 and np.all(np.isfinite(axis))):
        raise ValueError("axis must be a nonzero finite vector")
    axis = axis / nrm
    p = float(p)
    if not (math.isfinite(p) and p > 0):
        raise ValueError("p must be positive")
    if Lam_e is None:
        Lam_e = np.eye(3)
    Lam_e = np.asarray(Lam_e, dtype=float)
    if not so3.is_rotation(Lam_e):
        raise ValueError("Lam_e must be a rotation")
    if window is not None:
        for t in list(window.times()) + [math.inf]:
            J = inertia_at(schedule, t)
            res = _principal_residual(J, axis)
            if res > AXIS_RESIDUAL_REL * float(np.sqrt((J * J).sum())):
                raise ValueError(f"axis is not principal at t={t} (residual {res:.3e})")

    pi_e = p * (Lam_e @ axis)

    def lam(t, _axis=axis):
        J = inertia_at(schedule, t)
        return 1.0 / float(_axis @ (J @ _axis))

    def xi(t, _pi=pi_e):
        return lam(t) * _pi

    return RelativeEquilibrium(Lam_e, pi_e, axis, p, xi, lam)


def h_xi(schedule, t, state, xi_t, mu_e):
    """Augmented energy h - (momentum - mu_e) . xi_t whose critical points are
    the relative equilibria with generator xi_t."""
    xi_t = np.asarray(xi_t, dtype=float)
    mu_e = np.asarray(mu_e, dtype=float)
    return hamiltonian(schedule, t, state) - float((momentum_map(state) - mu_e) @ xi_t)


def _spatial_inertia_inv(schedule, t, Lam_e):
    J = inertia_at(schedule, t)
    return Lam_e @ np.linalg.inv(J) @ Lam_e.T


@dataclass
class EquilibriumVerification:
    ok: bool
    max_gradient_norm: float
    max_generator_residual: float
    max_colinearity_residual: float
    tol: float
    failures: list


def verify_relative_equilibrium(schedule, re, window, tol):
    """Check the critical-point property at every window sample and at the limit.

    Two independent routes: (a) the finite-difference gradient of h_xi over the
    six perturbation directions (delta_pi, delta_theta), along the curves
    Lam_eps = exp(eps hat(delta_theta)) Lam_e, pi_eps = pi_e + eps delta_pi;
    (b) the analytic residuals |I_inv pi_e - xi_t| and |(I_inv pi_e) x pi_e|.
    Failures are reported, not raised.
    """
    pi_e = re.pi_e
    Lam_e = re.Lam_e
    max_grad = 0.0
    max_gen = 0.0
    max_colin = 0.0
    failures = []
    for t in list(window.times()) + [math.inf]:
        xi_t = re.xi(t)
        Iinv = _spatial_inertia_inv(schedule, t, Lam_e)
        v = Iinv @ pi_e
        gen = float(np.sqrt((v - xi_t) @ (v - xi_t)))
        w = so3.cross3(v, pi_e)
        colin = float(np.sqrt(w @ w))

        def f(u, _t=t, _xi=xi_t):
            R = so3.exp_so3(u[3:]) @ Lam_e
            pi = pi_e + u[:3]
            return h_xi(schedule, _t, BodyState(R, R.T @ pi), _xi, pi_e)

        g = fd_gradient(f, np.zeros(6))
        grad = float(np.sqrt(g @ g))
        max_grad = max(max_grad, grad)
        max_gen = max(max_gen, gen)
        max_colin = max(max_colin, colin)
        for name, value in (("gradient_norm", grad),
                            ("generator_residual", gen),
                            ("colinearity_residual", colin)):
            if value > tol:
                failures.append({"t": t, "check": name, "value": value})
    return EquilibriumVerification(not failures, max_grad, max_gen, max_colin, tol, failures)


@dataclass
class OrbitReconstructionReport:
    ok: bool
    max_reduced_drift: float
    max_axis_residual: float
    first_violation_time: float
    tol: float


def orbit_reconstruction_check(schedule, re, window, dt, tol):
    """Flow from the equilibrium and confirm the motion stays inside its orbit:
    the reduced point is fixed and Lam(t) Lam_e^T keeps the pi_e axis."""
    traj = flow(schedule, BodyState(re.Lam_e, re.Pi_e), window, dt)
    Pi_e = re.Pi_e
    m = re.pi_e / re.p
    drift = np.sqrt(((traj.Pis - Pi_e) ** 2).sum(axis=1))
    rel = np.einsum("nij,j->ni", traj.Lams @ re.Lam_e.T, m)
    axis_res = np.sqrt(((rel - m) ** 2).sum(axis=1))
    worst = np.maximum(drift, axis_res)
    bad = np.nonzero(worst > tol)[0]
    first = float(traj.times[bad[0]]) if bad.size else None
    return OrbitReconstructionReport(bad.size == 0, float(drift.max()),
                                     float(axis_res.max()), first, tol)


def _halton(i, base):
    f = 1.0
    r = 0.0
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def _quat_to_rot(q):
    a, b, c, d = q
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ])


def _so3_low_discrepancy(n):
    """Deterministic near-uniform rotations: Halton points in [0,1)^3 mapped to
    unit quaternions by the subgroup-algorithm formula."""
    out = []
    for i in range(1, n + 1):
        u1 = _halton(i, 2)
        u2 = _halton(i, 3)
        u3 = _halton(i, 5)
        s1 = math.sqrt(1.0 - u1)
        s2 = math.sqrt(u1)
        q = (s2 * math.cos(2 * math.pi * u3),
             s1 * math.sin(2 * math.pi * u2),
             s1 * math.cos(2 * math.pi * u2),
             s2 * math.sin(2 * math.pi * u3))
        out.append(_quat_to_rot(q))
    return out


@dataclass
class FoliatedCheckReport:
    ok: bool
    max_colinearity_residual: float
    max_first_integral_variation: float
    n_group_samples: int
    n_times: int
    n_isotropy_samples: int
    tol: float


def _orbit_coefficient(schedule, t, re, g):
    """Phase velocity at g.z_e decomposed along the transported generator field.

    Returns (coefficient, colinearity residual): the 6-vector phase velocity
    (Pi_dot, body attitude increment) against the fundamental field of the unit
    generator g pi_e / p, whose body coordinates are ((g Lam_e)^T g pi_e / p, 0).
    """
    Pi_e = re.Pi_e
    Lam = g @ re.Lam_e
    Jinv = np.linalg.inv(inertia_at(schedule, t))
    Om = Jinv @ Pi_e
    v6 = np.concatenate((euler_field(schedule, t, Pi_e), Om))
    y_att = Lam.T @ (g @ (re.pi_e / re.p))
    y6 = np.concatenate((np.zeros(3), y_att))
    f1 = float(v6 @ y6) / float(y6 @ y6)
    r = v6 - f1 * y6
    return f1, float(np.sqrt(r @ r))


def foliated_structure_check(schedule, re, n_group_samples, window, tol):
    """Confirm the orbit dynamics is a one-generator system with a coefficient
    constant along isotropy directions.

    At points g.z_e over a low-discrepancy set of rotations g, the phase
    velocity must be colinear with the transported generator field, and the
    extracted coefficient must not vary along rotations about the transported
    momentum (it may, and does, vary with t).
    """
    gs = _so3_low_discrepancy(n_group_samples)
    ts = list(window.times())
    angles = np.linspace(0.0, 2.0 * math.pi, ISOTROPY_SAMPLES, endpoint=False)
    max_colin = 0.0
    max_var = 0.0
    for g in gs:
        mu = g @ re.pi_e
        mu_unit = mu / np.sqrt(mu @ mu)
        for t in ts:
            f1, res = _orbit_coefficient(schedule, t, re, g)
            max_colin = max(max_colin, res)
            for s in angles[1:]:
                r = so3.exp_so3(s * mu_unit)
                f1_s, res_s = _orbit_coefficient(schedule, t, re, r @ g)
                max_colin = max(max_colin, res_s)
                max_var = max(max_var, abs(f1_s - f1))
    ok = max_colin <= tol and max_var <= tol
    return FoliatedCheckReport(ok, max_colin, max_var, n_group_samples,
                               len(ts), ISOTROPY_SAMPLES, tol)


def equilibrium_record(re, window, verification):
    """JSON-ready summary: axis, magnitude, eigenvalue curve samples, residuals."""
    samples = [[float(t), float(re.lam(t))] for t in window.times()]
    record = {
        "axis": [float(c) for c in re.axis],
        "p": float(re.p),
        "lambda_of_t_samples": samples,
        "lambda_limit": float(re.lam(math.inf)),
        "residuals": {
            "max_gradient_norm": verification.max_gradient_norm,
            "max_generator_residual": verification.max_generator_residual,
            "max_colinearity_residual": verification.max_colinearity_residual,
            "tol": verification.tol,
            "ok": verification.ok,
        },
    }
    return record
