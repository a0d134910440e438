"""Stability certificates and empirical probes for relative equilibria.

The second variation of the augmented energy at a relative equilibrium is an
explicit 6x6 block matrix in the perturbation coordinates (delta_pi,
delta_theta). Restricting it to the reduced directions gives a 2x2 form M(t)
whose uniform definiteness, together with a sign condition on dH/dt and a
third-derivative bound, certifies Lyapunov stability of the reduced point.
This module assembles all of it, cross-checks every analytic formula against
finite differences, and complements the certificates with deterministic
Monte Carlo probes of the reduced flow.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import so3
from .dynamics import (BodyState, _energies, euler_field, flow, inertia_at,
                       inertia_rate_at, momentum_map, sphere_chart)
from .equilibria import h_xi
from .numerics import fd_hessian, rk4_step, sym_eigen, third_derivative_bound

ZERO_EIG_TOL = 1e-10
DT_SIGN_TOL = 1e-12
MARGIN_STRICTNESS = 1e-12
MDOT_TOL = 1e-6
CHART_HESSIAN_STEP = 1e-4
SPECTRA_CSV_HEADER = "t,ev1,ev2"


def second_variation(schedule, t, re):
    """Exact second variation of the augmented energy at the equilibrium.

    6x6 symmetric matrix in (delta_pi, delta_theta) coordinates, where the
    perturbation curves are pi_eps = pi_e + eps delta_pi and
    Lam_eps = exp(eps hat(delta_theta)) Lam_e. Blocks, with D = I_inv - lam_t:
    [[I_inv, D hat(pi_e)], [-hat(pi_e) D, -hat(pi_e) D hat(pi_e)]].
    """
    Jinv = np.linalg.inv(inertia_at(schedule, t))
    Iinv = re.Lam_e @ Jinv @ re.Lam_e.T
    D = Iinv - re.lam(t) * np.eye(3)
    P = so3.hat(re.pi_e)
    M = np.block([[Iinv, D @ P], [-P @ D, -P @ D @ P]])
    return 0.5 * (M + M.T)


def second_variation_fd_oracle(schedule, t, re, dpi, dtheta, eps=1e-4):
    """Independent oracle: second central difference of h_xi along the same
    perturbation curve the analytic block matrix describes."""
    dpi = np.asarray(dpi, dtype=float)
    dtheta = np.asarray(dtheta, dtype=float)
    xi_t = re.xi(t)

    def f(e):
        R = so3.exp_so3(e * dtheta) @ re.Lam_e
        pi = re.pi_e + e * dpi
        return h_xi(schedule, t, BodyState(R, R.T @ pi), xi_t, re.pi_e)

    return (f(eps) - 2.0 * f(0.0) + f(-eps)) / (eps * eps)


def equivariance_identity_check(schedule, t, re, eta, v):
    """Residual of the symmetry identity linking the second variation with the
    momentum map: polarization against the fundamental-vector coordinates of
    eta, (eta x pi_e, eta), must equal delta_pi . (eta x xi(t))."""
    eta = np.asarray(eta, dtype=float)
    v = np.asarray(v, dtype=float)
    M = second_variation(schedule, t, re)
    u = np.concatenate((so3.cross3(eta, re.pi_e), eta))
    lhs = float(u @ M @ v)
    rhs = float(v[:3] @ so3.cross3(eta, re.xi(t)))
    return abs(lhs - rhs)


def _chart_basis_directions(re):
    """Attitude perturbations matched to the sphere chart: delta_theta_i moves
    the reduced point with unit speed along the chart direction e_i."""
    chart = sphere_chart(re.Pi_e)
    d1 = re.Lam_e @ so3.cross3(chart.e1, chart.n) / re.p
    d2 = re.Lam_e @ so3.cross3(chart.e2, chart.n) / re.p
    return d1, d2


def restricted_form(schedule, t, re):
    """The 2x2 reduced form M(t): the second variation restricted to delta_pi=0
    with the kernel direction (0, pi_e) projected out, written in the basis of
    attitude perturbations matched to sphere_chart(Pi_e), times one half."""
    if re.p == 0:
        raise ValueError("restricted_form needs pi_e != 0")
    M6 = second_variation(schedule, t, re)
    d1, d2 = _chart_basis_directions(re)
    u1 = np.concatenate((np.zeros(3), d1))
    u2 = np.concatenate((np.zeros(3), d2))
    K = np.array([[u1 @ M6 @ u1, u1 @ M6 @ u2],
                  [u2 @ M6 @ u1, u2 @ M6 @ u2]])
    K = 0.5 * K
    return 0.5 * (K + K.T)


def _chart_energy(schedule, t, re):
    """Reduced energy in the orthographic chart, zeroed at the equilibrium.
    Accepts (..., 2) batches of chart points."""
    chart = sphere_chart(re.Pi_e)
    Jinv = np.linalg.inv(inertia_at(schedule, t))
    Pi_e = re.Pi_e
    h_e = 0.5 * float(Pi_e @ (Jinv @ Pi_e))

    def H(x):
        Pi = chart.from_chart(np.asarray(x, dtype=float))
        return 0.5 * np.einsum("...i,ij,...j->...", Pi, Jinv, Pi) - h_e

    return H


def reduced_chart_hessian(schedule, t, re):
    """Second, independent route to M(t): half the finite-difference Hessian of
    the reduced energy in the chart. Agrees with restricted_form to 1e-6."""
    if re.p == 0:
        raise ValueError("reduced_chart_hessian needs pi_e != 0")
    H = _chart_energy(schedule, t, re)
    return 0.5 * fd_hessian(H, np.zeros(2), h=CHART_HESSIAN_STEP)


def _chart_grid(chart_radius, grid):
    if grid < 1:
        raise ValueError("grid must be >= 1")
    if grid == 1:
        axis = np.array([0.0])
    else:
        axis = np.linspace(-chart_radius, chart_radius, grid)
    X1, X2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack((X1.ravel(), X2.ravel()), axis=1)
    s2 = (pts * pts).sum(axis=1)
    return pts[s2 <= chart_radius * chart_radius * (1.0 + 1e-12)]


def _dt_values(schedule, re, times, chart_radius, grid):
    """dH/dt = (1/2) Pi . Kdot Pi - (1/2) Pi_e . Kdot Pi_e with
    Kdot = d(J^-1)/dt = -J^-1 (dJ/dt) J^-1, on chart-ball grid x time samples."""
    if not 0 < chart_radius < re.p:
        raise ValueError("chart_radius must lie strictly between 0 and p")
    chart = sphere_chart(re.Pi_e)
    pts = _chart_grid(chart_radius, grid)
    Pis = chart.from_chart(pts)
    Pi_e = re.Pi_e
    vals = np.empty((len(times), Pis.shape[0]))
    for k, t in enumerate(times):
        Jinv = np.linalg.inv(inertia_at(schedule, t))
        Kdot = -Jinv @ inertia_rate_at(schedule, t) @ Jinv
        vals[k] = (0.5 * np.einsum("ni,ij,nj->n", Pis, Kdot, Pis)
                   - 0.5 * float(Pi_e @ (Kdot @ Pi_e)))
    return pts, vals


@dataclass
class DtConditionReport:
    max: float
    min: float
    n_points: int
    n_times: int


def dt_condition(schedule, re, window, chart_radius, grid):
    """Extremes of dH/dt over the chart ball and the window (limit included)."""
    times = list(window.times()) + [math.inf]
    pts, vals = _dt_values(schedule, re, times, chart_radius, grid)
    return DtConditionReport(float(vals.max()), float(vals.min()),
                             pts.shape[0], len(times))


@dataclass
class CertificateMargins:
    """User margins: lam is the strict lower margin for the minimal restricted
    eigenvalue; Lam optionally caps the maximal eigenvalue for the uniform
    (decrescent) half of the certificate."""

    lam: float = None
    Lam: float = None


@dataclass
class CertificateReport:
    verdict: str
    sign_mode: str
    lambda_inf: float
    Lambda_sup: float
    c_bound: float
    dt_max: float
    dt_min: float
    reasons: list
    asymptotic: str
    margin_lambda: float
    margin_Lambda: float
    margin_auto: bool
    times: list
    spectra: list
    chart_radius: float
    grid: int
    window: tuple

    def to_json_dict(self):
        rows = []
        for t, ev in zip(self.times, self.spectra):
            rows.append(["inf" if math.isinf(t) else float(t),
                         float(ev[0]), float(ev[1])])
        return {
            "verdict": self.verdict,
            "sign_mode": self.sign_mode,
            "lambda_inf": self.lambda_inf,
            "Lambda_sup": self.Lambda_sup,
            "c_bound": self.c_bound,
            "dt_max": self.dt_max,
            "dt_min": self.dt_min,
            "reasons": list(self.reasons),
            "asymptotic": self.asymptotic,
            "margins": {"lambda": self.margin_lambda, "Lambda": self.margin_Lambda,
                        "auto": self.margin_auto},
            "spectra": rows,
            "chart": {"radius": self.chart_radius, "grid": self.grid},
            "window": {"t0": self.window[0], "t1": self.window[1],
                       "samples": self.window[2]},
        }


def spectra_to_csv(report, path):
    with open(path, "w", newline="") as fh:
        fh.write(SPECTRA_CSV_HEADER + "\n")
        for t, ev in zip(report.times, report.spectra):
            fh.write(f"{t:.17g},{ev[0]:.17g},{ev[1]:.17g}\n")


def certify(schedule, re, window, chart_radius, grid, margins=None):
    """Assemble the stability certificate for a relative equilibrium.

    Computes the restricted spectra at every window sample and at the schedule
    limit, classifies the sign mode, evaluates the dH/dt sign condition and the
    third-derivative bound c on the chart ball, and issues a verdict:
    uniformly-stable-certified, stable-certified (definite and sign-compatible
    but the user's Lambda cap is exceeded), or not-certified with itemized
    reasons. A negative definite form is certified through -H, which flips the
    required sign of dH/dt. Failure is a verdict, never an exception.
    """
    times = list(window.times()) + [math.inf]
    spectra = []
    for t in times:
        ev = sym_eigen(restricted_form(schedule, t, re)).eigenvalues
        spectra.append((float(ev[0]), float(ev[1])))
    all_eigs = np.array(spectra).ravel()
    lambda_inf = float(all_eigs.min())
    Lambda_sup = float(all_eigs.max())
    if np.all(all_eigs > ZERO_EIG_TOL):
        sign_mode = "positive-definite"
    elif np.all(all_eigs < -ZERO_EIG_TOL):
        sign_mode = "negative-definite"
    else:
        sign_mode = "indefinite"

    pts, dt_vals = _dt_values(schedule, re, times, chart_radius, grid)
    dt_max = float(dt_vals.max())
    dt_min = float(dt_vals.min())

    c_bound = 0.0
    for t in times:
        c_bound = max(c_bound, third_derivative_bound(
            _chart_energy(schedule, t, re), np.zeros(2), chart_radius, grid))

    # Asymptotic-stability side check: -dH/dt would have to be positive away
    # from the equilibrium; for these conservative systems it never is.
    off_center = (pts * pts).sum(axis=1) > 0
    if off_center.any() and float((-dt_vals[:, off_center]).min()) > 0.0:
        asymptotic = "candidate: -dH/dt positive at all sampled off-center points"
    else:
        asymptotic = "not-applicable: -dH/dt is not positive definite near the equilibrium"

    reasons = []
    margin_lambda = margins.lam if margins is not None else None
    margin_Lambda = margins.Lam if margins is not None else None
    margin_auto = margin_lambda is None

    if sign_mode == "indefinite":
        reasons.append(f"indefinite restricted form: eigenvalues span "
                       f"[{lambda_inf:.6g}, {Lambda_sup:.6g}] across samples")
        verdict = "not-certified"
        eff_margin = margin_lambda
    else:
        positive = sign_mode == "positive-definite"
        eff_min = lambda_inf if positive else -Lambda_sup
        eff_max = Lambda_sup if positive else -lambda_inf
        eff_margin = margin_lambda if margin_lambda is not None else 0.5 * eff_min
        if margin_auto:
            reasons.append(f"lambda margin auto-set to {eff_margin:.6g} "
                           "(half the minimal restricted eigenvalue)")
        failed = []
        if not (eff_margin > 0):
            failed.append(f"lambda margin {eff_margin:.6g} is not positive")
        elif eff_min - eff_margin < MARGIN_STRICTNESS:
            failed.append(f"minimal restricted eigenvalue {eff_min:.6g} does not "
                          f"exceed the lambda margin {eff_margin:.6g} strictly")
        if positive:
            if dt_max > DT_SIGN_TOL:
                failed.append(f"dH/dt reaches {dt_max:.6g} > 0 on the sampled "
                              "neighborhood; positive mode needs dH/dt <= 0")
        else:
            if dt_min < -DT_SIGN_TOL:
                failed.append(f"dH/dt reaches {dt_min:.6g} < 0 on the sampled "
                              "neighborhood; negative mode (certificate on -H) "
                              "needs dH/dt >= 0")
        if not math.isfinite(c_bound):
            failed.append("third-derivative bound c is not finite")
        if failed:
            reasons.extend(failed)
            verdict = "not-certified"
        elif margin_Lambda is not None and eff_max > margin_Lambda:
            reasons.append(f"decrescent cap exceeded: max restricted eigenvalue "
                           f"{eff_max:.6g} > Lambda {margin_Lambda:.6g}; "
                           "uniform certificate withheld")
            verdict = "stable-certified"
        else:
            verdict = "uniformly-stable-certified"

    return CertificateReport(
        verdict, sign_mode, lambda_inf, Lambda_sup, c_bound, dt_max, dt_min,
        reasons, asymptotic, eff_margin, margin_Lambda, margin_auto,
        times, spectra, float(chart_radius), int(grid),
        (window.t0, window.t1, window.samples))


@dataclass
class LpdfReport:
    ok: bool
    lambda_used: float
    Lambda_used: float
    observed_slack: float
    min_ratio: float
    max_ratio: float
    failures: list


def lpdf_and_decrescent_check(schedule, re, window, chart_radius, grid, lam, Lam,
                              n_angles=16):
    """Sample the reduced energy on chart shells and confirm the quadratic
    bounds lam |x|^2 <= H(t,x) <= (Lam + slack) |x|^2; the upper slack is
    reported as observed rather than asserted. Assumes positive-definite mode.
    """
    radii = chart_radius * (np.arange(1, grid + 1) / grid)
    angles = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    pts = np.array([[r * math.cos(a), r * math.sin(a)]
                    for r in radii for a in angles])
    s2 = (pts * pts).sum(axis=1)
    min_ratio = math.inf
    max_ratio = -math.inf
    failures = []
    for t in list(window.times()) + [math.inf]:
        vals = _chart_energy(schedule, t, re)(pts)
        ratios = vals / s2
        min_ratio = min(min_ratio, float(ratios.min()))
        max_ratio = max(max_ratio, float(ratios.max()))
        bad = np.nonzero(vals < lam * s2)[0]
        for i in bad:
            failures.append({"t": t, "x": [float(pts[i, 0]), float(pts[i, 1])],
                             "H": float(vals[i]), "lower_bound": float(lam * s2[i])})
    slack = max(0.0, max_ratio - Lam)
    return LpdfReport(not failures, float(lam), float(Lam), slack,
                      min_ratio, max_ratio, failures)


@dataclass
class MdotReport:
    times: np.ndarray
    mdot: np.ndarray
    dhdt: np.ndarray
    max_abs_residual: float
    ok: bool


def mdot_along_flow(schedule, re, state0, window, dt):
    """Rate of the reduced energy along a flow on the equilibrium's momentum
    level set: centered differences of H, checked against the analytic dH/dt
    (the two agree because H is conserved up to its explicit time dependence).
    """
    mu0 = momentum_map(state0)
    if float(np.sqrt((mu0 - re.pi_e) @ (mu0 - re.pi_e))) > 1e-6 * max(1.0, re.p):
        raise ValueError("state0 is not on the momentum level set of the equilibrium")
    traj = flow(schedule, state0, window, dt)
    Pi_e_rows = np.broadcast_to(re.Pi_e, traj.Pis.shape)
    Hs = _energies(schedule, traj.times, traj.Pis) - _energies(schedule, traj.times, Pi_e_rows)
    mdot = (Hs[2:] - Hs[:-2]) / (2.0 * dt)
    ts = traj.times[1:-1]
    Js = schedule._values_many(ts)
    Jinvs = np.linalg.inv(Js)
    Kdots = -np.einsum("nij,njk,nkl->nil", Jinvs, schedule._rates_many(ts), Jinvs)
    dhdt = (0.5 * np.einsum("ni,nij,nj->n", traj.Pis[1:-1], Kdots, traj.Pis[1:-1])
            - 0.5 * np.einsum("ni,nij,nj->n", Pi_e_rows[1:-1], Kdots, Pi_e_rows[1:-1]))
    resid = float(np.abs(mdot - dhdt).max()) if ts.size else 0.0
    return MdotReport(ts, mdot, dhdt, resid, resid <= MDOT_TOL)


@dataclass
class ProbeReport:
    epsilon: float
    deltas: list
    t0_list: list
    horizon: float
    dt: float
    trials: int
    seed: int
    cells: list
    worst_excursion: float
    verdict: str
    uniform_across_t0: bool

    def to_json_dict(self):
        return {
            "epsilon": self.epsilon,
            "deltas": list(self.deltas),
            "t0_list": list(self.t0_list),
            "horizon": self.horizon,
            "dt": self.dt,
            "trials": self.trials,
            "seed": self.seed,
            "cells": [dict(c) for c in self.cells],
            "worst_excursion": self.worst_excursion,
            "verdict": self.verdict,
            "uniform_across_t0": self.uniform_across_t0,
        }


def _cap_samples(re, delta, cell_index, trials, seed):
    """Uniform draws on the geodesic cap of radius delta around Pi_e, one RNG
    substream per (seed, cell, trial) so results never depend on scheduling."""
    p = re.p
    chart = sphere_chart(re.Pi_e)
    out = np.empty((trials, 3))
    if delta == 0.0:
        out[:] = re.Pi_e
        return out
    cos_cap = math.cos(delta / p)
    for tr in range(trials):
        rng = np.random.default_rng([seed, cell_index, tr])
        u, phi = rng.random(2)
        ca = 1.0 - u * (1.0 - cos_cap)
        sa = math.sqrt(max(0.0, 1.0 - ca * ca))
        phi *= 2.0 * math.pi
        out[tr] = p * (ca * chart.n
                       + sa * (math.cos(phi) * chart.e1 + math.sin(phi) * chart.e2))
    return out


def _reduced_distances(Pis, Pi_e, p):
    cr = so3.cross3(Pis, Pi_e)
    sin_part = np.sqrt((cr * cr).sum(axis=-1))
    cos_part = Pis @ Pi_e
    ang = np.arctan2(sin_part, cos_part)
    rp = np.sqrt((Pis * Pis).sum(axis=-1))
    return 0.5 * (rp + p) * ang


def probe_stability(schedule, re, epsilon, delta_list, t0_list, horizon, trials,
                    dt, seed, workers=1):
    """Empirical stability probe on the reduced sphere.

    For every cell (t0, delta): draw `trials` initial momenta on the cap of
    reduced radius delta, integrate the reduced dynamics to t0 + horizon, and
    record the worst excursion from the equilibrium. A cell passes if the
    excursion stays below epsilon. Verdicts: consistent-with-stable when every
    t0 has some passing delta (with uniform_across_t0 set when one delta passes
    everywhere), refuted-at-horizon when every delta escapes somewhere,
    inconclusive otherwise. Bitwise deterministic for a given seed, for any
    worker count.
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    delta_list = [float(d) for d in delta_list]
    if any(d < 0 or d >= epsilon for d in delta_list):
        raise ValueError("every delta must satisfy 0 <= delta < epsilon")
    if int(trials) < 1:
        raise ValueError("trials must be >= 1")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("probe requires dt to divide the horizon")

    jobs = [(i * len(delta_list) + j, float(t0), d)
            for i, t0 in enumerate(t0_list)
            for j, d in enumerate(delta_list)]

    def field(s, y):
        return euler_field(schedule, s, y)

    def run_cell(job):
        ci, t0, delta = job
        Pis = _cap_samples(re, delta, ci, int(trials), seed)
        worst = float(_reduced_distances(Pis, re.Pi_e, re.p).max())
        for k in range(n_steps):
            Pis = rk4_step(field, t0 + k * dt, Pis, dt)
            worst = max(worst, float(_reduced_distances(Pis, re.Pi_e, re.p).max()))
        return worst

    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            worsts = list(pool.map(run_cell, jobs))
    else:
        worsts = [run_cell(job) for job in jobs]

    cells = []
    for (ci, t0, delta), worst in zip(jobs, worsts):
        cells.append({"t0": t0, "delta": delta, "worst_excursion": worst,
                      "passed": worst < epsilon, "trials": int(trials)})

    n_t0 = len(t0_list)
    n_d = len(delta_list)
    passed = np.array([c["passed"] for c in cells]).reshape(n_t0, n_d)
    uniform = bool(passed.all(axis=0).any())
    if passed.any(axis=1).all():
        verdict = "consistent-with-stable"
    elif (~passed).any(axis=0).all():
        verdict = "refuted-at-horizon"
    else:
        verdict = "inconclusive"

    return ProbeReport(epsilon, delta_list, [float(t) for t in t0_list],
                       float(horizon), float(dt), int(trials), int(seed), cells,
                       float(max(worsts)), verdict, uniform)


@dataclass
class ChartInvarianceReport:
    ok: bool
    n_transforms: int
    n_sign_checks: int
    sign_preserved_fraction: float
    lambda_bound_checks: int
    failures: list
    seed: int


def chart_invariance_check(schedule, re, window, n_transforms, seed):
    """Congruence invariance of the restricted form's verdict data.

    Random invertible 2x2 chart changes A (condition number <= 100) must leave
    the sign pattern of the spectrum unchanged at every sample, and in the
    positive case the transformed minimal eigenvalue must respect
    lambda' >= lambda * (smallest squared singular value of A).
    """
    times = list(window.times()) + [math.inf]
    Ms = [restricted_form(schedule, t, re) for t in times]
    base = []
    for M in Ms:
        ev = sym_eigen(M).eigenvalues
        base.append((ev, _sign_counts(ev)))

    checks = 0
    preserved = 0
    bound_checks = 0
    failures = []
    for k in range(int(n_transforms)):
        rng = np.random.default_rng([int(seed), k])
        while True:
            A = rng.normal(size=(2, 2))
            s2 = sym_eigen(A.T @ A).eigenvalues
            if s2[0] > 0 and math.sqrt(s2[1] / s2[0]) <= 100.0:
                break
        m_S = float(s2[0])
        for t, M, (ev, counts) in zip(times, Ms, base):
            Mp = A.T @ M @ A
            evp = sym_eigen(0.5 * (Mp + Mp.T)).eigenvalues
            checks += 1
            if _sign_counts(evp) == counts:
                preserved += 1
            else:
                failures.append({"transform": k, "t": t, "kind": "sign_pattern",
                                 "eigenvalues": [float(e) for e in evp]})
            if ev[0] > ZERO_EIG_TOL:
                bound_checks += 1
                if evp[0] < ev[0] * m_S * (1.0 - 1e-9) - 1e-12:
                    failures.append({"transform": k, "t": t, "kind": "lambda_bound",
                                     "lambda_prime": float(evp[0]),
                                     "bound": float(ev[0] * m_S)})
    frac = preserved / checks if checks else 1.0
    return ChartInvarianceReport(not failures, int(n_transforms), checks, frac,
                                 bound_checks, failures, int(seed))


def _sign_counts(eigs):
    pos = int(np.count_nonzero(eigs > ZERO_EIG_TOL))
    neg = int(np.count_nonzero(eigs < -ZERO_EIG_TOL))
    return (pos, neg, len(eigs) - pos - neg)
