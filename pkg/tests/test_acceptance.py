"""End-to-end acceptance checks, one per numbered criterion.

Each test prints a single PASS/FAIL line with the measured quantities so a
full run reads as a checklist. Run with -s (the default addopts) to see them.
"""

import json
import math
import time

import numpy as np

from almostrigid import dynamics as dyn
from almostrigid import equilibria as eq
from almostrigid import so3
from almostrigid import stability as stab
from almostrigid.cli import main
from almostrigid.numerics import TimeWindow, sym_eigen

J_CLASSIC = np.diag([3.0, 2.0, 1.0])


def _report(n, ok, detail):
    print(f"acceptance {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"acceptance {n}: {detail}"


def test_acceptance_01_momentum_conservation_long_run():
    sched = dyn.InertiaSchedule.constant(J_CLASSIC)
    state0 = dyn.BodyState(np.eye(3), np.array([0.2, 0.3, 0.9]))
    t_start = time.perf_counter()
    traj = dyn.flow(sched, state0, TimeWindow(0.0, 100.0, 2), 1e-3)
    rep = dyn.conservation_report(sched, traj)
    elapsed = time.perf_counter() - t_start
    ok = rep.pi_drift_max <= 1e-6 and rep.casimir_drift_rel <= 1e-8 and elapsed <= 30.0
    _report(1, ok,
            f"pi drift {rep.pi_drift_max:.3e} (<=1e-6), Casimir rel drift "
            f"{rep.casimir_drift_rel:.3e} (<=1e-8), {elapsed:.1f}s (<=30s)")


def test_acceptance_02_second_variation_matches_fd_oracle():
    schedules = [
        dyn.InertiaSchedule.constant(J_CLASSIC),
        dyn.InertiaSchedule.exp_decay(J_CLASSIC, np.diag([0.5, 0.3, 0.2]), 1.0),
        dyn.InertiaSchedule.linear_ramp(np.diag([4.0, 3.0, 2.0]), J_CLASSIC, 5.0),
    ]
    times = [0.0, 2.0, 4.0, 6.0, 8.0]
    rng = np.random.default_rng(20250815)
    dirs = rng.normal(size=(100, 6))
    t_start = time.perf_counter()
    worst = 0.0
    for sched in schedules:
        for axis in np.eye(3):
            re = eq.make_equilibrium(sched, axis, 1.0)
            for t in times:
                M = stab.second_variation(sched, t, re)
                for u in dirs:
                    analytic = float(u @ M @ u)
                    fd = stab.second_variation_fd_oracle(sched, t, re, u[:3], u[3:])
                    rel = abs(fd - analytic) / max(1.0, abs(analytic))
                    worst = max(worst, rel)
    elapsed = time.perf_counter() - t_start
    ok = worst <= 1e-6 and elapsed <= 10.0
    _report(2, ok, f"worst relative gap {worst:.3e} (<=1e-6) over "
                   f"100 dirs x 3 axes x 5 times x 3 kinds, {elapsed:.1f}s (<=10s)")


def test_acceptance_03_kernel_and_equivariance_identities():
    sched = dyn.InertiaSchedule.exp_decay(J_CLASSIC, np.diag([0.5, 0.3, 0.2]), 1.0)
    rng = np.random.default_rng(3)
    worst_kernel = 0.0
    worst_ident = 0.0
    for axis in np.eye(3):
        re = eq.make_equilibrium(sched, axis, 1.0)
        for t in (0.0, 1.0, math.inf):
            M = stab.second_variation(sched, t, re)
            u = np.concatenate((np.zeros(3), re.pi_e))
            worst_kernel = max(worst_kernel, float(np.abs(M @ u).max()))
    re = eq.make_equilibrium(sched, [1.0, 0.0, 0.0], 1.0)
    for _ in range(100):
        eta = rng.normal(size=3)
        v = rng.normal(size=6)
        t = float(rng.uniform(0.0, 5.0))
        worst_ident = max(worst_ident,
                          stab.equivariance_identity_check(sched, t, re, eta, v))
    ok = worst_kernel <= 1e-10 and worst_ident <= 1e-7
    _report(3, ok, f"kernel residual {worst_kernel:.3e} (<=1e-10), "
                   f"identity residual {worst_ident:.3e} (<=1e-7) on 100 pairs")


def test_acceptance_04_classical_spin_verdicts():
    sched = dyn.InertiaSchedule.constant(J_CLASSIC)
    window = TimeWindow(0.0, 1.0, 3)
    J = np.diag(J_CLASSIC)

    re1 = eq.make_equilibrium(sched, [1.0, 0.0, 0.0], 1.0)
    ev1 = sym_eigen(stab.restricted_form(sched, 0.0, re1)).eigenvalues
    # closed-form chart Hessian eigenvalues for an axis-i spin: (1/J_j - 1/J_i)/2
    want1 = sorted(0.5 * (1.0 / J[j] - 1.0 / J[0]) for j in (1, 2))
    spec_ok = np.abs(np.asarray(ev1) - np.asarray(want1)).max() <= 1e-8
    cert1 = stab.certify(sched, re1, window, 0.1, 9)

    re3 = eq.make_equilibrium(sched, [0.0, 0.0, 1.0], 1.0)
    ev3 = sym_eigen(stab.restricted_form(sched, 0.0, re3)).eigenvalues
    cert3 = stab.certify(sched, re3, window, 0.1, 9)

    re2 = eq.make_equilibrium(sched, [0.0, 1.0, 0.0], 1.0)
    cert2 = stab.certify(sched, re2, window, 0.1, 9)
    probe2 = stab.probe_stability(sched, re2, 0.3, [0.01], [0.0], 200.0, 4,
                                  1e-2, 20250815)

    ok = (spec_ok
          and cert1.verdict == "uniformly-stable-certified"
          and all(e < 0 for e in ev3)
          and cert3.verdict == "uniformly-stable-certified"
          and cert3.sign_mode == "negative-definite"
          and cert2.verdict == "not-certified"
          and cert2.sign_mode == "indefinite"
          and probe2.verdict == "refuted-at-horizon"
          and probe2.worst_excursion > 0.3)
    _report(4, ok,
            f"long-axis spectrum ({ev1[0]:.9f}, {ev1[1]:.9f}) vs (1/12, 1/3), "
            f"verdicts {cert1.verdict}/{cert2.verdict}/{cert3.verdict}, "
            f"middle-axis excursion {probe2.worst_excursion:.2f} (>0.3)")


def test_acceptance_05_dual_route_restricted_form():
    rng = np.random.default_rng(55)
    worst = 0.0
    cases = 0
    for _ in range(3):
        R = so3.exp_so3(rng.normal(size=3))
        d_limit = np.sort(rng.uniform(0.8, 3.5, size=3))[::-1]
        d_limit += np.array([0.4, 0.2, 0.0])  # keep the spectrum well separated
        d_extra = rng.uniform(0.1, 0.6, size=3)
        J_limit = R @ np.diag(d_limit) @ R.T
        B = R @ np.diag(d_extra) @ R.T
        for sched in (dyn.InertiaSchedule.constant(J_limit),
                      dyn.InertiaSchedule.exp_decay(J_limit, B, 0.9)):
            axes = eq.find_common_axes(sched, TimeWindow(0.0, 2.0, 3))
            assert len(axes) == 3
            for axis in axes:
                re = eq.make_equilibrium(sched, axis, 1.2)
                for t in (0.0, 1.7, math.inf):
                    A = stab.restricted_form(sched, t, re)
                    H = stab.reduced_chart_hessian(sched, t, re)
                    worst = max(worst, float(np.abs(A - H).max()))
                    cases += 1
    ok = worst <= 1e-6
    _report(5, ok, f"max entrywise gap {worst:.3e} (<=1e-6) over {cases} "
                   "schedule/axis/time cases")


def test_acceptance_06_congruence_sign_invariance():
    sched = dyn.InertiaSchedule.exp_decay(J_CLASSIC, np.diag([0.5, 0.3, 0.2]), 1.0)
    window = TimeWindow(0.0, 2.0, 3)
    fractions = []
    for axis in np.eye(3):
        re = eq.make_equilibrium(sched, axis, 1.0)
        rep = stab.chart_invariance_check(sched, re, window, 50, 20250815)
        fractions.append(rep.sign_preserved_fraction)
    ok = all(f == 1.0 for f in fractions)
    _report(6, ok, f"sign pattern preserved in {min(fractions):.0%} of "
                   "50 congruences x 4 sample times, all three axes")


def test_acceptance_07_decaying_inertia_scenario():
    sched = dyn.InertiaSchedule.exp_decay(J_CLASSIC, 0.5 * np.eye(3), 1.0)
    window = TimeWindow(0.0, 10.0, 101)
    re = eq.make_equilibrium(sched, [1.0, 0.0, 0.0], 1.0, window=window)
    cert = stab.certify(sched, re, window, 0.1, 9)
    probe = stab.probe_stability(sched, re, 0.2, [0.02], [0.0, 2.0, 5.0],
                                 100.0, 4, 1e-2, 20250815)
    finite = all(math.isfinite(v) for v in
                 (cert.lambda_inf, cert.Lambda_sup, cert.c_bound,
                  cert.dt_max, cert.dt_min))
    certified = cert.verdict in ("uniformly-stable-certified", "stable-certified")
    implication = (not certified) or probe.verdict != "refuted-at-horizon"
    ok = (finite and probe.verdict == "consistent-with-stable" and implication)
    _report(7, ok,
            f"lambda_inf {cert.lambda_inf:.4f}, Lambda_sup {cert.Lambda_sup:.4f}, "
            f"c {cert.c_bound:.3e}, dH/dt in [{cert.dt_min:.2e}, {cert.dt_max:.2e}], "
            f"verdict {cert.verdict}, probe {probe.verdict}")


def test_acceptance_08_equilibrium_flow_stays_on_orbit():
    g = so3.exp_so3(np.array([0.3, -0.4, 0.8]))
    window = TimeWindow(0.0, 50.0, 2)
    worst_drift = 0.0
    worst_axis = 0.0
    ok = True
    for sched, axis in (
            (dyn.InertiaSchedule.constant(J_CLASSIC), [0.0, 0.0, 1.0]),
            (dyn.InertiaSchedule.exp_decay(J_CLASSIC, 0.5 * np.eye(3), 1.0),
             [1.0, 0.0, 0.0])):
        re = eq.make_equilibrium(sched, axis, 1.2, Lam_e=g)
        rep = eq.orbit_reconstruction_check(sched, re, window, 1e-2, 1e-8)
        ok = ok and rep.ok
        worst_drift = max(worst_drift, rep.max_reduced_drift)
        worst_axis = max(worst_axis, rep.max_axis_residual)
    _report(8, ok, f"reduced drift {worst_drift:.3e} (<=1e-8), axis residual "
                   f"{worst_axis:.3e} (<=1e-8) over T=50, two schedules")


def test_acceptance_09_foliated_orbit_structure():
    window = TimeWindow(0.0, 4.0, 5)
    worst_colin = 0.0
    worst_var = 0.0
    for sched in (dyn.InertiaSchedule.constant(J_CLASSIC),
                  dyn.InertiaSchedule.exp_decay(J_CLASSIC, 0.5 * np.eye(3), 1.0)):
        re = eq.make_equilibrium(sched, [1.0, 0.0, 0.0], 1.0)
        rep = eq.foliated_structure_check(sched, re, 64, window, 1e-10)
        worst_colin = max(worst_colin, rep.max_colinearity_residual)
        worst_var = max(worst_var, rep.max_first_integral_variation)
    ok = worst_colin <= 1e-10 and worst_var <= 1e-8
    _report(9, ok, f"colinearity {worst_colin:.3e} (<=1e-10), coefficient "
                   f"variation {worst_var:.3e} (<=1e-8), 64 orbit samples x 5 times")


def test_acceptance_10_probe_determinism(tmp_path):
    cfg = {
        "schedule": {"kind": "exp_decay", "J_limit": J_CLASSIC.tolist(),
                     "B": (0.5 * np.eye(3)).tolist(), "kappa": 1.0},
        "window": {"t0": 0.0, "t1": 10.0, "samples": 11},
        "integrator": {"dt": 0.01},
        "equilibrium": {"axis": [1.0, 0.0, 0.0], "p": 1.0},
        "probe": {"epsilon": 0.2, "deltas": [0.02, 0.05], "t0_list": [0.0, 2.0],
                  "horizon": 5.0, "trials": 4, "seed": 20250815},
    }
    cfg_path = tmp_path / "probe.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = [tmp_path / name for name in ("run1", "run2", "run4w")]
    assert main(["probe", "--config", str(cfg_path), "--out", str(outs[0])]) == 0
    assert main(["probe", "--config", str(cfg_path), "--out", str(outs[1])]) == 0
    assert main(["probe", "--config", str(cfg_path), "--out", str(outs[2]),
                 "--workers", "4"]) == 0
    same = all(
        (outs[0] / name).read_bytes()
        == (outs[1] / name).read_bytes()
        == (outs[2] / name).read_bytes()
        for name in ("probe_report.json", "excursions.csv"))
    verdict = json.loads((outs[0] / "probe_report.json").read_text())["verdict"]
    _report(10, same, "probe outputs bitwise identical across two runs and "
                      f"worker counts 1 and 4 (verdict {verdict})")
