"""Command-line front end.

Four subcommands, each driven by a single JSON config file and an output
directory: simulate (trajectory + conservation report), equilibria (find and
verify common-axis spinning states), certify (stability certificate + spectra),
probe (empirical stability probe). Exit codes: 0 success (verdicts are data,
not errors), 2 config error, 3 numerical failure. Every run writes a manifest
with content hashes of the emitted files; reports are bitwise reproducible for
a fixed config and seed.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dynamics import (BodyState, InertiaSchedule, conservation_report, flow,
                       trajectory_to_csv)
from .equilibria import (equilibrium_record, find_common_axes, make_equilibrium,
                         verify_relative_equilibrium)
from .numerics import NumericsError, TimeWindow
from .stability import (CertificateMargins, certify, probe_stability,
                        spectra_to_csv)


class ConfigError(Exception):
    """Invalid or missing config field; the message names the field."""


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"config file cannot be read: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _section(cfg, name):
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} section is required and must be an object")
    return sec


def _num(sec, key, where, positive=False, allow_missing=False, default=None):
    if key not in sec:
        if allow_missing:
            return default
        raise ConfigError(f"{where}.{key} is required")
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key} must be positive")
    return v


def _int(sec, key, where, minimum, allow_missing=False, default=None):
    if key not in sec:
        if allow_missing:
            return default
        raise ConfigError(f"{where}.{key} is required")
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer")
    if v < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}")
    return v


def _array(sec, key, where, shape):
    if key not in sec:
        raise ConfigError(f"{where}.{key} is required")
    try:
        a = np.asarray(sec[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a numeric array")
    if a.shape != shape:
        raise ConfigError(f"{where}.{key} must have shape {shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{where}.{key} must be finite")
    return a


def _build_schedule(cfg):
    sec = _section(cfg, "schedule")
    kind = sec.get("kind")
    kinds = ("constant", "exp_decay", "linear_ramp", "table")
    if kind not in kinds:
        raise ConfigError(f"schedule.kind must be one of {kinds}")
    try:
        if kind == "constant":
            return InertiaSchedule.constant(_array(sec, "J", "schedule", (3, 3)))
        if kind == "exp_decay":
            return InertiaSchedule.exp_decay(
                _array(sec, "J_limit", "schedule", (3, 3)),
                _array(sec, "B", "schedule", (3, 3)),
                _num(sec, "kappa", "schedule", positive=True))
        if kind == "linear_ramp":
            return InertiaSchedule.linear_ramp(
                _array(sec, "J0", "schedule", (3, 3)),
                _array(sec, "J1", "schedule", (3, 3)),
                _num(sec, "ramp_time", "schedule", positive=True))
        times = sec.get("times")
        mats = sec.get("matrices")
        if not isinstance(times, list) or not isinstance(mats, list):
            raise ConfigError("schedule.times and schedule.matrices are required lists")
        return InertiaSchedule.table(np.asarray(times, dtype=float),
                                     [np.asarray(m, dtype=float) for m in mats])
    except ValueError as e:
        raise ConfigError(f"schedule: {e}")


def _build_window(cfg):
    sec = _section(cfg, "window")
    t0 = _num(sec, "t0", "window")
    t1 = _num(sec, "t1", "window")
    samples = _int(sec, "samples", "window", 2)
    try:
        return TimeWindow(t0, t1, samples)
    except ValueError as e:
        raise ConfigError(f"window: {e}")


def _build_dt(cfg):
    return _num(_section(cfg, "integrator"), "dt", "integrator", positive=True)


def _build_equilibrium(cfg, schedule, window):
    sec = _section(cfg, "equilibrium")
    p = _num(sec, "p", "equilibrium", positive=True, allow_missing=True, default=1.0)
    if "axis" in sec:
        axis = _array(sec, "axis", "equilibrium", (3,))
        if not np.sqrt(axis @ axis) > 0:
            raise ConfigError("equilibrium.axis must be nonzero")
    elif "axis_index" in sec:
        idx = _int(sec, "axis_index", "equilibrium", 0)
        axes = find_common_axes(schedule, window)
        if idx >= len(axes):
            raise ConfigError(f"equilibrium.axis_index {idx} out of range "
                              f"({len(axes)} common axes found)")
        axis = axes[idx]
    else:
        raise ConfigError("equilibrium.axis or equilibrium.axis_index is required")
    try:
        return make_equilibrium(schedule, axis, p, window=window)
    except ValueError as e:
        raise ConfigError(f"equilibrium.axis: {e}")


def _build_chart(cfg, re):
    sec = cfg.get("chart", {})
    if not isinstance(sec, dict):
        raise ConfigError("chart section must be an object")
    radius = _num(sec, "radius", "chart", positive=True, allow_missing=True,
                  default=0.1 * re.p)
    grid = _int(sec, "grid", "chart", 1, allow_missing=True, default=9)
    if radius >= re.p:
        raise ConfigError("chart.radius must be smaller than equilibrium.p")
    return radius, grid


def _build_margins(cfg):
    sec = cfg.get("margins")
    if sec is None:
        return None
    if not isinstance(sec, dict):
        raise ConfigError("margins section must be an object")
    lam = _num(sec, "lambda", "margins", allow_missing=True)
    Lam = _num(sec, "Lambda", "margins", allow_missing=True)
    return CertificateMargins(lam=lam, Lam=Lam)


def _build_probe(cfg):
    sec = _section(cfg, "probe")
    epsilon = _num(sec, "epsilon", "probe", positive=True)
    deltas = sec.get("deltas")
    if not isinstance(deltas, list) or not deltas:
        raise ConfigError("probe.deltas must be a non-empty list")
    out = []
    for i, d in enumerate(deltas):
        if isinstance(d, bool) or not isinstance(d, (int, float)) \
                or not math.isfinite(float(d)):
            raise ConfigError(f"probe.deltas[{i}] must be a finite number")
        d = float(d)
        if d < 0 or d >= epsilon:
            raise ConfigError(f"probe.deltas[{i}] must satisfy 0 <= delta < probe.epsilon")
        out.append(d)
    t0s = sec.get("t0_list")
    if not isinstance(t0s, list) or not t0s:
        raise ConfigError("probe.t0_list must be a non-empty list")
    t0_list = []
    for i, t in enumerate(t0s):
        if isinstance(t, bool) or not isinstance(t, (int, float)) \
                or not math.isfinite(float(t)):
            raise ConfigError(f"probe.t0_list[{i}] must be a finite number")
        t0_list.append(float(t))
    horizon = _num(sec, "horizon", "probe", positive=True)
    trials = _int(sec, "trials", "probe", 1)
    seed = _int(sec, "seed", "probe", 0)
    return epsilon, out, t0_list, horizon, trials, seed


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        if math.isnan(obj):
            return "nan"
        return "inf" if obj > 0 else "-inf"
    return obj


def _write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text + "\n")


def _write_manifest(out_dir, command, cfg, files, t_start):
    entries = []
    for name in sorted(files):
        with open(os.path.join(out_dir, name), "rb") as fh:
            data = fh.read()
        entries.append({"name": name, "bytes": len(data),
                        "sha256": hashlib.sha256(data).hexdigest()})
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "wall_clock_seconds": time.perf_counter() - t_start,
        "files": entries,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def cmd_simulate(cfg, out_dir):
    schedule = _build_schedule(cfg)
    window = _build_window(cfg)
    dt = _build_dt(cfg)
    sec = _section(cfg, "initial_state")
    Pi0 = _array(sec, "Pi", "initial_state", (3,))
    if "Lam" in sec:
        Lam0 = _array(sec, "Lam", "initial_state", (3, 3))
    else:
        Lam0 = np.eye(3)
    try:
        state0 = BodyState(Lam0, Pi0)
    except ValueError as e:
        raise ConfigError(f"initial_state: {e}")
    traj = flow(schedule, state0, window, dt)
    trajectory_to_csv(schedule, traj, os.path.join(out_dir, "trajectory.csv"))
    report = conservation_report(schedule, traj)
    payload = report.to_json_dict()
    payload.update({"t0": window.t0, "t1": window.t1, "dt": dt,
                    "n_samples": len(traj)})
    _write_json(os.path.join(out_dir, "conservation.json"), payload)
    return ["trajectory.csv", "conservation.json"]


def cmd_equilibria(cfg, out_dir):
    schedule = _build_schedule(cfg)
    window = _build_window(cfg)
    sec = cfg.get("equilibrium", {})
    if not isinstance(sec, dict):
        raise ConfigError("equilibrium section must be an object")
    p = _num(sec, "p", "equilibrium", positive=True, allow_missing=True, default=1.0)
    tol = _num(sec, "tol", "equilibrium", positive=True, allow_missing=True,
               default=1e-8)
    axes = find_common_axes(schedule, window)
    records = []
    for axis in axes:
        re = make_equilibrium(schedule, axis, p, window=window)
        ver = verify_relative_equilibrium(schedule, re, window, tol)
        rec = equilibrium_record(re, window, ver)
        if axes.warning:
            rec["warnings"] = [axes.warning]
        records.append(rec)
    _write_json(os.path.join(out_dir, "equilibria.json"), records)
    return ["equilibria.json"]


def cmd_certify(cfg, out_dir):
    schedule = _build_schedule(cfg)
    window = _build_window(cfg)
    re = _build_equilibrium(cfg, schedule, window)
    radius, grid = _build_chart(cfg, re)
    margins = _build_margins(cfg)
    report = certify(schedule, re, window, radius, grid, margins)
    _write_json(os.path.join(out_dir, "certificate.json"), report.to_json_dict())
    spectra_to_csv(report, os.path.join(out_dir, "spectra.csv"))
    return ["certificate.json", "spectra.csv"]


def cmd_probe(cfg, out_dir, workers=1):
    schedule = _build_schedule(cfg)
    window = _build_window(cfg)
    re = _build_equilibrium(cfg, schedule, window)
    dt = _build_dt(cfg)
    epsilon, deltas, t0_list, horizon, trials, seed = _build_probe(cfg)
    report = probe_stability(schedule, re, epsilon, deltas, t0_list, horizon,
                             trials, dt, seed, workers=workers)
    _write_json(os.path.join(out_dir, "probe_report.json"), report.to_json_dict())
    path = os.path.join(out_dir, "excursions.csv")
    with open(path, "w", newline="") as fh:
        fh.write("t0,delta,worst_excursion,passed\n")
        for c in report.cells:
            fh.write(f"{c['t0']:.17g},{c['delta']:.17g},"
                     f"{c['worst_excursion']:.17g},{int(c['passed'])}\n")
    return ["probe_report.json", "excursions.csv"]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="almostrigid",
        description="Rigid bodies with time-varying inertia: simulation, "
                    "relative equilibria, stability certificates, probes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("simulate", "integrate a trajectory and report conservation drifts"),
            ("equilibria", "find and verify common-axis relative equilibria"),
            ("certify", "assemble a stability certificate for an equilibrium"),
            ("probe", "probe stability empirically on the reduced sphere")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--out", required=True, help="output directory")
        if name == "probe":
            sp.add_argument("--workers", type=int, default=1,
                            help="parallel workers for probe cells (default 1)")
    args = parser.parse_args(argv)
    t_start = time.perf_counter()
    try:
        cfg = _load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "simulate":
            files = cmd_simulate(cfg, args.out)
        elif args.command == "equilibria":
            files = cmd_equilibria(cfg, args.out)
        elif args.command == "certify":
            files = cmd_certify(cfg, args.out)
        else:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            files = cmd_probe(cfg, args.out, workers=args.workers)
        _write_manifest(args.out, args.command, cfg, files, t_start)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
