"""Command line entry point: sphere-euler <command> --config FILE --out-dir DIR.

Exit codes: 0 success, 1 an invariant or acceptance check failed, 2 usage or
configuration error. Outputs contain no timestamps, so identical manifests
give byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .biot_savart import (GridVelocityEngine, velocity_full, velocity_oddodd,
                          velocity_pole_component)
from .construction import (boundary_flux_check, g_eval, run_envelope, write_envelope_csv)
from .estimates import lemma_sweep, rebound, upper_envelope, write_report_csv
from .fields import integral, lp_norm, quadrant_sign_field
from .fitting import field_names, fit_all, named_field, sweep_quad
from .sphere_geom import from_angles
from .solver import (band_height, conjugacy_check, level_set_left_boundary, run,
                     write_diagnostics)

COMMANDS = ("simulate", "verify-kernel", "verify-estimates", "envelope", "constants", "conjugacy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="sphere-euler", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", default=None, help="flat JSON config (defaults if omitted)")
        s.add_argument("--out-dir", default="out")
        s.add_argument("--seed", type=int, default=0)
        if name == "verify-estimates":
            s.add_argument("--sweep", choices=("log", "coarse"), default="log",
                           help="log: 2^-k grid up to sweep_k_max; coarse: k <= 6")
        if name == "constants":
            s.add_argument("--refit", action="store_true",
                           help="recompute the fitted constants (minutes)")
    return p


def _fmt(x):
    return repr(float(x))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in r])


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, out, args):
    scfg = cfgmod.simulation_config(cfg)
    f0 = cfgmod.initial_field(cfg)
    band = band_height(cfg["epsilon0"], cfg["n_theta"])
    lb = []
    st = run(scfg, f0, out_dir=out,
             callback=lambda s: lb.append((s.time, level_set_left_boundary(s.field, band))))
    write_diagnostics(st.diagnostics, os.path.join(out, "diagnostics.csv"))
    _write_rows(os.path.join(out, "level_set.csv"), ["t", "left_phi"], lb)
    return simulation_report(cfg, st, lb, out)


def simulation_report(cfg, st, lb, out=None):
    d = np.array(st.diagnostics)
    t, grad, linf = d[:, 0], d[:, 1], d[:, 4]
    drift = float(np.max(np.abs(linf - linf[0])) / linf[0]) if linf[0] > 0 else 0.0
    env = upper_envelope(grad[0], 4 * np.pi, t, cfg["C_I"]) if linf[0] > 0 else np.inf * t
    dphi = 2 * np.pi / cfg["n_phi"]
    lphi = np.array([v for _, v in lb])
    fin = np.isfinite(lphi)
    rep = {
        "linf_drift": drift,
        "gauss_res_max": float(np.max(d[:, 5])),
        "sym_res_pre_max": float(np.max(d[:, 6])),
        "grad_nondecreasing": bool(np.all(np.diff(grad) >= -cfg["grad_tol"] * grad[:-1])),
        "left_boundary_nonincreasing": bool(np.all(np.diff(lphi[fin]) <= dphi + 1e-12)),
        "below_upper_envelope": bool(np.all(grad <= env * (1 + 1e-12))),
        "substeps": int(st.substeps),
    }
    rep["passed"] = bool(drift <= cfg["linf_drift_tol"] and rep["gauss_res_max"] <= cfg["gauss_tol"]
                         and rep["sym_res_pre_max"] <= cfg["sym_tol"]
                         and rep["below_upper_envelope"])
    if out:
        _write_json(os.path.join(out, "report.json"), rep)
    return 0 if rep["passed"] else 1


def kernel_checks(cfg, seed):
    """Rows (check, value, tol, pass) for the three kernel verifications."""
    q = cfgmod.quad_spec(cfg)
    n_phi, n_theta = cfg["n_phi"], cfg["n_theta"]
    rows = []
    # rigid rotation: w = 2 y3 -> u = -e3 ^ x
    from .fields import from_function
    f = from_function(lambda p, t: 2 * np.sin(t), n_phi, n_theta)
    U = GridVelocityEngine(n_phi, n_theta, q).cart_velocity(f.grid)
    x = f.chart.xyz()
    ex = -np.cross(np.array([0.0, 0.0, 1.0]), x)
    w = f.chart.weights
    err = float(np.sqrt(np.sum(w * np.sum((U - ex) ** 2, -1)) / np.sum(w * np.sum(ex ** 2, -1))))
    rows.append(("rigid_rotation_rel_l2", err, cfg["kernel_tol_oracle"]))
    # quarter-sphere formulas vs full sphere at separated random points
    g = cfgmod.initial_field(cfg)
    delta = q.cutoff_for(n_phi, n_theta)
    rng = np.random.default_rng(seed)
    worst = 0.0
    got = 0
    while got < cfg["kernel_points"]:
        ph = rng.uniform(-np.pi, np.pi)
        th = rng.uniform(-np.pi / 2, np.pi / 2)
        if min(abs(ph), np.pi - abs(ph), abs(th), np.pi / 2 - abs(th)) < delta:
            continue
        p = from_angles(ph, th)
        a, b = velocity_full(g, p, q), velocity_oddodd(g, p, q)
        scale = max(np.hypot(a.u_phi, a.u_theta), 1e-12)
        worst = max(worst, float(np.hypot(a.u_phi - b.u_phi, a.u_theta - b.u_theta) / scale))
        got += 1
    rows.append(("oddodd_vs_full_rel", worst, cfg["kernel_tol_symmetry"]))
    # vanishing identities on the axes and at the poles
    sup = lp_norm(g, np.inf)
    van = 0.0
    for s in np.linspace(-1.4, 1.4, 8):
        van = max(van, abs(velocity_full(g, from_angles(0.0, s), q).u_phi))
        van = max(van, abs(velocity_full(g, from_angles(2 * s, 0.0), q).u_theta))
    for pole in (1, -1):
        van = max(van, abs(velocity_pole_component(g, pole, q)))
    rows.append(("vanishing_identities_rel", van / sup, cfg["kernel_tol_vanish"]))
    return [(n, v, t, "true" if v <= t else "false") for n, v, t in rows]


def cmd_verify_kernel(cfg, out, args):
    rows = kernel_checks(cfg, args.seed)
    _write_rows(os.path.join(out, "kernel_check.csv"), ["check", "value", "tol", "pass"], rows)
    return 0 if all(r[3] == "true" for r in rows) else 1


def cmd_verify_estimates(cfg, out, args):
    kmax = cfg["sweep_k_max"] if args.sweep == "log" else min(6, cfg["sweep_k_max"])
    q = sweep_quad(cfg["gauss_order"], cfg["gauss_ratio"], cfg["gauss_depth"])
    reps = []
    for name in field_names(cfg["sweep_fields"]):
        reps += rebound(lemma_sweep(named_field(name), range(1, kmax + 1), q, "Q", 1.0), cfg["C1"])
    write_report_csv(reps, os.path.join(out, "estimates.csv"))
    C = cfgmod.constants(cfg)
    rows = []
    ok = all(r.passed for r in reps)
    for a in cfgmod.floats(cfg["flux_alphas"]):
        fr = boundary_flux_check(quadrant_sign_field(), cfg["flux_eps"], a, C, q,
                                 n=cfg["flux_samples"])
        rows.append((a, fr.v1_margin, fr.v2_margin, fr.v3_margin,
                     "true" if fr.v1_margin >= -cfg["flux_tol"] else "false"))
        ok &= rows[-1][-1] == "true"
    _write_rows(os.path.join(out, "flux.csv"),
                ["alpha", "v1_margin", "v2_margin", "v3_margin", "v1_pass"], rows)
    return 0 if ok else 1


def cmd_envelope(cfg, out, args):
    C = cfgmod.constants(cfg)
    r = run_envelope(C, T=cfg["envelope_T"], dt=cfg["envelope_dt"],
                     record_every=cfg["envelope_record_every"])
    write_envelope_csv(r, os.path.join(out, "envelope.csv"))
    ratio = float(r.k[-1] / r.t[-1])
    slope = float(r.final_slope())
    tol = cfg["envelope_tol"]
    rep = {"k_over_T": ratio, "final_half_slope": slope, "target": 2 / np.pi,
           "passed": bool(abs(ratio - 2 / np.pi) <= tol and abs(slope - 2 / np.pi) <= tol)}
    _write_json(os.path.join(out, "summary.json"), rep)
    return 0 if rep["passed"] else 1


def cmd_constants(cfg, out, args):
    if args.refit:
        fit = fit_all(cfg)
        cfg = dict(cfg, **fit)
    C = cfgmod.constants(cfg)
    rep = dict(C.as_dict())
    rep.update({"C1_prime": cfg["C1_prime"], "C1_ratio_max": cfg["C1_ratio_max"],
                "C2_measured": cfg["C2_measured"], "K": C.K,
                "g_s0": float(g_eval(min(C.s0, np.exp(-1))))})
    _write_json(os.path.join(out, "constants.json"), rep)
    return 0


def cmd_conjugacy(cfg, out, args):
    f0 = cfgmod.initial_field(cfg, kind="patch_sign", width=cfg["conj_transition_width"])
    scfg = cfgmod.simulation_config(cfg, symmetry="none", t_end=cfg["conj_t_end"])
    rep = conjugacy_check(f0, cfg["conj_omega"], cfg["conj_t_end"], scfg,
                          cfg["conj_sample_every"])
    _write_rows(os.path.join(out, "conjugacy.csv"),
                ["t", "discrepancy", "grad_plain", "grad_rotating"],
                zip(rep.times, rep.discrepancy, rep.grad_plain, rep.grad_rotating))
    res = {"max_discrepancy": rep.max_discrepancy, "max_grad_gap": rep.max_grad_gap,
           "passed": bool(rep.max_discrepancy <= cfg["conj_tol"]
                          and rep.max_grad_gap <= cfg["grad_tol"])}
    _write_json(os.path.join(out, "report.json"), res)
    return 0 if res["passed"] else 1


HANDLERS = {"simulate": cmd_simulate, "verify-kernel": cmd_verify_kernel,
            "verify-estimates": cmd_verify_estimates, "envelope": cmd_envelope,
            "constants": cmd_constants, "conjugacy": cmd_conjugacy}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = cfgmod.load(args.config)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except cfgmod.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"config error: cannot read {args.config!r}: {e.strerror}", file=sys.stderr)
        return 2
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = {"command": args.command, "config_path": args.config, "out_dir": args.out_dir,
                "seed": args.seed, "config": cfg}
    if args.command == "verify-estimates":
        manifest["sweep"] = args.sweep
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    np.random.seed(args.seed)
    try:
        return HANDLERS[args.command](cfg, args.out_dir, args)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
