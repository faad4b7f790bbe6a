"""Command-line entry point.

Subcommands: ground-state, optimize, sweep, oracle-check, plot.
Exit codes: 0 success, 1 oracle or validation failure, 2 partial sweep
convergence, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bellop, cache, config as cfgmod, indicators, models, optimizer, svgplot, tebd
from .errors import BellsweepError, ConfigurationError
from .geometry import (FREE, MeasurementSettings, SymmetryMode, UnitVector)

OUT_DIR_ENV = "BELLSWEEP_OUT_DIR"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARTIAL = 2
EXIT_CONFIG = 3


def _build_parser():
    p = argparse.ArgumentParser(prog="bellsweep",
                                description="Bell transfer-operator sweeps for spin chains")
    p.add_argument("--config", metavar="PATH", help="run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration value")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for cold-start sweeps")
    p.add_argument("--no-warm-start", action="store_true",
                   help="disable warm starts along the sweep")
    p.add_argument("--cache-dir", metavar="PATH")
    p.add_argument("--out-dir", metavar="PATH")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ground-state", help="compute or fetch the uniform MPS")
    po = sub.add_parser("optimize", help="optimize Bell settings at one field value")
    po.add_argument("--h", type=float, required=True)
    sub.add_parser("sweep", help="full field sweep with indicators and figures")
    pc = sub.add_parser("oracle-check", help="run the finite-chain oracle battery")
    pc.add_argument("--n-sites", type=int, default=8)
    pp = sub.add_parser("plot", help="re-render SVG figures from a sweep CSV")
    pp.add_argument("--csv", required=True)
    sub.add_parser("print-config", help="print the default configuration file")
    return p


def _load_config(args):
    cfg = cfgmod.parse_config_file(args.config) if args.config else cfgmod.default_config()
    pairs = []
    for kv in args.set:
        if "=" not in kv:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        pairs.append((k.strip(), v))
    cfg = cfg.with_overrides(pairs)
    if args.out_dir:
        cfg.values["outputs"] = args.out_dir
    elif os.environ.get(OUT_DIR_ENV):
        cfg.values["outputs"] = os.environ[OUT_DIR_ENV]
    if args.cache_dir:
        cfg.values["cache"] = args.cache_dir
    return cfg


def _angles_in_pi(settings):
    rows = settings.angle_rows()
    parts = []
    for k, (ta, pa, tb, pb) in enumerate(rows, start=1):
        parts.append(f"  site {k}: a=({ta/math.pi:.6f}, {pa/math.pi:.6f})pi  "
                     f"a'=({tb/math.pi:.6f}, {pb/math.pi:.6f})pi")
    return "\n".join(parts)


def _ground_state(cfg, log=print):
    spec = cfg.model()
    chi, tol = cfg.values["chi"], cfg.values["gs_tol"]
    mps, hit = cache.get_or_compute(
        cfg.values["cache"], spec, chi, tol,
        lambda: tebd.ground_state_umps(spec, chi=chi, tol=tol,
                                       max_sweeps=cfg.values["gs_max_sweeps"]),
        log=log)
    return mps, hit


def cmd_ground_state(cfg, args):
    mps, hit = _ground_state(cfg)
    defect = tebd.canonical_defect(mps)
    print(f"model={cfg.values['model.kind']} J={cfg.values['model.J']} "
          f"h={cfg.values['model.h']} delta={cfg.values['model.delta']} "
          f"chi={mps.chi}")
    print(f"energy_per_site = {mps.energy_per_site:.10f}")
    print(f"canonical_defect = {defect:.3e}   cache = {'hit' if hit else 'miss'}")
    return EXIT_OK


def cmd_optimize(cfg, args):
    spec = cfg.model().with_field(args.h)
    chi, tol = cfg.values["chi"], cfg.values["gs_tol"]
    mps, _ = cache.get_or_compute(
        cfg.values["cache"], spec, chi, tol,
        lambda: tebd.ground_state_umps(spec, chi=chi, tol=tol))
    res = optimizer.optimize_settings(mps, cfg.optimizer())
    M = bellop.mixed_transfer_matrix(mps, res.settings)
    spectrum = bellop.transfer_spectrum(M)
    print(f"h = {args.h}")
    print(f"lambda1_per_site = {res.lambda1_per_site:.10f}")
    print(f"lambda2_per_site = {spectrum.lambda1_per_site - spectrum.gap:.10f}")
    print(f"gap = {spectrum.gap:.10f}")
    print(f"converged = {res.converged}  iterations = {res.iterations}  "
          f"evaluations = {res.meta.get('n_evals')}")
    print("optimal settings (units of pi):")
    print(_angles_in_pi(res.settings))
    rec = indicators.SweepRecord(
        h=float(args.h), J=float(cfg.values["model.J"]),
        lambda1=res.lambda1_per_site,
        lambda2=spectrum.lambda1_per_site - spectrum.gap,
        gap=spectrum.gap, dlambda_dh=float("nan"),
        reduced_angles=res.reduced_angles, settings=res.settings,
        converged=res.converged, n_evals=res.meta.get("n_evals", 0))
    out_dir = cfg.values["outputs"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "optimize.csv")
    header_needed = not os.path.exists(path)
    text = indicators.write_csv([rec], path + ".tmp", cfg.config_hash(),
                                cfg.thresholds())
    lines = text.splitlines(keepends=True)
    with open(path, "a", encoding="ascii", newline="\n") as fh:
        fh.writelines(lines if header_needed else lines[2:])
    os.remove(path + ".tmp")
    print(f"appended record to {path}")
    return EXIT_OK


def cmd_sweep(cfg, args):
    out_dir = cfg.values["outputs"]
    os.makedirs(out_dir, exist_ok=True)
    h_values = cfg.h_values()
    if not h_values:
        raise ConfigurationError("empty sweep grid")
    template = cfg.model()
    recs = indicators.sweep(template, h_values, cfg.values["chi"],
                            cfg.optimizer(), gs_tol=cfg.values["gs_tol"],
                            warm_start=not args.no_warm_start,
                            progress=lambda r: print(
                                f"h={r.h:.4f} lambda1={r.lambda1:.6f} gap={r.gap:.5f}"
                                f"{'' if r.converged else '  [unconverged]'}",
                                flush=True))
    indicators.susceptibility(recs)
    points = indicators.detect_critical_points(
        recs, prominence_frac=cfg.values["prominence"],
        gap_depth_frac=cfg.values["gap_depth"])
    report = indicators.classify_geometry(
        recs, tau_lock=cfg.values["tau_lock"], tau_jump=cfg.values["tau_jump"])

    csv_path = os.path.join(out_dir, "sweep.csv")
    indicators.write_csv(recs, csv_path, cfg.config_hash(), cfg.thresholds())
    with open(os.path.join(out_dir, "indicators.svg"), "w", encoding="ascii") as fh:
        fh.write(svgplot.indicator_figure(recs))
    with open(os.path.join(out_dir, "angles.svg"), "w", encoding="ascii") as fh:
        fh.write(svgplot.angle_figure(recs))

    lines = ["geometry report", "---------------"]
    lines.append(f"thresholds: tau_lock={report.tau_lock} tau_jump={report.tau_jump}")
    for name in sorted(report.verdicts):
        lines.append(f"{name:12s} {report.verdicts[name]:9s} "
                     f"max_drift={report.max_drift[name]:.4f}")
    lines.append(f"jump locations: {report.jump_locations or 'none'}")
    lines.append("critical points:")
    if points:
        for p in points:
            lines.append(f"  h = {p.h:.4f}  methods={'+'.join(p.methods)}"
                         f"{'  (agree)' if p.agreement else ''}")
    else:
        lines.append("  none detected")
    text = "\n".join(lines)
    print(text)
    with open(os.path.join(out_dir, "geometry.txt"), "w", encoding="ascii") as fh:
        fh.write(text + "\n")
    print(f"wrote {csv_path}")
    if not all(r.converged for r in recs):
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_plot(cfg, args):
    recs = indicators.read_csv(args.csv)
    out_dir = cfg.values["outputs"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "indicators.svg"), "w", encoding="ascii") as fh:
        fh.write(svgplot.indicator_figure(recs))
    with open(os.path.join(out_dir, "angles.svg"), "w", encoding="ascii") as fh:
        fh.write(svgplot.angle_figure(recs))
    print(f"re-rendered figures into {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle battery
# ---------------------------------------------------------------------------

def _random_settings(rng, u):
    pairs = []
    for _ in range(u):
        vs = rng.standard_normal((2, 3))
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
        pairs.append((UnitVector(*vs[0]), UnitVector(*vs[1])))
    return MeasurementSettings(pairs=tuple(pairs))


def run_oracle_battery(seed=0, n_max=8, n_cases=200, log=print):
    """Cross-validation battery; returns (ok, report dict)."""
    rng = np.random.default_rng(seed)
    sizes = [n for n in (4, 6, 8) if n <= n_max] or [min(4, n_max)]
    worst_pair = None

    max_dev = 0.0
    for i in range(n_cases):
        n = sizes[i % len(sizes)]
        mps = bellop.random_obc_mps(n, 4, rng)
        psi = bellop.obc_to_dense(mps)
        state = models.FiniteGroundState(n_sites=n, state=psi, energy=0.0)
        u = int(rng.integers(1, 3))
        if n % u:
            u = 1
        ms = _random_settings(rng, u)
        v_mpo = bellop.bell_value_mpo(mps, ms)
        v_vec = bellop.bell_value_finite(state, ms)
        F = bellop.brute_force_bell_operator(ms, n)
        v_dense = float(np.real(np.vdot(psi, F @ psi)))
        dev = max(abs(v_mpo - v_dense), abs(v_vec - v_dense))
        if dev > max_dev:
            max_dev, worst_pair = dev, {"n": n, "u": u, "case": i}
    log(f"oracle equivalence: {n_cases} cases, max deviation {max_dev:.3e}")

    bound_dev = 0.0
    for i in range(n_cases):
        n = sizes[i % len(sizes)]
        amps = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        amps /= np.linalg.norm(amps, axis=1, keepdims=True)
        psi = amps[0]
        for k in range(1, n):
            psi = np.kron(psi, amps[k])
        state = models.FiniteGroundState(n_sites=n, state=psi, energy=0.0)
        val = abs(bellop.bell_value_finite(state, _random_settings(rng, 1)))
        bound_dev = max(bound_dev, val - 1.0)
    log(f"classical bound: max excess over 1 is {bound_dev:.3e}")

    s2 = math.sqrt(0.5)
    singlet = np.zeros(4, dtype=complex)
    singlet[1], singlet[2] = s2, -s2
    st = models.FiniteGroundState(n_sites=2, state=singlet, energy=0.0)
    cfg = optimizer.OptimizerConfig(grid_resolution=12, eta=0.2, tol=1e-12,
                                    max_iters=400, n_starts=3,
                                    mode=SymmetryMode(FREE))
    chsh = optimizer.optimize_settings(st, cfg, u=2)
    chsh_dev = abs(chsh.lambda1_per_site - math.sqrt(2.0))
    log(f"CHSH saturation: optimum {chsh.lambda1_per_site:.8f} "
        f"(deviation from sqrt2: {chsh_dev:.2e})")

    ghz = np.zeros(8, dtype=complex)
    ghz[0], ghz[7] = s2, s2
    st3 = models.FiniteGroundState(n_sites=3, state=ghz, energy=0.0)
    mermin = optimizer.optimize_settings(st3, cfg, u=1)
    mermin_dev = abs(mermin.lambda1_per_site - 2.0)
    log(f"Mermin-3 saturation: optimum {mermin.lambda1_per_site:.8f} "
        f"(deviation from 2: {mermin_dev:.2e})")

    qb_dev = 0.0
    for i in range(20):
        n = sizes[i % len(sizes)]
        ms = _random_settings(rng, 1)
        F = bellop.brute_force_bell_operator(ms, n)
        norm = float(np.max(np.abs(np.linalg.eigvalsh(F))))
        qb_dev = max(qb_dev, norm - 2.0 ** ((n - 1) / 2.0))
    log(f"quantum bound: max excess {qb_dev:.3e}")

    report = {
        "oracle_max_deviation": max_dev,
        "classical_bound_excess": bound_dev,
        "chsh_deviation": chsh_dev,
        "mermin_deviation": mermin_dev,
        "quantum_bound_excess": qb_dev,
        "worst_case": worst_pair,
    }
    ok = (max_dev < 1e-9 and bound_dev < 1e-9 and chsh_dev < 1e-6
          and mermin_dev < 1e-6 and qb_dev < 1e-9)
    return ok, report


def cmd_oracle_check(cfg, args):
    if args.n_sites > bellop.MAX_BRUTE_SITES:
        raise ConfigurationError(f"--n-sites must be <= {bellop.MAX_BRUTE_SITES}")
    ok, report = run_oracle_battery(seed=cfg.values["seed"], n_max=args.n_sites)
    if not ok:
        out_dir = cfg.values["outputs"]
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "oracle-failure.json")
        with open(path, "w", encoding="ascii") as fh:
            json.dump(report, fh, indent=2, default=str)
        print(f"FAIL (details in {path})", file=sys.stderr)
        return EXIT_FAIL
    print("oracle battery: all checks within tolerance")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "print-config":
            print(cfgmod.render_default_file(), end="")
            return EXIT_OK
        cfg = _load_config(args)
        handler = {
            "ground-state": cmd_ground_state,
            "optimize": cmd_optimize,
            "sweep": cmd_sweep,
            "oracle-check": cmd_oracle_check,
            "plot": cmd_plot,
        }[args.command]
        return handler(cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BellsweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
