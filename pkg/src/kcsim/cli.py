"""Command-line interface.

Subcommands: simulate, verify, sweep, compare, inspect.
Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime blow-up or step-size failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from .config import RunConfig, parse_config
from .csvio import emit_csv
from .diagnostics import energy_ledger
from .errors import BlowUpError, ConfigError, KcsError, StepSizeError
from .experiments import (
    CrossValidationStudy,
    SigmaSweepStudy,
    run_cross_validation,
    run_sigma_sweep,
    sample_from_grid,
)
from .grid import init_grid
from .plots import emit_plots
from .runner import simulate_grid, simulate_particles
from .snapshots import describe_snapshot, tag_sigma, write_snapshot
from .verify import run_verification, summary_dict

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        text = resources.files("kcsim").joinpath("default.cfg").read_text()
        return parse_config(text)
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out_dir = args.output or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    p = cfg.params
    f0 = init_grid(cfg.profile, p)
    summary = {"scenario": cfg.scenario, "solver": cfg.solver,
               "sigma": p.sigma, "t_final": p.t_final, "runs": {}}

    if cfg.solver in ("grid", "both"):
        res = simulate_grid(f0, cfg.kernel, cfg.weights, p.sigma, p.dt,
                            p.t_final, cfg.cadence)
        base = os.path.join(out_dir, f"{cfg.scenario}_grid")
        emit_csv(res.series, base + ".csv")
        write_snapshot(tag_sigma(f0, p.sigma), base + "_t0.kcs")
        write_snapshot(tag_sigma(res.final, p.sigma), base + "_final.kcs")
        residual = energy_ledger(res.series, p.sigma, 1, p.mass)
        emit_plots(base, res.series, sigma=p.sigma, mass=p.mass,
                   r0=cfg.profile.r0, snapshots=[f0, res.final])
        summary["runs"]["grid"] = {
            "mass_drift": float(np.abs(res.series.column("mass") - p.mass).max() / p.mass),
            "energy_final": float(res.series.records[-1].energy),
            "ledger_residual_max": float(np.abs(residual).max()),
            "boundary_warning": res.boundary_warning,
        }
        if res.boundary_warning:
            print(f"warning: boundary mass reached {res.boundary_mass_max:.2e}; "
                  "domain truncation may be affecting the run", file=sys.stderr)

    if cfg.solver in ("particle", "both"):
        e0 = sample_from_grid(f0, p.n_particles, p.seed)
        res = simulate_particles(e0, cfg.kernel, p.sigma, p.dt, p.t_final,
                                 cfg.cadence, seed=p.seed,
                                 track_diameter=(p.sigma == 0.0))
        base = os.path.join(out_dir, f"{cfg.scenario}_particle")
        emit_csv(res.series, base + ".csv")
        write_snapshot(tag_sigma(e0, p.sigma), base + "_t0.kcs")
        write_snapshot(tag_sigma(res.final, p.sigma), base + "_final.kcs")
        emit_plots(base, res.series, sigma=p.sigma, d=p.d, mass=p.mass,
                   r0=cfg.profile.r0)
        summary["runs"]["particle"] = {
            "energy_final": float(res.series.records[-1].energy),
            "momentum_final": float(res.series.records[-1].momentum),
        }

    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    out_dir = args.output or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    checks = run_verification(cfg, quick=args.quick,
                              study_dir=None if args.quick else out_dir)
    for c in checks:
        print(c.line())
    with open(os.path.join(out_dir, "verify.json"), "w") as fh:
        json.dump(summary_dict(checks), fh, indent=2)
    if all(c.passed for c in checks):
        print(f"all {len(checks)} checks passed")
        return EXIT_OK
    failed = sum(not c.passed for c in checks)
    print(f"{failed} of {len(checks)} checks FAILED", file=sys.stderr)
    return EXIT_VERIFY


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    studies = [s for s in cfg.studies if isinstance(s, SigmaSweepStudy)]
    if not studies:
        studies = [SigmaSweepStudy(scenario=cfg.scenario)]
    out_dir = args.output or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    code = EXIT_OK
    for idx, study in enumerate(studies):
        f0 = init_grid(cfg.profiles[study.scenario], cfg.params)
        res = run_sigma_sweep(study, f0, cfg.kernel, cfg.weights, cfg.params.dt)
        base = os.path.join(out_dir, f"sweep_{idx}_{study.scenario}")
        with open(base + ".csv", "w") as fh:
            fh.write("sigma,err_l2_omega,err_l1,err_observable\n")
            for row in res.table():
                fh.write(f"{row['sigma']:.17g},{row['err_l2_omega']:.17g},"
                         f"{row['err_l1']:.17g},{row['err_observable']:.17g}\n")
        emit_plots(base, None, sweep=res)
        print(f"sweep {study.scenario}: fitted order {res.fitted_order:.3f}, "
              f"ratios {np.round(res.adjacent_ratios, 3).tolist()}")
        if not res.monotone:
            print("sweep error table is not monotone within tolerance",
                  file=sys.stderr)
            code = EXIT_VERIFY
    return code


def _cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    studies = [s for s in cfg.studies if isinstance(s, CrossValidationStudy)]
    if not studies:
        studies = [CrossValidationStudy(scenario=cfg.scenario)]
    out_dir = args.output or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    for idx, study in enumerate(studies):
        f0 = init_grid(cfg.profiles[study.scenario], cfg.params)
        res = run_cross_validation(study, f0, cfg.kernel, cfg.weights,
                                   cfg.params.sigma, cfg.params.dt,
                                   cfg.params.dt, seed=cfg.params.seed)
        base = os.path.join(out_dir, f"compare_{idx}_{study.scenario}")
        with open(base + ".csv", "w") as fh:
            fh.write("n_particles,max_mass_err,max_momentum_err,"
                     "max_energy_err,marginal_l1\n")
            for r in res.rows:
                fh.write(f"{r.n_particles},{r.max_mass_err:.17g},"
                         f"{r.max_momentum_err:.17g},{r.max_energy_err:.17g},"
                         f"{r.marginal_l1:.17g}\n")
        for r in res.rows:
            print(f"compare {study.scenario} N={r.n_particles}: "
                  f"mass {r.max_mass_err:.2e}, momentum {r.max_momentum_err:.3e}, "
                  f"energy {r.max_energy_err:.3e}, marginal L1 {r.marginal_l1:.3e}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    print(describe_snapshot(args.snapshot))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcsim",
        description="Kinetic flocking simulation and verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", "-c", default=None,
                        help="configuration file (default: shipped default.cfg)")
        sp.add_argument("--output", "-o", default=None,
                        help="output directory (default: from config)")

    add_config(sub.add_parser("simulate", help="run the configured solver(s)"))
    vp = sub.add_parser("verify", help="run the invariant suite")
    add_config(vp)
    vp.add_argument("--quick", action="store_true",
                    help="shorten horizons and skip studies")
    add_config(sub.add_parser("sweep", help="run vanishing-noise sweeps"))
    add_config(sub.add_parser("compare", help="run particle/grid cross-validation"))
    ip = sub.add_parser("inspect", help="print a snapshot header")
    ip.add_argument("snapshot")
    return parser


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "verify": _cmd_verify,
        "sweep": _cmd_sweep,
        "compare": _cmd_compare,
        "inspect": _cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as ex:
        print(f"configuration error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, StepSizeError) as ex:
        print(f"runtime failure: {ex}", file=sys.stderr)
        return EXIT_RUNTIME
    except KcsError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
