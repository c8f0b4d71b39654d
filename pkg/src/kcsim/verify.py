"""Invariant suite behind the `verify` subcommand: runs the configured
scenario and checks every physics invariant that applies to it, plus the
plumbing self-checks (convolution equivalence, snapshot and CSV round-trips).

Thresholds here are the universal contracts (conservation, monotonicity,
bounds); the pinned desk-scale acceptance numbers live in the test suite.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .csvio import emit_csv, read_csv
from .diagnostics import DiagnosticsSeries, energy_ledger, grid_norms, support_bound_check
from .experiments import (
    SigmaSweepStudy,
    StabilityStudy,
    run_sigma_sweep,
    run_stability,
    sample_from_grid,
)
from .grid import init_grid
from .model import alignment_field_grid, validate_kernel_bounds
from .runner import simulate_grid, simulate_particles
from .snapshots import read_snapshot, write_snapshot


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _quick_params(cfg: RunConfig, quick: bool):
    p = cfg.params
    if not quick:
        return p
    return dataclasses.replace(p, t_final=min(p.t_final, 0.25),
                               n_particles=min(p.n_particles, 400))


def run_verification(cfg: RunConfig, quick: bool = False,
                     study_dir: str | None = None) -> list[CheckResult]:
    """Run every applicable invariant check; optionally write one CSV table
    per configured study into study_dir."""
    checks: list[CheckResult] = []
    p = _quick_params(cfg, quick)
    profile = cfg.profile

    report = validate_kernel_bounds(cfg.kernel)
    checks.append(CheckResult(
        "kernel bounds",
        report.within_unit(),
        f"max(|phi|, |phi'|, |phi''|) = {max(report.max_phi, report.max_dphi, report.max_ddphi):.6g}",
    ))

    f0 = init_grid(profile, p)
    fp_direct = alignment_field_grid(f0, cfg.kernel, method="direct")
    fp_fft = alignment_field_grid(f0, cfg.kernel, method="fft")
    conv_err = max(
        float(np.abs(fp_direct.a - fp_fft.a).max() / max(np.abs(fp_direct.a).max(), 1e-300)),
        float(np.abs(fp_direct.b - fp_fft.b).max() / max(np.abs(fp_direct.a).max(), 1e-300)),
    )
    checks.append(CheckResult(
        "fft/direct convolution equivalence", conv_err <= 1e-12,
        f"max relative gap {conv_err:.2e} (tol 1e-12)"))

    checks.extend(_roundtrip_checks(f0))
    checks.append(CheckResult(
        "CSV round-trip",
        csv_roundtrip_ok(_tiny_series(f0, cfg.weights)),
        "17-digit float64 fidelity"))

    if cfg.solver in ("grid", "both"):
        checks.extend(_grid_checks(cfg, f0, p))
    if cfg.solver in ("particle", "both"):
        checks.extend(_particle_checks(cfg, f0, p))
    if not quick:
        checks.extend(_study_checks(cfg, p, study_dir))
    return checks


def _tiny_series(f0, weights):
    s = DiagnosticsSeries()
    s.append(grid_norms(f0, weights))
    return s


def _roundtrip_checks(f0) -> list[CheckResult]:
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        snap = os.path.join(tmp, "state.kcs")
        write_snapshot(f0, snap)
        back = read_snapshot(snap)
        ok = (np.array_equal(back.values, f0.values) and back.t == f0.t
              and back.lx == f0.lx and back.lv == f0.lv)
        out.append(CheckResult("snapshot round-trip", ok,
                               "bitwise" if ok else "mismatch"))
    return out


def _grid_checks(cfg: RunConfig, f0, p) -> list[CheckResult]:
    out = []
    res = simulate_grid(f0, cfg.kernel, cfg.weights, p.sigma, p.dt,
                        p.t_final, cfg.cadence)
    series = res.series
    mass = series.column("mass")
    drift = float(np.abs(mass - mass[0]).max() / mass[0])
    out.append(CheckResult("grid mass conservation", drift <= 1e-9,
                           f"relative drift {drift:.2e} (tol 1e-9)"))
    neg = float(res.final.values.min())
    out.append(CheckResult("grid positivity", neg >= 0.0, f"min f = {neg:.2e}"))
    energy = series.column("energy")
    if p.sigma == 0.0:
        ok = bool(np.all(energy <= energy[0] * (1.0 + 1e-12)))
        out.append(CheckResult("grid energy inequality", ok,
                               f"max E(t)/E(0) = {energy.max() / energy[0]:.6f}"))
        if profile_r0(cfg) is not None:
            chk = support_bound_check(series, profile_r0(cfg), p.mass,
                                      tol_geom=2.0 * f0.dv)
            out.append(CheckResult(
                "grid support bound", chk.passed,
                f"worst slack {chk.worst_slack:.3g} at t={chk.worst_t:.3g}"))
    slope_cap = (2.0 * p.mass + 1.0) * 1.05
    l1v = series.column("l1_weighted")
    t = series.times
    slopes = np.diff(np.log(l1v)) / np.diff(t)
    out.append(CheckResult(
        "weighted-L1 growth slope", bool(np.all(slopes <= slope_cap)),
        f"max slope {slopes.max():.4f} <= {slope_cap:.2f}"))
    residual = energy_ledger(series, p.sigma, 1, p.mass)
    out.append(CheckResult(
        "grid energy ledger (reported)", True,
        f"max |residual|/E(0) = {np.abs(residual).max() / energy[0]:.3e}"))
    if res.boundary_warning:
        out.append(CheckResult(
            "grid boundary truncation", False,
            f"boundary mass {res.boundary_mass_max:.2e} exceeds 1e-8 M"))
    else:
        out.append(CheckResult(
            "grid boundary truncation", True,
            f"boundary mass {res.boundary_mass_max:.2e}"))
    return out


def _particle_checks(cfg: RunConfig, f0, p) -> list[CheckResult]:
    out = []
    e0 = sample_from_grid(f0, p.n_particles, p.seed)
    res = simulate_particles(e0, cfg.kernel, p.sigma, p.dt, p.t_final,
                             cfg.cadence, seed=p.seed,
                             track_diameter=(p.sigma == 0.0))
    series = res.series
    if p.sigma == 0.0:
        mom = series.column("momentum")
        scale = p.mass * max(float(np.abs(e0.v).max()), 1.0)
        drift = float(np.abs(mom - mom[0]).max() / scale)
        out.append(CheckResult("particle momentum conservation", drift <= 1e-12,
                               f"relative drift {drift:.2e} (tol 1e-12)"))
        diam = res.diameters
        ok = bool(np.all(np.diff(diam) <= 1e-12))
        out.append(CheckResult("particle velocity diameter monotone", ok,
                               f"diameter {diam[0]:.4g} -> {diam[-1]:.4g}"))
        if profile_r0(cfg) is not None:
            # the sampled ensemble's own initial radius is the hypothesis
            # quantity of the support bound (cell jitter can push it slightly
            # past the profile's R0)
            r0 = float(np.abs(e0.v).max())
            chk = support_bound_check(series, r0, p.mass, tol_geom=0.0)
            out.append(CheckResult(
                "particle support bound", chk.passed,
                f"worst slack {chk.worst_slack:.3g} at t={chk.worst_t:.3g}"))
    rerun = simulate_particles(e0, cfg.kernel, p.sigma, p.dt, p.t_final,
                               cfg.cadence, seed=p.seed)
    identical = (np.array_equal(rerun.final.x, res.final.x)
                 and np.array_equal(rerun.final.v, res.final.v))
    out.append(CheckResult("particle run reproducibility", identical,
                           "bitwise" if identical else "mismatch"))
    return out


def _study_checks(cfg: RunConfig, p, study_dir: str | None) -> list[CheckResult]:
    out = []
    for idx, study in enumerate(cfg.studies):
        base = init_grid(cfg.profiles[study.scenario], p)
        if isinstance(study, StabilityStudy):
            st = run_stability(study, base, cfg.kernel, cfg.weights,
                               p.sigma, p.dt)
            amp = float(st.amplification_full.max())
            gap = st.linear_response_gap()
            out.append(CheckResult(
                f"stability amplification ({study.norm})",
                amp <= 10.0 and gap <= 0.10,
                f"max A = {amp:.3f} (cap 10), delta-halving gap {gap:.3f} (cap 0.10)"))
            if study_dir is not None:
                path = os.path.join(study_dir,
                                    f"study_{idx}_stability_{study.scenario}.csv")
                with open(path, "w") as fh:
                    fh.write("t,dist_delta,amplification_delta,"
                             "dist_half,amplification_half\n")
                    for row in zip(st.times, st.dist_full,
                                   st.amplification_full, st.dist_half,
                                   st.amplification_half):
                        fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        elif isinstance(study, SigmaSweepStudy):
            sw = run_sigma_sweep(study, base, cfg.kernel, cfg.weights, p.dt)
            ok = sw.monotone and bool(np.all(sw.adjacent_ratios <= 0.7))
            out.append(CheckResult(
                "vanishing-noise sweep", ok,
                f"ratios {np.round(sw.adjacent_ratios, 3).tolist()}, "
                f"fitted order {sw.fitted_order:.3f}"))
            if study_dir is not None:
                path = os.path.join(study_dir,
                                    f"study_{idx}_sweep_{study.scenario}.csv")
                with open(path, "w") as fh:
                    fh.write("sigma,err_l2_omega,err_l1,err_observable\n")
                    for row in sw.table():
                        fh.write(f"{row['sigma']:.17g},"
                                 f"{row['err_l2_omega']:.17g},"
                                 f"{row['err_l1']:.17g},"
                                 f"{row['err_observable']:.17g}\n")
    return out


def profile_r0(cfg: RunConfig):
    return cfg.profile.r0


def summary_dict(checks: list[CheckResult]) -> dict:
    return {
        "passed": all(c.passed for c in checks),
        "checks": [
            {"name": c.name, "passed": c.passed, "detail": c.detail}
            for c in checks
        ],
    }


def csv_roundtrip_ok(series) -> bool:
    """CSV write/read equality at full precision (plumbing self-check)."""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "series.csv")
        emit_csv(series, path)
        back = read_csv(path)
    if len(back) != len(series):
        return False
    for a, b in zip(series, back):
        for name in a.__dataclass_fields__:
            va, vb = getattr(a, name), getattr(b, name)
            if (np.isnan(va) and np.isnan(vb)):
                continue
            if va != vb:
                return False
    return True
