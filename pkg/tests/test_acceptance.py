"""Acceptance gate: every quantitative contract at its stated tolerance.

Each criterion prints one PASS line (run with `pytest -s tests/test_acceptance.py`
to see them).  The particle energy-identity refinement pair dominates the
runtime; everything else is seconds.
"""

import time

import numpy as np
import pytest

from kcsim.diagnostics import (
    dissipation_rate,
    energy_ledger,
    support_bound_check,
)
from kcsim.experiments import (
    SigmaSweepStudy,
    StabilityStudy,
    history_provider,
    run_sigma_sweep,
    run_stability,
)
from kcsim.grid import BumpCompact, Maxwellian, PhaseGrid, TwoBeam, init_grid, sample_density
from kcsim.model import (
    FieldPair,
    KernelSpec,
    SimParams,
    WeightSpec,
    alignment_field_grid,
)
from kcsim.particles import (
    HAVE_NUMBA,
    ParticleEnsemble,
    density_along_characteristic,
    solve_characteristic,
)
from kcsim.runner import simulate_grid, simulate_particles

KERNEL = KernelSpec.algebraic_decay(1.0)
WEIGHTS = WeightSpec(4.0)
MASS = 1.0


def _report(num, text):
    print(f"\nPASS criterion {num}: {text}")


def two_beam_particles(n=2000, seed=7):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, (n, 1))
    v = np.where(np.arange(n)[:, None] % 2 == 0, 1.0, -1.0)
    return ParticleEnsemble(x, v, MASS)


# shared expensive runs -------------------------------------------------------


@pytest.fixture(scope="module")
def grid_beams_runs():
    """TwoBeam on 128x128, 2000 steps, sigma in {0, 0.1}, timed."""
    p = SimParams(nx=128, nv=128, lx=5.0, lv=4.0, mass=MASS)
    f0 = init_grid(TwoBeam(v0=1.0, x_width=1.0, v_width=0.25), p)
    runs = {}
    t0 = time.perf_counter()
    for sigma in (0.0, 0.1):
        runs[sigma] = simulate_grid(f0, KERNEL, WEIGHTS, sigma, 5e-4, 1.0,
                                    cadence=100)
    runs["elapsed"] = time.perf_counter() - t0
    runs["f0"] = f0
    return runs


@pytest.fixture(scope="module")
def particle_energy_runs():
    """N=2000 two-beam ensemble, RK4 to T=5 at dt and dt/2, cadence 1."""
    e0 = two_beam_particles()
    runs = {}
    for dt in (1e-3, 5e-4):
        runs[dt] = simulate_particles(e0, KERNEL, 0.0, dt, 5.0, cadence=1,
                                      track_diameter=(dt == 1e-3))
    runs["e0"] = e0
    return runs


def test_c01_mass_conservation(grid_beams_runs):
    """Criterion 1: relative mass drift <= 1e-9 over 2000 steps, both noise
    levels, inside the 10 s budget."""
    for sigma in (0.0, 0.1):
        series = grid_beams_runs[sigma].series
        mass = series.column("mass")
        drift = float(np.abs(mass - mass[0]).max() / mass[0])
        assert drift <= 1e-9, f"sigma={sigma}: mass drift {drift:.2e}"
    assert grid_beams_runs["elapsed"] <= 10.0
    _report(1, f"mass drift <= 1e-9 at sigma 0 and 0.1 "
               f"({grid_beams_runs['elapsed']:.1f}s for both runs)")


def test_c02_energy_identity_particles(particle_energy_runs):
    """Criterion 2: |E(t) + int D - E(0)| / E(0) <= 1e-6 at dt=1e-3 and
    shrinks >= 3.5x when dt halves."""
    maxima = {}
    for dt in (1e-3, 5e-4):
        series = particle_energy_runs[dt].series
        res = energy_ledger(series, 0.0, 1, MASS)
        e0 = series.records[0].energy
        maxima[dt] = float(np.abs(res).max() / e0)
    assert maxima[1e-3] <= 1e-6, f"residual {maxima[1e-3]:.3e}"
    ratio = maxima[1e-3] / maxima[5e-4]
    assert ratio >= 3.5, f"refinement ratio {ratio:.2f}"
    _report(2, f"ledger residual {maxima[1e-3]:.2e} <= 1e-6, halving ratio "
               f"{ratio:.2f} >= 3.5")


def test_c03_energy_inequality_and_flocking(grid_beams_runs,
                                            particle_energy_runs):
    """Criterion 3: grid E(t) <= E(0) at every output; particle velocity
    diameter never grows by more than 1e-12 in a step."""
    energy = grid_beams_runs[0.0].series.column("energy")
    assert np.all(energy <= energy[0] * (1 + 1e-12))
    diam = particle_energy_runs[1e-3].diameters
    assert np.all(np.diff(diam) <= 1e-12)
    _report(3, f"E(t)/E(0) max {energy.max() / energy[0]:.6f} <= 1; diameter "
               f"{diam[0]:.3f} -> {diam[-1]:.3f} monotone over {len(diam) - 1} steps")


def test_c04_support_bound_all_scenarios(grid_beams_runs, particle_energy_runs):
    """Criterion 4: every noiseless scenario satisfies
    R(t) <= R0 + M R0 t + tol_geom."""
    checked = []

    grid_run = grid_beams_runs[0.0]
    dv = grid_beams_runs["f0"].dv
    chk = support_bound_check(grid_run.series, 1.25, MASS, tol_geom=2 * dv)
    assert chk.passed, f"grid two-beam: {chk.violation}"
    checked.append(("grid two-beam", chk.worst_slack))

    p = SimParams(nx=64, nv=64, lx=3.0, lv=2.6, mass=MASS)
    bump_run = simulate_grid(init_grid(BumpCompact(1.0, 1.0), p), KERNEL,
                             WEIGHTS, 0.0, 2e-3, 1.0, cadence=50)
    chk = support_bound_check(bump_run.series, 1.0, MASS,
                              tol_geom=2 * (2 * 2.6 / 64))
    assert chk.passed, f"grid bump: {chk.violation}"
    checked.append(("grid bump", chk.worst_slack))

    chk = support_bound_check(particle_energy_runs[1e-3].series, 1.0, MASS,
                              tol_geom=0.0)
    assert chk.passed, f"particle two-beam: {chk.violation}"
    checked.append(("particle two-beam", chk.worst_slack))

    rigid = ParticleEnsemble(np.linspace(-1, 1, 100)[:, None],
                             np.full((100, 1), 0.7), MASS)
    rigid_run = simulate_particles(rigid, KERNEL, 0.0, 1e-2, 2.0, cadence=20)
    chk = support_bound_check(rigid_run.series, 0.7, MASS, tol_geom=0.0)
    assert chk.passed, f"rigid flock: {chk.violation}"
    checked.append(("rigid flock", chk.worst_slack))

    detail = ", ".join(f"{name} slack {s:.3f}" for name, s in checked)
    _report(4, detail)


def test_c05_noise_ledger():
    """Criterion 5: pure-diffusion heat balance E(t) - E(0) = 2 sigma M t
    within 2% (alignment-disabled hook); with alignment the full ledger
    residual is <= 5% of E(0) and shrinks under refinement."""
    sigma = 0.1
    hook_p = SimParams(nx=64, nv=128, lx=9.0, lv=3.5, mass=MASS)
    hook = simulate_grid(init_grid(BumpCompact(1.0, 1.0), hook_p), KERNEL,
                         WEIGHTS, sigma, 1e-3, 2.0, cadence=100,
                         alignment=False)
    e = hook.series.column("energy")
    t = hook.series.times
    rel = np.abs((e[1:] - e[0]) / (2 * sigma * MASS * t[1:]) - 1.0)
    assert rel.max() <= 0.02, f"hook balance off by {rel.max():.3%}"

    residuals = {}
    for n, dt in ((96, 2e-3), (192, 1e-3)):
        p = SimParams(nx=n, nv=n, lx=3.5, lv=3.0, mass=MASS)
        f0 = init_grid(TwoBeam(1.0, 1.0, 0.5), p)
        run = simulate_grid(f0, KERNEL, WEIGHTS, sigma, dt, 1.0, cadence=25)
        res = energy_ledger(run.series, sigma, 1, MASS)
        residuals[n] = float(np.abs(res).max() / run.series.records[0].energy)
    assert residuals[192] <= 0.05, f"ledger residual {residuals[192]:.3%}"
    assert residuals[192] < residuals[96]
    _report(5, f"hook within {rel.max():.3%}; full ledger {residuals[96]:.3%} "
               f"-> {residuals[192]:.3%} under refinement")


def test_c06_weighted_norm_growth(grid_beams_runs):
    """Criterion 6: d/dt log ||(1+v^2)^(1/2) f||_L1 <= 2M + 1 with 5%
    scheme tolerance, at every output time of the noisy run."""
    series = grid_beams_runs[0.1].series
    l1v = series.column("l1_weighted")
    t = series.times
    slopes = np.diff(np.log(l1v)) / np.diff(t)
    cap = (2 * MASS + 1) * 1.05
    assert np.all(slopes <= cap), f"max slope {slopes.max():.3f} > {cap:.3f}"
    _report(6, f"max growth slope {slopes.max():.4f} <= {cap:.3f}")


def test_c07_stability():
    """Criterion 7: amplification stays below 10x its initial value at T=2
    and the delta vs delta/2 amplifications agree within 10%."""
    details = []
    p = SimParams(nx=64, nv=64, lx=4.0, lv=3.0, mass=MASS)
    beams = init_grid(TwoBeam(1.0, 1.0, 0.5), p)
    st = run_stability(StabilityStudy(delta=0.01, norm="l1", t_final=2.0,
                                      cadence=25), beams, KERNEL, WEIGHTS,
                       0.0, 2e-3)
    assert np.isfinite(st.amplification_full).all()
    assert st.amplification_full.max() <= 10.0
    assert st.linear_response_gap() <= 0.10
    details.append(f"L1 maxA {st.amplification_full.max():.2f}, "
                   f"gap {st.linear_response_gap():.3f}")

    p2 = SimParams(nx=64, nv=64, lx=3.0, lv=3.5, mass=MASS)
    cloud = init_grid(Maxwellian(0, 0, 0.6, 0.6), p2)
    st2 = run_stability(StabilityStudy(delta=0.01, norm="l2_omega",
                                       t_final=2.0, cadence=25), cloud,
                        KERNEL, WEIGHTS, 0.1, 2e-3)
    assert st2.amplification_full.max() <= 10.0
    assert st2.linear_response_gap() <= 0.10
    details.append(f"L2(omega) maxA {st2.amplification_full.max():.2f}, "
                   f"gap {st2.linear_response_gap():.3f}")
    _report(7, "; ".join(details))


def test_c08_vanishing_noise():
    """Criterion 8: on 128x128 the sweep errors are non-increasing with
    adjacent ratio <= 0.7, for the L2(omega) distance and the macroscopic
    velocity average, inside the 2-minute budget."""
    t0 = time.perf_counter()
    p = SimParams(nx=128, nv=128, lx=3.0, lv=3.5, mass=MASS)
    f0 = init_grid(Maxwellian(0, 0, 0.6, 0.6), p)
    sw = run_sigma_sweep(
        SigmaSweepStudy(sigmas=(0.2, 0.1, 0.05, 0.025), t_final=1.0,
                        cadence=20), f0, KERNEL, WEIGHTS, 1e-3)
    elapsed = time.perf_counter() - t0
    assert sw.monotone
    assert np.all(sw.adjacent_ratios <= 0.7), sw.adjacent_ratios
    obs_ratios = sw.err_observable[1:] / sw.err_observable[:-1]
    assert np.all(np.diff(sw.err_observable) < 0)
    assert np.all(obs_ratios <= 0.7), obs_ratios
    assert elapsed <= 120.0
    _report(8, f"L2(omega) ratios {np.round(sw.adjacent_ratios, 3).tolist()}, "
               f"observable ratios {np.round(obs_ratios, 3).tolist()}, "
               f"order {sw.fitted_order:.2f} ({elapsed:.0f}s)")


def test_c09_characteristic_formulas():
    """Criterion 9: constant-field closed form matches RK4 to 1e-9 at
    dt=1e-3; against a smooth noiseless 256x256 grid run, the exponential
    density formula matches bilinear probing within 5% at 20 points."""
    fp = FieldPair(np.array([-1e6, 1e6]), np.ones(2), np.ones(2))
    res = solve_characteristic(0.0, 0.0, lambda t: fp, 1.0, 1e-3)
    expect = 1.0 - np.exp(-1.0)
    assert abs(res.state.v - expect) <= 1e-9
    assert abs(res.v_closed_form - expect) <= 1e-9
    assert abs(res.state.v - res.v_closed_form) <= 1e-12

    p = SimParams(nx=256, nv=256, lx=2.0, lv=2.0, mass=MASS)
    f0 = init_grid(BumpCompact(1.0, 1.0), p)
    t_final = 0.5
    run = simulate_grid(f0, KERNEL, WEIGHTS, 0.0, 5e-3, t_final, cadence=100,
                        collect_fields=True)
    provider = history_provider(run.fields_history)

    rng = np.random.default_rng(3)
    peak = f0.values.max()
    probes = []
    while len(probes) < 20:
        x0, v0 = rng.uniform(-0.6, 0.6, 2)
        if sample_density(f0, x0, v0) > 0.3 * peak:
            probes.append((x0, v0))
    errs = []
    for x0, v0 in probes:
        char = solve_characteristic(x0, v0, provider, t_final, 2.5e-3)
        assert char.state.log_j >= 0.0  # a >= 0 makes the exponent monotone
        pred = density_along_characteristic(sample_density(f0, x0, v0),
                                            char.state)
        got = sample_density(run.final, char.state.x, char.state.v)
        errs.append(abs(got - pred) / pred)
    worst = max(errs)
    assert worst <= 0.05, f"worst probe error {worst:.3%}"
    _report(9, f"constant-field gap <= 1e-9; grid cross-check worst "
               f"{worst:.3%} over 20 probes")


def test_c10_oracle_equivalences(grid_beams_runs):
    """Criterion 10: dissipation reduction == brute force on small grids to
    1e-12; FFT convolution == direct to 1e-12; runs are bit-reproducible for
    any thread count."""
    from test_diagnostics import brute_force_dissipation

    for shape, seed in (((6, 6), 0), ((8, 8), 1)):
        rng = np.random.default_rng(seed)
        g = PhaseGrid(rng.random(shape), 1.0, 1.0)
        fast = dissipation_rate(g, KERNEL)
        brute = brute_force_dissipation(g, KERNEL)
        assert abs(fast - brute) <= 1e-12 * max(brute, 1.0)

    f0 = grid_beams_runs["f0"]
    d = alignment_field_grid(f0, KERNEL, method="direct")
    f = alignment_field_grid(f0, KERNEL, method="fft")
    scale = np.abs(d.a).max()
    assert np.abs(d.a - f.a).max() <= 1e-12 * scale
    assert np.abs(d.b - f.b).max() <= 1e-12 * scale

    e0 = two_beam_particles(400, seed=11)

    def run_once():
        out = simulate_particles(e0, KERNEL, 0.05, 5e-3, 0.25, cadence=10,
                                 seed=5)
        return out.final

    if HAVE_NUMBA:
        import numba

        avail = numba.config.NUMBA_NUM_THREADS
        counts = sorted({min(c, avail) for c in (1, 2, 8)})
        finals = []
        for c in counts:
            numba.set_num_threads(c)
            finals.append(run_once())
        numba.set_num_threads(avail)
        detail = f"thread counts {counts}"
    else:  # pragma: no cover - numba always present in CI image
        finals = [run_once(), run_once()]
        detail = "repeat runs (numba unavailable)"
    for other in finals[1:]:
        assert np.array_equal(finals[0].x, other.x)
        assert np.array_equal(finals[0].v, other.v)

    rerun = simulate_grid(f0, KERNEL, WEIGHTS, 0.1, 5e-4, 0.05, cadence=10)
    rerun2 = simulate_grid(f0, KERNEL, WEIGHTS, 0.1, 5e-4, 0.05, cadence=10)
    assert np.array_equal(rerun.final.values, rerun2.final.values)
    _report(10, f"oracle equivalences <= 1e-12; bitwise reproducibility "
                f"({detail})")
