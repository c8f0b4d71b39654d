"""Theorem-level studies: stability amplification under initial-data
perturbation, the vanishing-noise limit as a sigma sweep, and particle vs grid
cross-validation.

Each study is driven by a StudySpec plus the shared run ingredients (initial
grid, kernel, weights).  Runs inside a study are independent and
deterministic; results carry the raw tables so callers can re-derive any
verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import pairwise_distance
from .errors import ConfigError
from .grid import PhaseGrid, _bump
from .model import FieldPair, KernelSpec, WeightSpec
from .particles import ParticleEnsemble
from .runner import simulate_grid, simulate_particles


# study declarations ---------------------------------------------------------


@dataclass(frozen=True)
class StabilityStudy:
    """Perturb the initial data by delta * bump and track the amplification
    A(t) = dist(f, g) / dist(f0, g0) in the chosen norm."""

    delta: float = 0.01
    norm: str = "l1"          # "l1" for noiseless runs, "l2_omega" with noise
    scenario: str = "default"
    t_final: float = 2.0
    cadence: int = 10
    kind: str = field(default="stability", init=False)

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("perturbation magnitude delta must be positive")
        if self.norm not in ("l1", "l2_omega", "w11", "x"):
            raise ValueError(f"unknown comparison norm {self.norm!r}")


@dataclass(frozen=True)
class SigmaSweepStudy:
    """Run a strictly decreasing list of noise strengths against the
    noiseless solution and tabulate err(sigma) at the final time."""

    sigmas: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    norm: str = "l2_omega"
    scenario: str = "default"
    t_final: float = 1.0
    cadence: int = 10
    kind: str = field(default="sigma_sweep", init=False)

    def __post_init__(self):
        s = self.sigmas
        if not s or any(x <= 0 for x in s) or any(a <= b for a, b in zip(s, s[1:])):
            raise ValueError("sigma list must be strictly decreasing and positive")


@dataclass(frozen=True)
class CrossValidationStudy:
    """Compare particle and grid discretizations of the same initial density."""

    particle_counts: tuple[int, ...] = (1000, 4000)
    scenario: str = "default"
    t_final: float = 1.0
    cadence: int = 10
    kind: str = field(default="cross_validation", init=False)

    def __post_init__(self):
        if not self.particle_counts or any(n < 1 for n in self.particle_counts):
            raise ValueError("particle counts must be positive")


StudySpec = StabilityStudy | SigmaSweepStudy | CrossValidationStudy


# helpers --------------------------------------------------------------------


def perturbation_bump(grid: PhaseGrid, x_center: float = 0.0, v_center: float = 0.0,
                      x_width: float = 0.5, v_width: float = 0.5) -> np.ndarray:
    """Smooth compactly supported cosine bump on the grid, scaled to unit L1
    mass.  Positive, so f0 + delta * bump stays admissible for any delta > 0."""
    x, v = np.meshgrid(grid.x_centers, grid.v_centers, indexing="ij")
    raw = _bump((x - x_center) / x_width) * _bump((v - v_center) / v_width)
    total = raw.sum() * grid.dx * grid.dv
    if total <= 0:
        raise ConfigError("perturbation bump misses every grid cell")
    return raw / total


def sample_from_grid(f0: PhaseGrid, n: int, seed: int) -> ParticleEnsemble:
    """Inverse-CDF sample of a grid density: pick cells by cumulative mass,
    place particles uniformly inside their cell.  Total mass is inherited."""
    p = np.asarray(f0.values, dtype=float).ravel()
    total = p.sum()
    if total <= 0:
        raise ConfigError("cannot sample an empty density")
    cdf = np.cumsum(p / total)
    cdf[-1] = 1.0
    gen = np.random.Generator(np.random.Philox(key=seed))
    u = gen.random((n, 3))
    cells = np.searchsorted(cdf, u[:, 0], side="right")
    ix, kv = np.unravel_index(cells, f0.values.shape)
    x = f0.x_centers[ix] + (u[:, 1] - 0.5) * f0.dx
    v = f0.v_centers[kv] + (u[:, 2] - 0.5) * f0.dv
    return ParticleEnsemble(x[:, None], v[:, None], mass=f0.mass(), t=f0.t)


def history_provider(history: list[tuple[float, FieldPair]]):
    """Piecewise-linear-in-time field provider over a recorded run history."""
    times = np.array([h[0] for h in history])

    def provider(t: float) -> FieldPair:
        i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(history) - 2))
        t0, fp0 = history[i]
        t1, fp1 = history[i + 1]
        lam = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return FieldPair(fp0.x, (1 - lam) * fp0.a + lam * fp1.a,
                         (1 - lam) * fp0.b + lam * fp1.b)

    return provider


def fit_power_law(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares fit of y ~ C x^p: returns (p, C, rms log-residual)."""
    lx, ly = np.log(x), np.log(y)
    coeffs, res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(coeffs[0]), float(np.exp(coeffs[1])), rms


def _collect_states(f0, kernel, weights, sigma, dt, t_final, cadence):
    states: list[PhaseGrid] = []
    res = simulate_grid(f0, kernel, weights, sigma, dt, t_final, cadence,
                        on_record=lambda s, r: states.append(s))
    return states, res


# studies --------------------------------------------------------------------


@dataclass
class StabilityResult:
    times: np.ndarray
    dist_full: np.ndarray       # distances for perturbation delta
    dist_half: np.ndarray       # distances for delta / 2
    d0_full: float
    d0_half: float
    norm: str
    delta: float

    @property
    def amplification_full(self) -> np.ndarray:
        return self.dist_full / self.d0_full

    @property
    def amplification_half(self) -> np.ndarray:
        return self.dist_half / self.d0_half

    def linear_response_gap(self) -> float:
        """Worst relative gap between the delta and delta/2 amplifications."""
        af, ah = self.amplification_full, self.amplification_half
        return float(np.max(np.abs(af - ah) / np.maximum(ah, 1e-300)))


def run_stability(study: StabilityStudy, f0: PhaseGrid, kernel: KernelSpec,
                  weights: WeightSpec, sigma: float, dt: float) -> StabilityResult:
    """Run base and perturbed initial data, report amplification tables for
    delta and delta/2."""
    bump = perturbation_bump(f0)
    results = {}
    for mag in (study.delta, 0.5 * study.delta):
        g0_vals = f0.values + mag * bump
        if g0_vals.min() < 0:
            raise ConfigError("perturbed initial data is negative")
        results[mag] = _collect_states(
            f0.with_values(g0_vals), kernel, weights, sigma, dt,
            study.t_final, study.cadence)[0]
    base_states, base_res = _collect_states(
        f0, kernel, weights, sigma, dt, study.t_final, study.cadence)

    def dists(pert_states):
        return np.array([
            pairwise_distance(p, b, weights)[study.norm]
            for p, b in zip(pert_states, base_states)
        ])

    dist_full = dists(results[study.delta])
    dist_half = dists(results[0.5 * study.delta])
    return StabilityResult(
        times=base_res.series.times,
        dist_full=dist_full,
        dist_half=dist_half,
        d0_full=float(dist_full[0]),
        d0_half=float(dist_half[0]),
        norm=study.norm,
        delta=study.delta,
    )


@dataclass
class SweepResult:
    sigmas: np.ndarray
    err_l2_omega: np.ndarray
    err_l1: np.ndarray
    err_observable: np.ndarray   # L1 over (t, x) of the velocity average
    fitted_order: float
    fit_coefficient: float       # err ~ C sigma^p
    fit_residual: float
    monotone: bool
    adjacent_ratios: np.ndarray  # err(sigma_{i+1}) / err(sigma_i), sigma decreasing

    def predicted_error(self, sigma: float) -> float:
        return self.fit_coefficient * sigma**self.fitted_order

    def table(self) -> list[dict]:
        return [
            {
                "sigma": float(s),
                "err_l2_omega": float(a),
                "err_l1": float(b),
                "err_observable": float(c),
            }
            for s, a, b, c in zip(self.sigmas, self.err_l2_omega,
                                  self.err_l1, self.err_observable)
        ]


def velocity_average(state: PhaseGrid, test_fn: np.ndarray) -> np.ndarray:
    """Macroscopic observable int f(x, v) test(v) dv as a profile in x."""
    return (state.values * test_fn[None, :]).sum(axis=1) * state.dv


def run_sigma_sweep(study: SigmaSweepStudy, f0: PhaseGrid, kernel: KernelSpec,
                    weights: WeightSpec, dt: float,
                    monotone_tol: float = 0.05) -> SweepResult:
    """Compare each noisy run with the noiseless one at the final time, plus
    the macroscopic velocity average in L1 over (0, T) x space.

    The test function is a compact cosine bump in v spanning the central
    third of the velocity domain.
    """
    test_fn = _bump(f0.v_centers / max(f0.lv / 3.0, 1e-12))
    sigma_list = (0.0,) + tuple(study.sigmas)
    finals: dict[float, PhaseGrid] = {}
    profiles: dict[float, np.ndarray] = {}
    for s in sigma_list:
        rows = []
        res = simulate_grid(
            f0, kernel, weights, s, dt, study.t_final, study.cadence,
            on_record=lambda st, r: rows.append(velocity_average(st, test_fn)))
        finals[s] = res.final
        profiles[s] = np.array(rows)
    times = np.linspace(0.0, study.t_final, profiles[0.0].shape[0])

    err_l2, err_l1, err_obs = [], [], []
    for s in study.sigmas:
        d = pairwise_distance(finals[s], finals[0.0], weights)
        err_l2.append(d["l2_omega"])
        err_l1.append(d["l1"])
        diff = np.abs(profiles[s] - profiles[0.0]).sum(axis=1) * f0.dx
        err_obs.append(float(np.trapezoid(diff, times)))
    err_l2 = np.array(err_l2)
    err_l1 = np.array(err_l1)
    err_obs = np.array(err_obs)

    ratios = err_l2[1:] / err_l2[:-1]
    monotone = bool(np.all(err_l2[1:] <= err_l2[:-1] * (1.0 + monotone_tol)))
    order, coeff, rms = fit_power_law(np.array(study.sigmas), err_l2)
    return SweepResult(
        sigmas=np.array(study.sigmas),
        err_l2_omega=err_l2,
        err_l1=err_l1,
        err_observable=err_obs,
        fitted_order=order,
        fit_coefficient=coeff,
        fit_residual=rms,
        monotone=monotone,
        adjacent_ratios=ratios,
    )


@dataclass
class CrossValidationRow:
    n_particles: int
    max_mass_err: float
    max_momentum_err: float     # relative to M * R0 scale
    max_energy_err: float       # relative to E(0)
    marginal_l1: float          # v-marginal L1 gap at final time


@dataclass
class CrossValidationResult:
    rows: list[CrossValidationRow]

    def max_discrepancy(self) -> np.ndarray:
        return np.array([
            max(r.max_mass_err, r.max_momentum_err, r.max_energy_err)
            for r in self.rows
        ])


def run_cross_validation(study: CrossValidationStudy, f0: PhaseGrid,
                         kernel: KernelSpec, weights: WeightSpec, sigma: float,
                         dt_grid: float, dt_particles: float,
                         seed: int = 0) -> CrossValidationResult:
    """Particle ensembles sampled from the grid's initial density, compared
    against the grid run in moments over time and in the final v-marginal."""
    grid_res = simulate_grid(f0, kernel, weights, sigma, dt_grid,
                             study.t_final, study.cadence)
    g_series = grid_res.series
    g_t = g_series.times
    e0_scale = max(abs(g_series.records[0].energy), 1e-300)
    p_scale = f0.mass() * max(f0.support_radius(), 1.0)

    rows = []
    for n in study.particle_counts:
        e0 = sample_from_grid(f0, n, seed)
        p_res = simulate_particles(e0, kernel, sigma, dt_particles,
                                   study.t_final, study.cadence, seed=seed)
        p_series = p_res.series
        p_t = p_series.times
        # records land on the same output times up to step rounding
        m_err = np.abs(np.interp(g_t, p_t, p_series.column("mass"))
                       - g_series.column("mass")) / f0.mass()
        mom_err = np.abs(np.interp(g_t, p_t, p_series.column("momentum"))
                         - g_series.column("momentum")) / p_scale
        en_err = np.abs(np.interp(g_t, p_t, p_series.column("energy"))
                        - g_series.column("energy")) / e0_scale

        edges = np.append(grid_res.final.v_centers - 0.5 * f0.dv,
                          grid_res.final.v_centers[-1] + 0.5 * f0.dv)
        hist, _ = np.histogram(p_res.final.v[:, 0], bins=edges)
        part_marginal = hist * (e0.mass / n) / f0.dv
        marg_l1 = float(np.abs(part_marginal - grid_res.final.v_marginal()).sum() * f0.dv)

        rows.append(CrossValidationRow(
            n_particles=n,
            max_mass_err=float(m_err.max()),
            max_momentum_err=float(mom_err.max()),
            max_energy_err=float(en_err.max()),
            marginal_l1=marg_l1,
        ))
    return CrossValidationResult(rows)
