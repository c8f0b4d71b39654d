"""Grid solver: profiles, the three sub-steps, the Strang composition, and
density probing."""

import numpy as np
import pytest

from conftest import random_grid, small_grid
from kcsim.errors import ConfigError, ExtrapolationError, GeometryError, StepSizeError
from kcsim.grid import (
    BumpCompact,
    Maxwellian,
    PhaseGrid,
    TwoBeam,
    full_step,
    init_grid,
    required_lv,
    sample_density,
    substep_diffuse_v,
    substep_drift_v,
    substep_transport_x,
)
from kcsim.model import FieldPair, SimParams, alignment_field_grid
from kcsim.runner import simulate_grid


def _params(**kw):
    base = dict(nx=32, nv=32, lx=2.0, lv=2.0, mass=1.0)
    base.update(kw)
    return SimParams(**base)


def _const_fields(g, a, b):
    n = g.nx
    return FieldPair(g.x_centers, np.full(n, float(a)), np.full(n, float(b)))


class TestInitGrid:
    def test_bump_support_exact(self):
        f = init_grid(BumpCompact(r0=1.0, x_width=1.0), _params())
        outside = np.abs(f.v_centers) > 1.0
        assert np.all(f.values[:, outside] == 0.0)

    def test_normalization(self):
        f = init_grid(Maxwellian(0, 0, 0.4, 0.4), _params(mass=2.5))
        assert f.mass() == pytest.approx(2.5, abs=1e-13)

    def test_two_beam_momentum_zero(self):
        f = init_grid(TwoBeam(1.0, 1.0, 0.3), _params())
        assert f.momentum() == 0.0

    def test_support_domain_check(self):
        with pytest.raises(ConfigError):
            init_grid(BumpCompact(r0=3.0, x_width=1.0), _params())
        with pytest.raises(ConfigError):
            init_grid(Maxwellian(0, 0, 0.4, 1.5), _params())

    def test_required_lv_noiseless(self):
        prof = BumpCompact(r0=1.0, x_width=1.0)
        assert required_lv(prof, 1.0, 2.0, 0.0, margin=0.5) == pytest.approx(3.5)
        with pytest.raises(ConfigError):
            required_lv(Maxwellian(), 1.0, 1.0, 0.0)

    def test_immutability(self):
        f = init_grid(BumpCompact(), _params())
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestTransport:
    def test_zero_speed_row_unchanged(self):
        g = random_grid(8, 9, seed=0)  # odd Nv: middle row has v = 0 exactly
        out = substep_transport_x(g, 0.05)
        mid = 4
        assert np.array_equal(out.values[:, mid], g.values[:, mid])

    def test_unit_courant_exact_shift(self):
        g = small_grid(10, 8, lx=1.0, lv=1.0)
        vals = np.array(g.values)
        k = 7  # fastest row, so dt = dx/v is exactly the CFL limit
        vals[4, k] = 3.0
        g = g.with_values(vals)
        v = g.v_centers[k]
        out = substep_transport_x(g, g.dx / v)
        assert out.values[5, k] == pytest.approx(3.0, rel=1e-15)
        assert out.values[4, k] == 0.0

    def test_constant_interior_unchanged(self):
        g = small_grid(12, 6, fill=2.0)
        out = substep_transport_x(g, 0.01)
        assert np.array_equal(out.values[1:-1, :], g.values[1:-1, :])

    def test_mass_change_is_boundary_outflow_only(self):
        g = random_grid(10, 8, seed=2)
        out = substep_transport_x(g, 0.05)
        assert out.mass() <= g.mass() + 1e-15

    def test_interior_support_conserves_mass(self):
        g = small_grid(16, 8, lx=2.0)
        vals = np.array(g.values)
        vals[6:10, :] = 1.0
        g = g.with_values(vals)
        out = substep_transport_x(g, 0.02)
        assert out.mass() == pytest.approx(g.mass(), rel=1e-14)

    def test_cfl_violation_raises(self):
        g = random_grid(8, 8)
        with pytest.raises(StepSizeError):
            substep_transport_x(g, 10.0)

    def test_positivity(self):
        g = random_grid(16, 10, seed=3)
        out = substep_transport_x(g, 0.4 * g.dx / np.abs(g.v_centers).max())
        assert out.values.min() >= 0.0


class TestDrift:
    def test_zero_field_identity(self):
        g = random_grid(8, 8, seed=4)
        out = substep_drift_v(g, _const_fields(g, 0.0, 0.0), 0.01)
        assert np.array_equal(out.values, g.values)

    def test_concentrated_beam_stationary(self):
        """L vanishing at the beam's cell center leaves a one-row beam fixed:
        both adjacent faces are fed only by empty donor cells."""
        g = small_grid(8, 8, lx=1.0, lv=1.0)
        vals = np.array(g.values)
        k = 5
        vals[:, k] = 1.0
        g = g.with_values(vals)
        vbar = g.v_centers[k]
        out = substep_drift_v(g, _const_fields(g, 0.8, 0.8 * vbar), 0.05)
        assert np.array_equal(out.values, g.values)

    def test_relaxation_contracts_mean(self):
        g = random_grid(6, 16, seed=5)
        mean0 = g.momentum() / g.mass()
        out = substep_drift_v(g, _const_fields(g, 1.0, 0.0), 0.04)
        mean1 = out.momentum() / out.mass()
        assert abs(mean1) <= abs(mean0) + 1e-15

    def test_column_mass_conserved(self):
        g = random_grid(6, 20, seed=6)
        fp = alignment_field_grid(g, _kernel())
        out = substep_drift_v(g, fp, 0.01)
        col0 = g.values.sum(axis=1)
        col1 = out.values.sum(axis=1)
        assert np.abs(col1 - col0).max() <= 1e-13 * max(col0.max(), 1.0)

    def test_cfl_violation_raises(self):
        g = random_grid(8, 8)
        with pytest.raises(StepSizeError):
            substep_drift_v(g, _const_fields(g, 50.0, 0.0), 1.0)

    def test_geometry_mismatch_raises(self):
        g = random_grid(8, 8)
        other = FieldPair(np.linspace(-3, 3, 8), np.ones(8), np.zeros(8))
        with pytest.raises(GeometryError):
            substep_drift_v(g, other, 0.01)


def _kernel():
    from kcsim.model import KernelSpec

    return KernelSpec.algebraic_decay(1.0)


class TestDiffusion:
    def test_sigma_zero_identity(self):
        g = random_grid(8, 8, seed=7)
        assert substep_diffuse_v(g, 0.0, 0.1) is g

    def test_uniform_column_unchanged_explicit(self):
        g = small_grid(6, 10, fill=1.5)
        out = substep_diffuse_v(g, 0.1, 0.01, method="explicit")
        assert np.array_equal(out.values, g.values)

    def test_uniform_column_unchanged_implicit(self):
        g = small_grid(6, 10, fill=1.5)
        out = substep_diffuse_v(g, 0.1, 0.01, method="implicit")
        assert np.allclose(out.values, g.values, rtol=1e-13)

    def test_explicit_stability_limit(self):
        g = random_grid(6, 10)
        lam_limit_dt = 0.5 * g.dv**2 / 0.1
        with pytest.raises(StepSizeError):
            substep_diffuse_v(g, 0.1, 3.0 * lam_limit_dt, method="explicit")
        # auto falls back to implicit instead
        out = substep_diffuse_v(g, 0.1, 3.0 * lam_limit_dt, method="auto")
        assert np.isfinite(out.values).all()

    @pytest.mark.parametrize("method", ["explicit", "implicit"])
    def test_mass_conserved(self, method):
        g = random_grid(6, 24, lv=2.0, seed=8)
        dt = 0.4 * g.dv**2 / 0.1
        out = substep_diffuse_v(g, 0.1, dt, method=method)
        assert out.mass() == pytest.approx(g.mass(), rel=1e-12)

    @pytest.mark.parametrize("method", ["explicit", "implicit"])
    def test_variance_gain_matches_heat_law(self, method):
        """Narrow Gaussian column gains 2 sigma dt of v-variance per step."""
        g = small_grid(4, 256, lx=1.0, lv=4.0)
        vals = np.array(g.values)
        vals[2, :] = np.exp(-0.5 * (g.v_centers / 0.3) ** 2)
        g = g.with_values(vals)
        sigma, dt = 0.1, 0.004  # explicit path needs sigma dt/dv^2 <= 1/2
        out = substep_diffuse_v(g, sigma, dt, method=method)

        def variance(state):
            col = state.values[2]
            m = col.sum() * state.dv
            mean = (col * state.v_centers).sum() * state.dv / m
            return (col * (state.v_centers - mean) ** 2).sum() * state.dv / m

        gain = variance(out) - variance(g)
        assert gain == pytest.approx(2 * sigma * dt, rel=0.05)

    def test_positivity_implicit(self):
        g = random_grid(4, 16, seed=9)
        out = substep_diffuse_v(g, 1.0, 10.0, method="implicit")
        assert out.values.min() >= -1e-15


class TestFullStep:
    def test_single_beam_equilibrium(self):
        """Spatially compact beam at one cell-center velocity: alignment is
        exactly balanced, so the mean velocity cannot drift."""
        p = _params(nx=64, nv=16, lx=2.0, lv=1.0)
        g = PhaseGrid(np.zeros((p.nx, p.nv)), p.lx, p.lv)
        vals = np.array(g.values)
        k = 10
        x_band = np.abs(g.x_centers) < 1.0
        vals[x_band, k] = 1.0
        g = g.with_values(vals)
        g = g.with_values(vals / g.mass())
        vbar = g.v_centers[k]
        state = g
        for _ in range(5):
            new = full_step(state, _kernel(), 0.0, 0.01)
            drift = abs(new.momentum() / new.mass() - vbar)
            assert drift <= 1e-12
            assert new.mass() == pytest.approx(state.mass(), rel=1e-12)
            state = new

    def test_two_beam_variance_decreases(self):
        f = init_grid(TwoBeam(1.0, 1.0, 0.3), _params(nx=48, nv=48, lx=3.0, lv=2.0))
        state = f
        for _ in range(10):
            new = full_step(state, _kernel(), 0.0, 0.01)
            assert new.energy() < state.energy()
            assert new.values.min() >= 0.0
            state = new

    def test_time_advances_by_dt(self):
        f = init_grid(BumpCompact(), _params())
        out = full_step(f, _kernel(), 0.0, 0.01)
        assert out.t == pytest.approx(0.01)

    def test_alignment_hook_disables_drift(self):
        f = init_grid(TwoBeam(1.0, 1.0, 0.3), _params(nx=48, nv=48, lx=3.0, lv=2.0))
        out = full_step(f, _kernel(), 0.0, 0.01, alignment=False)
        # pure transport cannot touch the v-marginal
        assert np.allclose(out.v_marginal(), f.v_marginal(), atol=1e-15)

    def test_noisy_relaxation_toward_gaussian(self, weights):
        """Compact x-bump with noise: the v-marginal's excess kurtosis decays,
        and the marginal tracks a standalone drift-diffusion reference."""
        sigma = 0.2
        p = _params(nx=24, nv=96, lx=6.0, lv=3.0)
        f = init_grid(BumpCompact(r0=1.0, x_width=0.3), p)
        # short horizon: the reference below freezes a = M phi(0), which is
        # only faithful while the x-support stays narrow
        dt, n_steps = 0.005, 120

        def excess_kurtosis(marginal, v, dv):
            m = marginal.sum() * dv
            mu = (marginal * v).sum() * dv / m
            var = (marginal * (v - mu) ** 2).sum() * dv / m
            m4 = (marginal * (v - mu) ** 4).sum() * dv / m
            return m4 / var**2 - 3.0

        state = f
        kurt0 = excess_kurtosis(f.v_marginal(), f.v_centers, f.dv)
        for _ in range(n_steps):
            state = full_step(state, _kernel(), sigma, dt)
        kurt1 = excess_kurtosis(state.v_marginal(), state.v_centers, state.dv)
        # compact bump starts sub-Gaussian; relaxation pulls the excess
        # kurtosis toward the Gaussian value 0
        assert abs(kurt1) < abs(kurt0)

        # reference: 1-D Fokker-Planck dg/dt = d/dv((a v) g) + sigma g_vv with
        # a = M phi(0) = M (the x-support is narrow, so phi ~ phi(0) on it)
        v = f.v_centers
        dv = f.dv
        g_ref = f.v_marginal().copy()
        a0 = f.mass()
        ref_dt = dt / 5
        faces = f.v_faces[1:-1]
        lam = sigma * ref_dt / dv**2
        for _ in range(5 * n_steps):
            speed = -a0 * faces
            flux = np.where(speed > 0, speed * g_ref[:-1], speed * g_ref[1:])
            div = np.zeros_like(g_ref)
            div[:-1] += flux
            div[1:] -= flux
            g_ref = g_ref - (ref_dt / dv) * div
            lap = np.zeros_like(g_ref)
            lap[1:-1] = g_ref[2:] - 2 * g_ref[1:-1] + g_ref[:-2]
            lap[0] = g_ref[1] - g_ref[0]
            lap[-1] = g_ref[-2] - g_ref[-1]
            g_ref = g_ref + lam * lap
        l1_gap = np.abs(state.v_marginal() - g_ref).sum() * dv
        assert l1_gap < 0.05 * f.mass()


class TestConvergence:
    @staticmethod
    def _marginal_on(coarse_n, state):
        """Aggregate a v-marginal onto a coarser nested lattice (block mean
        of the density)."""
        g = state.v_marginal()
        block = g.size // coarse_n
        return g.reshape(coarse_n, block).mean(axis=1)

    def test_first_order_v_marginal(self, weights):
        """L1 error of the v-marginal halves (+-25%) when (dx, dv, dt) halve,
        against a 4x-resolution reference."""
        prof = TwoBeam(1.0, 1.0, 0.5)
        runs = {}
        for n, dt in ((32, 8e-3), (64, 4e-3), (128, 2e-3)):
            p = _params(nx=n, nv=n, lx=3.0, lv=3.0)
            runs[n] = simulate_grid(init_grid(prof, p), _kernel(), weights,
                                    0.0, dt, 0.5, cadence=1000).final
        ref = self._marginal_on(32, runs[128])
        dv32 = 2 * 3.0 / 32
        errs = {
            n: np.abs(self._marginal_on(32, runs[n]) - ref).sum() * dv32
            for n in (32, 64)
        }
        ratio = errs[32] / errs[64]
        assert 1.5 <= ratio <= 2.5, f"convergence ratio {ratio:.2f}"

    def test_ledger_residual_first_order_noiseless(self, weights):
        """Grid energy ledger residual shrinks at >= order 1 under
        simultaneous (dt, dx, dv) halving."""
        from kcsim.diagnostics import energy_ledger

        prof = TwoBeam(1.0, 1.0, 0.5)
        maxima = {}
        for n, dt in ((48, 4e-3), (96, 2e-3)):
            p = _params(nx=n, nv=n, lx=3.0, lv=3.0)
            run = simulate_grid(init_grid(prof, p), _kernel(), weights,
                                0.0, dt, 0.5, cadence=5)
            res = energy_ledger(run.series, 0.0, 1, 1.0)
            maxima[n] = np.abs(res).max()
        assert maxima[96] <= maxima[48] / 1.5


class TestSampleDensity:
    def test_cell_center_exact(self):
        g = random_grid(8, 8, seed=10)
        assert sample_density(g, g.x_centers[3], g.v_centers[5]) == g.values[3, 5]

    def test_linear_profile_exact(self):
        g = small_grid(8, 8, lx=1.0, lv=1.0)
        x, v = np.meshgrid(g.x_centers, g.v_centers, indexing="ij")
        g = g.with_values(2.0 + 0.5 * x + 1.5 * v)
        for xv in [(0.1, 0.2), (-0.3, 0.55), (0.42, -0.17)]:
            expect = 2.0 + 0.5 * xv[0] + 1.5 * xv[1]
            assert sample_density(g, *xv) == pytest.approx(expect, rel=1e-13)

    def test_outside_support_zero(self):
        f = init_grid(BumpCompact(r0=0.5, x_width=0.5), _params())
        assert sample_density(f, 1.5, 1.5) == 0.0

    def test_outside_domain_raises(self):
        g = small_grid()
        with pytest.raises(ExtrapolationError):
            sample_density(g, 5.0, 0.0)
