"""Norms, moments, and ledger residuals for both solver states.

Grid states get the full weighted-Sobolev battery (gradients by centered
differences, one-sided at the walls); particle states report only the
moment-level and L1-representable entries, with the rest NaN.  The cumulative
dissipation integral is accumulated by the run recorder with the trapezoidal
rule at output times.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .errors import GeometryError
from .grid import PhaseGrid
from .model import KernelSpec, WeightSpec, mirror_v_moment
from .particles import ParticleEnsemble, empirical_moments


@dataclass(frozen=True)
class DiagRecord:
    """One output-time row; field order is the CSV column order."""

    t: float
    mass: float
    momentum: float
    energy: float
    dissipation: float          # cumulative int_0^t D ds
    support_radius: float
    l1: float                   # ||f||_L1
    l1_weighted: float          # ||(1+v^2)^(1/2) f||_L1
    l2_omega: float             # ||f||_L2(omega)
    l2_omega_weighted: float    # ||(1+v^2)^(1/2) f||_L2(omega)
    gradx_l2_nu: float          # ||grad_x f||_L2(nu)
    gradv_l2: float             # ||grad_v f||_L2
    x_norm: float
    w11_norm: float
    gradv_l2_omega_weighted: float  # ||(1+v^2)^(1/2) grad_v f||_L2(omega); recorded, not asserted


RECORD_FIELDS = tuple(f.name for f in dataclass_fields(DiagRecord))

_NORM_FIELDS = RECORD_FIELDS[6:]


class DiagnosticsSeries:
    """Append-only time series of DiagRecords with internal-consistency checks."""

    def __init__(self):
        self.records: list[DiagRecord] = []

    def append(self, rec: DiagRecord) -> None:
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("record times must be strictly increasing")
        for name in _NORM_FIELDS:
            val = getattr(rec, name)
            if not np.isnan(val) and val < 0:
                raise ValueError(f"norm entry {name} must be nonnegative")
        if not np.isnan(rec.x_norm):
            parts = rec.l2_omega**2 + rec.gradx_l2_nu**2 + rec.gradv_l2**2
            if abs(rec.x_norm**2 - parts) > 1e-12 * max(parts, 1.0):
                raise ValueError("X-norm inconsistent with its components")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")


def grid_norms(f: PhaseGrid, weights: WeightSpec,
               cum_dissipation: float = 0.0) -> DiagRecord:
    """All norms of a grid state by midpoint quadrature.

    Safe on signed fields (used for difference grids): L1-type entries take
    absolute values, L2-type entries square.
    """
    vals = f.values
    dxdv = f.dx * f.dv
    x_sq = f.x_centers**2
    v_sq = f.v_centers**2
    one_v = 1.0 + v_sq
    omega = weights.omega(x_sq[:, None], v_sq[None, :])

    grad_x = np.gradient(vals, f.dx, axis=0)
    grad_v = np.gradient(vals, f.dv, axis=1)

    f_sq = vals * vals
    l1 = float(np.abs(vals).sum()) * dxdv
    l1w = float((np.abs(vals) * np.sqrt(one_v)[None, :]).sum()) * dxdv
    l2w = float(np.sqrt((f_sq * omega).sum() * dxdv))
    l2wv = float(np.sqrt((f_sq * one_v[None, :] * omega).sum() * dxdv))
    gx = float(np.sqrt((grad_x**2 * one_v[None, :]).sum() * dxdv))
    gv = float(np.sqrt((grad_v**2).sum() * dxdv))
    gvwv = float(np.sqrt((grad_v**2 * one_v[None, :] * omega).sum() * dxdv))
    w11 = l1 + float(np.abs(grad_x).sum()) * dxdv + float(np.abs(grad_v).sum()) * dxdv

    return DiagRecord(
        t=f.t,
        mass=f.mass(),
        momentum=f.momentum(),
        energy=f.energy(),
        dissipation=cum_dissipation,
        support_radius=f.support_radius(),
        l1=l1,
        l1_weighted=l1w,
        l2_omega=l2w,
        l2_omega_weighted=l2wv,
        gradx_l2_nu=gx,
        gradv_l2=gv,
        x_norm=float(np.sqrt(l2w**2 + gx**2 + gv**2)),
        w11_norm=w11,
        gradv_l2_omega_weighted=gvwv,
    )


def particle_record(e: ParticleEnsemble, cum_dissipation: float = 0.0) -> DiagRecord:
    """Moment-level record for an ensemble; density-norm entries are NaN
    (no kernel density estimation on the particle path)."""
    mom = empirical_moments(e)
    w = e.weights
    v_sq = np.einsum("ic,ic->i", e.v, e.v)
    l1w = float(np.dot(w, np.sqrt(1.0 + v_sq)))
    nan = float("nan")
    return DiagRecord(
        t=e.t,
        mass=mom.mass,
        momentum=float(mom.momentum[0]),
        energy=mom.energy,
        dissipation=cum_dissipation,
        support_radius=mom.support_radius,
        l1=mom.mass,
        l1_weighted=l1w,
        l2_omega=nan,
        l2_omega_weighted=nan,
        gradx_l2_nu=nan,
        gradv_l2=nan,
        x_norm=nan,
        w11_norm=nan,
        gradv_l2_omega_weighted=nan,
    )


def dissipation_rate(f: PhaseGrid, kernel: KernelSpec) -> float:
    """Alignment dissipation D = sum over cell pairs of
    phi(|x_j - x_j'|) f_jk f_j'k' (v_k - v_k')^2 (dx dv)^2.

    Computed through the marginal reduction D = sum f (a v^2 - 2 b v + q),
    O(Nx^2 Nv), never the naive four-index sum (that lives in the tests as
    the oracle).
    """
    v = f.v_centers
    vals = f.values
    rho = vals.sum(axis=1) * f.dv
    mom = mirror_v_moment(vals, v) * f.dv
    en = (vals * (v * v)[None, :]).sum(axis=1) * f.dv
    phi = kernel.phi(np.abs(f.x_centers[:, None] - f.x_centers[None, :]))
    a = np.sum(phi * rho[None, :], axis=1) * f.dx
    b = np.sum(phi * mom[None, :], axis=1) * f.dx
    q = np.sum(phi * en[None, :], axis=1) * f.dx
    integrand = vals * (a[:, None] * (v * v)[None, :]
                        - 2.0 * b[:, None] * v[None, :]
                        + q[:, None])
    return max(float(integrand.sum() * f.dx * f.dv), 0.0)


def energy_ledger(series: DiagnosticsSeries, sigma: float, d: int,
                  mass: float) -> np.ndarray:
    """Residual(t) = E(t) + int_0^t D ds - E(0) - 2 d sigma M t.

    Vanishes identically for the exact dynamics; the discrete value shrinks
    at the scheme's order under refinement.
    """
    t = series.times
    energy = series.column("energy")
    cum_d = series.column("dissipation")
    return energy + cum_d - energy[0] - 2.0 * d * sigma * mass * (t - t[0])


@dataclass(frozen=True)
class SupportCheckResult:
    passed: bool
    worst_slack: float
    worst_t: float
    violation: tuple[float, float] | None  # (t, R(t)) of the worst violation

    def __bool__(self):
        return self.passed


def support_bound_check(series: DiagnosticsSeries, r0: float, mass: float,
                        tol_geom: float = 0.0) -> SupportCheckResult:
    """Check R(t) <= R0 + M R0 t + tol_geom at every output time.

    tol_geom is 2 dv on the grid (cell quantization), 0 for particles.
    Only meaningful for noiseless runs.
    """
    t = series.times
    radius = series.column("support_radius")
    bound = r0 + mass * r0 * t + tol_geom
    slack = bound - radius
    i = int(np.argmin(slack))
    worst = float(slack[i])
    passed = bool(worst >= 0.0)
    violation = None if passed else (float(t[i]), float(radius[i]))
    return SupportCheckResult(passed, worst, float(t[i]), violation)


def pairwise_distance(fa: PhaseGrid, fb: PhaseGrid,
                      weights: WeightSpec) -> dict[str, float]:
    """Norms of fa - fb: L1, L2(omega), W^{1,1}, and the X norm."""
    if not fa.same_geometry(fb):
        raise GeometryError("pairwise distance needs identical grid geometry")
    diff = PhaseGrid(fa.values - fb.values, fa.lx, fa.lv, fa.t)
    rec = grid_norms(diff, weights)
    return {
        "l1": rec.l1,
        "l2_omega": rec.l2_omega,
        "w11": rec.w11_norm,
        "x": rec.x_norm,
    }
