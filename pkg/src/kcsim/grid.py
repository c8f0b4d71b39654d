"""Conservative solver for the kinetic flocking equation on a truncated 1-D x 1-D
phase space.

Strang splitting of the three pieces of

    f_t + v f_x + (L[f] f)_v = sigma f_vv

into x-transport, v-drift under the alignment field, and v-diffusion.  All
three sub-steps are written in conservative flux form: zero-inflow boundaries
in x (mass may leave, none enters) and zero-flux boundaries in v.  First-order
upwind fluxes keep the solution nonnegative under the stated CFL conditions;
accuracy is bought with resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, ExtrapolationError, GeometryError, StepSizeError
from .model import FieldComputer, FieldPair, KernelSpec, SimParams, mirror_v_moment

_CFL_SLACK = 1.0 + 1e-12


@dataclass(frozen=True)
class PhaseGrid:
    """Cell-averaged density on [-Lx, Lx] x [-Lv, Lv], shape (Nx, Nv).

    Immutable: `values` is copied and frozen at construction.  Cell centers
    are built antisymmetrically so that v[k] == -v[Nv-1-k] bitwise, which the
    momentum diagnostics rely on for exact odd-moment cancellation.
    """

    values: np.ndarray
    lx: float
    lv: float
    t: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("grid values must be a 2-D (Nx, Nv) array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def nv(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 2.0 * self.lx / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.lv / self.nv

    @cached_property
    def x_centers(self) -> np.ndarray:
        n = self.nx
        return (np.arange(n) - (n - 1) / 2.0) * self.dx

    @cached_property
    def v_centers(self) -> np.ndarray:
        n = self.nv
        return (np.arange(n) - (n - 1) / 2.0) * self.dv

    @cached_property
    def v_faces(self) -> np.ndarray:
        n = self.nv
        return (np.arange(n + 1) - n / 2.0) * self.dv

    def with_values(self, values: np.ndarray, t: float | None = None) -> "PhaseGrid":
        return PhaseGrid(values, self.lx, self.lv, self.t if t is None else t)

    def same_geometry(self, other: "PhaseGrid") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.lx == other.lx
            and self.lv == other.lv
        )

    # moments / structure -------------------------------------------------

    def mass(self) -> float:
        return float(self.values.sum()) * self.dx * self.dv

    def momentum(self) -> float:
        return float(mirror_v_moment(self.values, self.v_centers).sum()) * self.dx * self.dv

    def energy(self) -> float:
        v_sq = self.v_centers * self.v_centers
        return float((self.values * v_sq[None, :]).sum()) * self.dx * self.dv

    def support_radius(self, threshold_frac: float = 1e-12) -> float:
        """Largest |v| carrying density above threshold_frac * max f."""
        peak = float(self.values.max(initial=0.0))
        if peak <= 0.0:
            return 0.0
        occupied = (self.values > threshold_frac * peak).any(axis=0)
        if not occupied.any():
            return 0.0
        return float(np.abs(self.v_centers[occupied]).max())

    def x_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dv

    def v_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dx

    def boundary_mass(self) -> float:
        """Mass sitting in the outermost cell ring (truncation monitor)."""
        v = self.values
        edge = v[0, :].sum() + v[-1, :].sum() + v[1:-1, 0].sum() + v[1:-1, -1].sum()
        return float(edge) * self.dx * self.dv


# initial profiles ---------------------------------------------------------


@dataclass(frozen=True)
class Maxwellian:
    """Gaussian in x and v; the smooth unbounded-support profile for noisy runs."""

    x_center: float = 0.0
    v_center: float = 0.0
    x_spread: float = 0.5
    v_spread: float = 0.5

    r0 = None  # no compact velocity support

    def values(self, x, v):
        gx = np.exp(-0.5 * ((x - self.x_center) / self.x_spread) ** 2)
        gv = np.exp(-0.5 * ((v - self.v_center) / self.v_spread) ** 2)
        return gx * gv

    def check_domain(self, lx, lv):
        if abs(self.x_center) + 4.0 * self.x_spread > lx:
            raise ConfigError("Maxwellian x-support (4 spreads) exceeds domain")
        if abs(self.v_center) + 4.0 * self.v_spread > lv:
            raise ConfigError("Maxwellian v-support (4 spreads) exceeds domain")


def _bump(s):
    """Raised-cosine bump: cos^2(pi s / 2) on |s| < 1, identically 0 outside."""
    s = np.abs(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    m = s < 1.0
    out[m] = np.cos(0.5 * np.pi * s[m]) ** 2
    return out


@dataclass(frozen=True)
class BumpCompact:
    """Compactly supported bump with velocity support exactly B(r0)."""

    r0: float = 1.0
    x_width: float = 1.0

    def values(self, x, v):
        return _bump(x / self.x_width) * _bump(v / self.r0)

    def check_domain(self, lx, lv):
        if self.x_width > lx:
            raise ConfigError("bump x-support exceeds domain")
        if self.r0 > lv:
            raise ConfigError("bump v-support exceeds domain")


@dataclass(frozen=True)
class TwoBeam:
    """Two counter-propagating beams at v = +-v0; even in v by construction."""

    v0: float = 1.0
    x_width: float = 1.0
    v_width: float = 0.25

    @property
    def r0(self) -> float:
        return self.v0 + self.v_width

    def values(self, x, v):
        beams = _bump((v - self.v0) / self.v_width) + _bump((v + self.v0) / self.v_width)
        return _bump(x / self.x_width) * beams

    def check_domain(self, lx, lv):
        if self.x_width > lx:
            raise ConfigError("beam x-support exceeds domain")
        if self.r0 > lv:
            raise ConfigError("beam v-support (v0 + width) exceeds domain")


Profile = Maxwellian | BumpCompact | TwoBeam


def required_lv(profile, mass: float, t_final: float, sigma: float,
                margin: float = 0.5) -> float:
    """Velocity-domain half-width that keeps the support interior.

    sigma = 0: sized from the linear support growth bound R0 (1 + M T).
    sigma > 0: support is unbounded; use mean + 6 standard deviations of the
    spreading velocity profile plus margin (truncation is monitored at run
    time via boundary mass, not guaranteed here).
    """
    if sigma == 0.0:
        if profile.r0 is None:
            raise ConfigError("noiseless runs need a compact-velocity-support profile")
        return profile.r0 * (1.0 + mass * t_final) + margin
    if isinstance(profile, Maxwellian):
        spread0, center = profile.v_spread, abs(profile.v_center)
    else:
        spread0, center = profile.r0, 0.0
    return center + 6.0 * np.sqrt(spread0**2 + 2.0 * sigma * t_final) + margin


def init_grid(profile, params: SimParams) -> PhaseGrid:
    """Evaluate a profile on cell centers and normalize to total mass M."""
    profile.check_domain(params.lx, params.lv)
    shell = PhaseGrid(np.zeros((params.nx, params.nv)), params.lx, params.lv)
    x, v = np.meshgrid(shell.x_centers, shell.v_centers, indexing="ij")
    raw = profile.values(x, v)
    total = raw.sum() * shell.dx * shell.dv
    if total <= 0.0:
        raise ConfigError("profile vanishes on every grid cell")
    return shell.with_values(raw * (params.mass / total), t=0.0)


# sub-steps -----------------------------------------------------------------


def substep_transport_x(f: PhaseGrid, dt: float) -> PhaseGrid:
    """Upwind update of f_t + v f_x = 0, each v-row advected at its own speed.

    Zero-inflow boundaries: outgoing flux leaves the domain, nothing enters.
    Time tag is left unchanged; `full_step` owns the clock.
    """
    nu = f.v_centers * (dt / f.dx)
    if np.abs(nu).max() > _CFL_SLACK:
        raise StepSizeError(
            f"transport CFL violated: max|v| dt/dx = {np.abs(nu).max():.4g} > 1"
        )
    vals = f.values
    left = np.vstack([np.zeros((1, f.nv)), vals[:-1, :]])
    right = np.vstack([vals[1:, :], np.zeros((1, f.nv))])
    new = np.where(nu >= 0.0, vals - nu * (vals - left), vals - nu * (right - vals))
    return f.with_values(new)


def substep_drift_v(f: PhaseGrid, fields: FieldPair, dt: float) -> PhaseGrid:
    """Conservative upwind update of f_t + (L f)_v = 0 per x-column.

    L = b(x) - a(x) v is evaluated at v-cell faces; zero-flux at the v-domain
    walls keeps every column's mass exact.
    """
    if fields.x.shape != f.x_centers.shape or not np.array_equal(fields.x, f.x_centers):
        raise GeometryError("field samples do not match grid x-centers")
    faces = f.v_faces[1:-1]
    speed = fields.b[:, None] - fields.a[:, None] * faces[None, :]  # (Nx, Nv-1)
    cfl = np.abs(speed).max(initial=0.0) * dt / f.dv
    if cfl > _CFL_SLACK:
        raise StepSizeError(f"drift CFL violated: max|L| dt/dv = {cfl:.4g} > 1")
    vals = f.values
    flux = np.maximum(speed, 0.0) * vals[:, :-1] + np.minimum(speed, 0.0) * vals[:, 1:]
    div = np.zeros_like(vals)
    div[:, :-1] += flux          # G_{k+1/2}
    div[:, 1:] -= flux           # -G_{k-1/2}
    return f.with_values(vals - (dt / f.dv) * div)


def substep_diffuse_v(f: PhaseGrid, sigma: float, dt: float,
                      method: str = "auto") -> PhaseGrid:
    """Velocity diffusion sigma f_vv with zero-flux walls.

    sigma = 0 is the identity.  The explicit second-difference update needs
    sigma dt / dv^2 <= 1/2; the backward-Euler tridiagonal solve is
    unconditionally stable and is what `full_step` uses.
    """
    if sigma == 0.0:
        return f
    lam = sigma * dt / f.dv**2
    if method == "auto":
        method = "explicit" if lam <= 0.5 else "implicit"
    vals = f.values
    if method == "explicit":
        if lam > 0.5 + 1e-12:
            raise StepSizeError(
                f"explicit diffusion needs sigma dt/dv^2 <= 1/2, got {lam:.4g}"
            )
        lap = np.zeros_like(vals)
        lap[:, 1:-1] = vals[:, 2:] - 2.0 * vals[:, 1:-1] + vals[:, :-2]
        lap[:, 0] = vals[:, 1] - vals[:, 0]
        lap[:, -1] = vals[:, -2] - vals[:, -1]
        return f.with_values(vals + lam * lap)
    if method != "implicit":
        raise ValueError(f"unknown diffusion method {method!r}")
    nv = f.nv
    ab = np.zeros((3, nv))
    ab[0, 1:] = -lam
    ab[1, :] = 1.0 + 2.0 * lam
    ab[1, 0] = ab[1, -1] = 1.0 + lam
    ab[2, :-1] = -lam
    new = solve_banded((1, 1), ab, vals.T).T
    return f.with_values(new)


def full_step(f: PhaseGrid, kernel: KernelSpec, sigma: float, dt: float,
              computer: FieldComputer | None = None,
              diffusion: str = "implicit", alignment: bool = True) -> PhaseGrid:
    """One Strang step: T(dt/2) D(dt/2) S(dt) D(dt/2) T(dt/2), fields refreshed
    before each drift half-step.

    `alignment=False` drops the drift halves entirely (test hook for the pure
    transport-diffusion heat balance).
    """
    if computer is None:
        computer = FieldComputer(kernel, f.x_centers, f.dx)
    g = substep_transport_x(f, 0.5 * dt)
    if alignment:
        g = substep_drift_v(g, computer.fields(g.values, g.v_centers, g.dv), 0.5 * dt)
    g = substep_diffuse_v(g, sigma, dt, method=diffusion)
    if alignment:
        g = substep_drift_v(g, computer.fields(g.values, g.v_centers, g.dv), 0.5 * dt)
    g = substep_transport_x(g, 0.5 * dt)
    return g.with_values(g.values, t=f.t + dt)


def sample_density(f: PhaseGrid, x: float, v: float) -> float:
    """Bilinear probe of the cell-averaged density; exact on linear profiles.

    Outside the cell-center lattice but inside the domain the probe clamps to
    the edge cell value; outside the domain it is an error.
    """
    if not (-f.lx <= x <= f.lx and -f.lv <= v <= f.lv):
        raise ExtrapolationError(f"probe ({x:.6g}, {v:.6g}) outside phase-space domain")
    xc, vc = f.x_centers, f.v_centers
    fx = np.clip((x - xc[0]) / f.dx, 0.0, f.nx - 1.0)
    fv = np.clip((v - vc[0]) / f.dv, 0.0, f.nv - 1.0)
    i0 = min(int(fx), f.nx - 2) if f.nx > 1 else 0
    k0 = min(int(fv), f.nv - 2) if f.nv > 1 else 0
    tx = fx - i0
    tv = fv - k0
    vals = f.values
    return float(
        (1 - tx) * (1 - tv) * vals[i0, k0]
        + tx * (1 - tv) * vals[i0 + 1, k0]
        + (1 - tx) * tv * vals[i0, k0 + 1]
        + tx * tv * vals[i0 + 1, k0 + 1]
    )
