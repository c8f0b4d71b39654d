"""Model definitions: interaction kernels, run parameters, phase-space weights,
and the alignment operator L[f] = b(x) - a(x) v.

The alignment fields are the kernel-weighted zeroth and first velocity moments
of the density,

    a(x) = int phi(|x-y|) f(y, v*) dy dv*,
    b(x) = int phi(|x-y|) f(y, v*) v* dy dv*,

so that L[f](x, v) = b(x) - a(x) v.  Everything here is dimension-agnostic for
particle use, but gridded fields are 1-D in x (the grid solver runs in a 1-D
by 1-D phase space).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExtrapolationError, InvalidStateError

# Kernel bounds are validated against this slack at construction.
KERNEL_BOUND_TOL = 1e-12

VARIANT_CONSTANT = "constant"
VARIANT_ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class KernelBoundsReport:
    """Sampled maxima of |phi|, |phi'|, |phi''| over [0, r_max]."""

    max_phi: float
    max_dphi: float
    max_ddphi: float

    def within_unit(self, tol: float = KERNEL_BOUND_TOL) -> bool:
        return max(self.max_phi, self.max_dphi, self.max_ddphi) <= 1.0 + tol


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel phi: positive, non-increasing, with
    max{|phi|, |phi'|, |phi''|} <= 1 enforced by dense sampling at construction.

    Variants:
      constant   phi(r) = c with 0 < c <= 1
      algebraic  phi(r) = (1 + r^2)^(-beta/2) with beta >= 0
    """

    variant: str
    param: float

    def __post_init__(self):
        if self.variant == VARIANT_CONSTANT:
            if not 0.0 < self.param <= 1.0:
                raise ValueError(f"constant kernel requires c in (0, 1], got {self.param}")
        elif self.variant == VARIANT_ALGEBRAIC:
            if not self.param >= 0.0:
                raise ValueError(f"algebraic kernel requires beta >= 0, got {self.param}")
        else:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        report = validate_kernel_bounds(self)
        if not report.within_unit():
            raise ValueError(
                f"kernel violates max{{|phi|, |phi'|, |phi''|}} <= 1: "
                f"sampled maxima {report.max_phi:.6g}, {report.max_dphi:.6g}, "
                f"{report.max_ddphi:.6g}"
            )

    @classmethod
    def constant(cls, c: float = 1.0) -> "KernelSpec":
        return cls(VARIANT_CONSTANT, float(c))

    @classmethod
    def algebraic_decay(cls, beta: float = 1.0) -> "KernelSpec":
        """Classical flocking kernel shape; beta=1 is the default everywhere."""
        return cls(VARIANT_ALGEBRAIC, float(beta))

    def phi(self, r):
        """phi(r), vectorized; r must be nonnegative."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("kernel argument r must be nonnegative")
        if self.variant == VARIANT_CONSTANT:
            out = np.full_like(r, self.param)
        elif self.param == 1.0:
            out = 1.0 / np.sqrt(1.0 + r * r)
        else:
            out = np.power(1.0 + r * r, -0.5 * self.param)
        return out if out.ndim else float(out)

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        if self.variant == VARIANT_CONSTANT:
            out = np.zeros_like(r)
        else:
            b = self.param
            out = -b * r * np.power(1.0 + r * r, -0.5 * b - 1.0)
        return out if out.ndim else float(out)

    def ddphi(self, r):
        r = np.asarray(r, dtype=float)
        if self.variant == VARIANT_CONSTANT:
            out = np.zeros_like(r)
        else:
            b = self.param
            u = 1.0 + r * r
            out = -b * np.power(u, -0.5 * b - 2.0) * (1.0 - (b + 1.0) * r * r)
        return out if out.ndim else float(out)


def eval_kernel(kernel: KernelSpec, r: float) -> float:
    """Evaluate phi(r) for a single nonnegative radius."""
    if r < 0:
        raise ValueError(f"kernel argument r must be nonnegative, got {r}")
    return float(kernel.phi(r))


def validate_kernel_bounds(
    kernel: KernelSpec, r_max: float = 10.0, samples: int = 2001
) -> KernelBoundsReport:
    """Densely sample |phi|, |phi'|, |phi''| (analytic derivatives) on [0, r_max].

    r=0 is always in the sample set; the derivative extrema of the algebraic
    variant sit at r <= 1, well inside the default window.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    r = np.linspace(0.0, r_max, samples)
    return KernelBoundsReport(
        max_phi=float(np.max(np.abs(kernel.phi(r)))),
        max_dphi=float(np.max(np.abs(kernel.dphi(r)))),
        max_ddphi=float(np.max(np.abs(kernel.ddphi(r)))),
    )


@dataclass(frozen=True)
class SimParams:
    """Run parameters shared by both solvers.

    The grid solver fixes d=1; the particle solver accepts any d >= 1.
    """

    d: int = 1
    sigma: float = 0.0
    dt: float = 1e-2
    t_final: float = 1.0
    n_particles: int = 1000
    seed: int = 0
    lx: float = 2.0
    lv: float = 2.0
    nx: int = 64
    nv: int = 64
    mass: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"noise strength must satisfy 0 ≤ σ ≤ 1, got {self.sigma}")
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("final time T must be nonnegative")
        if self.n_particles < 1:
            raise ValueError("particle count N must be >= 1")
        if self.nx < 4 or self.nv < 4:
            raise ValueError("grid resolutions must satisfy Nx >= 4 and Nv >= 4")
        if self.lx <= 0 or self.lv <= 0:
            raise ValueError("domain half-widths Lx, Lv must be positive")
        if self.mass <= 0:
            raise ValueError("total mass M must be positive")


@dataclass(frozen=True)
class WeightSpec:
    """Phase-space weights omega(x,v) = (1+v^2)(1+x^2+v^2)^alpha and nu(v) = 1+v^2.

    alpha > 3 keeps 1/omega integrable over the 2d-dimensional phase space,
    which is what the tail estimates of the noisy theory need.
    """

    alpha: float = 4.0

    def __post_init__(self):
        if not self.alpha > 3.0:
            raise ValueError(f"weight exponent must satisfy α > 3, got {self.alpha}")

    def omega(self, x_sq, v_sq):
        """omega from squared magnitudes |x|^2 and |v|^2 (arrays broadcast)."""
        return (1.0 + v_sq) * np.power(1.0 + x_sq + v_sq, self.alpha)

    @staticmethod
    def nu(v_sq):
        return 1.0 + v_sq


def eval_weights(weights: WeightSpec, x, v) -> tuple[float, float]:
    """Return (omega(x, v), nu(v)) for d-vectors (or scalars) x, v."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    x_sq = float(np.dot(x, x))
    v_sq = float(np.dot(v, v))
    return float(weights.omega(x_sq, v_sq)), float(weights.nu(v_sq))


def mirror_v_moment(values: np.ndarray, v: np.ndarray) -> np.ndarray:
    """First v-moment of each row of `values` on the antisymmetric grid `v`.

    Pairs each v-column with its mirror so that rows even in v produce an
    exact zero, not a rounding residue.  `v` must satisfy v[k] == -v[n-1-k]
    bitwise, which holds for cell centers built by `grid` and for the face
    lattice.  Returns sum_k values[:, k] * v[k] per row (no dv factor).
    """
    n = v.size
    h = n // 2
    upper = values[..., n - h:]
    lower = values[..., h - 1::-1] if h > 0 else values[..., :0]
    return ((upper - lower) * v[n - h:]).sum(axis=-1)


@dataclass(frozen=True)
class FieldPair:
    """Sampled alignment fields a(x) >= 0 and b(x) on a 1-D x lattice.

    Entries of b are scalars: gridded fields only exist on the d=1 path.
    """

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("x", "a", "b"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.x.shape == self.a.shape == self.b.shape):
            raise ValueError("field sample arrays must share one shape")
        if np.any(self.a < -1e-15):
            raise InvalidStateError("field a(x) must be nonnegative")


class FieldComputer:
    """Builds alignment fields from grid marginals, with the kernel quadrature
    weights precomputed for a fixed x lattice.

    `method` selects the reference direct O(Nx^2) sum or the FFT convolution
    path; the two must agree to 1e-12 relative (tested, never assumed).
    """

    def __init__(self, kernel: KernelSpec, x_centers: np.ndarray, dx: float,
                 method: str = "direct"):
        if method not in ("direct", "fft"):
            raise ValueError(f"unknown field method {method!r}")
        self.kernel = kernel
        self.x = np.asarray(x_centers, dtype=float)
        self.dx = float(dx)
        self.method = method
        nx = self.x.size
        if method == "direct":
            self._phi_matrix = kernel.phi(np.abs(self.x[:, None] - self.x[None, :]))
        else:
            offsets = np.arange(-(nx - 1), nx) * self.dx
            self._phi_kernel = kernel.phi(np.abs(offsets))

    def _convolve(self, marginal: np.ndarray) -> np.ndarray:
        nx = self.x.size
        if self.method == "direct":
            # fixed-order reduction: independent of BLAS threading
            return np.sum(self._phi_matrix * marginal[None, :], axis=1) * self.dx
        full = np.fft.irfft(
            np.fft.rfft(self._phi_kernel, 4 * nx) * np.fft.rfft(marginal, 4 * nx),
            4 * nx,
        )
        return full[nx - 1: 2 * nx - 1] * self.dx

    def fields(self, values: np.ndarray, v_centers: np.ndarray, dv: float) -> FieldPair:
        if np.any(values < 0):
            raise InvalidStateError("negative density cell in field computation")
        rho = values.sum(axis=1) * dv
        mom = mirror_v_moment(values, v_centers) * dv
        return FieldPair(x=self.x, a=self._convolve(rho), b=self._convolve(mom))


def alignment_field_grid(grid, kernel: KernelSpec, method: str = "direct") -> FieldPair:
    """Midpoint-quadrature alignment fields of a phase-space grid.

    a(x_i) = sum_j phi(|x_i - x_j|) rho_j dx with rho_j the x-marginal of the
    density, b analogous with the momentum marginal.
    """
    comp = FieldComputer(kernel, grid.x_centers, grid.dx, method=method)
    return comp.fields(grid.values, grid.v_centers, grid.dv)


def eval_L(fields: FieldPair, x: float, v: float) -> float:
    """L[f](x, v) = b(x) - a(x) v with a, b linearly interpolated at x."""
    lo, hi = fields.x[0], fields.x[-1]
    if not lo <= x <= hi:
        raise ExtrapolationError(
            f"x={x:.6g} outside sampled field extent [{lo:.6g}, {hi:.6g}]"
        )
    a = float(np.interp(x, fields.x, fields.a))
    b = float(np.interp(x, fields.x, fields.b))
    return b - a * v


def interp_fields(fields: FieldPair, x: float) -> tuple[float, float]:
    """(a(x), b(x)) by linear interpolation; raises outside the extent."""
    lo, hi = fields.x[0], fields.x[-1]
    if not lo <= x <= hi:
        raise ExtrapolationError(
            f"x={x:.6g} outside sampled field extent [{lo:.6g}, {hi:.6g}]"
        )
    return float(np.interp(x, fields.x, fields.a)), float(np.interp(x, fields.x, fields.b))
