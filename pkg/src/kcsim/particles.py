"""Mean-field particle solver: deterministic alignment dynamics via RK4 and an
Euler-Maruyama integrator for velocity noise.

Each particle carries weight M/N.  The force on particle i is the empirical
alignment field

    F_i = sum_j w_j phi(|X_i - X_j|) (V_j - V_i) = b_i - a_i V_i,

the same a/b decomposition the grid solver uses.  The diffusion term sigma
Laplacian_v of the kinetic equation corresponds to velocity noise of amplitude
sqrt(2 sigma) at particle level; that convention is fixed here and pinned by
the single-particle variance test.

Reproducibility: noise comes from a counter-based Philox stream keyed on
(seed, step, particle), and the bulk force kernel reduces each row in a fixed
order, so runs are bit-identical for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .errors import BlowUpError
from .model import FieldPair, KernelSpec, VARIANT_CONSTANT, interp_fields

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted N-body state: positions x and velocities v, shape (N, d).

    Immutable; stepping functions return fresh ensembles.  Weights are uniform
    M/N and never mutated.
    """

    x: np.ndarray
    v: np.ndarray
    mass: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        x = np.atleast_2d(np.array(self.x, dtype=float))
        v = np.atleast_2d(np.array(self.v, dtype=float))
        if x.shape != v.shape:
            raise ValueError("positions and velocities must share shape (N, d)")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, self.mass / self.n)

    def with_state(self, x: np.ndarray, v: np.ndarray, t: float) -> "ParticleEnsemble":
        return ParticleEnsemble(x, v, self.mass, t)


@dataclass(frozen=True)
class Moments:
    mass: float
    momentum: np.ndarray
    energy: float
    support_radius: float


@dataclass(frozen=True)
class CharacteristicState:
    """Endpoint of one characteristic: position, velocity, and the accumulated
    exponent log J = d * int_0^t a(tau, X(tau)) dtau of the density formula."""

    x: float
    v: float
    log_j: float
    t: float


# force kernels --------------------------------------------------------------


def _kernel_code(kernel: KernelSpec) -> tuple[int, float]:
    return (0, kernel.param) if kernel.variant == VARIANT_CONSTANT else (1, kernel.param)


if HAVE_NUMBA:

    @njit(parallel=True, fastmath=True, cache=True)
    def _fields_numba_1d(x, v, w, code, param):  # pragma: no cover - compiled
        n = x.shape[0]
        a = np.empty(n)
        b = np.empty(n)
        for i in prange(n):
            xi = x[i]
            ai = 0.0
            bi = 0.0
            for j in range(n):
                dx = xi - x[j]
                r2 = dx * dx
                if code == 0:
                    ph = param
                elif param == 1.0:
                    ph = 1.0 / math.sqrt(1.0 + r2)
                else:
                    ph = (1.0 + r2) ** (-0.5 * param)
                mu = ph * w[j]
                ai += mu
                bi += mu * v[j]
            a[i] = ai
            b[i] = bi
        return a, b

    @njit(parallel=True, fastmath=True, cache=True)
    def _fields_numba_nd(x, v, w, code, param):  # pragma: no cover - compiled
        n, d = x.shape
        a = np.empty(n)
        b = np.empty((n, d))
        for i in prange(n):
            ai = 0.0
            bi = np.zeros(d)
            for j in range(n):
                r2 = 0.0
                for c in range(d):
                    dx = x[i, c] - x[j, c]
                    r2 += dx * dx
                if code == 0:
                    ph = param
                elif param == 1.0:
                    ph = 1.0 / math.sqrt(1.0 + r2)
                else:
                    ph = (1.0 + r2) ** (-0.5 * param)
                mu = ph * w[j]
                ai += mu
                for c in range(d):
                    bi[c] += mu * v[j, c]
            a[i] = ai
            for c in range(d):
                b[i, c] = bi[c]
        return a, b

    def _fields_numba(x, v, w, code, param):
        if x.shape[1] == 1:
            a, b = _fields_numba_1d(
                np.ascontiguousarray(x[:, 0]), np.ascontiguousarray(v[:, 0]),
                w, code, param,
            )
            return a, b.reshape(-1, 1)
        return _fields_numba_nd(x, v, w, code, param)


def _fields_numpy(x, v, w, code, param, block=512):
    n, d = x.shape
    a = np.empty(n)
    b = np.empty((n, d))
    for s in range(0, n, block):
        e = min(s + block, n)
        diff = x[s:e, None, :] - x[None, :, :]
        r2 = np.einsum("ijc,ijc->ij", diff, diff)
        if code == 0:
            ph = np.full_like(r2, param)
        elif param == 1.0:
            ph = 1.0 / np.sqrt(1.0 + r2)
        else:
            ph = np.power(1.0 + r2, -0.5 * param)
        mw = ph * w[None, :]
        a[s:e] = mw.sum(axis=1)
        b[s:e] = np.einsum("ij,jc->ic", mw, v)
    return a, b


def _fields_raw(x, v, w, kernel: KernelSpec | None, backend: str):
    if kernel is None:
        return np.zeros(x.shape[0]), np.zeros_like(v)
    code, param = _kernel_code(kernel)
    if backend == "auto":
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        return _fields_numba(x, v, w, code, param)
    return _fields_numpy(x, v, w, code, param)


def ensemble_fields(e: ParticleEnsemble, kernel: KernelSpec | None,
                    backend: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Per-particle alignment fields a_i = sum_j w_j phi_ij and
    b_i = sum_j w_j phi_ij V_j.  kernel=None disables alignment (test hook)."""
    return _fields_raw(e.x, e.v, e.weights, kernel, backend)


def forces(e: ParticleEnsemble, kernel: KernelSpec | None,
           backend: str = "auto") -> np.ndarray:
    a, b = ensemble_fields(e, kernel, backend)
    return b - a[:, None] * e.v


def pairwise_force(e: ParticleEnsemble, kernel: KernelSpec, i: int) -> np.ndarray:
    """Reference force on particle i: plain ascending-j summation.

    The j = i term contributes exactly zero.  This is the path the optimized
    bulk kernel is equivalence-tested against.
    """
    if not 0 <= i < e.n:
        raise IndexError(f"particle index {i} out of range for N={e.n}")
    w = e.mass / e.n
    acc = np.zeros(e.d)
    xi, vi = e.x[i], e.v[i]
    for j in range(e.n):
        r = math.sqrt(float(np.dot(e.x[j] - xi, e.x[j] - xi)))
        acc += (w * float(kernel.phi(r))) * (e.v[j] - vi)
    return acc


def dissipation_rate_particles(e: ParticleEnsemble, kernel: KernelSpec | None,
                               backend: str = "auto") -> float:
    """D = sum_ij w_i w_j phi(|X_i - X_j|) |V_i - V_j|^2, via the a/b fields."""
    if kernel is None:
        return 0.0
    a, b = ensemble_fields(e, kernel, backend)
    w = e.weights
    v_sq = np.einsum("ic,ic->i", e.v, e.v)
    vb = np.einsum("ic,ic->i", e.v, b)
    return float(2.0 * np.sum(w * (a * v_sq - vb)))


# time stepping ---------------------------------------------------------------


def _check_finite(x, v, t):
    if not (np.isfinite(x).all() and np.isfinite(v).all()):
        raise BlowUpError(t, what="particle state")


def step_deterministic(e: ParticleEnsemble, kernel: KernelSpec | None, dt: float,
                       backend: str = "auto", stage_fields=None) -> ParticleEnsemble:
    """Classical RK4 step of dX/dt = V, dV/dt = F(X, V).

    `stage_fields` may carry precomputed (a, b) for the current state so a
    recording driver does not pay a second force evaluation per step.
    """
    if dt == 0.0:
        return e
    x0, v0 = e.x, e.v
    w = e.weights

    def rhs(x, v, fields=None):
        a, b = fields if fields is not None else _fields_raw(x, v, w, kernel, backend)
        return v, b - a[:, None] * v

    k1x, k1v = rhs(x0, v0, stage_fields)
    k2x, k2v = rhs(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
    k3x, k3v = rhs(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
    k4x, k4v = rhs(x0 + dt * k3x, v0 + dt * k3v)
    xn = x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    vn = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    t = e.t + dt
    _check_finite(xn, vn, t)
    return e.with_state(xn, vn, t)


class NoiseStream:
    """Counter-based Gaussian stream: the draw for (step, particle i,
    component c) is a pure function of (seed, step, i*d + c).

    One Philox block per value; normals via the inverse CDF of
    u = (r53 + 1/2) * 2^-53, so no uniform is ever 0 or 1.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & (2**64 - 1)

    def gaussians(self, step: int, n: int, d: int) -> np.ndarray:
        bg = np.random.Philox(key=self.seed, counter=[0, 0, 0, int(step)])
        raw = bg.random_raw(n * d)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return ndtri(u).reshape(n, d)


def step_stochastic(e: ParticleEnsemble, kernel: KernelSpec | None, dt: float,
                    sigma: float, stream: NoiseStream, step: int,
                    backend: str = "auto", fields=None) -> ParticleEnsemble:
    """Euler-Maruyama step: V += F dt + sqrt(2 sigma dt) xi, then X += V dt
    with the updated velocity.  sigma = 0 is allowed and noise-free."""
    if fields is not None:
        a, b = fields
        f = b - a[:, None] * e.v
    else:
        f = forces(e, kernel, backend)
    amp = math.sqrt(2.0 * sigma * dt)
    vn = e.v + f * dt
    if amp > 0.0:
        vn = vn + amp * stream.gaussians(step, e.n, e.d)
    xn = e.x + vn * dt
    t = e.t + dt
    _check_finite(xn, vn, t)
    return e.with_state(xn, vn, t)


# characteristics -------------------------------------------------------------


@dataclass(frozen=True)
class CharacteristicResult:
    state: CharacteristicState
    v_closed_form: float


def solve_characteristic(x0: float, v0: float,
                         fields: Callable[[float], FieldPair],
                         t_final: float, dt: float) -> CharacteristicResult:
    """Integrate one characteristic dX/dt = V, dV/dt = b(t,X) - a(t,X) V.

    The quadratures A(t) = int a and I(t) = int b e^A ride along in the same
    RK4 system, so the direct velocity and the closed form

        V(t) = e^{-A} V0 + e^{-A} I(t)

    agree to O(dt^4).  Gridded fields are 1-D, hence so is this solver.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    if t_final == 0.0:
        return CharacteristicResult(CharacteristicState(x0, v0, 0.0, 0.0), v0)
    n_steps = max(1, round(t_final / dt))
    h = t_final / n_steps

    def rhs(t, y):
        x, v, acc_a, acc_i = y
        a, b = interp_fields(fields(t), x)
        return np.array([v, b - a * v, a, b * math.exp(acc_a)])

    y = np.array([x0, v0, 0.0, 0.0])
    t = 0.0
    for _ in range(n_steps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    x, v, acc_a, acc_i = y
    v_closed = math.exp(-acc_a) * (v0 + acc_i)
    state = CharacteristicState(x=float(x), v=float(v), log_j=float(acc_a), t=t_final)
    return CharacteristicResult(state, float(v_closed))


def density_along_characteristic(f0_value: float, cs: CharacteristicState) -> float:
    """f(t, X(t), V(t)) = f0(x0, v0) exp(log J); never below the initial value."""
    if f0_value < 0:
        raise ValueError("density value must be nonnegative")
    return f0_value * math.exp(cs.log_j)


# diagnostics helpers ---------------------------------------------------------


def empirical_moments(e: ParticleEnsemble) -> Moments:
    """Mass, momentum, kinetic second moment, and velocity support radius."""
    w = e.weights
    momentum = np.einsum("i,ic->c", w, e.v)
    v_sq = np.einsum("ic,ic->i", e.v, e.v)
    return Moments(
        mass=float(w.sum()),
        momentum=momentum,
        energy=float(np.dot(w, v_sq)),
        support_radius=float(np.sqrt(v_sq.max())) if e.n else 0.0,
    )


def velocity_diameter(e: ParticleEnsemble) -> float:
    """max_ij |V_i - V_j|; O(N) in d=1, blocked pairwise otherwise."""
    if e.d == 1:
        col = e.v[:, 0]
        return float(col.max() - col.min())
    best = 0.0
    for s in range(0, e.n, 512):
        diff = e.v[s:s + 512, None, :] - e.v[None, :, :]
        best = max(best, float(np.sqrt(np.einsum("ijc,ijc->ij", diff, diff).max())))
    return best
