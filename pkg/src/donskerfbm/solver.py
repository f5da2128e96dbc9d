"""Solvers for dy = sigma(y) dZ + b(y) dt.

``solve_rough`` runs the second-order (area-using) step on a rough driver
grid ``(dZ_k, A_k)``; ``solve_ode`` integrates the classical ODE driven by an
absolutely continuous path with RK4, sub-stepping inside the intervals where
the driver velocity is smooth.

Vector fields are vectorised: ``sigma(y)`` maps (..., n) to (..., n, d),
``dsigma(y)`` to (..., n, d, n) with ``dsigma[..., a, i, b] = d sigma_ai / d y_b``,
and ``b(y)`` to (..., n).
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import fbm as fbm_mod
from .driver import ITERATED, DriverPath, HurstParam, deriv_weights, levy_area, QuadratureSpec
from .errors import DivergenceError, DomainError
from .noise import NoiseLaw, RandomWalkNoise
from .quadrature import panel_nodes

DIVERGENCE_GUARD = 1e12
MAX_FAILED_FRACTION = 1e-3


def _zero_drift(y):
    return np.zeros_like(y)


@dataclass(frozen=True)
class VectorFieldSpec:
    n: int
    d: int
    sigma: callable
    dsigma: callable
    b: callable = _zero_drift
    a: tuple = None
    name: str = "custom"
    attestations: dict = field(default_factory=dict)

    def __post_init__(self):
        a = (0.0,) * self.n if self.a is None else tuple(float(x) for x in np.atleast_1d(self.a))
        if len(a) != self.n:
            raise DomainError(f"initial point has {len(a)} entries, expected n={self.n}")
        object.__setattr__(self, "a", a)

    @property
    def initial(self):
        return np.array(self.a, dtype=float)

    def jacobian_defect(self, y, h=1e-6):
        """Max deviation of dsigma from central differences of sigma at y."""
        y = np.asarray(y, dtype=float)
        J = np.asarray(self.dsigma(y))
        worst = 0.0
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            fd = (np.asarray(self.sigma(y + e)) - np.asarray(self.sigma(y - e))) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - J[..., k]))))
        return worst

    def with_initial(self, a):
        return VectorFieldSpec(self.n, self.d, self.sigma, self.dsigma, self.b, tuple(a),
                               self.name, dict(self.attestations))


def zero_sigma(b, n=1, d=1, a=None, name="zero-sigma"):
    def sigma(y):
        return np.zeros(np.shape(y) + (d,))

    def dsigma(y):
        return np.zeros(np.shape(y) + (d, n))

    return VectorFieldSpec(n, d, sigma, dsigma, b, a, name, {"sigma_bound": 0.0})


def constant_sigma(S, a=None, b=None, name="constant"):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n, d = S.shape

    def sigma(y):
        return np.broadcast_to(S, np.shape(y)[:-1] + (n, d)).copy()

    def dsigma(y):
        return np.zeros(np.shape(y)[:-1] + (n, d, n))

    return VectorFieldSpec(n, d, sigma, dsigma, b or _zero_drift, a, name,
                           {"sigma_bound": float(np.abs(S).max())})


def scalar_linear(a=1.0):
    """n = d = 1, sigma(y) = y, b = 0: the solution is a * exp(Z_t)."""

    def sigma(y):
        return np.asarray(y)[..., None]

    def dsigma(y):
        return np.ones(np.shape(y) + (1, 1))

    return VectorFieldSpec(1, 1, sigma, dsigma, _zero_drift, (a,), "scalar-linear")


def heisenberg(a=(0.0, 0.0)):
    """n = d = 2 with columns V1 = (1, 0), V2 = (0, y1): V1 and V2 do not commute.

    The second coordinate of the solution is a + int y^1 dZ^2, i.e. the
    area entry A(2, 1).
    """

    def sigma(y):
        y = np.asarray(y)
        out = np.zeros(y.shape + (2,))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = y[..., 0]
        return out

    def dsigma(y):
        y = np.asarray(y)
        out = np.zeros(y.shape + (2, 2))
        out[..., 1, 1, 0] = 1.0
        return out

    return VectorFieldSpec(2, 2, sigma, dsigma, _zero_drift, a, "heisenberg")


def rotation(a=(1.0, 0.0)):
    """n = d = 2, bounded non-commuting fields V1 = (cos y2, sin y2), V2 = (-sin y1, cos y1)."""

    def sigma(y):
        y = np.asarray(y)
        out = np.empty(y.shape + (2,))
        out[..., 0, 0] = np.cos(y[..., 1])
        out[..., 1, 0] = np.sin(y[..., 1])
        out[..., 0, 1] = -np.sin(y[..., 0])
        out[..., 1, 1] = np.cos(y[..., 0])
        return out

    def dsigma(y):
        y = np.asarray(y)
        out = np.zeros(y.shape + (2, 2))
        out[..., 0, 0, 1] = -np.sin(y[..., 1])
        out[..., 1, 0, 1] = np.cos(y[..., 1])
        out[..., 0, 1, 0] = -np.cos(y[..., 0])
        out[..., 1, 1, 0] = -np.sin(y[..., 0])
        return out

    return VectorFieldSpec(2, 2, sigma, dsigma, _zero_drift, a, "rotation",
                           {"sigma_bound": 1.0, "dsigma_bound": 1.0, "d2sigma_bound": 1.0})


PRESETS = {
    "scalar-linear": scalar_linear,
    "heisenberg": heisenberg,
    "rotation": rotation,
    "zero-sigma": lambda: zero_sigma(lambda y: -np.asarray(y), a=(1.0,)),
}


@dataclass(frozen=True)
class RoughDriverGrid:
    """Per-step increments and areas on a time grid (iterated-integral area convention).

    ``increments`` is (..., N, d) and ``areas`` (..., N, d, d); leading axes
    are sample axes.
    """

    times: np.ndarray
    increments: np.ndarray
    areas: np.ndarray
    convention: str = ITERATED

    def __post_init__(self):
        times = fbm_mod.check_grid(self.times)
        N = len(times) - 1
        if self.increments.shape[-2] != N or self.areas.shape[-3] != N:
            raise DomainError("increments/areas do not match the grid")
        d = self.increments.shape[-1]
        idx = np.arange(d)
        diag = self.areas[..., idx, idx]
        half = 0.5 * self.increments ** 2
        tol = 1e-10 * max(1.0, float(np.max(np.abs(half), initial=0.0)))
        if np.max(np.abs(diag - half), initial=0.0) > tol:
            raise DomainError("areas violate the diagonal convention 0.5 * dZ^2")
        if self.convention != ITERATED:
            raise DomainError("solver consumes iterated-convention areas")

    @property
    def d(self):
        return self.increments.shape[-1]

    @classmethod
    def from_fbm(cls, ensemble_or_sample, ratio=1):
        """Coarse steps of ``ratio`` fbm cells; areas from fine left-point sums."""
        values = ensemble_or_sample.values
        single = values.ndim == 2
        if single:
            values = values[None]
        grid = ensemble_or_sample.grid
        if ratio == 1:
            inc = np.diff(values, axis=1)
            areas = fbm_mod.step_areas(values)
        else:
            inc, areas = fbm_mod.coarse_step_areas(values, ratio)
        times = grid[::ratio]
        if single:
            inc, areas = inc[0], areas[0]
        return cls(times, inc, areas)

    @classmethod
    def from_function(cls, Z, dZ, times, order=8):
        """Smooth driver Z (vectorised, times -> (n_t, d)) with quadrature areas."""
        times = fbm_mod.check_grid(times)
        vals = np.asarray(Z(times))
        inc = np.diff(vals, axis=0)
        nodes, w, idx = panel_nodes(times[:-1], times[1:], order)
        Zq = np.asarray(Z(nodes)) - vals[idx]
        Vq = np.asarray(dZ(nodes)) * w[:, None]
        d = vals.shape[1]
        areas = np.zeros((len(times) - 1, d, d))
        for i in range(d):
            for j in range(d):
                areas[:, i, j] = np.bincount(idx, Vq[:, i] * Zq[:, j], minlength=len(times) - 1)
        k = np.arange(d)
        areas[:, k, k] = 0.5 * inc * inc
        return cls(times, inc, areas)

    @classmethod
    def from_driver_path(cls, path, times, quad=QuadratureSpec()):
        """Exact X^eps increments with quadrature Levy areas on each step."""
        times = fbm_mod.check_grid(times)
        vals = path.values(times)
        areas = np.stack([levy_area(path, s, t, quad).values for s, t in zip(times[:-1], times[1:])])
        k = np.arange(path.d)
        inc = np.diff(vals, axis=0)
        areas[:, k, k] = 0.5 * inc * inc
        return cls(times, inc, areas)


def _rk4_drift_increment(b, y, dt):
    k1 = b(y)
    k2 = b(y + 0.5 * dt * k1)
    k3 = b(y + 0.5 * dt * k2)
    k4 = b(y + dt * k3)
    return dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _guard(y, step, failed, raise_on_fail):
    bad = ~np.isfinite(y).all(axis=-1) | (np.abs(np.nan_to_num(y, nan=np.inf)).max(axis=-1) > DIVERGENCE_GUARD)
    if np.any(bad):
        if raise_on_fail:
            raise DivergenceError(f"solution diverged at step {step}", step)
        failed |= bad
        y[bad] = np.nan
    return y


def solve_rough(vf, drv, y0=None, raise_on_fail=True, return_failures=False):
    """Second-order step y += sigma dZ + (D sigma . sigma) : A + drift.

    The area term is sum_{i,j} (D sigma_i . sigma_j)(y) A(i, j), matching
    A(i, j) = int (Z^j - Z^j_s) dZ^i. The drift increment is one RK4 step
    of y' = b(y) over the step.
    """
    if drv.d != vf.d:
        raise DomainError(f"driver has d={drv.d}, vector field expects d={vf.d}")
    batch = drv.increments.shape[:-2]
    y = np.broadcast_to(vf.initial if y0 is None else np.asarray(y0, float), batch + (vf.n,)).copy()
    N = len(drv.times) - 1
    out = np.empty(batch + (N + 1, vf.n))
    out[..., 0, :] = y
    dts = np.diff(drv.times)
    failed = np.zeros(batch, dtype=bool)
    for k in range(N):
        dZ = drv.increments[..., k, :]
        A = drv.areas[..., k, :, :]
        sig = vf.sigma(y)
        step = np.einsum("...nd,...d->...n", sig, dZ)
        Ds = vf.dsigma(y)
        step += np.einsum("...aib,...bj,...ij->...a", Ds, sig, A)
        step += _rk4_drift_increment(vf.b, y, dts[k])
        y = _guard(y + step, k, failed, raise_on_fail)
        out[..., k + 1, :] = y
    return (out, failed) if return_failures else out


class SmoothDriver:
    """A C^1 driver given by vectorised Z(t) -> (n_t, d) and its derivative."""

    def __init__(self, Z, dZ, d, breakpoints=(), horizon=1.0):
        self.Z, self.dZ, self.d = Z, dZ, d
        self._bp = np.asarray(breakpoints, dtype=float)
        self.horizon = horizon

    def breakpoints(self):
        return self._bp

    def velocities_on(self, t, lo, hi):
        return np.asarray(self.dZ(np.asarray(t, dtype=float)))


class DriverBatch:
    """X^eps of realizations sample0 .. sample0 + n_samples - 1, for the ODE solver."""

    def __init__(self, noise, H, sample0, n_samples):
        self.noise = noise
        self.hurst = HurstParam.coerce(H)
        self.d = noise.dims
        self.horizon = noise.horizon
        self.sample_ids = np.arange(sample0, sample0 + n_samples)
        self._eta = [noise.eta_ensemble(i, sample0, n_samples) for i in range(1, self.d + 1)]

    def breakpoints(self):
        return np.unique(self.noise.edges)

    def velocities_on(self, t, lo, hi):
        kc = self.noise.block_of(0.5 * (lo + hi)) - 1
        D = deriv_weights(self.noise, self.hurst.H, t, blocks=np.full(len(t), kc))
        return np.stack([eta @ D.T for eta in self._eta], axis=-1)  # (S, n_t, d)


def _driver_velocities_on(path):
    def f(t, lo, hi):
        kc = path.noise.block_of(0.5 * (lo + hi)) - 1
        D = deriv_weights(path.noise, path.H, t, blocks=np.full(len(t), kc))
        return D @ path._eta

    return f


def solve_ode(vf, path, grid, substeps=4, y0=None, raise_on_fail=True, return_failures=False):
    """RK4 for y' = sigma(y) dX/dt + b(y), steps aligned to the driver's breakpoints.

    ``path`` is a DriverPath, a DriverBatch or a SmoothDriver. Returns the
    solution at ``grid``: (len(grid), n), or (S, len(grid), n) for a batch.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    if path.d != vf.d:
        raise DomainError(f"driver has d={path.d}, vector field expects d={vf.d}")
    vel = _driver_velocities_on(path) if isinstance(path, DriverPath) else path.velocities_on
    bp = np.asarray(path.breakpoints(), dtype=float)
    bp = bp[(bp > grid[0]) & (bp < grid[-1])]
    knots = np.unique(np.concatenate([grid, bp]))
    batch = (len(path.sample_ids),) if isinstance(path, DriverBatch) else ()
    y = np.broadcast_to(vf.initial if y0 is None else np.asarray(y0, float), batch + (vf.n,)).copy()
    out = np.empty(batch + (len(grid), vf.n))
    out[..., 0, :] = y
    gi = 1
    failed = np.zeros(batch, dtype=bool)
    frac = np.array([0.0, 0.5, 1.0])
    for step, (lo, hi) in enumerate(zip(knots[:-1], knots[1:])):
        h = (hi - lo) / substeps
        starts = lo + h * np.arange(substeps)
        ts = (starts[:, None] + h * frac[None, :]).ravel()
        ts[-1] = hi
        V = vel(ts, lo, hi)
        V = V.reshape(batch + (substeps, 3, vf.d))
        for m in range(substeps):
            v0, vm, v1 = V[..., m, 0, :], V[..., m, 1, :], V[..., m, 2, :]

            def rhs(yy, v):
                return np.einsum("...nd,...d->...n", vf.sigma(yy), v) + vf.b(yy)

            k1 = rhs(y, v0)
            k2 = rhs(y + 0.5 * h * k1, vm)
            k3 = rhs(y + 0.5 * h * k2, vm)
            k4 = rhs(y + h * k3, v1)
            y = _guard(y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), step, failed, raise_on_fail)
        if gi < len(grid) and hi == grid[gi]:
            out[..., gi, :] = y
            gi += 1
    return (out, failed) if return_failures else out


def self_convergence_order(vf, path, lo, hi, substeps=(2, 4, 8), ref_factor=10):
    """Observed orders log2(e_m / e_2m) of solve_ode on [lo, hi] against a finer run.

    The reference uses ``ref_factor`` times the finest sub-step count.
    """
    grid = np.array([lo, hi])
    ref = solve_ode(vf, path, grid, substeps[-1] * ref_factor)[..., -1, :]
    errs = [float(np.max(np.abs(solve_ode(vf, path, grid, m)[..., -1, :] - ref))) for m in substeps]
    orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    return orders, errs


@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float
    law: NoiseLaw = field(default_factory=NoiseLaw.rademacher)
    seed: int = 1
    substeps: int = 2

    def noise(self, d):
        return RandomWalkNoise(self.epsilon, self.law, d, self.seed)


@dataclass(frozen=True)
class FbmConfig:
    H: float
    n_grid: int = 4096
    seed: int = 2
    ratio: int = 1

    def grid(self):
        return fbm_mod.uniform_grid(self.n_grid)


@dataclass
class EnsemblePair:
    times: np.ndarray
    approx: np.ndarray  # (S, n_times, n), driven by X^eps
    limit: np.ndarray  # (S, n_times, n), driven by (B, B^2)
    approx_failed: np.ndarray
    limit_failed: np.ndarray


def _check_failures(failed, label):
    frac = float(np.mean(failed)) if failed.size else 0.0
    if frac > MAX_FAILED_FRACTION:
        raise DivergenceError(f"{label}: {frac:.2%} of samples diverged (limit 0.1%)")


def solve_eps_ensemble(vf, noise_cfg, H, times, n_samples, sample0=0, chunk=1000):
    times = np.asarray(times, dtype=float)
    grid = np.unique(np.concatenate([[0.0], times]))
    noise = noise_cfg.noise(vf.d)
    out = np.empty((n_samples, len(times), vf.n))
    failed = np.zeros(n_samples, dtype=bool)
    pos = np.searchsorted(grid, times)
    for lo in range(0, n_samples, chunk):
        m = min(chunk, n_samples - lo)
        batch = DriverBatch(noise, H, sample0 + lo, m)
        y, f = solve_ode(vf, batch, grid, noise_cfg.substeps, raise_on_fail=False,
                         return_failures=True)
        out[lo:lo + m] = y[:, pos, :]
        failed[lo:lo + m] = f
    return out, failed


def solve_limit_ensemble(vf, fbm_cfg, times, n_samples, sample0=0, chunk=1000):
    times = np.asarray(times, dtype=float)
    grid = fbm_cfg.grid()
    coarse = grid[::fbm_cfg.ratio]
    pos = [fbm_mod.grid_index(coarse, t) for t in times]
    out = np.empty((n_samples, len(times), vf.n))
    failed = np.zeros(n_samples, dtype=bool)
    for lo in range(0, n_samples, chunk):
        m = min(chunk, n_samples - lo)
        ens = fbm_mod.simulate_fbm_ensemble(fbm_cfg.H, grid, vf.d, fbm_cfg.seed, sample0 + lo, m,
                                            keep_increments=False)
        drv = RoughDriverGrid.from_fbm(ens, fbm_cfg.ratio)
        y, f = solve_rough(vf, drv, raise_on_fail=False, return_failures=True)
        out[lo:lo + m] = y[:, pos, :]
        failed[lo:lo + m] = f
    return out, failed


def solve_eps_vs_limit(vf, noise_cfg, fbm_cfg, times, n_samples):
    """Independent ensembles of y^eps and y at ``times``."""
    if noise_cfg.seed == fbm_cfg.seed:
        raise DomainError("the two families need independent seeds")
    approx, fa = solve_eps_ensemble(vf, noise_cfg, fbm_cfg.H, times, n_samples)
    limit, fl = solve_limit_ensemble(vf, fbm_cfg, times, n_samples)
    _check_failures(fa, "approximating ensemble")
    _check_failures(fl, "limit ensemble")
    return EnsemblePair(np.asarray(times, float), approx, limit, fa, fl)


def log_normal_limit_variance(H):
    """Var log y_1 for the scalar linear field: Var B_1 = 1 / (2H)."""
    return 1.0 / (2.0 * HurstParam.coerce(H).H)


__all__ = [
    "VectorFieldSpec", "RoughDriverGrid", "SmoothDriver", "DriverBatch", "NoiseConfig",
    "FbmConfig", "EnsemblePair", "solve_rough", "solve_ode", "solve_eps_vs_limit",
    "solve_eps_ensemble", "solve_limit_ensemble", "zero_sigma", "constant_sigma",
    "scalar_linear", "heisenberg", "rotation", "PRESETS", "self_convergence_order",
]
