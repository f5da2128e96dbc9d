"""Grid simulation of Liouville fBm and its Levy area.

``B_t = int_0^t (t - r)^(H - 1/2) dW_r`` is discretised with the kernel
integrated exactly over each grid cell:

    B_{t_m} = sum_{j<m} [int_{t_j}^{t_{j+1}} (t_m - r)^(H-1/2) dr] / sqrt(dt_j) * Z_j

which avoids the singularity at r = t_m. On uniform grids the weights are
Toeplitz and paths are produced by FFT convolution.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from . import kernels
from .driver import ITERATED, TENSOR, HurstParam
from .errors import AccuracyError, DomainError
from .noise import STREAM_WIENER, stream_key


@dataclass(frozen=True)
class FbmGridSample:
    grid: np.ndarray
    values: np.ndarray  # (N + 1, d)
    wiener_increments: np.ndarray  # (N, d)
    H: float
    seed: int
    sample: int = 0
    exact_variance: np.ndarray = None  # variance of the discretised B at each grid time

    @property
    def d(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class FbmAreaSample:
    pairs: list
    values: np.ndarray  # (n_pairs, d, d)
    convention: str = ITERATED


def check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise DomainError("grid needs at least two points")
    if grid[0] != 0.0:
        raise DomainError("grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    return grid


def uniform_grid(n, horizon=1.0):
    return np.linspace(0.0, horizon, n + 1)


def _is_uniform(grid):
    dt = np.diff(grid)
    return np.allclose(dt, dt[0], rtol=1e-12, atol=0.0)


def cell_weights(H, grid, rows=None):
    """c[m, j] for the requested grid rows m (default all), shape (len(rows), N)."""
    grid = check_grid(grid)
    p = H + 0.5
    rows = np.arange(len(grid)) if rows is None else np.asarray(rows)
    tm = grid[rows][:, None]
    tj = grid[None, :-1]
    tj1 = grid[None, 1:]
    a = np.clip(tm - tj, 0.0, None)
    b = np.clip(tm - tj1, 0.0, None)
    return (a ** p - b ** p) / p / np.sqrt(np.diff(grid))[None, :]


def toeplitz_weights(H, n, dt):
    """g[k - 1] = weight of the cell k steps back, k = 1..n, on a uniform grid."""
    p = H + 0.5
    k = np.arange(1, n + 1, dtype=float)
    return dt ** p * (k ** p - (k - 1) ** p) / p / np.sqrt(dt)


def exact_variance(H, grid):
    """Variance of the discretised B at each grid time."""
    grid = check_grid(grid)
    if _is_uniform(grid):
        g = toeplitz_weights(H, len(grid) - 1, grid[1] - grid[0])
        return np.concatenate(([0.0], np.cumsum(g * g)))
    c = cell_weights(H, grid)
    return (c * c).sum(axis=1)


def wiener_normals(seed, component, sample0, n_samples, n_cells):
    base = stream_key(seed, component, STREAM_WIENER)
    return kernels.normal_matrix(base, int(sample0), int(n_samples), int(n_cells))


def _paths_from_normals(H, grid, Z):
    """B on the grid from standard normals Z of shape (S, N)."""
    S, N = Z.shape
    out = np.zeros((S, N + 1))
    if _is_uniform(grid):
        g = toeplitz_weights(H, N, grid[1] - grid[0])
        out[:, 1:] = signal.fftconvolve(Z, g[None, :], axes=1)[:, :N]
    else:
        out[:, 1:] = Z @ cell_weights(H, grid)[1:].T
    return out


def simulate_fbm(H, grid, d=1, seed=0, sample=0):
    """One realization of d independent Liouville fBm components on ``grid``."""
    hurst = HurstParam.coerce(H)
    grid = check_grid(grid)
    ens = simulate_fbm_ensemble(hurst, grid, d, seed, sample, 1)
    return FbmGridSample(grid, ens.values[0], ens.wiener_increments[0], hurst.H, seed,
                         sample, ens.exact_variance)


@dataclass(frozen=True)
class FbmEnsemble:
    grid: np.ndarray
    values: np.ndarray  # (S, N + 1, d), or (S, len(at), d) when ``at`` was given
    wiener_increments: np.ndarray  # (S, N, d) or None
    H: float
    seed: int
    sample0: int
    exact_variance: np.ndarray
    at: np.ndarray = None


def simulate_fbm_ensemble(H, grid, d, seed, sample0, n_samples, at=None, keep_increments=True):
    """Batch of realizations sample0 .. sample0 + n_samples - 1.

    With ``at`` (grid indices) only those grid values are formed, by a dense
    product with the matching kernel rows.
    """
    hurst = HurstParam.coerce(H)
    grid = check_grid(grid)
    N = len(grid) - 1
    var = exact_variance(hurst.H, grid)
    dt = np.diff(grid)
    if at is not None:
        at = np.asarray(at, dtype=int)
        rows = cell_weights(hurst.H, grid, at)
        vals = np.empty((n_samples, len(at), d))
    else:
        vals = np.empty((n_samples, N + 1, d))
    incs = np.empty((n_samples, N, d)) if keep_increments else None
    for i in range(d):
        Z = wiener_normals(seed, i + 1, sample0, n_samples, N)
        if keep_increments:
            incs[:, :, i] = Z * np.sqrt(dt)[None, :]
        if at is not None:
            vals[:, :, i] = Z @ rows.T
        else:
            vals[:, :, i] = _paths_from_normals(hurst.H, grid, Z)
    return FbmEnsemble(grid, vals, incs, hurst.H, seed, sample0, var, at)


def grid_index(grid, t):
    k = int(np.searchsorted(grid, t))
    k = min(max(k, 0), len(grid) - 1)
    for c in (k - 1, k, k + 1):
        if 0 <= c < len(grid) and abs(grid[c] - t) <= 1e-12 * max(1.0, abs(t)):
            return c
    raise DomainError(f"time {t} is not a grid point")


def _area_from_paths(values, idx_pairs):
    """Left-point areas under the iterated-integral convention for paths (S, N + 1, d)."""
    S, _, d = values.shape
    dB = np.diff(values, axis=1)
    out = np.zeros((S, len(idx_pairs), d, d))
    for p, (a, b) in enumerate(idx_pairs):
        if a == b:
            continue
        seg = values[:, a:b, :] - values[:, a:a + 1, :]  # B^j_k - B^j_a, k = a..b-1
        inc = dB[:, a:b, :]
        # (i, j) -> sum_k inc^i_k seg^j_k
        A = np.einsum("ski,skj->sij", inc, seg)
        delta = values[:, b, :] - values[:, a, :]
        diag = 0.5 * delta * delta
        idx = np.arange(d)
        A[:, idx, idx] = diag
        out[:, p] = A
    return out


def simulate_area(sample, pairs, convention=ITERATED):
    """Levy areas of a grid sample over grid-aligned (s, t) pairs.

    Off-diagonal entries are left-point (Ito) sums; the diagonal is set to
    half the squared increment.
    """
    if convention not in (ITERATED, TENSOR):
        raise DomainError(f"unknown area convention {convention!r}")
    idx = []
    for s, t in pairs:
        if s > t:
            raise DomainError(f"need s <= t in pair ({s}, {t})")
        idx.append((grid_index(sample.grid, s), grid_index(sample.grid, t)))
    A = _area_from_paths(sample.values[None], idx)[0]
    if convention == TENSOR:
        A = A.transpose(0, 2, 1)
    return FbmAreaSample(list(pairs), A, convention)


def ensemble_areas(values, grid, pairs, convention=ITERATED):
    """Areas for a batch of paths (S, N + 1, d); returns (S, n_pairs, d, d)."""
    idx = [(grid_index(grid, s), grid_index(grid, t)) for s, t in pairs]
    A = _area_from_paths(values, idx)
    return A.transpose(0, 1, 3, 2) if convention == TENSOR else A


def step_areas(values):
    """Per-cell areas on consecutive grid points, shape (S, N, d, d).

    Left-point sums over a single cell vanish off the diagonal, so only the
    diagonal 0.5 * dB^2 survives.
    """
    dB = np.diff(values, axis=1)
    S, N, d = dB.shape
    out = np.zeros((S, N, d, d))
    idx = np.arange(d)
    out[:, :, idx, idx] = 0.5 * dB * dB
    return out


def coarse_step_areas(values, ratio):
    """Areas over coarse steps of ``ratio`` fine cells, from fine left-point sums.

    Returns (increments (S, M, d), areas (S, M, d, d)) on the coarse grid.
    """
    S, n1, d = values.shape
    N = n1 - 1
    if N % ratio:
        raise DomainError(f"grid of {N} cells is not divisible by {ratio}")
    M = N // ratio
    fine = values[:, :M * ratio, :].reshape(S, M, ratio, d)
    start = values[:, 0:N:ratio, :]
    end = values[:, ratio::ratio, :]
    nxt = np.concatenate([fine[:, :, 1:, :], end[:, :, None, :]], axis=2)
    inc = nxt - fine
    seg = fine - start[:, :, None, :]
    A = np.einsum("smki,smkj->smij", inc, seg)
    delta = end - start
    idx = np.arange(d)
    A[:, :, idx, idx] = 0.5 * delta * delta
    return delta, A


def covariance(H, s, t, rtol=1e-10):
    """E[B_s B_t] = int_0^{s ^ t} (s - r)^(H-1/2) (t - r)^(H-1/2) dr."""
    hurst = HurstParam.coerce(H)
    if s < 0 or t < 0:
        raise DomainError("times must be non-negative")
    lo, hi = min(s, t), max(s, t)
    if lo == 0.0:
        return 0.0
    q = hurst.H - 0.5
    if q == 0.0:
        return lo
    if hi == lo:
        val, err = integrate.quad(lambda r: 1.0, 0.0, lo, weight="alg", wvar=(0.0, 2 * q),
                                  epsabs=0.0, epsrel=rtol, limit=200)
    else:
        val, err = integrate.quad(lambda r: (hi - r) ** q, 0.0, lo, weight="alg", wvar=(0.0, q),
                                  epsabs=0.0, epsrel=rtol, limit=200)
    if err > 10 * rtol * abs(val):
        raise AccuracyError(f"covariance quadrature error {err:.2e} too large", err)
    return val


def covariance_matrix(H, times):
    times = np.asarray(times, dtype=float)
    n = len(times)
    C = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            C[a, b] = C[b, a] = covariance(H, times[a], times[b])
    return C


def cholesky_marginals(H, times, n_samples, seed=0, component=1):
    """Exact-law samples of B at ``times`` (all positive) via Cholesky; no areas."""
    C = covariance_matrix(H, times)
    L = np.linalg.cholesky(C)
    Z = wiener_normals(seed ^ 0x5A5A, component, 0, n_samples, len(times))
    return Z @ L.T
