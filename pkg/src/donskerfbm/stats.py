"""Hoelder norms, two-sample statistics and the eps-sweep convergence studies."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import cdist

from . import fbm as fbm_mod
from . import kernels, solver
from .driver import HurstParam, ensemble_observables, eval_weights
from .errors import DomainError
from .noise import NoiseLaw, RandomWalkNoise, STREAM_PERMUTATION, stream_key

N_PERMUTATIONS = 200
PERMUTATION_CAP = 2000  # per side


@dataclass(frozen=True)
class HolderEstimate:
    mu: float
    norm: float
    depth: int
    mode: str = "dyadic"
    argmax: tuple = None


def _check_mu(mu):
    if not 0.0 < mu < 1.0 and mu != 1.0:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")


def _depth(n_points):
    N = n_points - 1
    depth = int(round(math.log2(N))) if N > 0 else -1
    if N < 16 or 2 ** depth != N:
        raise DomainError(f"need a dyadic grid of depth >= 4, got {n_points} points")
    return depth


def holder_norm(values, mu, mode="dyadic", horizon=1.0):
    """sup |f_t - f_s| / |t - s|^mu over pairs of a uniform dyadic grid on [0, horizon].

    ``mode="dyadic"`` restricts to lags 2^j steps (every start point);
    ``mode="full"`` takes all pairs. Vector paths use the Euclidean norm.
    mu = 1 is accepted as the Lipschitz constant.
    """
    _check_mu(mu)
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    depth = _depth(len(v))
    N = len(v) - 1
    dt = horizon / N
    if mode == "full":
        times = np.arange(N + 1) * dt
        rows = kernels.holder_full_rowmax(np.ascontiguousarray(v), times, float(mu))
        i = int(np.argmax(rows))
        return HolderEstimate(mu, float(rows[i]), depth, mode, (i, None))
    if mode != "dyadic":
        raise DomainError(f"unknown mode {mode!r}")
    best, arg = 0.0, None
    for j in range(depth + 1):
        lag = 2 ** j
        d = v[lag:] - v[:-lag]
        r = np.sqrt((d * d).sum(axis=1)) / (lag * dt) ** mu
        k = int(np.argmax(r))
        if r[k] > best:
            best, arg = float(r[k]), (k, k + lag)
    return HolderEstimate(mu, best, depth, mode, arg)


def area_from_cumulative(values, cum_areas, s, t):
    """A_st from A_0. on a grid, iterated-integral convention: A_0t - A_0s - X_s^j (X_t - X_s)^i."""
    v = np.asarray(values)
    C = np.asarray(cum_areas)
    inc = v[t] - v[s]
    return C[t] - C[s] - inc[..., :, None] * v[s][..., None, :]


def holder_norm_area(values, cum_areas, mu, mode="dyadic", horizon=1.0):
    """Two-parameter Hoelder norm sup |A_st| / |t - s|^(2 mu) (Frobenius norm)."""
    _check_mu(mu)
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    C = np.asarray(cum_areas, dtype=float)
    depth = _depth(len(v))
    N = len(v) - 1
    dt = horizon / N
    lags = [2 ** j for j in range(depth + 1)] if mode == "dyadic" else range(1, N + 1)
    if mode not in ("dyadic", "full"):
        raise DomainError(f"unknown mode {mode!r}")
    best, arg = 0.0, None
    for lag in lags:
        s = np.arange(0, N + 1 - lag)
        A = area_from_cumulative(v, C, s, s + lag)
        r = np.sqrt((A * A).sum(axis=(1, 2))) / (lag * dt) ** (2 * mu)
        k = int(np.argmax(r))
        if r[k] > best:
            best, arg = float(r[k]), (int(s[k]), int(s[k] + lag))
    return HolderEstimate(mu, best, depth, mode + "-area", arg)


def cumulative_left_areas(values):
    """A_{0 t_m} (iterated-integral convention) by left-point sums for paths (..., N + 1, d), areas (..., N + 1, d, d)."""
    v = np.asarray(values, dtype=float)
    inc = np.diff(v, axis=-2)
    seg = v[..., :-1, :] - v[..., :1, :]
    steps = inc[..., :, :, None] * seg[..., :, None, :]
    C = np.concatenate([np.zeros_like(steps[..., :1, :, :]), np.cumsum(steps, axis=-3)], axis=-3)
    idx = np.arange(v.shape[-1])
    delta = v - v[..., :1, :]
    C[..., idx, idx] = 0.5 * delta * delta
    return C


def driver_paths(noise, H, depth, sample0, n_samples):
    """X^eps of realizations on the uniform dyadic grid of the given depth: (S, 2^depth + 1, d)."""
    grid = np.linspace(0.0, noise.horizon, 2 ** depth + 1)
    W = eval_weights(noise, HurstParam.coerce(H).H, grid)
    return np.stack([noise.eta_ensemble(i, sample0, n_samples) @ W.T
                     for i in range(1, noise.dims + 1)], axis=-1)


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def energy_distance(x, y):
    """V-statistic 2 E|X - Y| - E|X - X'| - E|Y - Y'| (Euclidean), exact zero for identical inputs."""
    x, y = _as_2d(x), _as_2d(y)
    if x.shape[1] != y.shape[1]:
        raise DomainError("ensembles have different observable dimensions")
    exy = math.fsum(kernels.pairwise_dist_rowsums(x, y)) / (len(x) * len(y))
    exx = math.fsum(kernels.pairwise_dist_rowsums(x, x)) / (len(x) * len(x))
    eyy = math.fsum(kernels.pairwise_dist_rowsums(y, y)) / (len(y) * len(y))
    return max(0.0, 2.0 * exy - exx - eyy)


def permutation_order(seed, index, n):
    base = stream_key(seed, 0, STREAM_PERMUTATION)
    keys = kernels.keyed_uint64(base, int(index), 1, 0, int(n))[0]
    return np.argsort(keys, kind="stable")


def energy_test(x, y, n_permutations=N_PERMUTATIONS, cap=PERMUTATION_CAP, seed=0):
    """Energy statistic on the full ensembles and a permutation p-value on the first ``cap`` per side."""
    x, y = _as_2d(x), _as_2d(y)
    stat = energy_distance(x, y)
    xs, ys = x[:cap], y[:cap]
    n1, n2 = len(xs), len(ys)
    Z = np.concatenate([xs, ys])
    D = cdist(Z, Z)
    n = n1 + n2

    def e_stat(lab):
        u = lab.astype(float)
        w = 1.0 - u
        Du = D @ u
        Dw = D @ w
        return 2.0 * (u @ Dw) / (n1 * n2) - (u @ Du) / n1 ** 2 - (w @ Dw) / n2 ** 2

    lab0 = np.zeros(n, dtype=bool)
    lab0[:n1] = True
    obs = e_stat(lab0)
    hits = 0
    for p in range(n_permutations):
        lab = lab0[permutation_order(seed, p, n)]
        if e_stat(lab) >= obs - 1e-15 * abs(obs):
            hits += 1
    return stat, (1 + hits) / (1 + n_permutations)


def ks_normal(x, variance, mean=0.0):
    r = sps.kstest(np.asarray(x, float), sps.norm(mean, math.sqrt(variance)).cdf)
    return float(r.statistic), float(r.pvalue)


def ks_two_sample(x, y):
    r = sps.ks_2samp(np.asarray(x, float), np.asarray(y, float))
    return float(r.statistic), float(r.pvalue)


def strictly_decreasing(series):
    s = np.asarray(series, dtype=float)
    return bool(np.all(np.diff(s) < 0))


def decrease_steps(series):
    return int(np.sum(np.diff(np.asarray(series, float)) < 0))


def majority(flags, needed):
    return int(sum(bool(f) for f in flags)) >= needed


@dataclass
class ConvergenceStudy:
    eps_grid: tuple
    observables: list
    ensembles: dict = field(default_factory=dict)  # eps -> (S, k)
    reference: np.ndarray = None
    manifest: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # dicts with eps, statistic, value, p, seed

    def add(self, eps, statistic, value, p=None, seed=None):
        self.rows.append({"eps": float(eps), "statistic": statistic, "value": float(value),
                          "p": None if p is None else float(p),
                          "seed": self.manifest.get("seed") if seed is None else seed})

    def series(self, statistic):
        return [r["value"] for e in self.eps_grid for r in self.rows
                if r["eps"] == float(e) and r["statistic"] == statistic]

    def decreasing(self, statistic):
        return strictly_decreasing(self.series(statistic))

    def to_dict(self):
        stats_names = sorted({r["statistic"] for r in self.rows})
        return {
            "eps_grid": [float(e) for e in self.eps_grid],
            "observables": list(self.observables),
            "manifest": self.manifest,
            "rows": self.rows,
            "series": {s: self.series(s) for s in stats_names},
            "decreasing": {s: self.decreasing(s) for s in stats_names},
        }


def _flatten_observables(values, areas):
    """(S, n_t, d) values and (S, n_p, d, d) areas -> (S, k), names follow the same order."""
    S, n_t, d = values.shape
    cols = [values.reshape(S, n_t * d)]
    if areas is not None and areas.shape[1]:
        cols.append(areas.reshape(S, -1))
    return np.concatenate(cols, axis=1)


def observable_names(times, pairs, d):
    names = [f"X{i + 1}({t:g})" for t in times for i in range(d)]
    names += [f"A{i + 1}{j + 1}({s:g},{t:g})" for s, t in pairs for i in range(d) for j in range(d)]
    return names


def fdd_study(H, eps_grid, n_samples, times=(1.0,), pairs=(), d=1, law=None, seed=1,
              ref_seed=2, ref_grid=4096, sample0=0):
    """Ensembles of (X^eps_t, X^{2,eps}_{st}) per eps and the fBm reference ensemble."""
    if seed == ref_seed:
        raise DomainError("reference ensemble needs its own seed")
    law = law or NoiseLaw.rademacher()
    hurst = HurstParam.coerce(H)
    study = ConvergenceStudy(tuple(eps_grid), observable_names(times, pairs, d),
                             manifest={"H": hurst.H, "n_samples": n_samples, "seed": seed,
                                       "ref_seed": ref_seed, "ref_grid": ref_grid, "d": d,
                                       "law": law.to_dict(), "times": list(times),
                                       "pairs": [list(p) for p in pairs]})
    for eps in eps_grid:
        noise = RandomWalkNoise(eps, law, d, seed)
        ens = ensemble_observables(noise, hurst, sample0, n_samples, times, pairs)
        study.ensembles[float(eps)] = _flatten_observables(ens.values, ens.areas)
    grid = fbm_mod.uniform_grid(ref_grid)
    idx = [fbm_mod.grid_index(grid, t) for t in times]
    fens = fbm_mod.simulate_fbm_ensemble(hurst, grid, d, ref_seed, sample0, n_samples,
                                         keep_increments=False)
    areas = fbm_mod.ensemble_areas(fens.values, grid, pairs) if pairs else None
    study.reference = _flatten_observables(fens.values[:, idx, :], areas)
    return study


def fdd_test(study, times=None, pairs=None, n_permutations=N_PERMUTATIONS, cap=PERMUTATION_CAP):
    """Energy distance with permutation p-value plus per-coordinate KS, for each eps."""
    if times is not None or pairs is not None:
        d = study.manifest.get("d", 1)
        names = observable_names(times or (), pairs or (), d)
        if names != study.observables:
            raise DomainError("requested observables do not match the study")
    ref = study.reference
    for eps in study.eps_grid:
        x = study.ensembles[float(eps)]
        if x.shape[1] != ref.shape[1]:
            raise DomainError("ensemble and reference observables differ")
        e, p = energy_test(x, ref, n_permutations, cap, seed=study.manifest.get("seed", 0))
        study.add(eps, "energy", e, p)
        for c, name in enumerate(study.observables):
            ks, pk = ks_two_sample(x[:, c], ref[:, c])
            study.add(eps, f"ks:{name}", ks, pk)
    return study


def solution_law_test(vf, noise_cfg, fbm_cfg, eps_grid, times, n_samples, permutations=True,
                      reference=None, sample0=0, cache=None):
    """Per-eps energy distance of (y^eps_t1, ...) to the limit ensemble.

    For the scalar linear preset the closed-form marginal is also checked:
    log y^eps_1 - log a against Normal(0, 1 / (2H)). ``cache`` (with
    ``get(key)`` and ``put(key, array)``) lets an interrupted study reuse
    finished ensembles; keys are ``"reference"`` and the eps values.
    """
    times = tuple(float(t) for t in times)
    study = ConvergenceStudy(tuple(eps_grid), [f"y{k + 1}({t:g})" for t in times for k in range(vf.n)],
                             manifest={"vf": vf.name, "H": fbm_cfg.H, "n_samples": n_samples,
                                       "seed": noise_cfg.seed, "ref_seed": fbm_cfg.seed,
                                       "fbm_grid": fbm_cfg.n_grid, "ratio": fbm_cfg.ratio,
                                       "substeps": noise_cfg.substeps, "law": noise_cfg.law.to_dict(),
                                       "times": list(times)})
    ref = reference
    if ref is None and cache is not None:
        ref = cache.get("reference")
    if ref is None:
        ref, failed = solver.solve_limit_ensemble(vf, fbm_cfg, times, n_samples, sample0)
        solver._check_failures(failed, "limit ensemble")
        if cache is not None:
            cache.put("reference", ref)
    study.reference = ref.reshape(len(ref), -1)
    for eps in eps_grid:
        y = cache.get(float(eps)) if cache is not None else None
        if y is None:
            cfg = solver.NoiseConfig(eps, noise_cfg.law, noise_cfg.seed, noise_cfg.substeps)
            y, failed = solver.solve_eps_ensemble(vf, cfg, fbm_cfg.H, times, n_samples, sample0)
            solver._check_failures(failed, f"eps={eps} ensemble")
            if cache is not None:
                cache.put(float(eps), y)
        flat = y.reshape(n_samples, -1)
        study.ensembles[float(eps)] = flat
        if permutations:
            e, p = energy_test(flat, study.reference, seed=noise_cfg.seed)
        else:
            e, p = energy_distance(flat, study.reference), None
        study.add(eps, "energy", e, p)
        if vf.name == "scalar-linear" and 1.0 in times:
            a = vf.a[0]
            k = times.index(1.0)
            ks, pk = ks_normal(np.log(y[:, k, 0] / a), 1.0 / (2 * HurstParam.coerce(fbm_cfg.H).H))
            study.add(eps, "ks_lognormal", ks, pk)
    return study
