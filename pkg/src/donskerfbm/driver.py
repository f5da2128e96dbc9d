"""The approximating driver X^eps and its Levy area.

``X^{i,eps}(t) = int_0^t (t + eps - r)^(H - 1/2) theta^{i,eps}(r) dr`` is
evaluated block by block from the closed-form antiderivative of the kernel,
so values and derivatives carry rounding error only. The Levy area

    A_st(i, j) = int_s^t (X^j_u - X^j_s) dX^i_u

(integrand index j, differential index i, as in the defining formula) is a
composite Gauss-Legendre sum over panels split at every block edge; inside
a block the integrand is smooth.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DomainError
from .noise import RandomWalkNoise
from .quadrature import panel_nodes, split_panels

ITERATED = "iterated"
TENSOR = "tensor"
_ROUNDOFF = 256 * np.finfo(float).eps


@dataclass(frozen=True)
class HurstParam:
    H: float
    classical: bool = False

    def __post_init__(self):
        if self.classical:
            if self.H != 0.5:
                raise DomainError(f"classical mode requires H = 1/2, got H={self.H}")
        elif not 1.0 / 3.0 < self.H < 0.5:
            raise DomainError(
                f"H={self.H} outside (1/3, 1/2); H = 1/2 needs the classical flag"
            )

    @classmethod
    def coerce(cls, H):
        if isinstance(H, cls):
            return H
        return cls(float(H), classical=float(H) == 0.5)


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8
    tol: float = 1e-9
    refine: bool = True


@dataclass(frozen=True)
class AreaMatrix:
    s: float
    t: float
    values: np.ndarray
    error: float = 0.0
    convention: str = ITERATED

    def transpose(self):
        other = TENSOR if self.convention == ITERATED else ITERATED
        return AreaMatrix(self.s, self.t, self.values.T.copy(), self.error, other)


@dataclass(frozen=True)
class ChenDefect:
    values: np.ndarray
    error_budget: float

    @property
    def max_norm(self):
        return float(np.max(np.abs(self.values)))


class DriverPath:
    """X^eps for one noise realization; immutable and safe to share."""

    def __init__(self, noise, H):
        if not isinstance(noise, RandomWalkNoise):
            raise TypeError("noise must be a RandomWalkNoise")
        self.noise = noise
        self.hurst = HurstParam.coerce(H)
        self.d = noise.dims
        self._eta = np.stack([noise.eta(i) for i in range(1, self.d + 1)], axis=1)

    @property
    def H(self):
        return self.hurst.H

    @property
    def horizon(self):
        return self.noise.horizon

    def breakpoints(self):
        """Block edges in [0, T]: the points where the derivative jumps."""
        return np.unique(self.noise.edges)

    def _check_times(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise DomainError(f"times must lie in [0, {self.horizon}]")
        return t

    def values(self, t):
        """X^eps at times t, shape (len(t), d)."""
        t = self._check_times(np.atleast_1d(t))
        return eval_weights(self.noise, self.H, t) @ self._eta

    def velocities(self, t, side="right"):
        """dX^eps/dt at times t, shape (len(t), d); one-sided at block edges."""
        t = self._check_times(np.atleast_1d(t))
        return deriv_weights(self.noise, self.H, t, side=side) @ self._eta

    def increment(self, i, s, t):
        """X^i_t - X^i_s from the restructured block sum (not a difference of evals)."""
        self._check_times([s, t])
        w = increment_weights(self.noise, self.H, s, t)
        return float(w @ self._eta[:, i - 1])


def _kernel_cols(noise, tmax):
    """Number of leading blocks that start before tmax."""
    return max(1, int(np.searchsorted(noise.edges[:-1], tmax, side="left")))


def eval_weights(noise, H, t, ncols=None):
    """Matrix W with X^i(t) = W @ eta^i; blocks past ``ncols`` are dropped."""
    t = np.asarray(t, dtype=float)
    e = noise.edges
    nb = noise.n_blocks if ncols is None else ncols
    eps = noise.epsilon
    p = H + 0.5
    a = np.minimum(e[None, :nb], t[:, None])
    b = np.minimum(e[None, 1:nb + 1], t[:, None])
    base = t[:, None] + eps
    W = ((base - a) ** p - (base - b) ** p) * (noise.scale / p)
    full = np.zeros((len(t), noise.n_blocks))
    full[:, :nb] = W
    return full


def _current_block(noise, t, side):
    e = noise.edges
    if side == "right":
        k = np.searchsorted(e, t, side="right") - 1
    elif side == "left":
        k = np.searchsorted(e, t, side="left") - 1
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    return np.clip(k, 0, noise.n_blocks - 1)


def deriv_weights(noise, H, t, side="right", blocks=None):
    """Matrix D with dX^i/dt(t) = D @ eta^i.

    ``blocks`` (0-based) overrides the block whose eta multiplies the
    boundary term; by default it is the block containing t on ``side``.
    """
    t = np.asarray(t, dtype=float)
    e = noise.edges
    nb = noise.n_blocks
    eps = noise.epsilon
    q = H - 0.5
    kc = _current_block(noise, t, side) if blocks is None else np.asarray(blocks)
    D = np.zeros((len(t), nb))
    if q != 0.0:
        a = np.minimum(e[None, :nb], t[:, None])
        b = np.minimum(e[None, 1:nb + 1], t[:, None])
        base = t[:, None] + eps
        D = ((base - a) ** q - (base - b) ** q) * noise.scale
        # blocks after the current one have a = b = t and contribute zero
    D[np.arange(len(t)), kc] += noise.scale * eps ** q
    return D


def increment_weights(noise, H, s, t):
    """Weights of X_t - X_s written as one block sum over [0, t]."""
    if s > t:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    e = noise.edges
    nb = noise.n_blocks
    eps = noise.epsilon
    p = H + 0.5
    lo = e[:nb]
    # part over [0, s]: kernel difference integrated exactly
    a1 = np.minimum(lo, s)
    b1 = np.minimum(e[1:], s)
    w = ((t + eps - a1) ** p - (t + eps - b1) ** p) - ((s + eps - a1) ** p - (s + eps - b1) ** p)
    # part over [s, t]
    a2 = np.clip(lo, s, t)
    b2 = np.clip(e[1:], s, t)
    w = w + ((t + eps - a2) ** p - (t + eps - b2) ** p)
    return w * (noise.scale / p)


def _panels(noise, s, t):
    e = noise.edges
    inner = e[(e > s) & (e < t)]
    pts = np.unique(np.concatenate(([s], inner, [t])))
    return pts[:-1], pts[1:]


def _area_from_nodes(path, s, nodes, weights, ncols):
    X = eval_weights(path.noise, path.H, nodes, ncols) @ path._eta
    V = deriv_weights(path.noise, path.H, nodes) @ path._eta
    Xs = path.values([s])[0]
    G = weights[:, None] * V
    # A[i, j] = sum_q w_q V_q^i (X_q^j - X_s^j)
    A = G.T @ (X - Xs[None, :])
    scale = np.abs(G).T @ np.abs(X - Xs[None, :])
    return A, scale


def eval(path, i, t):
    """X^{i,eps}(t)."""
    if not 1 <= i <= path.d:
        raise DomainError(f"component {i} outside 1..{path.d}")
    return float(path.values([t])[0, i - 1])


def deriv(path, i, t, side="right"):
    """dX^{i,eps}/dt at t (one-sided value at block edges)."""
    if not 1 <= i <= path.d:
        raise DomainError(f"component {i} outside 1..{path.d}")
    return float(path.velocities([t], side=side)[0, i - 1])


def levy_area(path, s, t, quad=QuadratureSpec(), convention=ITERATED):
    """Levy area over [s, t] with an a-posteriori error estimate.

    The returned value is the refined (panels halved) sum; the error is its
    distance to the unrefined sum plus a rounding allowance.
    """
    if s > t:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    path._check_times([s, t])
    if convention not in (ITERATED, TENSOR):
        raise DomainError(f"unknown area convention {convention!r}")
    d = path.d
    if s == t:
        return AreaMatrix(s, t, np.zeros((d, d)), 0.0, convention)
    ncols = _kernel_cols(path.noise, t)
    lo, hi = _panels(path.noise, s, t)
    flo, fhi = split_panels(lo, hi, 2) if quad.refine else (lo, hi)
    nodes, weights, _ = panel_nodes(flo, fhi, quad.order)
    A, scale = _area_from_nodes(path, s, nodes, weights, ncols)
    err = float(_ROUNDOFF * scale.max())
    if quad.refine:
        cn, cw, _ = panel_nodes(lo, hi, quad.order)
        Ac, _ = _area_from_nodes(path, s, cn, cw, ncols)
        err += float(np.max(np.abs(A - Ac)))
        if err > quad.tol:
            raise AccuracyError(f"Levy area error estimate {err:.3e} above tol {quad.tol:.1e}", err)
    if convention == TENSOR:
        A = A.T
    return AreaMatrix(s, t, A, err, convention)


def chen_defect(path, s, u, t, quad=QuadratureSpec(), convention=ITERATED):
    """A_st - A_su - A_ut minus the increment product; zero up to quadrature error."""
    if not s <= u <= t:
        raise DomainError(f"need s <= u <= t, got {s}, {u}, {t}")
    a_st = levy_area(path, s, t, quad, convention)
    a_su = levy_area(path, s, u, quad, convention)
    a_ut = levy_area(path, u, t, quad, convention)
    X = path.values([s, u, t])
    d_su, d_ut = X[1] - X[0], X[2] - X[1]
    if convention == ITERATED:
        prod = np.outer(d_ut, d_su)  # (i, j) -> dX^j_su dX^i_ut
    else:
        prod = np.outer(d_su, d_ut)
    D = a_st.values - a_su.values - a_ut.values - prod
    budget = a_st.error + a_su.error + a_ut.error
    # rounding in the three increments entering the product
    budget += float(_ROUNDOFF * np.max(np.abs(X)) ** 2)
    return ChenDefect(D, budget)


def riemann_area(path, s, t, n_points=10**6, convention=ITERATED, chunk=200_000):
    """Trapezoidal Riemann-Stieltjes sum of the Levy area on a uniform grid.

    Independent of the quadrature path: only point values of X are used.
    """
    u = np.linspace(s, t, n_points + 1)
    d = path.d
    A = np.zeros((d, d))
    Xs = path.values([s])[0]
    prev = None
    for lo in range(0, len(u), chunk):
        seg = u[lo:lo + chunk + 1]
        X = path.values(seg) - Xs[None, :]
        mid = 0.5 * (X[1:] + X[:-1])
        dX = X[1:] - X[:-1]
        A += dX.T @ mid  # (i, j) -> sum dX^i * mean(X^j)
        prev = seg[-1]
    assert prev == t
    return A if convention == ITERATED else A.T


@dataclass
class DriverEnsemble:
    """Observables of many realizations sharing one noise template."""

    times: np.ndarray
    pairs: list
    values: np.ndarray  # (n_samples, n_times, d)
    areas: np.ndarray  # (n_samples, n_pairs, d, d)
    sample_ids: np.ndarray = field(default=None)


def ensemble_observables(noise, H, sample0, n_samples, times=(1.0,), pairs=((0.0, 1.0),),
                         order=8, chunk=1000, convention=ITERATED):
    """X^eps at ``times`` and Levy areas over ``pairs`` for a batch of realizations.

    Same refined quadrature as :func:`levy_area`, vectorised across samples.
    """
    hurst = HurstParam.coerce(H)
    times = np.asarray(times, dtype=float)
    d = noise.dims
    W_t = eval_weights(noise, hurst.H, times)
    pair_rules = []
    for s, t in pairs:
        if s > t:
            raise DomainError(f"need s <= t in pair ({s}, {t})")
        if s == t:
            pair_rules.append(None)
            continue
        lo, hi = _panels(noise, s, t)
        flo, fhi = split_panels(lo, hi, 2)
        nodes, weights, _ = panel_nodes(flo, fhi, order)
        ncols = _kernel_cols(noise, t)
        pair_rules.append((eval_weights(noise, hurst.H, nodes, ncols),
                           deriv_weights(noise, hurst.H, nodes) * weights[:, None],
                           eval_weights(noise, hurst.H, [s])[0]))
    vals = np.empty((n_samples, len(times), d))
    areas = np.zeros((n_samples, len(pairs), d, d))
    for lo_s in range(0, n_samples, chunk):
        m = min(chunk, n_samples - lo_s)
        etas = [noise.eta_ensemble(i, sample0 + lo_s, m) for i in range(1, d + 1)]
        for i, eta in enumerate(etas):
            vals[lo_s:lo_s + m, :, i] = eta @ W_t.T
        for p, rule in enumerate(pair_rules):
            if rule is None:
                continue
            We, Dw, ws = rule
            Xq = [eta @ We.T - (eta @ ws)[:, None] for eta in etas]
            Vq = [eta @ Dw.T for eta in etas]
            for i in range(d):
                for j in range(d):
                    areas[lo_s:lo_s + m, p, i, j] = np.einsum("sq,sq->s", Vq[i], Xq[j])
    if convention == TENSOR:
        areas = areas.transpose(0, 1, 3, 2)
    ids = np.arange(sample0, sample0 + n_samples)
    return DriverEnsemble(times, list(pairs), vals, areas, ids)
