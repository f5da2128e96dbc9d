"""Bounded i.i.d. noise and the rescaled step process built from it.

The step process on block k is ``eta_k / eps``. Blocks have width
``eps**2`` and block k covers ``[(k - 1) eps^2, k eps^2)``; ``eta_k^i`` is
a pure function of ``(seed, sample, component, k)`` through a counter-based
hash, so any block of any realization can be drawn without replaying a
stream.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from . import kernels
from .errors import DomainError
from .quadrature import integrate_panels

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

#: stream tags keep the noise, Wiener and permutation draws disjoint
STREAM_ETA = 1
STREAM_WIENER = 2
STREAM_PERMUTATION = 3

_LAW_CODES = {"rademacher": 0, "scaled_uniform": 1, "discrete": 2}
_MOMENT_TOL = 1e-12


def mix64(z):
    """SplitMix64 finaliser on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, component, stream):
    """64-bit base key for one (seed, component, stream) family."""
    k = mix64((seed & MASK64) + _GAMMA)
    return mix64(k ^ mix64((stream << 40) + component + 1))


@dataclass(frozen=True)
class NoiseLaw:
    """Centred, unit-variance, bounded law of a single eta."""

    kind: str = "rademacher"
    atoms: tuple = ()
    bound: float = field(default=None)

    def __post_init__(self):
        if self.kind not in _LAW_CODES:
            raise DomainError(f"unknown noise law {self.kind!r}")
        if self.kind == "rademacher":
            atoms = ((-1.0, 0.5), (1.0, 0.5))
            bound = 1.0
        elif self.kind == "scaled_uniform":
            atoms = ()
            bound = math.sqrt(3.0)
        else:
            atoms = tuple((float(v), float(p)) for v, p in self.atoms)
            if not atoms:
                raise DomainError("discrete law needs at least one atom")
            if any(p <= 0 for _, p in atoms):
                raise DomainError("atom probabilities must be positive")
            total = math.fsum(p for _, p in atoms)
            mean = math.fsum(v * p for v, p in atoms)
            var = math.fsum(v * v * p for v, p in atoms)
            if abs(total - 1.0) > _MOMENT_TOL:
                raise DomainError(f"atom probabilities sum to {total}, not 1")
            if abs(mean) > _MOMENT_TOL:
                raise DomainError(f"law has mean {mean}; eta must be centred")
            if abs(var - 1.0) > _MOMENT_TOL:
                raise DomainError(f"law has variance {var}; eta must have unit variance")
            bound = max(abs(v) for v, _ in atoms)
        if self.bound is not None:
            if self.bound < bound:
                raise DomainError(f"bound {self.bound} below the support radius {bound}")
            bound = float(self.bound)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "bound", bound)

    @classmethod
    def rademacher(cls):
        return cls("rademacher")

    @classmethod
    def scaled_uniform(cls):
        """Uniform on [-sqrt 3, sqrt 3]."""
        return cls("scaled_uniform")

    @classmethod
    def discrete(cls, atoms):
        return cls("discrete", tuple(atoms))

    @property
    def k_eta(self):
        return self.bound

    def moment(self, p):
        """Exact E[eta^p]."""
        if p == 0:
            return 1.0
        if self.kind == "scaled_uniform":
            return 0.0 if p % 2 else 3.0 ** (p // 2) / (p + 1)
        return math.fsum(p_ * v ** p for v, p_ in self.atoms)

    def charfn(self, u):
        """E[exp(i u eta)] for real u (scalar or array)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "scaled_uniform":
            a = math.sqrt(3.0) * u
            return np.sinc(a / np.pi).astype(complex)
        out = np.zeros(u.shape, dtype=complex)
        for v, p in self.atoms:
            out = out + p * np.exp(1j * v * u)
        return out

    def kernel_args(self):
        code = _LAW_CODES[self.kind]
        if self.kind == "discrete":
            vals = np.array([v for v, _ in self.atoms], dtype=float)
            cum = np.cumsum([p for _, p in self.atoms])
            cum[-1] = 1.0
        else:
            vals = np.array([-1.0, 1.0])
            cum = np.array([0.5, 1.0])
        return code, vals, np.ascontiguousarray(cum, dtype=float)

    def to_dict(self):
        d = {"kind": self.kind, "bound": self.bound}
        if self.kind == "discrete":
            d["atoms"] = [list(a) for a in self.atoms]
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "rademacher")
        if kind == "discrete":
            return cls(kind, tuple(tuple(a) for a in d["atoms"]), d.get("bound"))
        return cls(kind, (), d.get("bound"))


@dataclass(frozen=True)
class RandomWalkNoise:
    """One realization (``sample``) of the block noise family."""

    epsilon: float
    law: NoiseLaw = field(default_factory=NoiseLaw.rademacher)
    dims: int = 1
    seed: int = 0
    horizon: float = 1.0
    sample: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.dims < 1:
            raise DomainError(f"dims must be >= 1, got {self.dims}")
        if not self.horizon >= 1.0:
            raise DomainError(f"horizon must be >= 1, got {self.horizon}")
        if self.sample < 0:
            raise DomainError("sample index must be non-negative")

    @cached_property
    def _grid(self):
        # snap eps^2 to T/N when T/eps^2 is an integer up to rounding, so that
        # "1/eps^2 in N" cases have exactly equal blocks ending on T
        T = float(self.horizon)
        h = self.epsilon * self.epsilon
        q = T / h
        n = round(q)
        snapped = n >= 1 and abs(q - n) <= 1e-9 * q
        if snapped:
            h = T / n
            n_full = n
        else:
            n_full = math.floor(q)
        n_blocks = n_full + 1
        edges = np.minimum(np.arange(n_blocks + 1, dtype=float) * h, T)
        edges[n_full + 1:] = T
        if snapped:
            edges[n_full] = T
        edges.setflags(write=False)
        return h, snapped, n_blocks, edges

    @property
    def block_width(self):
        return self._grid[0]

    @property
    def snapped(self):
        """True when T / eps^2 is (numerically) an integer."""
        return self._grid[1]

    @property
    def n_blocks(self):
        """floor(T / eps^2) + 1."""
        return self._grid[2]

    @property
    def edges(self):
        """Block edges clamped to [0, T]; block k is [edges[k-1], edges[k])."""
        return self._grid[3]

    @property
    def scale(self):
        """Multiplier 1/eps applied to eta on each block."""
        return 1.0 / math.sqrt(self.block_width) if self.snapped else 1.0 / self.epsilon

    def with_sample(self, sample):
        return RandomWalkNoise(self.epsilon, self.law, self.dims, self.seed, self.horizon, sample)

    def with_epsilon(self, epsilon):
        return RandomWalkNoise(epsilon, self.law, self.dims, self.seed, self.horizon, self.sample)

    def key(self, i):
        """Base hash key of component i (1-based)."""
        self._check_component(i)
        return stream_key(self.seed, i, STREAM_ETA)

    def _check_component(self, i):
        if not 1 <= i <= self.dims:
            raise DomainError(f"component {i} outside 1..{self.dims}")

    def eta(self, i):
        """eta_1^i .. eta_n^i of this realization as a read-only array."""
        self._check_component(i)
        return self._eta_cache[i - 1]

    @cached_property
    def _eta_cache(self):
        rows = [self.eta_ensemble(i, self.sample, 1)[0] for i in range(1, self.dims + 1)]
        for r in rows:
            r.setflags(write=False)
        return rows

    def eta_ensemble(self, i, sample0, n_samples):
        """eta for realizations sample0 .. sample0 + n_samples - 1, shape (n_samples, n_blocks)."""
        code, atoms, cum = self.law.kernel_args()
        out = kernels.eta_matrix(self.key(i), int(sample0), int(n_samples), 1,
                                 self.n_blocks, code, atoms, cum)
        assert np.all(np.abs(out) <= self.law.bound), "eta exceeds k_eta"
        return out

    def weighted_sums(self, i, weights, sample0, n_samples):
        """sum_k weights[k-1] * eta_k^i for each realization, without materialising eta."""
        weights = np.ascontiguousarray(weights, dtype=float)
        if weights.shape != (self.n_blocks,):
            raise DomainError(f"need {self.n_blocks} block weights, got {weights.shape}")
        code, atoms, cum = self.law.kernel_args()
        return kernels.eta_weighted_sum(self.key(i), int(sample0), int(n_samples), 1,
                                        weights, code, atoms, cum)

    def block_of(self, r):
        """1-based index of the block containing r."""
        return int(np.searchsorted(self.edges, r, side="right"))


def sample_eta(noise, i, k):
    """eta_k^i of the noise's realization."""
    noise._check_component(i)
    if not 1 <= k <= noise.n_blocks:
        raise DomainError(f"block {k} outside 1..{noise.n_blocks}")
    return float(noise.eta(i)[k - 1])


def theta_at(noise, i, r):
    """Value of the step process theta^{i,eps} at time r in [0, T)."""
    if not 0.0 <= r < noise.horizon:
        raise DomainError(f"r={r} outside [0, {noise.horizon})")
    return sample_eta(noise, i, noise.block_of(r)) * noise.scale


def block_integrals(noise, a, b, antiderivative=None, f=None, order=8):
    """Integral of f over each block intersected with [a, b], one entry per block.

    Uses ``antiderivative`` exactly when given, else an ``order``-point
    Gauss-Legendre rule per block.
    """
    if not 0.0 <= a <= b <= noise.horizon:
        raise DomainError(f"need 0 <= a <= b <= T, got a={a}, b={b}")
    e = noise.edges
    lo = np.clip(e[:-1], a, b)
    hi = np.clip(e[1:], a, b)
    if antiderivative is not None:
        out = np.asarray(antiderivative(hi), dtype=float) - np.asarray(antiderivative(lo), dtype=float)
        out[hi <= lo] = 0.0
        return out
    if f is None:
        raise DomainError("need an integrand or its antiderivative")
    out = integrate_panels(f, lo, hi, order)
    out[hi <= lo] = 0.0
    return out


def integrate_theta(noise, i, f=None, a=0.0, b=1.0, antiderivative=None):
    """Integral of f * theta^{i,eps} over [a, b], exact block by block."""
    w = block_integrals(noise, a, b, antiderivative=antiderivative, f=f)
    eta = noise.eta(i)
    return noise.scale * math.fsum(w * eta)
