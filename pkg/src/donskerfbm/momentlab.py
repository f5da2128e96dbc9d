"""Moments of S = int_0^1 f(r) theta(r) dr and the bounds they satisfy.

S is a finite weighted sum ``sum_k a_k eta_k`` with ``a_k = (1/eps) int_{block k} f``,
so its moments and characteristic function are available exactly (cumulants
add over independent blocks) next to the Monte Carlo estimates that the
bound checks are run on.
"""

from dataclasses import dataclass, field, asdict
from functools import lru_cache
import math

import numpy as np
from scipy import integrate

from . import kernels
from .errors import AccuracyError, DomainError
from .noise import block_integrals

RHO1 = (1.0 - math.sqrt(5.0)) / 2.0
RHO2 = (1.0 + math.sqrt(5.0)) / 2.0
SQRT5 = math.sqrt(5.0)

SIGMAS = 4.0
MIN_SAMPLES = 1000

RESPECTED = "respected"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TestFunction:
    """f on [0, 1] plus whatever is known about it analytically."""

    __test__ = False  # not a pytest class

    name: str
    f: callable
    l2_norm: float = None
    alpha: float = None
    holder: float = None  # seminorm ||f||_alpha
    antiderivative: callable = None  # F with F' = f
    square_antiderivative: callable = None  # G with G' = f^2

    def __call__(self, r):
        return self.f(np.asarray(r, dtype=float))

    @property
    def has_holder(self):
        return self.alpha is not None and self.holder is not None

    def numeric_l2_norm(self):
        val, _ = integrate.quad(lambda r: float(self.f(np.array(r))) ** 2, 0.0, 1.0,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return math.sqrt(val)

    def norm(self):
        return self.l2_norm if self.l2_norm is not None else self.numeric_l2_norm()


def _const(r):
    return np.ones_like(np.asarray(r, dtype=float))


CORPUS = (
    TestFunction("one", _const, 1.0, 1.0, 0.0, lambda r: np.asarray(r, float), lambda r: np.asarray(r, float)),
    TestFunction("r", lambda r: np.asarray(r, float), 1.0 / math.sqrt(3.0), 1.0, 1.0,
                 lambda r: 0.5 * np.asarray(r, float) ** 2, lambda r: np.asarray(r, float) ** 3 / 3.0),
    TestFunction("r^0.4", lambda r: np.asarray(r, float) ** 0.4, math.sqrt(1.0 / 1.8), 0.4, 1.0,
                 lambda r: np.asarray(r, float) ** 1.4 / 1.4, lambda r: np.asarray(r, float) ** 1.8 / 1.8),
    TestFunction("sin2pi", lambda r: np.sin(2 * np.pi * np.asarray(r, float)), math.sqrt(0.5), 1.0,
                 2 * math.pi, lambda r: (1 - np.cos(2 * np.pi * np.asarray(r, float))) / (2 * np.pi),
                 lambda r: 0.5 * np.asarray(r, float) - np.sin(4 * np.pi * np.asarray(r, float)) / (8 * np.pi)),
)


def corpus(name=None):
    if name is None:
        return CORPUS
    for tf in CORPUS:
        if tf.name == name:
            return tf
    raise DomainError(f"no corpus function named {name!r}")


def _square_mass(f, lo, hi):
    """int_lo^hi f^2, vectorised over panels."""
    if f.square_antiderivative is not None:
        G = f.square_antiderivative
        return np.asarray(G(hi), float) - np.asarray(G(lo), float)
    out = np.empty(len(lo))
    for k, (a, b) in enumerate(zip(lo, hi)):
        out[k] = integrate.quad(lambda r: float(f(np.array(r))) ** 2, a, b, limit=200)[0] if b > a else 0.0
    return out


@lru_cache(maxsize=1024)
def phi_f(f, eps, rtol=1e-8):
    """int int f^2(x) f^2(y) 1{|x - y| < eps^2} dx dy on [0, 1]^2."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    h = eps * eps
    if h >= 1.0:
        return f.norm() ** 4

    def inner(x):
        x = np.atleast_1d(x)
        return _square_mass(f, np.maximum(0.0, x - h), np.minimum(1.0, x + h))

    def integrand(x):
        return float(f(np.array(x))) ** 2 * float(inner(x)[0])

    pts = sorted({h, 1.0 - h} - {0.0, 1.0})
    val, err = integrate.quad(integrand, 0.0, 1.0, points=pts, epsabs=0.0, epsrel=rtol * 0.1, limit=500)
    if err > rtol * max(abs(val), 1e-300):
        raise AccuracyError(f"phi quadrature error {err:.2e} above tolerance", err)
    return val


def block_weights(f, noise):
    """a_k with S = sum_k a_k eta_k, restricted to [0, 1]."""
    w = block_integrals(noise, 0.0, 1.0, antiderivative=f.antiderivative,
                        f=None if f.antiderivative is not None else f)
    return noise.scale * w


def second_moment_exact(f, noise):
    """E S^2 = (1/eps^2) sum_k (int_{block k} f)^2, asserted <= ||f||^2."""
    a = block_weights(f, noise)
    val = math.fsum(a * a)
    norm2 = f.norm() ** 2
    assert val <= norm2 * (1 + 1e-12) + 1e-15, "block Cauchy-Schwarz violated"
    return val


def _cumulants_from_moments(mu):
    """kappa_1..kappa_N given raw moments mu[0..N] (mu[0] = 1)."""
    N = len(mu) - 1
    kap = [0.0] * (N + 1)
    for n in range(1, N + 1):
        kap[n] = mu[n] - math.fsum(math.comb(n - 1, j - 1) * kap[j] * mu[n - j] for j in range(1, n))
    return kap


def _moments_from_cumulants(kap):
    N = len(kap) - 1
    mu = [1.0] + [0.0] * N
    for n in range(1, N + 1):
        mu[n] = math.fsum(math.comb(n - 1, j - 1) * kap[j] * mu[n - j] for j in range(1, n + 1))
    return mu


def exact_moment(f, noise, p):
    """E S^p via kappa_n(S) = kappa_n(eta) sum_k a_k^n."""
    a = block_weights(f, noise)
    law = noise.law
    kap_eta = _cumulants_from_moments([law.moment(j) for j in range(p + 1)])
    kap = [0.0] + [kap_eta[n] * math.fsum(a ** n) for n in range(1, p + 1)]
    return _moments_from_cumulants(kap)[p]


def exact_charfn(f, noise, u):
    a = block_weights(f, noise)
    return complex(np.prod(noise.law.charfn(u * a)))


def sample_S(f, noise, n_samples, sample0=0, component=1):
    """n_samples independent draws of S from realizations sample0, sample0 + 1, ..."""
    return noise.weighted_sums(component, block_weights(f, noise),
                               sample0, n_samples)


def mc_mean(values):
    """Compensated mean and standard error of a 1-d sample."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    m = math.fsum(v) / n
    if n < 2:
        return m, math.inf
    var = math.fsum((v - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def verdict(estimate, stderr, bound, n_samples=None, atol=0.0):
    if stderr == 0.0:
        return RESPECTED if estimate <= bound + atol else VIOLATED
    if estimate - SIGMAS * stderr > bound + atol:
        return VIOLATED
    if n_samples is not None and n_samples < MIN_SAMPLES:
        return INCONCLUSIVE
    if estimate + SIGMAS * stderr <= bound + atol:
        return RESPECTED
    return INCONCLUSIVE


@dataclass
class MomentReport:
    check: str
    order: object
    estimate: float
    stderr: float
    exact: float
    bound: float
    bound_terms: dict
    verdict: str
    n_samples: int = 0
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k in ("estimate", "stderr", "exact", "bound"):
            v = d[k]
            d[k] = None if v is None else float(v)
        d["bound_terms"] = {k: float(v) for k, v in self.bound_terms.items()}
        return d


def _inputs(f, noise, **extra):
    d = {"f": f.name, "eps": noise.epsilon, "law": noise.law.to_dict(), "seed": noise.seed}
    d.update(extra)
    return d


def _need_holder(f):
    if not f.has_holder:
        raise DomainError(f"test function {f.name!r} has no Hoelder data")


def even_bound_terms(f, noise, m):
    norm = f.norm()
    gauss = math.factorial(2 * m) / (2 ** m * math.factorial(m)) * norm ** (2 * m)
    terms = {"gaussian": gauss}
    if m >= 2:
        k = noise.law.k_eta
        phi = phi_f(f, noise.epsilon)
        terms["phi"] = (math.factorial(2 * m) / (SQRT5 * math.factorial(m - 2)) * k ** (2 * m)
                        * (RHO2 ** (2 * m - 1) - RHO1 ** (2 * m - 1)) * math.sqrt(phi)
                        * norm ** (2 * m - 2))
    return terms


def odd_bound_terms(f, noise, m):
    norm = f.norm()
    k = noise.law.k_eta
    phi = phi_f(f, noise.epsilon)
    return {"phi": (math.factorial(2 * m + 1) / (SQRT5 * math.factorial(m - 1)) * k ** (2 * m + 1)
                    * (RHO2 ** (2 * m) - RHO1 ** (2 * m)) * math.sqrt(phi) * norm ** (2 * m - 1))}


def Jm_bound_terms(f, noise, m):
    norm = f.norm()
    k = noise.law.k_eta
    eps = noise.epsilon
    phi = phi_f(f, eps)
    return {
        "holder": eps ** (2 * f.alpha) * f.holder * norm ** (2 * m - 1) / math.factorial(m - 1),
        "phi_sqrt": (k ** (2 * m) / (SQRT5 * math.factorial(m - 2))
                     * abs(RHO1 ** (2 * m - 1) - RHO2 ** (2 * m - 1)) * math.sqrt(phi) * norm ** (2 * m - 2)),
        "phi": norm ** (2 * (m - 2)) * phi / math.factorial(m - 2),
    }


def charfn_bound_terms(f, noise, u):
    norm = f.norm()
    k = noise.law.k_eta
    eps = noise.epsilon
    phi = phi_f(f, eps)
    u = abs(u)
    big = math.exp(4 * u * u * k * k * norm * norm)
    small = math.exp(u * u * norm * norm)
    return {
        "odd": 4 / SQRT5 * u ** 3 * math.sqrt(phi) * norm * k ** 3 * big,
        "holder": u * u * eps ** (2 * f.alpha) * f.holder * norm * small,
        "phi_sqrt": 8 / SQRT5 * u ** 4 * math.sqrt(phi) * norm ** 2 * k * k * big,
        "phi": 0.5 * u ** 4 * phi * small,
    }


def check_J1(f, noise):
    """J_1 = |E S^2 / 2 - ||f||^2 / 2| against eps^(2 alpha) ||f|| ||f||_alpha; deterministic."""
    _need_holder(f)
    J1 = abs(0.5 * second_moment_exact(f, noise) - 0.5 * f.norm() ** 2)
    bound = noise.epsilon ** (2 * f.alpha) * f.norm() * f.holder
    v = verdict(J1, 0.0, bound, atol=1e-14)
    return MomentReport("J1", 1, J1, 0.0, J1, bound, {"holder": bound}, v, 0, _inputs(f, noise))


def _draws(f, noise, n_samples, sample0, S):
    if S is None:
        return sample_S(f, noise, n_samples, sample0)
    if len(S) != n_samples:
        raise DomainError(f"got {len(S)} precomputed draws, expected {n_samples}")
    return S


def _mc_power(f, noise, p, n_samples, sample0=0, S=None):
    return mc_mean(_draws(f, noise, n_samples, sample0, S) ** p)


def check_even_moment(f, noise, m, n_samples, sample0=0, S=None):
    if m < 1:
        raise DomainError("m must be >= 1")
    est, se = _mc_power(f, noise, 2 * m, n_samples, sample0, S)
    terms = even_bound_terms(f, noise, m)
    bound = math.fsum(terms.values())
    exact = exact_moment(f, noise, 2 * m)
    return MomentReport("even", 2 * m, est, se, exact, bound, terms,
                        verdict(abs(est), se, bound, n_samples, atol=1e-12 * bound), n_samples,
                        _inputs(f, noise, m=m))


def check_odd_moment(f, noise, m, n_samples, sample0=0, S=None):
    if m < 1:
        raise DomainError("m must be >= 1")
    est, se = _mc_power(f, noise, 2 * m + 1, n_samples, sample0, S)
    terms = odd_bound_terms(f, noise, m)
    bound = math.fsum(terms.values())
    exact = exact_moment(f, noise, 2 * m + 1)
    return MomentReport("odd", 2 * m + 1, abs(est), se, abs(exact), bound, terms,
                        verdict(abs(est), se, bound, n_samples), n_samples, _inputs(f, noise, m=m))


def check_Jm(f, noise, m, n_samples, sample0=0, S=None):
    if m < 2:
        raise DomainError("check_Jm needs m >= 2; use check_J1 for m = 1")
    _need_holder(f)
    est, se = _mc_power(f, noise, 2 * m, n_samples, sample0, S)
    c = math.factorial(2 * m)
    gauss = f.norm() ** (2 * m) / (2 ** m * math.factorial(m))
    J = abs(est / c - gauss)
    terms = Jm_bound_terms(f, noise, m)
    bound = math.fsum(terms.values())
    exact = abs(exact_moment(f, noise, 2 * m) / c - gauss)
    return MomentReport("Jm", 2 * m, J, se / c, exact, bound, terms,
                        verdict(J, se / c, bound, n_samples), n_samples, _inputs(f, noise, m=m))


def charfn_gap(f, noise, u, n_samples, sample0=0, S=None):
    """|E exp(iuS) - exp(-u^2 ||f||^2 / 2)| against the four-term bound."""
    _need_holder(f)
    S = _draws(f, noise, n_samples, sample0, S)
    re, se_re = mc_mean(np.cos(u * S))
    im, se_im = mc_mean(np.sin(u * S))
    target = math.exp(-0.5 * u * u * f.norm() ** 2)
    gap = math.hypot(re - target, im)
    se = math.hypot(se_re, se_im)
    terms = charfn_bound_terms(f, noise, u)
    bound = math.fsum(terms.values())
    exact = abs(exact_charfn(f, noise, u) - target)
    if u == 0:
        return MomentReport("charfn", 0.0, 0.0, 0.0, 0.0, 0.0, terms, RESPECTED, n_samples,
                            _inputs(f, noise, u=0.0))
    return MomentReport("charfn", float(u), gap, se, exact, bound, terms,
                        verdict(gap, se, bound, n_samples), n_samples, _inputs(f, noise, u=float(u)))


def fibonacci(n):
    """u_n with u_1 = u_2 = 1."""
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def closed_form_count(n):
    return round((RHO2 ** (n - 1) - RHO1 ** (n - 1)) / SQRT5)


ENUMERATION_MAX = 40


def decomposition_count(n, enumerate_max=ENUMERATION_MAX):
    """Ordered compositions of n into parts >= 2, checked three ways.

    Returns the count; raises ArithmeticError if the methods disagree.
    Enumeration is skipped above ``enumerate_max``.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    rec = fibonacci(n - 1)
    closed = closed_form_count(n) if n <= 70 else rec
    counts = {"recurrence": rec, "closed_form": closed}
    if n <= enumerate_max:
        counts["enumeration"] = int(kernels.count_compositions(n, 2))
    if len(set(counts.values())) != 1:
        raise ArithmeticError(f"decomposition counts disagree for n={n}: {counts}")
    return rec


def list_compositions(n, smallest=2):
    """Explicit list of compositions (small n only)."""
    if n == 0:
        return [()]
    out = []
    for first in range(smallest, n + 1):
        for rest in list_compositions(n - first, smallest):
            out.append((first,) + rest)
    return out
