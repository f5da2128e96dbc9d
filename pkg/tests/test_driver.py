import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs
from scipy import integrate

from donskerfbm import driver as drv
from donskerfbm.driver import DriverPath, HurstParam, QuadratureSpec
from donskerfbm.errors import AccuracyError, DomainError
from donskerfbm.noise import NoiseLaw, RandomWalkNoise, theta_at


def _blockwise(path, i, t, kernel):
    """Adaptive quadrature of kernel(r) * theta(r) over [0, t], one smooth block at a time."""
    n = path.noise
    e = np.append(n.edges[n.edges < t], t)
    parts = []
    for a, b in zip(e[:-1], e[1:]):
        if b <= a:
            continue
        th = theta_at(n, i, a)
        val, _ = integrate.quad(kernel, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        parts.append(th * val)
    return math.fsum(parts)


def quad_eval(path, i, t):
    q, eps = path.H - 0.5, path.noise.epsilon
    return _blockwise(path, i, t, lambda r: (t + eps - r) ** q)


def quad_deriv(path, i, t):
    q, eps = path.H - 0.5, path.noise.epsilon
    return eps ** q * theta_at(path.noise, i, t) + _blockwise(path, i, t, lambda r: q * (t + eps - r) ** (q - 1))


def test_hurst_domain():
    with pytest.raises(DomainError, match="1/3, 1/2"):
        HurstParam(0.6)
    with pytest.raises(DomainError):
        HurstParam(0.3)
    assert HurstParam.coerce(0.5).classical
    with pytest.raises(DomainError):
        HurstParam(0.45, classical=True)


def test_eval_zero_and_oracle(path2):
    assert np.all(path2.values([0.0]) == 0.0)
    for t in (0.01, 0.37, 0.999, 1.0):
        for i in (1, 2):
            assert drv.eval(path2, i, t) == pytest.approx(quad_eval(path2, i, t), rel=1e-10, abs=1e-13)


def test_deriv_oracle(path2):
    for t in (0.02, 0.5, 0.77):
        assert drv.deriv(path2, 1, t) == pytest.approx(quad_deriv(path2, 1, t), rel=1e-10)


def test_deriv_matches_difference_quotient(path2):
    t, h = 0.5, 1e-6
    fd = (drv.eval(path2, 2, t + h) - drv.eval(path2, 2, t - h)) / (2 * h)
    assert path2.noise.block_of(t - h) == path2.noise.block_of(t + h)
    assert drv.deriv(path2, 2, t) == pytest.approx(fd, rel=1e-6)


def test_deriv_one_sided_at_edge():
    path = DriverPath(RandomWalkNoise(0.2, seed=4), 0.4)
    e = float(path.noise.edges[5])
    left, right = drv.deriv(path, 1, e, "left"), drv.deriv(path, 1, e, "right")
    jump = path.noise.scale * path.noise.epsilon ** (path.H - 0.5) * (path.noise.eta(1)[5] - path.noise.eta(1)[4])
    assert right - left == pytest.approx(jump, rel=1e-10)


def test_classical_case_is_integrated_theta():
    path = DriverPath(RandomWalkNoise(0.2, seed=2), HurstParam(0.5, True))
    n = path.noise
    expect = math.fsum(n.eta(1)[:13] * np.diff(n.edges)[:13]) * n.scale
    t = float(n.edges[13])
    assert drv.eval(path, 1, t) == pytest.approx(expect, abs=1e-13)


def test_increment_matches_values(path2):
    v = path2.values([0.2, 0.9])
    assert path2.increment(1, 0.2, 0.9) == pytest.approx(v[1, 0] - v[0, 0], abs=1e-13)
    with pytest.raises(DomainError):
        path2.increment(1, 0.9, 0.2)


def test_area_against_riemann_oracle(path2):
    A = drv.levy_area(path2, 0.1, 0.8)
    R = drv.riemann_area(path2, 0.1, 0.8, n_points=400_000)
    assert np.max(np.abs(A.values - R)) < 1e-5
    assert A.error < 1e-9


def test_area_diagonal_and_degenerate(path2):
    A = drv.levy_area(path2, 0.3, 0.65).values
    inc = path2.values([0.65])[0] - path2.values([0.3])[0]
    assert np.allclose(np.diag(A), 0.5 * inc ** 2, rtol=0, atol=1e-12)
    assert np.all(drv.levy_area(path2, 0.4, 0.4).values == 0)


def test_area_conventions_are_transposes(path2):
    a = drv.levy_area(path2, 0.0, 1.0, convention=drv.ITERATED).values
    b = drv.levy_area(path2, 0.0, 1.0, convention=drv.TENSOR).values
    assert np.array_equal(a, b.T)
    with pytest.raises(DomainError):
        drv.levy_area(path2, 0.0, 1.0, convention="other")


def test_area_integration_by_parts(path2):
    # A(i,j) + A(j,i) = dX^i dX^j for a C^1 path
    A = drv.levy_area(path2, 0.2, 0.9).values
    inc = path2.values([0.9])[0] - path2.values([0.2])[0]
    assert A[0, 1] + A[1, 0] == pytest.approx(inc[0] * inc[1], abs=1e-12)


def test_tolerance_failure_raises(path2):
    with pytest.raises(AccuracyError):
        drv.levy_area(path2, 0.0, 1.0, QuadratureSpec(order=1, tol=1e-16))


@settings(max_examples=25, deadline=None)
@given(s=hs.floats(0, 1), u=hs.floats(0, 1), t=hs.floats(0, 1), sample=hs.integers(0, 10 ** 6),
       eps=hs.sampled_from([0.5, 0.3, 0.1]))
def test_chen_property(s, u, t, sample, eps):
    s, u, t = sorted((s, u, t))
    path = DriverPath(RandomWalkNoise(eps, NoiseLaw.scaled_uniform(), 2, seed=1, sample=sample), 0.42)
    cd = drv.chen_defect(path, s, u, t)
    assert cd.max_norm <= max(cd.error_budget, 1e-13)
    assert cd.max_norm <= 1e-8


def test_ensemble_matches_single_paths():
    noise = RandomWalkNoise(0.2, NoiseLaw.rademacher(), 2, seed=8)
    ens = drv.ensemble_observables(noise, 0.4, 5, 3, times=(0.5, 1.0), pairs=((0.0, 1.0), (0.25, 0.75)))
    for k in range(3):
        p = DriverPath(noise.with_sample(5 + k), 0.4)
        assert np.allclose(ens.values[k], p.values([0.5, 1.0]), rtol=0, atol=1e-13)
        assert np.allclose(ens.areas[k, 1], drv.levy_area(p, 0.25, 0.75).values, rtol=0, atol=1e-12)


def test_variance_of_X1_frozen():
    # sum_k w_k^2 by 30-digit quadrature of the block kernel integrals, eps = 0.1, H = 0.4
    noise = RandomWalkNoise(0.1)
    w = drv.eval_weights(noise, 0.4, [1.0])[0]
    assert math.fsum(w * w) == pytest.approx(1.1509252445332940537, rel=1e-13)
