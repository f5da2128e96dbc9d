import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from donskerfbm.errors import DomainError
from donskerfbm.noise import (NoiseLaw, RandomWalkNoise, block_integrals, integrate_theta,
                              sample_eta, theta_at)


def test_law_validation():
    with pytest.raises(DomainError, match="centred"):
        NoiseLaw.discrete([(-1.0, 0.4), (1.0, 0.6)])
    with pytest.raises(DomainError, match="variance"):
        NoiseLaw.discrete([(-2.0, 0.5), (2.0, 0.5)])
    with pytest.raises(DomainError, match="sum"):
        NoiseLaw.discrete([(-1.0, 0.5), (1.0, 0.6)])
    asym = NoiseLaw.discrete([(-2.0, 0.2), (0.5, 0.8)])
    assert asym.k_eta == 2.0
    assert NoiseLaw.scaled_uniform().k_eta == pytest.approx(math.sqrt(3))


def test_law_moments_and_charfn():
    u = NoiseLaw.scaled_uniform()
    assert u.moment(2) == pytest.approx(1.0)
    assert u.moment(4) == pytest.approx(9 / 5)
    r = NoiseLaw.rademacher()
    assert r.charfn(0.7) == pytest.approx(math.cos(0.7))
    assert u.charfn(0.0) == pytest.approx(1.0)


def test_block_layout():
    n = RandomWalkNoise(0.1)
    assert n.snapped and n.n_blocks == 101
    assert n.scale == 10.0
    assert n.edges[100] == 1.0 and n.edges[-1] == 1.0
    m = RandomWalkNoise(0.3)
    assert not m.snapped and m.n_blocks == math.floor(1 / 0.09) + 1
    assert m.edges[-1] == 1.0 and m.edges[-2] == pytest.approx(11 * 0.09)


def test_domain_errors():
    with pytest.raises(DomainError):
        RandomWalkNoise(0.0)
    with pytest.raises(DomainError):
        RandomWalkNoise(0.1, horizon=0.5)
    with pytest.raises(DomainError):
        sample_eta(RandomWalkNoise(0.1), 2, 1)
    with pytest.raises(DomainError):
        theta_at(RandomWalkNoise(0.1), 1, 1.0)


def test_eta_is_pure_function_of_indices():
    a = RandomWalkNoise(0.2, seed=5, sample=9, dims=2)
    b = RandomWalkNoise(0.2, seed=5, sample=0, dims=2).with_sample(9)
    assert np.array_equal(a.eta(2), b.eta(2))
    ens = a.eta_ensemble(2, 7, 4)
    assert np.array_equal(ens[2], a.eta(2))
    assert not np.array_equal(a.eta(1), a.eta(2))
    assert sample_eta(a, 1, 3) == a.eta(1)[2]


@settings(max_examples=30, deadline=None)
@given(seed=hs.integers(0, 2 ** 40), eps=hs.floats(0.05, 1.0))
def test_eta_bounded_by_k_eta(seed, eps):
    for law in (NoiseLaw.scaled_uniform(), NoiseLaw.discrete([(-2.0, 0.2), (0.5, 0.8)])):
        n = RandomWalkNoise(eps, law, seed=seed)
        assert np.all(np.abs(n.eta_ensemble(1, 0, 20)) <= law.bound)


def test_theta_integral_exact():
    n = RandomWalkNoise(0.2, seed=1)
    # f = 1 on [0, 1]: sum of eta_k * width_k / eps
    expect = math.fsum(n.eta(1) * np.diff(n.edges)) * n.scale
    assert integrate_theta(n, 1, antiderivative=lambda r: r) == pytest.approx(expect, abs=1e-14)
    via_quad = integrate_theta(n, 1, f=lambda r: 3 * r ** 2)
    via_F = integrate_theta(n, 1, antiderivative=lambda r: r ** 3)
    assert via_quad == pytest.approx(via_F, abs=1e-13)
    assert theta_at(n, 1, 0.05) == n.eta(1)[1] * n.scale


def test_block_integrals_clip():
    n = RandomWalkNoise(0.5)
    w = block_integrals(n, 0.1, 0.6, antiderivative=lambda r: r)
    assert w.sum() == pytest.approx(0.5)
    assert np.allclose(w[:3], [0.15, 0.25, 0.1]) and np.all(w[3:] == 0)


def test_empirical_law():
    x = RandomWalkNoise(0.1, NoiseLaw.discrete([(-2.0, 0.2), (0.5, 0.8)])).eta_ensemble(1, 0, 2000).ravel()
    assert abs(x.mean()) < 4 / math.sqrt(x.size)
    assert abs(np.mean(x == -2.0) - 0.2) < 4 * math.sqrt(0.16 / x.size)
