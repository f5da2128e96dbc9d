import numpy as np
import pytest

from donskerfbm import fbm
from donskerfbm.driver import ITERATED, TENSOR, HurstParam
from donskerfbm.errors import DomainError


def test_grid_validation():
    with pytest.raises(DomainError):
        fbm.check_grid([0.1, 0.5])
    with pytest.raises(DomainError):
        fbm.check_grid([0.0, 0.5, 0.5])
    with pytest.raises(DomainError):
        fbm.simulate_fbm(0.7, fbm.uniform_grid(8))


def test_exact_variance_frozen():
    # 30-digit sum of squared cell weights, N = 4096, H = 0.4
    v = fbm.exact_variance(0.4, fbm.uniform_grid(4096))
    assert v[-1] == pytest.approx(1.2499792616964397726, rel=1e-12)
    assert v[0] == 0.0


def test_nonuniform_grid_variance_consistent():
    g = np.sort(np.concatenate([[0.0, 1.0], np.linspace(0.01, 0.99, 37) ** 1.3]))
    v = fbm.exact_variance(0.4, g)
    c = fbm.cell_weights(0.4, g)
    assert np.allclose(v, (c * c).sum(axis=1))
    # refining the grid converges to t^{2H} / (2H)
    fine = fbm.exact_variance(0.4, fbm.uniform_grid(2 ** 14))
    assert fine[-1] == pytest.approx(1.25, rel=1e-5)


def test_fft_and_dense_paths_agree():
    g = fbm.uniform_grid(256)
    ens = fbm.simulate_fbm_ensemble(0.4, g, 2, 3, 0, 5)
    sub = fbm.simulate_fbm_ensemble(0.4, g, 2, 3, 0, 5, at=[64, 256])
    assert np.allclose(ens.values[:, [64, 256]], sub.values, atol=1e-12)


def test_sample_reproducible_and_addressable():
    g = fbm.uniform_grid(128)
    a = fbm.simulate_fbm(0.4, g, d=2, seed=9, sample=4)
    ens = fbm.simulate_fbm_ensemble(0.4, g, 2, 9, 2, 4)
    assert np.array_equal(a.values, ens.values[2])
    assert a.values[0].tolist() == [0.0, 0.0]


def test_covariance_closed_forms():
    assert fbm.covariance(0.4, 1.0, 1.0) == pytest.approx(1.25, rel=1e-12)
    assert fbm.covariance(0.4, 0.3, 0.7) == pytest.approx(0.40030984176331935053, rel=1e-10)
    assert fbm.covariance(HurstParam(0.5, True), 0.3, 0.7) == pytest.approx(0.3)
    assert fbm.covariance(0.4, 0.0, 0.5) == 0.0


def test_brownian_mode_covariance():
    g = fbm.uniform_grid(64)
    ens = fbm.simulate_fbm_ensemble(HurstParam(0.5, True), g, 1, 4, 0, 20000, at=[16, 48])
    x = ens.values[:, :, 0]
    cov = np.mean(x[:, 0] * x[:, 1])
    se = np.std(x[:, 0] * x[:, 1]) / np.sqrt(len(x))
    assert abs(cov - 0.25) < 4 * se


def test_area_conventions_and_diagonal():
    g = fbm.uniform_grid(512)
    s = fbm.simulate_fbm(0.4, g, d=2, seed=1)
    a = fbm.simulate_area(s, [(0.0, 1.0), (0.25, 0.5)], ITERATED)
    b = fbm.simulate_area(s, [(0.0, 1.0), (0.25, 0.5)], TENSOR)
    assert np.array_equal(a.values, b.values.transpose(0, 2, 1))
    inc = s.values[-1] - s.values[0]
    assert np.allclose(np.diag(a.values[0]), 0.5 * inc ** 2)
    # left-point sum of dB^i against B^j
    i, j = 0, 1
    expect = np.sum(np.diff(s.values[:, i]) * s.values[:-1, j])
    assert a.values[0, i, j] == pytest.approx(expect, rel=1e-12)
    with pytest.raises(DomainError):
        fbm.simulate_area(s, [(0.0, 0.3)])


def test_discrete_chen_identity():
    g = fbm.uniform_grid(256)
    s = fbm.simulate_fbm(0.4, g, d=2, seed=5)
    A = fbm.simulate_area(s, [(0.25, 1.0), (0.25, 0.5), (0.5, 1.0)]).values
    v = s.values
    d_su, d_ut = v[128] - v[64], v[256] - v[128]
    defect = A[0] - A[1] - A[2] - np.outer(d_ut, d_su)
    off = defect - np.diag(np.diag(defect))
    assert np.max(np.abs(off)) < 1e-12


def test_coarse_steps_telescope():
    g = fbm.uniform_grid(64)
    ens = fbm.simulate_fbm_ensemble(0.4, g, 2, 2, 0, 3)
    delta, A = fbm.coarse_step_areas(ens.values, 8)
    assert np.allclose(delta.sum(axis=1), ens.values[:, -1] - ens.values[:, 0])
    full = fbm.ensemble_areas(ens.values, g, [(0.0, 0.125)])
    assert np.allclose(A[:, 0], full[:, 0])
