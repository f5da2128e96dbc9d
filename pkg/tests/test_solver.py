import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from donskerfbm import fbm, solver as S
from donskerfbm.driver import DriverPath, levy_area
from donskerfbm.errors import DivergenceError, DomainError
from donskerfbm.noise import NoiseLaw, RandomWalkNoise


def sin_driver(d):
    return (lambda t: np.sin(np.asarray(t))[:, None] * np.ones(d),
            lambda t: np.cos(np.asarray(t))[:, None] * np.ones(d))


@settings(max_examples=20, deadline=None)
@given(y=hs.lists(hs.floats(-3, 3), min_size=2, max_size=2))
def test_preset_jacobians_match_differences(y):
    for vf in (S.heisenberg(), S.rotation()):
        assert vf.jacobian_defect(np.array(y)) < 1e-6
    assert S.scalar_linear().jacobian_defect(np.array(y[:1])) < 1e-6


def test_initial_point_checked():
    with pytest.raises(DomainError):
        S.heisenberg(a=(0.0,))


def test_zero_sigma_drift_only():
    vf = S.zero_sigma(lambda y: np.asarray(y), a=(1.0,))
    g = fbm.uniform_grid(1024)
    drv = S.RoughDriverGrid(g, np.zeros((1024, 1)), np.zeros((1024, 1, 1)))
    assert S.solve_rough(vf, drv)[-1, 0] == pytest.approx(math.e, abs=1e-6)


def test_affine_exact_on_fbm_driver():
    Smat = np.array([[1.0, -0.5], [0.25, 2.0], [0.0, 1.0]])
    vf = S.constant_sigma(Smat, a=(1.0, 2.0, 3.0))
    sample = fbm.simulate_fbm(0.4, fbm.uniform_grid(512), d=2, seed=3)
    drv = S.RoughDriverGrid.from_fbm(sample)
    y = S.solve_rough(vf, drv)
    expect = np.array(vf.a) + sample.values @ Smat.T
    assert np.max(np.abs(y - expect)) < 1e-12


def test_exponential_for_smooth_geometric_driver():
    Z, dZ = sin_driver(1)
    drv = S.RoughDriverGrid.from_function(Z, dZ, np.linspace(0, 1, 2 ** 12 + 1))
    y = S.solve_rough(S.scalar_linear(2.0), drv)
    assert abs(y[-1, 0] / (2.0 * math.exp(math.sin(1.0))) - 1) < 1e-4


def test_rough_and_ode_agree_for_smooth_driver():
    Z, dZ = sin_driver(2)
    times = np.linspace(0, 1, 2 ** 12 + 1)
    yr = S.solve_rough(S.rotation(), S.RoughDriverGrid.from_function(Z, dZ, times))
    yo = S.solve_ode(S.rotation(), S.SmoothDriver(Z, dZ, 2), [0.0, 1.0], substeps=64)
    assert np.max(np.abs(yr[-1] - yo[-1])) < 1e-5


def test_driver_grid_rejects_bad_diagonal():
    with pytest.raises(DomainError, match="diagonal"):
        S.RoughDriverGrid(np.array([0.0, 1.0]), np.ones((1, 1)), np.zeros((1, 1, 1)))


def test_ode_linear_drift():
    vf = S.zero_sigma(lambda y: -np.asarray(y), a=(1.0,))
    path = DriverPath(RandomWalkNoise(0.3), 0.4)
    y = S.solve_ode(vf, path, np.linspace(0, 1, 11), substeps=8)
    assert y[-1, 0] == pytest.approx(math.exp(-1), abs=1e-8)


def test_ode_scalar_linear_closed_form():
    path = DriverPath(RandomWalkNoise(0.2, seed=5), 0.4)
    t = np.linspace(0, 1, 11)
    y = S.solve_ode(S.scalar_linear(1.5), path, t, substeps=4)
    assert np.max(np.abs(y[:, 0] - 1.5 * np.exp(path.values(t)[:, 0]))) < 1e-6


def test_ode_order_within_block():
    path = DriverPath(RandomWalkNoise(0.9, NoiseLaw.rademacher(), 2, seed=3), 0.4)
    orders, _ = S.self_convergence_order(S.rotation(), path, 0.05, 0.8, (2, 4, 8))
    assert all(3.5 <= o <= 4.5 for o in orders)


def test_ode_wong_zakai_in_sample():
    path = DriverPath(RandomWalkNoise(0.1, NoiseLaw.rademacher(), 2, seed=1), 0.4)
    ys = [S.solve_ode(S.rotation(), path, [0.0, 1.0], substeps=m)[-1] for m in (1, 2, 4, 8)]
    diffs = [np.max(np.abs(a - ys[-1])) for a in ys[:-1]]
    assert diffs[0] > diffs[1] > diffs[2]


def test_heisenberg_second_coordinate_is_area():
    path = DriverPath(RandomWalkNoise(0.2, NoiseLaw.rademacher(), 2, seed=5), 0.4)
    y = S.solve_ode(S.heisenberg(), path, [0.0, 1.0], substeps=4)
    A = levy_area(path, 0.0, 1.0).values
    assert y[-1, 1] == pytest.approx(A[1, 0], abs=1e-8)
    assert y[-1, 0] == pytest.approx(path.values([1.0])[0, 0], abs=1e-8)


def test_rough_on_driver_grid_close_to_ode():
    path = DriverPath(RandomWalkNoise(0.2, NoiseLaw.rademacher(), 2, seed=2), 0.4)
    times = np.linspace(0, 1, 401)
    yr = S.solve_rough(S.rotation(), S.RoughDriverGrid.from_driver_path(path, times))
    yo = S.solve_ode(S.rotation(), path, times, substeps=4)
    assert np.max(np.abs(yr - yo)) < 1e-3


def test_batch_matches_single_paths():
    noise = RandomWalkNoise(0.3, NoiseLaw.rademacher(), 2, seed=4)
    batch = S.DriverBatch(noise, 0.4, 2, 3)
    yb = S.solve_ode(S.rotation(), batch, [0.0, 0.5, 1.0])
    for k in range(3):
        y = S.solve_ode(S.rotation(), DriverPath(noise.with_sample(2 + k), 0.4), [0.0, 0.5, 1.0])
        assert np.allclose(yb[k], y, rtol=0, atol=1e-13)


def test_divergence_guard():
    def sigma(y):
        return (np.asarray(y) ** 2)[..., None]

    def dsigma(y):
        return (2 * np.asarray(y))[..., None, None]

    vf = S.VectorFieldSpec(1, 1, sigma, dsigma, a=(1.0,), name="blowup")
    g = fbm.uniform_grid(64)
    drv = S.RoughDriverGrid(g, np.full((64, 1), 0.5), np.full((64, 1, 1), 0.125))
    with pytest.raises(DivergenceError) as info:
        S.solve_rough(vf, drv)
    assert info.value.step is not None
    y, failed = S.solve_rough(vf, drv, raise_on_fail=False, return_failures=True)
    assert failed and np.isnan(y[-1, 0])


def test_eps_vs_limit_zero_sigma_identical():
    vf = S.PRESETS["zero-sigma"]()
    pair = S.solve_eps_vs_limit(vf, S.NoiseConfig(0.2, seed=1), S.FbmConfig(0.4, 256, seed=2),
                                [0.5, 1.0], 50)
    assert np.max(np.abs(pair.approx - pair.limit)) < 1e-9
    assert pair.approx[0, -1, 0] == pytest.approx(math.exp(-1), abs=1e-9)
    with pytest.raises(DomainError):
        S.solve_eps_vs_limit(vf, S.NoiseConfig(0.2, seed=3), S.FbmConfig(0.4, 256, seed=3), [1.0], 5)


def test_limit_scalar_linear_ratio_steps():
    # coarse steps with fine areas still reproduce exp(B) for the commuting case to first order
    cfg = S.FbmConfig(0.4, 1024, seed=6, ratio=4)
    y, failed = S.solve_limit_ensemble(S.scalar_linear(), cfg, [1.0], 20)
    ens = fbm.simulate_fbm_ensemble(0.4, cfg.grid(), 1, 6, 0, 20)
    assert not failed.any()
    assert np.median(np.abs(np.log(y[:, 0, 0]) - ens.values[:, -1, 0])) < 0.05
