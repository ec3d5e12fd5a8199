import numpy as np
import pytest

from pfode.errors import DimensionMismatchError, DomainError, OrderingError
from pfode.gaussian_exact import GaussianTrajectoryModel
from pfode.oracles import GaussianOracle, KDEOracle, LowRankGaussian
from pfode.schedules import explicit_grid, flow_matching_process, polynomial_grid, vp_process_from_range
from pfode.solvers import (SolverConfig, ab_weights, dpm2_step, dpm2_step_fd, euler_step, euler_step_classic,
                           heun_step, heun_step_fd, ipndm_step, ode_jump, simulate, simulate_batch,
                           simulate_zspace, trajectory_length)

METHODS = ["euler", "heun", "dpm2", "ipndm"]


class ConstantEps:
    """Oracle with a constant noise prediction: r(x, sigma) = x - sigma * e."""

    def __init__(self, e):
        self.e = np.asarray(e, dtype=float)
        self.d = self.e.size

    def denoise(self, x, sigma):
        return np.asarray(x, dtype=float) - sigma * self.e


def _gauss(d=4, r=2, seed=0):
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((d, r)))
    return LowRankGaussian(rng.standard_normal(d), U, np.sort(rng.uniform(0.5, 4, r))[::-1])


def test_convex_euler_matches_classic():
    rng = np.random.default_rng(0)
    orc = KDEOracle(rng.standard_normal((20, 3)))
    for _ in range(1000):
        x = rng.standard_normal(3) * rng.uniform(0.1, 50)
        sf = rng.uniform(0.01, 80)
        st_ = sf * rng.uniform(0, 0.999)
        a = euler_step(orc, x, sf, st_)
        b = euler_step_classic(orc, x, sf, st_)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_euler_to_zero_returns_denoiser():
    rng = np.random.default_rng(1)
    orc = KDEOracle(rng.standard_normal((10, 2)))
    x = rng.standard_normal(2)
    assert np.array_equal(euler_step(orc, x, 3.0, 0.0), orc.denoise(x, 3.0))


def test_step_errors():
    orc = ConstantEps([1.0, 0.0])
    with pytest.raises(OrderingError):
        euler_step(orc, np.zeros(2), 1.0, 2.0)
    with pytest.raises(DomainError):
        heun_step(orc, np.zeros(2), 1.0, 0.0)
    with pytest.raises(DimensionMismatchError):
        simulate(orc, polynomial_grid(3), np.zeros(3))
    with pytest.raises(DomainError):
        SolverConfig("rk4")


@pytest.mark.parametrize("method", METHODS)
def test_point_mass_exact(method):
    y = np.array([1.0, -2.0, 0.5])
    orc = KDEOracle([y])
    grid = polynomial_grid(7)
    xT = np.array([30.0, 40.0, -10.0])
    tr = simulate(orc, grid, xT, SolverConfig(method))
    for n, s in enumerate(grid.times):
        np.testing.assert_allclose(tr.states[n], y + (s / 80.0) * (xT - y), atol=1e-9)


@pytest.mark.parametrize("method", METHODS)
def test_constant_eps_is_euler(method):
    e = np.array([0.3, -1.0])
    orc = ConstantEps(e)
    tr = simulate(orc, polynomial_grid(9), np.array([5.0, 5.0]), SolverConfig(method))
    np.testing.assert_allclose(tr.final, np.array([5.0, 5.0]) + (0.002 - 80.0) * e, atol=1e-12)


def test_rewrites_match_on_random_inputs():
    rng = np.random.default_rng(2)
    orc = KDEOracle(rng.standard_normal((30, 4)) * 2)
    for _ in range(200):
        x = rng.standard_normal(4) * rng.uniform(0.1, 20)
        sf = rng.uniform(0.05, 80)
        st_ = sf * rng.uniform(0.01, 0.99)
        tol = 1e-12 * max(1.0, np.abs(x).max())
        np.testing.assert_allclose(heun_step(orc, x, sf, st_), heun_step_fd(orc, x, sf, st_), rtol=0, atol=tol)
        np.testing.assert_allclose(dpm2_step(orc, x, sf, st_), dpm2_step_fd(orc, x, sf, st_), rtol=0, atol=tol)


def test_heun_local_error_third_order():
    g = LowRankGaussian([0.0], np.array([[1.0]]), [1.0])
    orc = GaussianOracle(g)
    sf, x = 3.0, np.array([2.0])
    model = GaussianTrajectoryModel(g, sf)
    errs = []
    for h in (0.1, 0.05, 0.025):
        errs.append(abs(heun_step(orc, x, sf, sf - h) - model.exact_state(x, sf - h))[0])
    assert 7.0 < errs[0] / errs[1] < 9.0 and 7.0 < errs[1] / errs[2] < 9.0


def test_dpm2_midpoint():
    seen = []

    class Spy(ConstantEps):
        def denoise(self, x, sigma):
            seen.append(sigma)
            return super().denoise(x, sigma)

    dpm2_step(Spy([1.0]), np.array([0.0]), 4.0, 1.0)
    assert seen == [4.0, 2.0]


def test_ab_weights_uniform():
    np.testing.assert_allclose(ab_weights([1.0], 0.5), [-0.5])
    np.testing.assert_allclose(ab_weights([2.0, 3.0], 1.0), -np.array([3, -1]) / 2, atol=1e-14)
    np.testing.assert_allclose(ab_weights([3.0, 4.0, 5.0], 2.0), -np.array([23, -16, 5]) / 12, atol=1e-13)
    np.testing.assert_allclose(ab_weights([4.0, 5.0, 6.0, 7.0], 3.0), -np.array([55, -59, 37, -9]) / 24, atol=1e-13)
    # a variable-step rule integrates polynomials of degree < order exactly
    nodes = np.array([1.0, 1.7, 2.1, 4.0])
    w = ab_weights(nodes, 0.3)
    for p in range(4):
        assert np.dot(w, nodes**p) == pytest.approx((0.3 ** (p + 1) - 1.0) / (p + 1), abs=1e-12)


def test_ipndm_warm_start_and_history():
    rng = np.random.default_rng(3)
    orc = KDEOracle(rng.standard_normal((8, 2)))
    x = rng.standard_normal(2) * 5
    np.testing.assert_allclose(ipndm_step(orc, [], x, 5.0, 4.0), euler_step(orc, x, 5.0, 4.0), atol=1e-14)
    e1 = rng.standard_normal(2)
    eps0 = (x - orc.denoise(x, 4.0)) / 4.0
    out = ipndm_step(orc, [(5.0, e1)], x, 4.0, 3.0, variable_step=False)
    np.testing.assert_allclose(out, x - (1.5 * eps0 - 0.5 * e1), atol=1e-14)
    with pytest.raises(DimensionMismatchError):
        ipndm_step(orc, [(5.0, np.zeros(3))], x, 4.0, 3.0)


def test_convergence_orders():
    g = LowRankGaussian(np.zeros(2), np.eye(2), [2.0, 0.5])
    orc = GaussianOracle(g)
    xT = np.array([50.0, -30.0])
    model = GaussianTrajectoryModel(g, 80.0)
    ref = model.exact_state(xT, 0.002)

    def err(method, N):
        return np.linalg.norm(simulate(orc, polynomial_grid(N), xT, SolverConfig(method, record=False)).final - ref)

    for method, lo, hi in (("euler", 1.6, 2.4), ("heun", 3.5, 4.5), ("dpm2", 3.5, 4.5)):
        assert lo <= err(method, 64) / err(method, 128) <= hi, method
    assert err("ipndm", 32) / err("ipndm", 64) > 8.0


def test_simulate_single_step():
    rng = np.random.default_rng(4)
    orc = KDEOracle(rng.standard_normal((10, 3)))
    xT = rng.standard_normal(3) * 80
    tr = simulate(orc, explicit_grid([80.0, 0.0]), xT)
    np.testing.assert_array_equal(tr.final, orc.denoise(xT, 80.0))
    assert tr.N == 1 and tr.nfe == 1 and tr.meta["oracle_calls"] == 1
    np.testing.assert_array_equal(tr.denoised[-1], tr.final)


def test_low_rank_gaussian_euler_matches_closed_form():
    g = _gauss(6, 3, seed=5)
    orc = GaussianOracle(g)
    xT = g.mean + 80 * np.random.default_rng(5).standard_normal(6)
    grid = polynomial_grid(1000)
    tr = simulate(orc, grid, xT, SolverConfig(record=False))
    model = GaussianTrajectoryModel(g)
    for n in (100, 500, 900, 1000):
        exact = model.exact_state(xT, grid.times[n])
        assert np.linalg.norm(tr.states[n] - exact) <= 2e-3 * np.linalg.norm(exact)


def test_trajectory_records_and_jump():
    rng = np.random.default_rng(6)
    orc = KDEOracle(rng.standard_normal((16, 3)))
    X = rng.standard_normal((4, 3)) * 80
    trs = simulate_batch(orc, polynomial_grid(10), X, SolverConfig("heun"))
    for b, tr in enumerate(trs):
        assert tr.states.shape == (11, 3) and tr.denoised.shape == (11, 3)
        assert tr.nfe == 20 and tr.meta["oracle_calls"] == 21
        np.testing.assert_allclose(tr.denoised, tr.states - tr.sigmas[:, None] * tr.eps(), atol=1e-12)
        np.testing.assert_allclose(tr.eps_norms, np.linalg.norm(tr.eps(), axis=1), rtol=1e-12)
        np.testing.assert_allclose(ode_jump(tr, 0), orc.denoise(X[b], 80.0), rtol=0, atol=1e-14)
        np.testing.assert_array_equal(ode_jump(tr, 10), tr.denoised[-1])
        with pytest.raises(IndexError):
            ode_jump(tr, 11)
        single = simulate(orc, polynomial_grid(10), X[b], SolverConfig("heun"))
        np.testing.assert_allclose(single.states, tr.states, atol=1e-12)
    bare = simulate(orc, polynomial_grid(10), X[0], SolverConfig(record=False))
    assert bare.denoised is None
    with pytest.raises(DomainError):
        ode_jump(bare, 0)


def test_trajectory_length_tracks_initial_noise():
    rng = np.random.default_rng(7)
    d = 256
    orc = KDEOracle(rng.standard_normal((32, d)))
    X = 80 * rng.standard_normal((8, d))
    for tr, x in zip(simulate(orc, polynomial_grid(100), X), X):
        z = np.linalg.norm(x) / 80
        assert abs(trajectory_length(tr) / (80 * z) - 1) < 0.01


@pytest.mark.parametrize("method", METHODS)
def test_zspace_vp_equals_scaled_xspace(method):
    proc = vp_process_from_range()
    rng = np.random.default_rng(8)
    orc = KDEOracle(rng.standard_normal((12, 3)))
    t = np.linspace(1.0, 1e-3, 15)
    sig, sc = proc.sigma(t), proc.s(t)
    xT = sig[0] * rng.standard_normal(3)
    zt = simulate_zspace(orc, proc, explicit_grid(t), sc[0] * xT, SolverConfig(method))
    xt = simulate(orc, explicit_grid(sig), xT, SolverConfig(method))
    np.testing.assert_allclose(zt.states, sc[:, None] * xt.states, rtol=0, atol=1e-10)
    np.testing.assert_allclose(zt.denoised, xt.denoised, rtol=0, atol=1e-10)


def test_zspace_point_mass_and_flow_matching():
    y = np.array([0.5, -1.0])
    orc = KDEOracle([y])
    proc = vp_process_from_range()
    grid = explicit_grid(np.linspace(1.0, 1e-3, 8))
    sig, sc = proc.sigma(grid.times), proc.s(grid.times)
    noise = np.array([1.0, 2.0])
    tr = simulate_zspace(orc, proc, grid, sc[0] * (y + sig[0] * noise))
    np.testing.assert_allclose(tr.states, sc[:, None] * (y + sig[:, None] * noise), atol=1e-10)
    fm = flow_matching_process()
    tgrid = explicit_grid([0.99, 0.6, 0.2, 0.01])
    z0 = (1 - 0.99) * y + 0.99 * noise
    tr = simulate_zspace(orc, fm, tgrid, z0, SolverConfig("dpm2"))
    t = tgrid.times[:, None]
    np.testing.assert_allclose(tr.states, (1 - t) * y + t * noise, atol=1e-10)
