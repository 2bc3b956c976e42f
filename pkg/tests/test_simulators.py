import numpy as np
import pytest

from dynsur.errors import ConfigError, DivergenceError
from dynsur.series import TimeGrid, Trajectory
from dynsur.simulators import (
    BoucWenParams,
    QuarterCarParams,
    _rk4,
    simulate_bouc_wen,
    simulate_bouc_wen_batch,
    simulate_quarter_car,
    simulate_quarter_car_batch,
)


def harmonic(grid, amp=0.3, freq=0.8):
    t = grid.times()
    return Trajectory(grid, amp * np.sin(2 * np.pi * freq * t), "x")


class TestRk4:
    def test_exponential_decay_exact_order(self):
        # y' = -y, y(0) = 1: local error O(h^5), global O(h^4)
        def rhs(state, x):
            return -state

        y0 = np.array([[1.0]])
        errs = []
        for n in (11, 21, 41):
            dt = 1.0 / (n - 1)
            hist, _ = _rk4(rhs, y0, np.zeros((1, n)), dt)
            errs.append(abs(hist[0, -1, 0] - np.exp(-1.0)))
        order = np.log2(errs[0] / errs[1])
        assert order >= 3.9

    def test_divergence_guard(self):
        def rhs(state, x):
            return state**2  # finite-time blow-up

        with pytest.raises(DivergenceError):
            _rk4(rhs, np.array([[10.0]]), np.zeros((1, 2000)), 0.1)


class TestQuarterCar:
    def test_param_validation(self):
        with pytest.raises(ConfigError):
            QuarterCarParams(m1=-1.0)

    def test_rest_stays_at_rest(self):
        grid = TimeGrid(0.0, 0.01, 200)
        res = simulate_quarter_car(
            QuarterCarParams(), Trajectory(grid, np.zeros(200), "x")
        )
        assert np.max(np.abs(res["y2"].values)) == 0.0

    def test_self_convergence_order(self):
        # Richardson self-convergence on substeps: RK4 should show
        # fourth-order behavior on this smooth system
        grid = TimeGrid(0.0, 0.02, 301)
        x = harmonic(grid, amp=0.5).values[None, :]
        params = QuarterCarParams()
        sols = {}
        for sub in (1, 2, 4):
            arrays, _ = simulate_quarter_car_batch(params, x, grid, substeps=sub)
            sols[sub] = arrays["y2"][0]
        e1 = np.max(np.abs(sols[1] - sols[4]))
        e2 = np.max(np.abs(sols[2] - sols[4]))
        # halving the step should reduce error by ~2^4 (compare against
        # a common finer reference; the ratio bound allows slack)
        assert e1 / e2 > 12.0

    def test_static_deflection_limit(self):
        # constant road offset: the steady state satisfies y1 = y2 = x
        grid = TimeGrid(0.0, 0.01, 6001)
        x = np.full(grid.n_steps, 0.05)
        arrays, _ = simulate_quarter_car_batch(QuarterCarParams(), x, grid)
        # the cubic inter-mass spring carries no static load, so both
        # masses settle at the road height; damping is weak, so average
        # over the tail instead of taking the final instant
        tail1 = arrays["y1"][0, -2000:].mean()
        tail2 = arrays["y2"][0, -2000:].mean()
        assert tail1 == pytest.approx(0.05, rel=0.05)
        assert tail2 == pytest.approx(0.05, rel=0.05)

    def test_batch_matches_single(self):
        grid = TimeGrid(0.0, 0.01, 400)
        xs = np.stack(
            [harmonic(grid, a).values for a in (0.1, 0.4, 0.9)]
        )
        params = QuarterCarParams()
        arrays, _ = simulate_quarter_car_batch(params, xs, grid)
        for i in range(3):
            single = simulate_quarter_car(
                params, Trajectory(grid, xs[i], "x")
            )
            np.testing.assert_allclose(
                arrays["y2"][i], single["y2"].values, rtol=0, atol=1e-14
            )


class TestBoucWen:
    def test_param_validation(self):
        with pytest.raises(ConfigError):
            BoucWenParams(rho=1.5)
        with pytest.raises(ConfigError):
            BoucWenParams(n=0.5)

    def test_z_bound_value(self):
        assert BoucWenParams().z_bound == pytest.approx(0.01)

    def test_z_never_exceeds_bound(self):
        grid = TimeGrid(0.0, 0.02, 1500)
        params = BoucWenParams()
        rng = np.random.default_rng(7)
        xs = 3.0 * rng.normal(size=(8, grid.n_steps))
        arrays, _ = simulate_bouc_wen_batch(params, xs, grid)
        assert np.max(np.abs(arrays["z"])) <= params.z_bound * (1 + 1e-6)

    def test_linear_limit_matches_sdof_oscillator(self):
        # rho = 1 removes the hysteretic restoring force: the response
        # must match the analytic steady state of a linear oscillator
        grid = TimeGrid(0.0, 0.005, 12001)
        params = BoucWenParams(rho=1.0)
        w, zeta = params.omega, params.zeta
        wf = 3.0
        t = grid.times()
        x = Trajectory(grid, np.sin(wf * t), "x")
        res = simulate_bouc_wen(params, x)
        # steady-state amplitude of y'' + 2 zeta w y' + w^2 y = -sin(wf t)
        amp = 1.0 / np.sqrt((w**2 - wf**2) ** 2 + (2 * zeta * w * wf) ** 2)
        tail = res["y"].values[len(t) // 2 :]
        assert np.max(np.abs(tail)) == pytest.approx(amp, rel=0.01)

    def test_hysteresis_loop_encloses_area(self):
        # under cyclic motion the (y, z) trajectory traces a loop: z on
        # the loading branch differs from z on the unloading branch
        grid = TimeGrid(0.0, 0.01, 4001)
        t = grid.times()
        x = Trajectory(grid, 5.0 * np.sin(2.0 * t), "x")
        res = simulate_bouc_wen(BoucWenParams(), x)
        y, z = res["y"].values, res["z"].values
        area = np.trapezoid(z[2000:], y[2000:])
        assert abs(area) > 1e-6
