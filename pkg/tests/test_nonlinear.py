import numpy as np
import pytest

from regretopt.exceptions import ValidationError
from regretopt.nonlinear import CONTROL_POLICIES, ekf_style_loop, fm_model, mpc_loop, pendulum_model


def fd_jacobian(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((fun(x + e) - fun(x - e)) / (2 * eps))
    return np.column_stack(cols)


def close(a, b):
    return np.abs(a - b).max() <= 1e-5 * max(1.0, np.abs(b).max())


def test_pendulum_upright_equilibrium():
    pend = pendulum_model()
    np.testing.assert_array_equal(pend.f(np.zeros(2), np.zeros(1), np.zeros(1)), 0)


def test_pendulum_horizontal_acceleration():
    pend = pendulum_model({"m": 1, "g": 1, "l": 1, "J": 1})
    np.testing.assert_allclose(pend.f(np.array([np.pi / 2, 0.0]), np.zeros(1), np.zeros(1)), [0.0, 1.0])


def test_pendulum_linearization_at_rest():
    A, Bu, Bw = pendulum_model(delta=0.1).linearize(np.zeros(2))
    np.testing.assert_allclose(A, [[1.0, 0.1], [0.1, 1.0]])
    np.testing.assert_allclose(Bu, [[0.0], [0.1]])
    np.testing.assert_array_equal(Bu, Bw)


@pytest.mark.parametrize("params", [None, {"m": 2.0, "g": 9.8, "l": 0.5, "J": 0.3}])
def test_pendulum_jacobians(params):
    pend = pendulum_model(params)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x, u, w = rng.uniform(-3, 3, 2), rng.normal(size=1), rng.normal(size=1)
        assert close(pend.fx(x, u, w), fd_jacobian(lambda z: pend.f(z, u, w), x))
        assert close(pend.fu(x, u, w), fd_jacobian(lambda z: pend.f(x, z, w), u))
        assert close(pend.fw(x, u, w), fd_jacobian(lambda z: pend.f(x, u, z), w))


def test_fm_observation():
    fm = fm_model(beta=1.0, omega_c=1.0)
    assert fm.h(np.zeros(2), 0.0)[0] == 0
    t = 0.7
    assert fm.h(np.array([0.3, np.pi / 2 - t]), t)[0] == pytest.approx(np.sqrt(2))
    np.testing.assert_allclose(fm.hx(np.zeros(2), 0.0), [[0.0, np.sqrt(2)]])


def test_fm_jacobians():
    fm = fm_model(beta=2.5, omega_c=3.0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, u, t = rng.normal(size=2), rng.normal(size=1), rng.uniform(0, 10)
        assert close(fm.fx(x, u, None), fd_jacobian(lambda z: fm.f(z, u, None), x))
        assert close(fm.fu(x, u, None), fd_jacobian(lambda z: fm.f(x, z, None), u))
        assert close(fm.hx(x, t), fd_jacobian(lambda z: fm.h(z, t), x))


@pytest.mark.parametrize("bad", [{"m": 0}, {"mass": 1}])
def test_pendulum_rejects_bad_params(bad):
    with pytest.raises(ValidationError):
        pendulum_model(bad)


@pytest.mark.parametrize("kind", CONTROL_POLICIES)
def test_mpc_without_disturbance_is_idle(kind):
    run = mpc_loop(pendulum_model(), kind, np.zeros(8), steps=8)
    assert np.all(run.cumulative == 0) and run.total == 0


@pytest.mark.parametrize("kind", CONTROL_POLICIES)
def test_mpc_short_run(kind):
    w = np.sin(30 * 0.1 * np.arange(1, 13))
    a = mpc_loop(pendulum_model(), kind, w, steps=12)
    b = mpc_loop(pendulum_model(), kind, w, steps=12)
    np.testing.assert_array_equal(a.cumulative, b.cumulative)
    assert np.all(np.diff(a.cumulative) >= 0) and a.instantaneous.shape == (12,)
    assert a.label == kind and not a.diagnostics


def test_mpc_noncausal_is_cheapest_on_one_step():
    # with a one-step window the noncausal policy solves the step exactly
    w = np.ones(1)
    costs = {k: mpc_loop(pendulum_model(), k, w, steps=1, x0=[0.2, -0.1]).total for k in CONTROL_POLICIES}
    assert costs["Noncausal"] <= min(costs.values()) + 1e-12


def test_mpc_rejects_bad_input():
    with pytest.raises(ValidationError):
        mpc_loop(pendulum_model(), "LQG", np.zeros(5), steps=5)
    with pytest.raises(ValidationError):
        mpc_loop(pendulum_model(), "H2", np.zeros(3), steps=5)


@pytest.mark.parametrize("kind", ["EKF", "RegretOpt"])
def test_filters_exact_without_inputs(kind):
    run = ekf_style_loop(fm_model(), kind, np.zeros(6), np.zeros(6), steps=6)
    assert run.total == 0


def test_filter_short_run_deterministic():
    k = np.arange(10) * 0.1
    u, v = np.sin(10 * k), np.cos(10 * k)
    runs = [ekf_style_loop(fm_model(), "RegretOpt", u, v, steps=10) for _ in range(2)]
    np.testing.assert_array_equal(runs[0].cumulative, runs[1].cumulative)
    assert len(runs[0].gammas) == 10 and np.all(np.diff(runs[0].cumulative) >= 0)


def test_filter_rejects_bad_input():
    with pytest.raises(ValidationError):
        ekf_style_loop(fm_model(), "UKF", np.zeros(3), np.zeros(3), steps=3)
    with pytest.raises(ValidationError):
        ekf_style_loop(pendulum_model(), "EKF", np.zeros(3), np.zeros(3), steps=3)
