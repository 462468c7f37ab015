import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regretopt.exceptions import Infeasible, UnboundedGamma
from regretopt.hinf import (
    bisect_gamma,
    feasibility,
    h2_controller,
    hinf_controller,
    hinf_estimator,
    kalman_estimator,
    optimal_hinf_controller,
    optimal_hinf_estimator,
)
from regretopt.systems import ControlSystem, EstimationSystem

from _oracles import (
    control_gain,
    control_ops,
    estimation_ops,
    filter_gain,
    probe_controller,
    probe_filter,
    random_control,
    random_estimation,
    scalar_control,
    scalar_estimation,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)


# bisection ---------------------------------------------------------------


def test_bisection_analytic_boundary():
    cert = bisect_gamma(lambda g: g > 1, tol=1e-4)
    assert 1 <= cert.gamma_opt <= 1 + 1e-4
    lo, hi = cert.bracket
    assert hi == cert.gamma_opt and hi - lo <= 1e-4 * max(1, hi)


def test_bisection_always_feasible():
    cert = bisect_gamma(lambda g: True, tol=1e-4)
    assert cert.gamma_opt <= 1e-4


def test_bisection_with_hint_lands_in_same_bracket():
    for hint in (0.5, 3.0, 3.1, 100.0):
        cert = bisect_gamma(lambda g: g > 3.05, tol=1e-6, hint=hint)
        assert 3.05 <= cert.gamma_opt <= 3.05 * (1 + 1e-6)


def test_bisection_unbounded():
    with pytest.raises(UnboundedGamma):
        bisect_gamma(lambda g: False)


def test_bisection_rejects_bad_tol():
    with pytest.raises(ValueError):
        bisect_gamma(lambda g: True, tol=0)


# H-infinity filter -------------------------------------------------------


def test_filter_without_target():
    rng = np.random.default_rng(0)
    sys = EstimationSystem(rng.normal(size=(4, 2, 2)), rng.normal(size=(4, 2, 1)), rng.normal(size=(4, 1, 2)),
                           np.zeros((1, 2)))
    for gamma in (1e-3, 1.0, 10.0):
        f = hinf_estimator(sys, gamma)
        assert np.all(f.run(rng.normal(size=(4, 1))) == 0)


def test_filter_scalar_optimum():
    # the best causal error gain is 1/2: s_hat[1] = y[1] / 2
    cert, f = optimal_hinf_estimator(scalar_estimation(), tol=1e-8)
    assert cert.gamma_opt**2 == pytest.approx(0.5, rel=1e-3)
    K = probe_filter(scalar_estimation(), f)
    assert filter_gain(scalar_estimation(), K) == pytest.approx(0.5, rel=1e-3)


def test_filter_feasible_above_dense_gain():
    sys = random_estimation(np.random.default_rng(1), 5, 2, 1, 1, 1)
    K = probe_filter(sys, kalman_estimator(sys))
    g = np.sqrt(filter_gain(sys, K))
    hinf_estimator(sys, 10 * g)
    with pytest.raises(Infeasible):
        hinf_estimator(sys, 1e-3)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, m=dims, p=dims, r=dims)
def test_filter_bound_holds(seed, T, n, m, p, r):
    sys = random_estimation(np.random.default_rng(seed), T, n, m, p, r)
    cert, f = optimal_hinf_estimator(sys, tol=1e-6)
    gain = filter_gain(sys, probe_filter(sys, f))
    assert gain <= cert.gamma_opt**2 * (1 + 1e-6)


def test_kalman_matches_conditional_mean():
    sys = random_estimation(np.random.default_rng(2), 6, 2, 2, 1, 2)
    H, L = estimation_ops(sys)
    T, p, r = sys.T, sys.p, sys.r
    K = probe_filter(sys, kalman_estimator(sys))
    for t in range(T):
        Hy = H[: (t + 1) * p]
        rows = L[t * r:(t + 1) * r]
        gain = rows @ Hy.T @ np.linalg.inv(np.eye(Hy.shape[0]) + Hy @ Hy.T)
        np.testing.assert_allclose(K[t * r:(t + 1) * r, : (t + 1) * p], gain, atol=1e-10)


# H-infinity controller ---------------------------------------------------


def test_controller_without_disturbance_input():
    rng = np.random.default_rng(3)
    sys = ControlSystem(rng.normal(size=(4, 2, 2)), rng.normal(size=(4, 2, 1)), np.zeros((2, 1)), np.eye(2), np.eye(1))
    for gamma in (1e-3, 1.0):
        hinf_controller(sys, gamma)


def test_controller_scalar_levels():
    sys = scalar_control()
    c = hinf_controller(sys, 2.0)
    assert control_gain(sys, probe_controller(sys, c)) < 4
    with pytest.raises(Infeasible):
        hinf_controller(sys, 0.1)


def test_controller_scalar_optimum():
    # u0 = -w0 / 2 is best, giving cost w0^2 / 2
    cert, c = optimal_hinf_controller(scalar_control(), tol=1e-8)
    assert cert.gamma_opt**2 == pytest.approx(0.5, rel=1e-3)
    K = probe_controller(scalar_control(), c)
    assert control_gain(scalar_control(), K) == pytest.approx(0.5, rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, m=dims, p=dims)
def test_controller_feasibility_monotone(seed, T, n, m, p):
    sys = random_control(np.random.default_rng(seed), T, n, m, p)
    check = feasibility(hinf_controller, sys)
    for gamma in (0.1, 0.5, 1.0, 3.0, 10.0):
        if check(gamma):
            assert check(2 * gamma)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, m=dims, p=dims)
def test_controller_bound_holds(seed, T, n, m, p):
    sys = random_control(np.random.default_rng(seed), T, n, m, p)
    cert, c = optimal_hinf_controller(sys, tol=1e-6)
    assert control_gain(sys, probe_controller(sys, c)) <= cert.gamma_opt**2 * (1 + 1e-6)


def test_h2_controller_minimizes_expected_cost():
    # under white w the LQR gains minimize trace of the cost form among causal policies
    sys = random_control(np.random.default_rng(4), 5, 2, 1, 1)
    K2 = probe_controller(sys, h2_controller(sys))
    Kh = probe_controller(sys, optimal_hinf_controller(sys)[1])

    def trace_cost(K):
        F, G, Ri = control_ops(sys)
        Kn = np.linalg.inv(Ri) @ K
        S = F @ Kn + G
        return np.trace(S.T @ S + Kn.T @ Kn)

    assert trace_cost(K2) <= trace_cost(Kh) + 1e-9
