import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regretopt.exceptions import FactorizationError
from regretopt.factorization import (
    backward_factor_dual,
    control_delta2,
    estimation_S_factor,
    estimation_T_factor,
    forward_factor,
)
from regretopt.statespace import CausalStateSpaceModel, identity_model, invert_causal_ss
from regretopt.systems import ControlSystem, EstimationSystem

from _oracles import (
    anticausal_part,
    control_ops,
    estimation_ops,
    random_control,
    random_estimation,
    scalar_control,
    scalar_estimation,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def gram_targets(sys, gamma):
    H, L = estimation_ops(sys)
    M = L @ np.linalg.solve(np.eye(H.shape[1]) + H.T @ H, L.T)
    S_target = np.eye(M.shape[0]) + M / gamma**2
    return H, M, S_target


# forward factor (control) ------------------------------------------------


def test_forward_factor_scalar_by_hand():
    res = forward_factor(scalar_control())
    P, Sig, K = res.schedules["P"], res.schedules["Sigma"], res.schedules["K"]
    assert P[0, 0, 0] == 0 and Sig[0, 0, 0] == 1 and K[0, 0, 0] == 0
    assert P[1, 0, 0] == 1 and Sig[1, 0, 0] == 2
    D = res.factor.dense()
    assert np.abs(D @ D.T - np.array([[1, 0], [0, 2]])).max() < 1e-12


def test_forward_factor_zero_weight_is_identity():
    rng = np.random.default_rng(0)
    sys = ControlSystem(rng.normal(size=(4, 2, 2)), rng.normal(size=(4, 2, 1)), rng.normal(size=(4, 2, 1)),
                        np.zeros((2, 2)), np.eye(1))
    res = forward_factor(sys)
    np.testing.assert_allclose(res.schedules["Sigma"], np.broadcast_to(np.eye(2), (4, 2, 2)))
    np.testing.assert_allclose(res.factor.dense(), np.eye(8), atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, T=st.integers(1, 10), n=dims, m=dims, p=dims)
def test_forward_factor_gram(seed, T, n, m, p):
    sys = random_control(np.random.default_rng(seed), T, n, m, p).normalized()
    F, _, _ = control_ops(sys)
    D = forward_factor(sys).factor.dense()
    assert rel(D @ D.T, np.eye(F.shape[0]) + F @ F.T) < 1e-8
    assert anticausal_part(D, T, n, n) == 0


# backward dual factor (estimation) ---------------------------------------


def test_backward_dual_scalar_by_hand():
    res = backward_factor_dual(scalar_estimation())
    P, Sig = res.schedules["P"], res.schedules["Sigma"]
    assert P[1, 0, 0] == 0 and Sig[1, 0, 0] == 1
    assert P[0, 0, 0] == 1 and Sig[0, 0, 0] == 2
    D = res.factor.dense()
    assert np.abs(D.T @ D - np.array([[2, 0], [0, 1]])).max() < 1e-12


def test_backward_dual_no_measurement_is_identity():
    rng = np.random.default_rng(1)
    sys = EstimationSystem(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 2)), np.zeros((1, 2)),
                           rng.normal(size=(3, 1, 2)))
    np.testing.assert_allclose(backward_factor_dual(sys).factor.dense(), np.eye(6), atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, T=st.integers(1, 10), n=dims, m=dims, p=dims)
def test_backward_dual_gram(seed, T, n, m, p):
    sys = random_estimation(np.random.default_rng(seed), T, n, m, p, 1)
    H, _ = estimation_ops(sys)
    D = backward_factor_dual(sys).factor.dense()
    assert rel(D.T @ D, np.eye(H.shape[1]) + H.T @ H) < 1e-8


# Delta2 ------------------------------------------------------------------


def test_delta2_no_disturbance_input():
    rng = np.random.default_rng(2)
    sys = ControlSystem(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 1)), np.zeros((2, 2)),
                        np.eye(2), np.eye(1))
    D = control_delta2(sys, 1.7).factor.dense()
    np.testing.assert_allclose(D, 1.7 * np.eye(6), atol=1e-14)


def test_delta2_scalar():
    sys = scalar_control()
    F, G, _ = control_ops(sys)
    inner = G.T @ np.linalg.solve(np.eye(2) + F @ F.T, G)
    np.testing.assert_allclose(inner, [[0.5, 0], [0, 0]], atol=1e-15)
    D = control_delta2(sys, 1.0).factor.dense()
    assert rel(D.T @ D, np.eye(2) + inner) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=seeds, T=st.integers(1, 10), n=dims, m=dims, p=dims, gamma=st.sampled_from([0.5, 1.0, 2.0]))
def test_delta2_gram(seed, T, n, m, p, gamma):
    sys = random_control(np.random.default_rng(seed), T, n, m, p).normalized()
    F, G, _ = control_ops(sys)
    target = gamma**2 * np.eye(G.shape[1]) + G.T @ np.linalg.solve(np.eye(F.shape[0]) + F @ F.T, G)
    D = control_delta2(sys, gamma).factor.dense()
    assert rel(D.T @ D, target) < 1e-8
    assert anticausal_part(D, T, p, p) == 0


# S and T -----------------------------------------------------------------


def test_S_without_target_is_identity():
    rng = np.random.default_rng(3)
    sys = EstimationSystem(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 1)), rng.normal(size=(3, 1, 2)),
                           np.zeros((1, 2)))
    np.testing.assert_allclose(estimation_S_factor(sys, 1.0).factor.dense(), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(estimation_T_factor(sys, 1.3).factor.dense(), 1.3 * np.eye(3), atol=1e-12)


def test_S_large_gamma_near_identity():
    sys = random_estimation(np.random.default_rng(4), 4, 2, 1, 1, 1)
    D = estimation_S_factor(sys, 1e6).factor.dense()
    assert np.abs(D.T @ D - np.eye(4)).max() < 1e-9


def test_S_random_scalar():
    rng = np.random.default_rng(5)
    sys = EstimationSystem(*(rng.normal(size=(3, 1, 1)) for _ in range(4)))
    _, _, target = gram_targets(sys, 1.0)
    D = estimation_S_factor(sys, 1.0).factor.dense()
    assert rel(D.T @ D, target) < 1e-8


def test_T_scalar():
    sys = scalar_estimation()
    _, M, S_target = gram_targets(sys, 1.0)
    D = estimation_T_factor(sys, 1.0).factor.dense()
    assert rel(D @ D.T, np.linalg.inv(S_target) + M) < 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=seeds, T=st.integers(1, 10), n=dims, m=dims, p=dims, r=dims, gamma=st.sampled_from([0.8, 1.5]))
def test_S_and_T_gram(seed, T, n, m, p, r, gamma):
    sys = random_estimation(np.random.default_rng(seed), T, n, m, p, r)
    _, M, S_target = gram_targets(sys, gamma)
    S = estimation_S_factor(sys, gamma)
    Sd = S.factor.dense()
    assert rel(Sd.T @ Sd, S_target) < 1e-8
    Td = estimation_T_factor(sys, gamma, S).factor.dense()
    target = gamma**2 * np.linalg.inv(Sd.T @ Sd) + M
    assert rel(Td @ Td.T, target) < 1e-8
    assert anticausal_part(Td, T, r, r) == 0


def test_check_flag_reports_residual():
    sys = random_estimation(np.random.default_rng(6), 5, 2, 2, 1, 1)
    assert backward_factor_dual(sys, check=True).residual < 1e-12
    assert estimation_T_factor(sys, 1.2, check=True).residual < 1e-8


# causal inversion --------------------------------------------------------


def test_identity_model_inverse():
    inv = invert_causal_ss(identity_model(4, 2))
    np.testing.assert_array_equal(inv.dense(), np.eye(8))


def test_scalar_model_inverse():
    model = CausalStateSpaceModel([[[0.5]]] * 3, [[[1.0]]] * 3, [[[1.0]]] * 3, [[[2.0]]] * 3)
    prod = invert_causal_ss(model).dense() @ model.dense()
    assert np.abs(prod - np.eye(3)).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, k=dims)
def test_random_model_inverse(seed, T, n, k):
    rng = np.random.default_rng(seed)
    D = [np.eye(k) + 0.3 * rng.normal(size=(k, k)) for _ in range(T)]
    model = CausalStateSpaceModel(0.5 * rng.normal(size=(T, n, n)), rng.normal(size=(T, n, k)),
                                  rng.normal(size=(T, k, n)), D)
    prod = model.inverse().dense() @ model.dense()
    assert np.abs(prod - np.eye(T * k)).max() < 1e-8


def test_singular_feedthrough_rejected():
    model = CausalStateSpaceModel([[[1.0]]] * 2, [[[1.0]]] * 2, [[[1.0]]] * 2, [[[1.0]], [[0.0]]])
    with pytest.raises(FactorizationError):
        invert_causal_ss(model)
